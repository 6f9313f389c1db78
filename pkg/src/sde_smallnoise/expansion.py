"""Recursive solution of the expansion-coefficient equations.

u_0 solves the base equation du_0 = beta(u_0) dt + sigma_0(u_0) eta(ds) with
the original initial value.  For k >= 1 the order-k coefficient solves a
linear SDE with random coefficients read off the order-k terms of beta and
sigma_eps composed with the partial expansion:

    du_k = [ Jac_beta(u_0) u_k + F_k(t) ] dt
         + [ (d sigma_0(u_0) . u_k) + g_k(t) ] eta(ds),      u_k(0) = 0,

where F_k and g_k collect everything that depends only on u_0..u_{k-1}
(computed by the order-term partition sums with the top coefficient
omitted).  The recursion is strictly lower triangular, so recomputing with a
larger K leaves earlier coefficients bit-identical.

Closed-form fast paths: the scalar fundamental solution (a stochastic
exponential including the Doleans-Dade jump product) and the constant-matrix
fundamental matrix via scaling-and-squaring expm, both usable through
variation of constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import MissingDerivative, NearSingular, SingularJump
from .multiindex import diffusion_order_term, drift_order_term
from .simulate import (
    LinearSDECoefficients,
    SolutionPath,
    integrate_full_batch,
    integrate_linear_batch,
)
from .model import NoiseBatch

__all__ = [
    "ExpansionResult",
    "FundamentalMatrix",
    "solve_coefficients",
    "solve_coefficients_batch",
    "solve_coefficients_linear_model",
    "fundamental_matrix_scalar",
    "fundamental_matrix_constant",
    "solve_linear_by_variation_of_constants",
]


@dataclass
class ExpansionResult:
    """Paths of u_0 .. u_K driven by one noise realization."""

    order: int
    coefficient_paths: list  # SolutionPath per order
    noise_seed: int
    grid: np.ndarray
    model: object = None

    def path(self, k) -> SolutionPath:
        return self.coefficient_paths[k]

    def states(self, k):
        return self.coefficient_paths[k].states

    def truncated_sum(self, eps):
        """sum_{j<=K} eps^j u_j(t) on the grid."""
        total = np.zeros_like(self.coefficient_paths[0].states)
        for j, p in enumerate(self.coefficient_paths):
            total += (eps**j) * p.states
        return total

    @property
    def blew_up(self):
        return any(p.blew_up for p in self.coefficient_paths)


def _single_path_batch(noise):
    return NoiseBatch(
        grid=noise.grid,
        increments=noise.increments[None],
        jumps=[(noise.jump_times, noise.jump_marks, noise.jump_steps)],
        seeds=np.array([noise.seed], dtype=np.uint64),
        spec=noise.spec,
        drift_term=noise.drift_term,
    )


def solve_coefficients_batch(model, K, x0, batch):
    """Solve the coefficient chain for every path in a NoiseBatch.

    Returns (us, blows): ``us[k]`` has shape (R, n+1, d); ``blows[k]`` is the
    per-path first frozen step of the order-k solve (-1 when clean).
    """
    K = int(K)
    if K < 0:
        raise ValueError("expansion order must be nonnegative")
    if K > model.eps_order:
        raise MissingDerivative(
            f"expansion order K={K} exceeds the diffusion family order M={model.eps_order}"
        )
    d = model.dimension
    u0, blow0 = integrate_full_batch(model, 0.0, x0, batch)
    us = [u0]
    blows = [blow0]
    if K == 0:
        return us, blows
    gamma = model.base_drift().jacobian(u0)  # (R, n+1, d, d)
    sigma0 = model.diffusion_family[0]
    H = None
    if not sigma0.is_zero:
        grad = sigma0.gradient(u0)  # (R, n+1, l, j, i)
        H = np.swapaxes(grad, -3, -2)  # (R, n+1, j, l, i)
    coeffs = LinearSDECoefficients(gamma=gamma, noise_state_loading=H)
    drift_input = model.drift_family if model.drift_family is not None else model.drift
    for k in range(1, K + 1):
        F_k = drift_order_term(k, drift_input, us)
        g_k = diffusion_order_term(k, model.diffusion_family, us)
        u_k, blow_k = integrate_linear_batch(coeffs, F_k, g_k, np.zeros(d), batch)
        us.append(u_k)
        blows.append(blow_k)
    return us, blows


def solve_coefficients(model, K, x0, noise):
    """Solve the coefficient chain along one NoisePath; see module docstring."""
    us, blows = solve_coefficients_batch(model, K, x0, _single_path_batch(noise))
    paths = [
        SolutionPath(
            grid=noise.grid,
            states=u[0],
            blowup_step=None if b[0] < 0 else int(b[0]),
        )
        for u, b in zip(us, blows)
    ]
    return ExpansionResult(
        order=K,
        coefficient_paths=paths,
        noise_seed=noise.seed,
        grid=noise.grid,
        model=model,
    )


# -- fundamental matrices ------------------------------------------------------

@dataclass
class FundamentalMatrix:
    """Phi(t) on the grid with Phi(0) = I, plus precomputed inverses."""

    grid: np.ndarray
    values: np.ndarray  # (n+1, d, d)
    inverses: np.ndarray  # (n+1, d, d)
    near_singular: bool = False

    @property
    def dim(self):
        return self.values.shape[-1]


def _check_inverses(values, inverses, tol=1e-8):
    d = values.shape[-1]
    eye = np.eye(d)
    prod = np.einsum("mij,mjk->mik", values, inverses)
    err = np.max(np.abs(prod - eye))
    return (not np.isfinite(err)) or err > tol


def fundamental_matrix_scalar(gamma, G, noise):
    """Scalar (d=1) fundamental solution of dPhi = Phi_- [gamma dt + G deta].

    Phi(t) = exp( int (gamma + G b - G^2 a / 2) ds + int G dB )
             * prod_{jumps s<=t} (1 + G(s) * mark(s)),

    with a the Brownian covariance rate and b the noise drift; the product is
    the Doleans-Dade jump factor of the loaded jump part.  All integrals use
    left-point quadrature on the grid.  With a deterministic driver (a = 0)
    the Ito correction vanishes automatically.
    """
    grid = np.asarray(noise.grid, dtype=float)
    n = len(grid) - 1
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n + 1,))
    G = np.broadcast_to(np.asarray(G, dtype=float), (n + 1,))
    a = noise.spec.covariance_matrix()[0, 0]
    dts = np.diff(grid)
    dB = noise.increments[:, 0]
    bdt = noise.drift_term[:, 0]
    steps = (
        gamma[:-1] * dts
        + G[:-1] * bdt
        - 0.5 * (G[:-1] ** 2) * a * dts
        + G[:-1] * dB
    )
    exponent = np.concatenate([[0.0], np.cumsum(steps)])
    jump_factor = np.ones(n + 1)
    for j, m in enumerate(noise.jump_steps):
        m = int(m)
        f = 1.0 + G[m] * noise.jump_marks[j, 0]
        if f == 0.0:
            raise SingularJump(
                f"jump at t={noise.jump_times[j]:g} makes the fundamental solution vanish"
            )
        jump_factor[m + 1 :] *= f
    values = np.exp(exponent) * jump_factor
    with np.errstate(divide="ignore", over="ignore"):
        inverses = 1.0 / values
    vals = values.reshape(n + 1, 1, 1)
    invs = inverses.reshape(n + 1, 1, 1)
    return FundamentalMatrix(grid, vals, invs, near_singular=_check_inverses(vals, invs))


def fundamental_matrix_constant(A, grid):
    """Phi(t) = expm(A t) for a constant homogeneous drift matrix."""
    A = np.asarray(A, dtype=float)
    grid = np.asarray(grid, dtype=float)
    n = len(grid) - 1
    d = A.shape[0]
    values = np.empty((n + 1, d, d))
    inverses = np.empty((n + 1, d, d))
    values[0] = np.eye(d)
    inverses[0] = np.eye(d)
    dts = np.diff(grid)
    cache = {}
    for m in range(n):
        dt = float(dts[m])
        if dt not in cache:
            cache[dt] = (expm(A * dt), expm(-A * dt))
        E, Einv = cache[dt]
        values[m + 1] = E @ values[m]
        inverses[m + 1] = inverses[m] @ Einv
    return FundamentalMatrix(
        grid, values, inverses, near_singular=_check_inverses(values, inverses)
    )


def _as_time_series(arr, n_plus_1, trailing):
    if arr is None:
        return None
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == len(trailing):
        return np.broadcast_to(arr, (n_plus_1,) + trailing)
    return arr


def solve_linear_by_variation_of_constants(coeffs, forcing, noise_loading, x0, noise,
                                           phi=None):
    """Variation-of-constants solution of the linear SDE.

    X(t) = Phi(t) [ x0 + int Phi^-1 (F - G g a) ds + int Phi^-1 g deta ]

    with left-point Ito quadrature; the -G g a term is the Ito cross-variation
    correction (scalar case).  Requires a computable fundamental matrix: the
    scalar case, or a constant drift matrix with no state-dependent noise
    loading.  At a jump the integrand picks up the post-jump inverse
    (1 + G mark)^-1, which reproduces dX = (G X- + g) mark exactly.
    """
    grid = np.asarray(noise.grid, dtype=float)
    n = len(grid) - 1
    d = noise.spec.dimension
    dts = np.diff(grid)
    gamma = coeffs.gamma if coeffs is not None else None
    H = coeffs.noise_state_loading if coeffs is not None else None
    F = _as_time_series(forcing, n + 1, (d,))
    g = _as_time_series(noise_loading, n + 1, (d, d))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).astype(float)

    if d == 1:
        gamma_t = np.zeros(n + 1) if gamma is None else np.broadcast_to(
            np.asarray(gamma, dtype=float).reshape(-1), (n + 1,)
        )
        G_t = np.zeros(n + 1) if H is None else np.broadcast_to(
            np.asarray(H, dtype=float).reshape(-1), (n + 1,)
        )
        if phi is None:
            phi = fundamental_matrix_scalar(gamma_t, G_t, noise)
        if phi.near_singular:
            raise NearSingular("fundamental solution failed the inverse check")
        a = noise.spec.covariance_matrix()[0, 0]
        phi_v = phi.values[:, 0, 0]
        phi_inv = phi.inverses[:, 0, 0]
        F_t = np.zeros(n + 1) if F is None else F[:, 0]
        g_t = np.zeros(n + 1) if g is None else g[:, 0, 0]
        dB = noise.increments[:, 0]
        bdt = noise.drift_term[:, 0]
        dY = phi_inv[:-1] * (
            (F_t[:-1] - G_t[:-1] * g_t[:-1] * a) * dts + g_t[:-1] * (bdt + dB)
        )
        # jump contributions enter the same per-step buckets
        if len(noise.jump_times):
            extra = np.zeros(n)
            run = {}
            for j, m in enumerate(noise.jump_steps):
                m = int(m)
                mark = noise.jump_marks[j, 0]
                f = 1.0 + G_t[m] * mark
                if f == 0.0:
                    raise SingularJump("vanishing jump factor in variation of constants")
                phi_run = run.get(m, phi_v[m])
                extra[m] += (1.0 / phi_run) * (g_t[m] * mark) / f
                run[m] = phi_run * f
            dY = dY + extra
        Y = x0[0] + np.concatenate([[0.0], np.cumsum(dY)])
        states = (phi_v * Y).reshape(n + 1, 1)
        return SolutionPath(grid=grid, states=states, scheme="variation-of-constants")

    if H is not None and np.any(np.asarray(H) != 0):
        raise ValueError(
            "matrix variation of constants requires zero state-dependent noise loading"
        )
    gamma = np.zeros((d, d)) if gamma is None else np.asarray(gamma, dtype=float)
    if gamma.ndim != 2:
        raise ValueError("matrix variation of constants requires a constant gamma")
    if phi is None:
        phi = fundamental_matrix_constant(gamma, grid)
    if phi.near_singular:
        raise NearSingular("fundamental matrix failed the inverse check")
    deta = noise.drift_term + noise.increments  # (n, d)
    dY = np.zeros((n, d))
    if F is not None:
        dY += np.einsum("mij,mj->mi", phi.inverses[:-1], F[:-1]) * dts[:, None]
    if g is not None:
        load = np.einsum("mij,mjk->mik", phi.inverses[:-1], g[:-1])
        dY += np.einsum("mik,mk->mi", load, deta)
        for j, m in enumerate(noise.jump_steps):
            m = int(m)
            dY[m] += phi.inverses[m] @ g[m] @ noise.jump_marks[j]
    Y = x0[None, :] + np.concatenate([np.zeros((1, d)), np.cumsum(dY, axis=0)])
    states = np.einsum("mij,mj->mi", phi.values, Y)
    return SolutionPath(grid=grid, states=states, scheme="variation-of-constants")


# -- specialized linear model ---------------------------------------------------

def _pi_loading(Pi):
    Pi = np.asarray(Pi, dtype=float)
    d = Pi.shape[0]
    if not np.any(Pi):
        return None
    H = np.zeros((d, d, d))  # (j, l, i)
    for j in range(d):
        H[j, :, j] = Pi[:, j]
    return H


def solve_coefficients_linear_model(A, b, Pi, lam, K, x0, noise,
                                    sigma0_const=None, method="euler"):
    """Coefficient chain for beta(x) = A x + b, sigma_0(x) = c + Pi x,
    sigma_1(x) = lam x (componentwise: sigma_{l,j}(x) = coef_{l,j} x_j).

    The chain decouples: u_0 solves the base linear SDE, and each u_k is
    driven by lam u_{k-1} through the noise.  ``method='euler'`` uses the
    same Euler-Maruyama stepping as the generic solver (pathwise identical);
    ``method='voc'`` uses the closed-form fundamental solution (scalar case,
    or Pi = 0 with constant A) and variation of constants.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    Pi = np.zeros((d, d)) if Pi is None else np.asarray(Pi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    K = int(K)
    if noise.spec.dimension != d:
        raise ValueError("noise dimension does not match the model")
    H = _pi_loading(Pi)
    g0 = None if sigma0_const is None else np.asarray(sigma0_const, dtype=float)
    coeffs = LinearSDECoefficients(gamma=A, noise_state_loading=H)
    batch = _single_path_batch(noise)
    n = len(noise.grid) - 1

    if method == "voc":
        if d == 1:
            phi = fundamental_matrix_scalar(A[0, 0], Pi[0, 0], noise)
        elif H is None:
            phi = fundamental_matrix_constant(A, noise.grid)
        else:
            raise ValueError(
                "closed-form fundamental matrix requires d=1 or Pi=0; use method='euler'"
            )

        def solve_one(forcing, loading, init):
            return solve_linear_by_variation_of_constants(
                coeffs, forcing, loading, init, noise, phi=phi
            )

    elif method == "euler":

        def solve_one(forcing, loading, init):
            states, blow = integrate_linear_batch(coeffs, forcing, loading, init, batch)
            return SolutionPath(
                grid=noise.grid,
                states=states[0],
                blowup_step=None if blow[0] < 0 else int(blow[0]),
            )

    else:
        raise ValueError(f"unknown method {method!r}")

    paths = [solve_one(b, g0, np.asarray(x0, dtype=float).reshape(-1))]
    for k in range(1, K + 1):
        u_prev = paths[-1].states  # (n+1, d)
        g_k = lam[None, :, :] * u_prev[:, None, :]  # (n+1, l, j) = lam_{l,j} u_{k-1,j}
        paths.append(solve_one(None, g_k, np.zeros(d)))
    return ExpansionResult(
        order=K,
        coefficient_paths=paths,
        noise_seed=noise.seed,
        grid=noise.grid,
        model=None,
    )

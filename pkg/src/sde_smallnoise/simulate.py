"""Pathwise Euler-Maruyama integration of the full SDE and of linear SDEs.

Both integrators share one left-point (Ito) stepping kernel:

    X_{m+1} = X_m + a(t_m, X_m) dt
            + M(t_m, X_m) @ (b_eff dt + dB_m)
            + jumps in (t_m, t_{m+1}]

where ``a`` is the state drift, ``M`` the d x d noise loading applied to the
composite driver eta (drift + Brownian + jumps), and b_eff dt comes
precomputed in the NoisePath (including the jump compensator when enabled).
Within a step the continuous increment is applied first; jump marks are then
applied in time order with the loading re-evaluated at the running pre-jump
state, matching the u(s-) convention.

Paths whose sup-norm exceeds 1e12 (or go non-finite) are frozen at the last
finite state and marked, not raised: non-globally-Lipschitz models are
allowed with a warning upstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BLOWUP_THRESHOLD",
    "SolutionPath",
    "LinearSDECoefficients",
    "integrate_full",
    "integrate_linear",
    "integrate_full_batch",
    "integrate_linear_batch",
]

BLOWUP_THRESHOLD = 1e12


@dataclass
class SolutionPath:
    """States on the grid (post-jump values), with pre-jump values retained.

    ``blowup_step`` is the first step index at which the path was frozen, or
    None.  ``jump_records`` holds (time, pre-jump state) per jump event.
    """

    grid: np.ndarray
    states: np.ndarray  # (n+1, d)
    scheme: str = "euler-maruyama"
    blowup_step: int | None = None
    jump_records: list = None

    def __post_init__(self):
        if self.jump_records is None:
            self.jump_records = []

    @property
    def blew_up(self):
        return self.blowup_step is not None


@dataclass
class LinearSDECoefficients:
    """Coefficients of dX = [F + gamma X] dt + sum_j (G_j X) deta_j + g deta.

    ``gamma`` has shape (d, d) or (n+1, d, d) or (R, n+1, d, d);
    ``noise_state_loading`` gathers the G_j as an array H with
    H[..., j, l, i] = coefficient of X_i in channel j, row l; shapes
    (d, d, d), (n+1, d, d, d) or (R, n+1, d, d, d).  None means zero.
    """

    gamma: np.ndarray = None
    noise_state_loading: np.ndarray = None


def _jumps_by_step(noise):
    out = {}
    for j, m in enumerate(noise.jump_steps):
        out.setdefault(int(m), []).append(j)
    return out


def _batch_jumps_by_step(batch):
    out = {}
    for r, (times, marks, steps) in enumerate(batch.jumps):
        for j, m in enumerate(steps):
            out.setdefault(int(m), []).append((r, times[j], marks[j]))
    return out


def _euler_kernel(grid, increments, drift_term, jump_sched, drift_fn, load_fn,
                  x0, collect_records=False):
    """Shared stepping loop.

    increments: (R, n, d); drift_term: (n, d); x0: (R, d).
    drift_fn(m, X) -> (R, d) or None; load_fn(m, X) -> (R, d, d) or None.
    Returns (states (R, n+1, d), blow_step (R,), records).
    """
    R, n, d = increments.shape
    dts = np.diff(grid)
    states = np.empty((R, n + 1, d))
    X = np.array(x0, dtype=float)
    states[:, 0] = X
    alive = np.ones(R, dtype=bool)
    blow = np.full(R, -1, dtype=np.int64)
    records = [] if collect_records else None
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for m in range(n):
            a = drift_fn(m, X) if drift_fn is not None else None
            M = load_fn(m, X) if load_fn is not None else None
            Xn = X.copy()
            if a is not None:
                Xn += a * dts[m]
            if M is not None:
                Xn += np.einsum("rij,j->ri", M, drift_term[m])
                Xn += np.einsum("rij,rj->ri", M, increments[:, m])
            for r, t_jump, mark in jump_sched.get(m, ()):
                if not alive[r]:
                    continue
                pre = Xn[r].copy()
                if collect_records:
                    records.append((float(t_jump), pre))
                if load_fn is not None:
                    Mp = load_fn(m, pre[None, :])[0]
                    Xn[r] = pre + Mp @ mark
            bad = alive & (~np.all(np.isfinite(Xn), axis=1)
                           | (np.max(np.abs(np.where(np.isfinite(Xn), Xn, 0.0)), axis=1)
                              > BLOWUP_THRESHOLD))
            if np.any(bad):
                Xn[bad] = X[bad]
                blow[bad] = m + 1
                alive &= ~bad
            frozen = ~alive
            if np.any(frozen):
                Xn[frozen] = X[frozen]
            X = Xn
            states[:, m + 1] = X
    return states, blow, records


def integrate_full_batch(model, eps, x0, batch):
    """Euler-Maruyama for the full SDE on a batch of noise paths.

    Returns (states (R, n+1, d), blow_step (R,) with -1 for clean paths).
    """
    R = batch.count
    d = model.dimension
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (R, d))

    def drift_fn(m, X):
        return model.drift_value(eps, X)

    def load_fn(m, X):
        return model.sigma_value(eps, X)

    states, blow, _ = _euler_kernel(
        batch.grid, batch.increments, batch.drift_term,
        _batch_jumps_by_step(batch), drift_fn, load_fn, x0,
    )
    return states, blow


def integrate_full(model, eps, x0, noise):
    """Euler-Maruyama for du = beta(u) dt + sigma_eps(u) eta(ds); see module doc."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    d = model.dimension
    x0 = np.broadcast_to(np.asarray(x0, dtype=float).reshape(-1), (1, d))

    def drift_fn(m, X):
        return model.drift_value(eps, X)

    def load_fn(m, X):
        return model.sigma_value(eps, X)

    merged = {}
    for j, m in enumerate(noise.jump_steps):
        merged.setdefault(int(m), []).append((0, noise.jump_times[j], noise.jump_marks[j]))
    states, blow, records = _euler_kernel(
        noise.grid, noise.increments[None], noise.drift_term,
        merged, drift_fn, load_fn, x0, collect_records=True,
    )
    return SolutionPath(
        grid=noise.grid,
        states=states[0],
        blowup_step=None if blow[0] < 0 else int(blow[0]),
        jump_records=[(t, s) for t, s in records],
    )


def _expand_time_axis(arr, n_plus_1, trailing):
    """Normalize a coefficient array to shape (R|1, n+1, *trailing)."""
    if arr is None:
        return None
    arr = np.asarray(arr, dtype=float)
    want = len(trailing)
    if arr.ndim == want:  # constant in time
        arr = np.broadcast_to(arr, (1, n_plus_1) + trailing)
    elif arr.ndim == want + 1:  # (n+1, ...)
        if arr.shape[0] not in (n_plus_1, n_plus_1 - 1):
            raise ValueError(f"coefficient array length {arr.shape[0]} does not match grid")
        arr = arr[None]
    elif arr.ndim == want + 2:  # (R, n+1, ...)
        pass
    else:
        raise ValueError(f"cannot interpret coefficient array of shape {arr.shape}")
    return arr


def integrate_linear_batch(coeffs, forcing, noise_loading, x0, batch):
    """Euler-Maruyama for the linear SDE on a batch of noise paths."""
    R = batch.count
    n = len(batch.grid) - 1
    d = batch.spec.dimension
    gamma = _expand_time_axis(coeffs.gamma if coeffs else None, n + 1, (d, d))
    H = _expand_time_axis(
        coeffs.noise_state_loading if coeffs else None, n + 1, (d, d, d)
    )
    F = _expand_time_axis(forcing, n + 1, (d,))
    g = _expand_time_axis(noise_loading, n + 1, (d, d))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (R, d))

    def drift_fn(m, X):
        out = None
        if F is not None:
            out = np.broadcast_to(F[:, m], X.shape)
        if gamma is not None:
            gx = np.einsum("rij,rj->ri", np.broadcast_to(gamma[:, m], X.shape + (d,)), X)
            out = gx if out is None else out + gx
        return out

    def load_fn(m, X):
        out = None
        if g is not None:
            out = np.broadcast_to(g[:, m], X.shape + (d,))
        if H is not None:
            hx = np.einsum(
                "rjli,ri->rlj", np.broadcast_to(H[:, m], X.shape + (d, d)), X
            )
            out = hx if out is None else out + hx
        return out

    states, blow, _ = _euler_kernel(
        batch.grid, batch.increments, batch.drift_term,
        _batch_jumps_by_step(batch), drift_fn if (F is not None or gamma is not None) else None,
        load_fn if (g is not None or H is not None) else None, x0,
    )
    return states, blow


class _SinglePathBatch:
    """Adapter presenting one NoisePath with the NoiseBatch interface."""

    def __init__(self, noise):
        self.grid = noise.grid
        self.increments = noise.increments[None]
        self.jumps = [(noise.jump_times, noise.jump_marks, noise.jump_steps)]
        self.spec = noise.spec
        self.drift_term = noise.drift_term
        self.count = 1


def integrate_linear(coeffs, forcing, noise_loading, x0, noise):
    """Euler-Maruyama for dX = [F + gamma X] dt + sum_j (G_j X) deta_j + g deta.

    ``coeffs`` is a LinearSDECoefficients (or None for no state coupling);
    ``forcing`` is F, ``noise_loading`` is g.  Same stepping and jump
    conventions as integrate_full.
    """
    states, blow = integrate_linear_batch(
        coeffs, forcing, noise_loading,
        np.asarray(x0, dtype=float).reshape(-1), _SinglePathBatch(noise),
    )
    return SolutionPath(
        grid=noise.grid,
        states=states[0],
        blowup_step=None if blow[0] < 0 else int(blow[0]),
    )

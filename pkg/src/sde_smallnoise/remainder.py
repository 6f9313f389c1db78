"""Monte Carlo measurement of remainder scaling.

For each replicate one noise realization drives everything: the coefficient
chain u_0..u_K is solved once, the full SDE is integrated once per epsilon on
the same path, and the pathwise sup-norm deviation

    sup_{t in grid} || u_eps(t) - sum_{j<=k} eps^j u_j(t) ||

is recorded per truncation order k.  Aggregated over replicates this yields
per-epsilon means and quantiles; an ordinary least-squares fit of
log(mean sup) against log(eps) estimates the scaling exponent, whose
theoretical value is k+1.  A bootstrap over replicates gives the slope CI,
and a coupled half-step comparison at the largest epsilon flags studies
whose deviations are still dominated by time-discretization error.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPaths, MissingDerivative
from .expansion import solve_coefficients_batch
from .model import sample_noise_batch
from .multiindex import multi_indices_of_order
from .simulate import integrate_full_batch

__all__ = [
    "PerEpsStats",
    "SlopeFit",
    "RemainderStudy",
    "BoundConstants",
    "run_remainder_study",
    "estimate_bound_constants",
]

_DT_CHECK_SEED_OFFSET = 1_000_000_007
_BOOTSTRAP_SEED_OFFSET = 2_000_000_011


@dataclass
class PerEpsStats:
    eps: float
    mean_sup: float
    q50: float
    q90: float
    q99: float
    path_count: int
    excluded: int


@dataclass
class SlopeFit:
    slope: float
    ci_lo: float
    ci_hi: float


@dataclass
class RemainderStudy:
    order: int
    eps_ladder: tuple
    per_eps: dict  # k -> [PerEpsStats per eps]
    slopes: dict  # k -> SlopeFit | None
    dt_limited: dict  # k -> bool | None
    monotone_violations: dict  # k -> int
    sup_values: np.ndarray  # (R, E, K+1)
    excluded: np.ndarray  # (R, E) bool

    def quantile_slope(self, k, attr="q90"):
        """OLS slope of log(quantile) vs log(eps) over the usable ladder."""
        stats = self.per_eps[k]
        xs, ys = [], []
        for s in stats:
            v = getattr(s, attr)
            if s.path_count > 0 and v > 0:
                xs.append(np.log(s.eps))
                ys.append(np.log(v))
        if len(xs) < 2:
            return None
        return float(np.polyfit(xs, ys, 1)[0])


def _collect_block(model, noise_spec, K, x0, grid, eps_ladder, master_seed,
                   start, count, chunk_size):
    """Per-replicate sup-deviation matrix for replicates start..start+count-1."""
    E = len(eps_ladder)
    sup = np.empty((count, E, K + 1))
    excluded = np.zeros((count, E), dtype=bool)
    done = 0
    while done < count:
        take = min(chunk_size, count - done)
        batch = sample_noise_batch(noise_spec, grid, master_seed, take, start=start + done)
        us, blows = solve_coefficients_batch(model, K, x0, batch)
        coeff_bad = np.zeros(take, dtype=bool)
        for b in blows:
            coeff_bad |= b >= 0
        for e, eps in enumerate(eps_ladder):
            full, blow_f = integrate_full_batch(model, eps, x0, batch)
            excluded[done : done + take, e] = coeff_bad | (blow_f >= 0)
            partial = np.zeros_like(full)
            for k in range(K + 1):
                partial = partial + (eps**k) * us[k]
                dev = np.linalg.norm(full - partial, axis=-1).max(axis=-1)
                sup[done : done + take, e, k] = dev
        done += take
    return sup, excluded


def _fit_slope(log_eps, log_means):
    x = np.asarray(log_eps)
    y = np.asarray(log_means)
    xc = x - x.mean()
    return float(np.sum(xc * y) / np.sum(xc * xc))


def _bootstrap_slopes(sup_k, included, log_eps, eligible, resamples, rng):
    """Slope distribution over bootstrap resamples of replicates."""
    R = sup_k.shape[0]
    idx = rng.integers(0, R, size=(resamples, R))
    inc = included[idx]  # (B, R, E)
    vals = sup_k[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.sum(vals * inc, axis=1) / np.sum(inc, axis=1)  # (B, E)
        logm = np.log(means[:, eligible])
    x = log_eps[eligible]
    xc = x - x.mean()
    ok = np.all(np.isfinite(logm), axis=1)
    slopes = np.sum(xc * logm[ok], axis=1) / np.sum(xc * xc)
    return slopes


def run_remainder_study(model, noise_spec, K, x0, grid, eps_ladder, replicates,
                        master_seed, *, chunk_size=256, bootstrap_resamples=500,
                        dt_check=True, dt_check_replicates=128, jobs=1):
    """Run the common-random-numbers remainder study; deterministic given
    master_seed (independent of chunking and job count)."""
    eps_ladder = tuple(float(e) for e in eps_ladder)
    if not eps_ladder:
        raise ValueError("epsilon ladder must be nonempty")
    if any(e <= 0 for e in eps_ladder) or any(
        a <= b for a, b in zip(eps_ladder, eps_ladder[1:])
    ):
        raise ValueError("epsilon ladder must be strictly decreasing and positive")
    if eps_ladder[0] > model.eps0:
        raise ValueError(
            f"ladder starts at {eps_ladder[0]} above the declared eps0={model.eps0}"
        )
    replicates = int(replicates)
    if replicates < 1:
        raise ValueError("need at least one replicate")
    grid = np.asarray(grid, dtype=float)
    E = len(eps_ladder)

    if jobs > 1:
        blocks = []
        size = (replicates + jobs - 1) // jobs
        starts = list(range(0, replicates, size))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    _collect_block, model, noise_spec, K, x0, grid, eps_ladder,
                    master_seed, s, min(size, replicates - s), chunk_size,
                )
                for s in starts
            ]
            blocks = [f.result() for f in futures]
        sup = np.concatenate([b[0] for b in blocks])
        excluded = np.concatenate([b[1] for b in blocks])
    else:
        sup, excluded = _collect_block(
            model, noise_spec, K, x0, grid, eps_ladder, master_seed,
            0, replicates, chunk_size,
        )

    for e, eps in enumerate(eps_ladder):
        n_bad = int(excluded[:, e].sum())
        if n_bad > 0.5 * replicates:
            raise InsufficientPaths(
                f"{n_bad}/{replicates} paths excluded at eps={eps:g}"
            )

    included = ~excluded
    per_eps = {}
    monotone = {}
    for k in range(K + 1):
        stats = []
        for e, eps in enumerate(eps_ladder):
            inc = included[:, e]
            vals = sup[inc, e, k]
            if vals.size:
                q50, q90, q99 = np.quantile(vals, [0.5, 0.9, 0.99])
                mean = float(vals.mean())
            else:
                q50 = q90 = q99 = mean = float("nan")
            stats.append(
                PerEpsStats(
                    eps=eps, mean_sup=mean, q50=float(q50), q90=float(q90),
                    q99=float(q99), path_count=int(inc.sum()),
                    excluded=int((~inc).sum()),
                )
            )
        per_eps[k] = stats
        means = np.array([s.mean_sup for s in stats])
        monotone[k] = int(np.sum(np.diff(means) > 0))  # ladder is decreasing in eps

    log_eps = np.log(np.array(eps_ladder))
    slopes = {}
    rng = np.random.default_rng(
        np.random.SeedSequence((int(master_seed), _BOOTSTRAP_SEED_OFFSET))
    )
    for k in range(K + 1):
        counts = included.sum(axis=0)
        eligible = counts >= 0.9 * replicates
        means = np.array([s.mean_sup for s in per_eps[k]])
        eligible &= np.isfinite(means) & (means > 0)
        if eligible.sum() < 2:
            slopes[k] = None
            continue
        slope = _fit_slope(log_eps[eligible], np.log(means[eligible]))
        boot = _bootstrap_slopes(
            sup[:, :, k], included, log_eps, eligible, bootstrap_resamples, rng
        )
        if boot.size:
            lo, hi = np.percentile(boot, [2.5, 97.5])
        else:
            lo = hi = slope
        slopes[k] = SlopeFit(slope=slope, ci_lo=float(lo), ci_hi=float(hi))

    dt_limited = {k: None for k in range(K + 1)}
    if dt_check:
        dt_limited = _dt_bias_check(
            model, noise_spec, K, x0, grid, eps_ladder[0],
            min(dt_check_replicates, replicates), master_seed,
        )

    return RemainderStudy(
        order=K,
        eps_ladder=eps_ladder,
        per_eps=per_eps,
        slopes=slopes,
        dt_limited=dt_limited,
        monotone_violations=monotone,
        sup_values=sup,
        excluded=excluded,
    )


def _refine_grid(grid):
    mids = 0.5 * (grid[:-1] + grid[1:])
    return np.sort(np.concatenate([grid, mids]))


def _mean_sups(model, K, x0, batch, eps):
    us, blows = solve_coefficients_batch(model, K, x0, batch)
    bad = np.zeros(batch.count, dtype=bool)
    for b in blows:
        bad |= b >= 0
    full, blow_f = integrate_full_batch(model, eps, x0, batch)
    bad |= blow_f >= 0
    out = []
    partial = np.zeros_like(full)
    for k in range(K + 1):
        partial = partial + (eps**k) * us[k]
        dev = np.linalg.norm(full - partial, axis=-1).max(axis=-1)
        out.append(float(dev[~bad].mean()) if np.any(~bad) else float("nan"))
    return out


def _dt_bias_check(model, noise_spec, K, x0, grid, eps_max, count, master_seed):
    """Couple a half-step run to the working grid and compare mean sups."""
    aux_seed = (int(master_seed) + _DT_CHECK_SEED_OFFSET) % (2**63)
    fine = _refine_grid(grid)
    batch_fine = sample_noise_batch(noise_spec, fine, aux_seed, count)
    batch_coarse = batch_fine.restrict(grid)
    fine_means = _mean_sups(model, K, x0, batch_fine, eps_max)
    coarse_means = _mean_sups(model, K, x0, batch_coarse, eps_max)
    out = {}
    for k in range(K + 1):
        c, f = coarse_means[k], fine_means[k]
        if not (np.isfinite(c) and np.isfinite(f)) or c == 0:
            out[k] = None
        else:
            out[k] = bool(abs(f - c) > 0.1 * abs(c))
    return out


# -- derivative bound constants --------------------------------------------------

@dataclass
class BoundConstants:
    """Sampled sup-norm bounds of total-order-(k+1) derivatives over a box.

    Estimated on the box, not proven global: finite values certify only that
    the scaling theorem's boundedness hypotheses look plausible there.
    """

    order: int
    drift_bound: float
    diffusion_bound: float


def estimate_bound_constants(model, k, box, samples=2000, eps_points=11, seed=0):
    """Max over sampled box points (and an eps grid for sigma) of the
    Euclidean/Frobenius norms of all derivatives of total order k+1."""
    lo, hi = (np.asarray(side, dtype=float) for side in box)
    d = model.dimension
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((int(samples), d)) * (hi - lo)
    eps_grid = np.linspace(0.0, model.eps0, eps_points)
    order = int(k) + 1

    drift_fields = list(model.drift_family) if model.drift_family else [model.drift]
    drift_max = 0.0
    for alpha in multi_indices_of_order(d, order):
        per_field = []
        for f in drift_fields:
            if f.derivative_is_zero(alpha):
                per_field.append(None)
                continue
            per_field.append(np.asarray(f.derivative(alpha, pts), dtype=float))
        if all(v is None for v in per_field):
            continue
        if len(per_field) == 1:
            total = per_field[0][None]  # no eps dependence
        else:
            total = np.zeros((eps_points, samples, d))
            for i, v in enumerate(per_field):
                if v is not None:
                    total += (eps_grid**i)[:, None, None] * v[None]
        norms = np.linalg.norm(total, axis=-1)
        drift_max = max(drift_max, float(norms.max()))

    sig_max = 0.0
    for alpha in multi_indices_of_order(d, order):
        per_field = []
        for s in model.diffusion_family:
            if s.derivative_is_zero(alpha):
                per_field.append(None)
                continue
            per_field.append(np.asarray(s.derivative(alpha, pts), dtype=float))
        if all(v is None for v in per_field):
            continue
        total = np.zeros((eps_points, samples, d, d))
        for i, v in enumerate(per_field):
            if v is not None:
                total += (eps_grid**i)[:, None, None, None] * v[None]
        norms = np.linalg.norm(total.reshape(eps_points, samples, -1), axis=-1)
        sig_max = max(sig_max, float(norms.max()))

    return BoundConstants(order=order, drift_bound=drift_max, diffusion_bound=sig_max)

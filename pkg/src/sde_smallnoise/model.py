"""Model and noise specifications plus driving-noise sampling.

The driving noise eta is a Brownian motion with covariance A, a drift vector
b and an optional compound-Poisson jump part.  A realized :class:`NoisePath`
keeps Brownian increments and jump events on a fixed time grid; every solver
in a comparison consumes the same realization (common random numbers), and a
path sampled on a fine grid can be restricted to a coarser subgrid with
increments that sum exactly.

Per-path seeding is counter-based: ``path_seed(master, index)`` hashes
(master, index) through numpy's SeedSequence so Monte Carlo batches
parallelize deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonPSDCovariance
from .fields import (
    MatrixField,
    PolynomialScalarField,
    VectorField,
)

__all__ = [
    "ConstantMark",
    "GaussianMark",
    "CompoundPoissonSpec",
    "PiecewiseConstantDrift",
    "NoiseSpec",
    "NoisePath",
    "NoiseBatch",
    "ModelSpec",
    "path_seed",
    "sample_noise_path",
    "sample_noise_batch",
    "lipschitz_estimate",
    "psd_factor",
    "model_from_config",
    "noise_from_config",
]


# -- jump mark distributions --------------------------------------------------

@dataclass(frozen=True)
class ConstantMark:
    value: tuple

    def mean_vector(self):
        return np.asarray(self.value, dtype=float)

    def sample(self, rng, count):
        return np.tile(np.asarray(self.value, dtype=float), (count, 1))


@dataclass(frozen=True)
class GaussianMark:
    mean: tuple
    cov: tuple  # row tuples

    def mean_vector(self):
        return np.asarray(self.mean, dtype=float)

    def sample(self, rng, count):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        factor = psd_factor(cov)
        z = rng.standard_normal((count, mean.shape[0]))
        return mean[None, :] + z @ factor.T


@dataclass(frozen=True)
class CompoundPoissonSpec:
    """Finite-activity jump part: Poisson(intensity) events with i.i.d. marks."""

    intensity: float
    marks: object
    compensated: bool = False

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("jump intensity must be nonnegative")


@dataclass(frozen=True)
class PiecewiseConstantDrift:
    """Time-dependent noise drift b(t), constant on [times[i], times[i+1])."""

    times: tuple
    values: tuple  # one d-vector per piece; len(values) == len(times)

    def at(self, t):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
        return values[idx]


def psd_factor(A, tol=1e-12):
    """Factor F with F @ F.T == A for symmetric PSD A (NonPSDCovariance otherwise)."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12):
        raise NonPSDCovariance("covariance must be symmetric")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(A)
        scale = max(1.0, float(np.max(np.abs(w))))
        if np.min(w) < -tol * scale:
            raise NonPSDCovariance(f"covariance has negative eigenvalue {np.min(w):g}")
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the driving noise: Brownian covariance, drift, optional jumps."""

    dimension: int
    brownian_covariance: tuple  # d x d rows
    drift_vector: object = None  # d-vector or PiecewiseConstantDrift
    jumps: CompoundPoissonSpec | None = None

    def covariance_matrix(self):
        return np.asarray(self.brownian_covariance, dtype=float).reshape(
            self.dimension, self.dimension
        )

    def drift_at(self, t):
        if self.drift_vector is None:
            return np.zeros((np.shape(t) + (self.dimension,)) if np.ndim(t) else self.dimension)
        if isinstance(self.drift_vector, PiecewiseConstantDrift):
            return self.drift_vector.at(t)
        b = np.asarray(self.drift_vector, dtype=float)
        if np.ndim(t):
            return np.broadcast_to(b, np.shape(t) + (self.dimension,))
        return b


@dataclass
class NoisePath:
    """One realization of the driving noise on a time grid.

    ``increments`` holds Brownian increments per step; ``drift_term`` holds
    b_eff(t_m) * dt_m per step, where b_eff folds in the compensator
    -intensity * E[mark] when the jump part is compensated.  Jump events keep
    their exact times; ``jump_steps[j]`` is the index m of the interval
    (t_m, t_{m+1}] containing event j.
    """

    grid: np.ndarray
    increments: np.ndarray  # (n, d)
    jump_times: np.ndarray  # (J,)
    jump_marks: np.ndarray  # (J, d)
    seed: int
    spec: NoiseSpec
    drift_term: np.ndarray = None  # (n, d)
    jump_steps: np.ndarray = None  # (J,)

    def __post_init__(self):
        if self.drift_term is None:
            self.drift_term = _drift_term(self.spec, self.grid)
        if self.jump_steps is None:
            self.jump_steps = _bucket_jumps(self.grid, self.jump_times)

    @property
    def n_steps(self):
        return len(self.grid) - 1

    @property
    def dimension(self):
        return self.increments.shape[1]

    def brownian_path(self):
        """Cumulative Brownian values at grid points, shape (n+1, d)."""
        out = np.zeros((len(self.grid), self.dimension))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def restrict(self, coarse_grid):
        """Couple this path to a coarser subgrid (increments sum exactly)."""
        coarse_grid = np.asarray(coarse_grid, dtype=float)
        idx = np.searchsorted(self.grid, coarse_grid)
        if not np.array_equal(self.grid[idx], coarse_grid):
            raise ValueError("coarse grid is not a subset of the fine grid")
        inc = np.add.reduceat(self.increments, idx[:-1], axis=0)
        drift = np.add.reduceat(self.drift_term, idx[:-1], axis=0)
        return NoisePath(
            grid=coarse_grid,
            increments=inc,
            jump_times=self.jump_times,
            jump_marks=self.jump_marks,
            seed=self.seed,
            spec=self.spec,
            drift_term=drift,
        )


def _drift_term(spec, grid):
    grid = np.asarray(grid, dtype=float)
    dts = np.diff(grid)
    b = spec.drift_at(grid[:-1])
    b = np.broadcast_to(b, (len(dts), spec.dimension)).copy()
    if spec.jumps is not None and spec.jumps.compensated:
        b -= spec.jumps.intensity * spec.jumps.marks.mean_vector()
    return b * dts[:, None]


def _bucket_jumps(grid, jump_times):
    # event at time s in (t_m, t_{m+1}] is applied within step m
    return np.searchsorted(grid, jump_times, side="left") - 1


def path_seed(master_seed, index):
    """Deterministic 64-bit per-path seed derived from (master_seed, index)."""
    ss = np.random.SeedSequence((int(master_seed), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_noise_path(spec, grid, seed):
    """Draw one NoisePath; deterministic given (spec, grid, seed).

    Draw order is fixed: Brownian standard normals, then jump count, then
    jump times as uniform order statistics on (0, T], then marks.
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least one step")
    d = spec.dimension
    n = len(grid) - 1
    rng = np.random.default_rng(int(seed))
    factor = psd_factor(spec.covariance_matrix())
    z = rng.standard_normal((n, d))
    increments = (z @ factor.T) * np.sqrt(np.diff(grid))[:, None]
    if spec.jumps is not None and spec.jumps.intensity > 0:
        horizon = grid[-1] - grid[0]
        count = int(rng.poisson(spec.jumps.intensity * horizon))
        times = np.sort(grid[-1] - rng.uniform(0.0, horizon, count))
        marks = np.asarray(spec.jumps.marks.sample(rng, count), dtype=float).reshape(count, d)
    else:
        times = np.empty(0)
        marks = np.empty((0, d))
    return NoisePath(
        grid=grid,
        increments=increments,
        jump_times=times,
        jump_marks=marks,
        seed=int(seed),
        spec=spec,
    )


@dataclass
class NoiseBatch:
    """A stack of NoisePaths on one grid (used by the Monte Carlo drivers)."""

    grid: np.ndarray
    increments: np.ndarray  # (R, n, d)
    jumps: list  # per path: (times, marks, steps)
    seeds: np.ndarray
    spec: NoiseSpec
    drift_term: np.ndarray  # (n, d), shared

    @property
    def count(self):
        return self.increments.shape[0]

    def path(self, r):
        times, marks, steps = self.jumps[r]
        return NoisePath(
            grid=self.grid,
            increments=self.increments[r],
            jump_times=times,
            jump_marks=marks,
            seed=int(self.seeds[r]),
            spec=self.spec,
            drift_term=self.drift_term,
            jump_steps=steps,
        )

    def restrict(self, coarse_grid):
        coarse_grid = np.asarray(coarse_grid, dtype=float)
        idx = np.searchsorted(self.grid, coarse_grid)
        if not np.array_equal(self.grid[idx], coarse_grid):
            raise ValueError("coarse grid is not a subset of the fine grid")
        inc = np.add.reduceat(self.increments, idx[:-1], axis=1)
        drift = np.add.reduceat(self.drift_term, idx[:-1], axis=0)
        jumps = [
            (times, marks, _bucket_jumps(coarse_grid, times))
            for times, marks, _ in self.jumps
        ]
        return NoiseBatch(coarse_grid, inc, jumps, self.seeds, self.spec, drift)


def sample_noise_batch(spec, grid, master_seed, count, start=0):
    """Stack paths for replicate indices start..start+count-1, each seeded
    path_seed(master_seed, index); bit-identical to sampling each path
    individually with that seed, so batching and chunking do not change
    results."""
    paths = [
        sample_noise_path(spec, grid, path_seed(master_seed, r))
        for r in range(start, start + count)
    ]
    grid = np.asarray(grid, dtype=float)
    increments = np.stack([p.increments for p in paths])
    jumps = [(p.jump_times, p.jump_marks, p.jump_steps) for p in paths]
    seeds = np.array([p.seed for p in paths], dtype=np.uint64)
    return NoiseBatch(grid, increments, jumps, seeds, spec, paths[0].drift_term)


# -- model specification -------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """The SDE du = beta(u) dt + sigma_eps(u) eta(ds).

    ``diffusion_family`` lists sigma_0..sigma_M; sigma_eps(x) is the exact
    polynomial sum_{i<=M} sigma_i(x) eps^i (missing higher orders are zero).
    ``drift_family`` replaces a single drift by beta_0..beta_Mtilde when the
    drift itself depends on eps.
    """

    dimension: int
    drift: VectorField
    diffusion_family: tuple
    drift_family: tuple | None = None
    eps0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "diffusion_family", tuple(self.diffusion_family))
        if self.drift_family is not None:
            object.__setattr__(self, "drift_family", tuple(self.drift_family))

    @property
    def eps_order(self):
        return len(self.diffusion_family) - 1

    def base_drift(self):
        return self.drift_family[0] if self.drift_family else self.drift

    def drift_value(self, eps, x):
        if self.drift_family is None:
            return self.drift.value(x)
        total = None
        for i, beta_i in enumerate(self.drift_family):
            if beta_i.is_zero:
                continue
            term = beta_i.value(x) if i == 0 else (eps**i) * beta_i.value(x)
            total = term if total is None else total + term
        if total is None:
            x = np.asarray(x)
            total = np.zeros(x.shape)
        return total

    def sigma_value(self, eps, x):
        x = np.asarray(x)
        total = None
        for i, sig in enumerate(self.diffusion_family):
            if sig.is_zero or (i > 0 and eps == 0.0):
                continue
            term = sig.value(x) if i == 0 else (eps**i) * sig.value(x)
            total = term if total is None else total + term
        if total is None:
            total = np.zeros(x.shape[:-1] + (self.dimension, self.dimension))
        return total


def lipschitz_estimate(field, box, samples=10000, seed=0):
    """Max of ||f(x)-f(y)|| / ||x-y|| over sampled pairs in the box.

    A sampled lower bound on the Lipschitz constant; used to warn, not to
    reject, when inputs look non-Lipschitz.
    """
    lo, hi = (np.asarray(side, dtype=float) for side in box)
    rng = np.random.default_rng(seed)
    x = lo + rng.random((samples, lo.shape[-1])) * (hi - lo)
    y = lo + rng.random((samples, lo.shape[-1])) * (hi - lo)
    fx = np.asarray(field.value(x), dtype=float)
    fy = np.asarray(field.value(y), dtype=float)
    if fx.ndim == 1:
        num = np.abs(fx - fy)
    else:
        num = np.linalg.norm((fx - fy).reshape(samples, -1), axis=-1)
    den = np.linalg.norm(x - y, axis=-1)
    ok = den > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(num[ok] / den[ok]))


# -- JSON configuration --------------------------------------------------------
#
# Model documents look like
#   {
#     "dimension": 1,
#     "drift": [ {"1": 0.05} ],                      # one {alpha: coeff} map per component
#     "sigma": [ [[{}]], [[{"1": 1.0}]] ],           # sigma_i as d x d nested maps
#     "noise": {
#       "covariance": [[1.0]],
#       "drift_b": [0.0],
#       "jumps": {"intensity": 3.0,
#                 "mark_distribution": {"type": "constant", "value": [1.0]},
#                 "compensated": false}
#     },
#     "eps0": 1.0
#   }
# Multi-index keys are comma-separated exponents, e.g. "2,1" for x1^2 x2.


def _parse_alpha(key, dim):
    parts = [p for p in str(key).replace("(", "").replace(")", "").split(",") if p.strip() != ""]
    alpha = tuple(int(p) for p in parts)
    if len(alpha) != dim:
        raise ConfigError(f"multi-index {key!r} does not have {dim} entries")
    return alpha


def _poly_from_config(table, dim):
    if not isinstance(table, dict):
        raise ConfigError(f"polynomial field must be an object, got {type(table).__name__}")
    return PolynomialScalarField(dim, {_parse_alpha(k, dim): float(v) for k, v in table.items()})


def _vector_from_config(tables, dim):
    if len(tables) != dim:
        raise ConfigError(f"drift needs {dim} components, got {len(tables)}")
    return VectorField([_poly_from_config(t, dim) for t in tables])


def _matrix_from_config(rows, dim):
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise ConfigError(f"sigma entries must be {dim}x{dim} tables")
    return MatrixField([[_poly_from_config(e, dim) for e in row] for row in rows])


def model_from_config(doc):
    try:
        dim = int(doc["dimension"])
        drift_doc = doc["drift"]
        sigma_doc = doc["sigma"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model document: {exc}") from exc
    if isinstance(drift_doc, dict) and "family" in drift_doc:
        family = tuple(_vector_from_config(t, dim) for t in drift_doc["family"])
        drift = family[0]
    else:
        drift = _vector_from_config(drift_doc, dim)
        family = None
    sigma = tuple(_matrix_from_config(rows, dim) for rows in sigma_doc)
    return ModelSpec(
        dimension=dim,
        drift=drift,
        diffusion_family=sigma,
        drift_family=family,
        eps0=float(doc.get("eps0", 1.0)),
    )


def noise_from_config(doc, dim):
    doc = doc or {}
    cov = doc.get("covariance")
    if cov is None:
        cov = np.eye(dim).tolist()
    drift_b = doc.get("drift_b")
    jumps_doc = doc.get("jumps")
    jumps = None
    if jumps_doc:
        dist = jumps_doc.get("mark_distribution", {})
        kind = dist.get("type", "constant")
        if kind == "constant":
            marks = ConstantMark(tuple(float(v) for v in dist["value"]))
        elif kind in ("normal", "gaussian"):
            marks = GaussianMark(
                tuple(float(v) for v in dist["mean"]),
                tuple(tuple(float(v) for v in row) for row in dist["cov"]),
            )
        else:
            raise ConfigError(f"unknown mark distribution type {kind!r}")
        jumps = CompoundPoissonSpec(
            intensity=float(jumps_doc["intensity"]),
            marks=marks,
            compensated=bool(jumps_doc.get("compensated", False)),
        )
    return NoiseSpec(
        dimension=dim,
        brownian_covariance=tuple(tuple(float(v) for v in row) for row in cov),
        drift_vector=None if drift_b is None else tuple(float(v) for v in drift_b),
        jumps=jumps,
    )

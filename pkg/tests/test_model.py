import numpy as np
import pytest

from sde_smallnoise import (
    CompoundPoissonSpec,
    ConfigError,
    ConstantMark,
    GaussianMark,
    NonPSDCovariance,
    NoiseSpec,
    PiecewiseConstantDrift,
    PolynomialScalarField,
    VectorField,
    lipschitz_estimate,
    model_from_config,
    noise_from_config,
    path_seed,
    sample_noise_batch,
    sample_noise_path,
)


def unit_noise(d=1, jumps=None, drift=None, cov=None):
    if cov is None:
        cov = np.eye(d)
    return NoiseSpec(
        dimension=d,
        brownian_covariance=tuple(map(tuple, np.asarray(cov, dtype=float))),
        drift_vector=drift,
        jumps=jumps,
    )


class TestSampling:
    def test_degenerate_noise_is_zero(self):
        spec = unit_noise(cov=[[0.0]])
        p = sample_noise_path(spec, np.linspace(0, 1, 11), 123)
        assert np.all(p.increments == 0.0)
        assert len(p.jump_times) == 0

    def test_reproducible_bit_identical(self):
        spec = unit_noise(
            d=2,
            jumps=CompoundPoissonSpec(2.0, GaussianMark((0.0, 0.0), ((1.0, 0.0), (0.0, 1.0)))),
        )
        grid = np.linspace(0, 2, 101)
        a = sample_noise_path(spec, grid, 99)
        b = sample_noise_path(spec, grid, 99)
        assert np.array_equal(a.increments, b.increments)
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.jump_marks, b.jump_marks)

    def test_brownian_covariance_statistics(self):
        # W(1) over many seeds has sample covariance within 5% of identity
        spec = unit_noise(d=2)
        grid = np.linspace(0, 1, 101)
        batch = sample_noise_batch(spec, grid, 0, 10000)
        w1 = batch.increments.sum(axis=1)  # (R, 2)
        cov = np.cov(w1.T)
        assert np.allclose(cov, np.eye(2), atol=0.05)

    def test_poisson_jump_count_mean(self):
        spec = unit_noise(jumps=CompoundPoissonSpec(5.0, ConstantMark((1.0,))))
        grid = np.linspace(0, 2, 21)
        batch = sample_noise_batch(spec, grid, 1, 10000)
        counts = np.array([len(t) for t, _, _ in batch.jumps])
        assert counts.mean() == pytest.approx(10.0, abs=0.3)

    def test_jump_times_sorted_in_range(self):
        spec = unit_noise(jumps=CompoundPoissonSpec(10.0, ConstantMark((1.0,))))
        grid = np.linspace(0, 3, 31)
        p = sample_noise_path(spec, grid, 5)
        assert np.all(np.diff(p.jump_times) > 0)
        assert np.all(p.jump_times > 0) and np.all(p.jump_times <= 3.0)
        # bucketed step contains the event: t in (t_m, t_{m+1}]
        for t, m in zip(p.jump_times, p.jump_steps):
            assert grid[m] < t <= grid[m + 1]

    def test_correlated_covariance_factor(self):
        A = np.array([[1.0, 0.5], [0.5, 2.0]])
        spec = unit_noise(d=2, cov=A)
        grid = np.linspace(0, 1, 51)
        batch = sample_noise_batch(spec, grid, 3, 8000)
        w1 = batch.increments.sum(axis=1)
        assert np.allclose(np.cov(w1.T), A, atol=0.1)

    def test_non_psd_rejected(self):
        spec = unit_noise(d=2, cov=[[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NonPSDCovariance):
            sample_noise_path(spec, np.linspace(0, 1, 11), 0)


class TestRefinementCoupling:
    def test_restriction_sums_increments(self):
        spec = unit_noise(jumps=CompoundPoissonSpec(3.0, ConstantMark((0.5,))))
        fine = np.linspace(0, 1, 401)
        coarse = fine[::4]
        p = sample_noise_path(spec, fine, 17)
        q = p.restrict(coarse)
        assert np.allclose(
            q.increments[:, 0],
            np.add.reduceat(p.increments[:, 0], np.arange(0, 400, 4)),
        )
        assert np.array_equal(q.jump_times, p.jump_times)
        assert np.allclose(q.drift_term.sum(axis=0), p.drift_term.sum(axis=0))

    def test_restriction_requires_subgrid(self):
        spec = unit_noise()
        p = sample_noise_path(spec, np.linspace(0, 1, 11), 0)
        with pytest.raises(ValueError):
            p.restrict(np.array([0.0, 0.33, 1.0]))

    def test_batch_matches_individual_paths(self):
        spec = unit_noise(jumps=CompoundPoissonSpec(1.0, ConstantMark((1.0,))))
        grid = np.linspace(0, 1, 21)
        batch = sample_noise_batch(spec, grid, 11, 5, start=2)
        for r in range(5):
            single = sample_noise_path(spec, grid, path_seed(11, r + 2))
            assert np.array_equal(batch.increments[r], single.increments)
            assert np.array_equal(batch.jumps[r][0], single.jump_times)


class TestDriftAndCompensation:
    def test_compensated_drift_term(self):
        jumps = CompoundPoissonSpec(4.0, ConstantMark((0.5,)), compensated=True)
        spec = unit_noise(jumps=jumps)
        grid = np.linspace(0, 1, 11)
        p = sample_noise_path(spec, grid, 0)
        # b_eff = 0 - 4 * 0.5 = -2, times dt = 0.1
        assert np.allclose(p.drift_term[:, 0], -0.2)

    def test_piecewise_constant_drift(self):
        drift = PiecewiseConstantDrift(times=(0.0, 0.5), values=((1.0,), (3.0,)))
        spec = unit_noise(drift=drift)
        grid = np.linspace(0, 1, 11)
        p = sample_noise_path(spec, grid, 0)
        assert np.allclose(p.drift_term[:5, 0], 0.1)
        assert np.allclose(p.drift_term[5:, 0], 0.3)


class TestLipschitz:
    def test_linear_exact(self):
        f = VectorField([PolynomialScalarField(1, {(1,): 2.0})])
        est = lipschitz_estimate(f, (np.array([-5.0]), np.array([5.0])), 2000)
        assert 2.0 - 1e-9 <= est <= 2.0

    def test_quadratic_on_box(self):
        f = VectorField([PolynomialScalarField(1, {(2,): 1.0})])
        est = lipschitz_estimate(f, (np.array([-1.0]), np.array([1.0])), 20000)
        assert 1.9 <= est <= 2.0

    def test_constant_is_zero(self):
        f = VectorField([PolynomialScalarField(1, {(0,): 3.0})])
        assert lipschitz_estimate(f, (np.array([0.0]), np.array([1.0])), 100) == 0.0


class TestConfig:
    def test_model_round_trip(self):
        doc = {
            "dimension": 1,
            "drift": [{"1": 0.05}],
            "sigma": [[[{}]], [[{"1": 1.0}]]],
            "noise": {"covariance": [[1.0]], "drift_b": [0.0]},
        }
        model = model_from_config(doc)
        assert model.dimension == 1
        assert model.eps_order == 1
        assert model.diffusion_family[0].is_zero
        x = np.array([2.0])
        assert model.drift.value(x)[0] == pytest.approx(0.1)
        noise = noise_from_config(doc["noise"], 1)
        assert noise.covariance_matrix()[0, 0] == 1.0

    def test_jump_config(self):
        doc = {
            "covariance": [[1.0]],
            "jumps": {
                "intensity": 3.0,
                "mark_distribution": {"type": "constant", "value": [1.0]},
                "compensated": True,
            },
        }
        noise = noise_from_config(doc, 1)
        assert noise.jumps.intensity == 3.0
        assert noise.jumps.compensated

    def test_bad_multiindex_rejected(self):
        with pytest.raises(ConfigError):
            model_from_config(
                {"dimension": 2, "drift": [{"1": 1.0}, {}], "sigma": [[[{}, {}], [{}, {}]]]}
            )

    def test_unknown_mark_distribution(self):
        with pytest.raises(ConfigError):
            noise_from_config(
                {"jumps": {"intensity": 1.0, "mark_distribution": {"type": "cauchy"}}}, 1
            )

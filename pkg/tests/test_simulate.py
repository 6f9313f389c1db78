import numpy as np
import pytest

from sde_smallnoise import (
    CompoundPoissonSpec,
    ConstantMark,
    LinearSDECoefficients,
    ModelSpec,
    NoiseSpec,
    affine_vector_field,
    componentwise_linear_matrix_field,
    constant_matrix_field,
    integrate_full,
    integrate_full_batch,
    integrate_linear,
    sample_noise_batch,
    sample_noise_path,
    zero_matrix_field,
)
from sde_smallnoise.fields import PolynomialScalarField, VectorField
from sde_smallnoise.oracles import gbm_exact_path


def brownian_noise(grid, seed, d=1):
    spec = NoiseSpec(dimension=d, brownian_covariance=tuple(map(tuple, np.eye(d))))
    return sample_noise_path(spec, grid, seed)


def gbm_model(r=0.05, sigma_tilde=1.0):
    return ModelSpec(
        dimension=1,
        drift=affine_vector_field([[r]]),
        diffusion_family=(
            zero_matrix_field(1),
            componentwise_linear_matrix_field([[sigma_tilde]]),
        ),
    )


class TestFullIntegrator:
    def test_deterministic_ode_limit(self):
        # sigma == 0, beta = -x: Euler tracks e^{-t} with O(dt) global error
        model = ModelSpec(
            dimension=1,
            drift=affine_vector_field([[-1.0]]),
            diffusion_family=(zero_matrix_field(1),),
        )
        grid = np.linspace(0, 1, 1001)
        spec = NoiseSpec(dimension=1, brownian_covariance=((0.0,),))
        noise = sample_noise_path(spec, grid, 0)
        path = integrate_full(model, 0.0, [1.0], noise)
        err = np.abs(path.states[:, 0] - np.exp(-grid)).max()
        assert err <= 1.5e-3  # ~ C dt with C about 1 on [0, 1]

    def test_gbm_strong_error(self):
        # eps sigma x multiplicative noise vs the exact solution, 200 paths
        model = gbm_model()
        grid = np.linspace(0, 1, 10001)
        spec = NoiseSpec(dimension=1, brownian_covariance=((1.0,),))
        batch = sample_noise_batch(spec, grid, 1000, 200)
        states, blow = integrate_full_batch(model, 0.3, [1.0], batch)
        assert np.all(blow < 0)
        B = np.concatenate(
            [np.zeros((200, 1)), np.cumsum(batch.increments[:, :, 0], axis=1)], axis=1
        )
        exact = gbm_exact_path(0.3, 1.0, 0.05, 1.0, grid, B)
        errs = np.abs(states[:, :, 0] - exact).max(axis=1)
        rms = float(np.sqrt(np.mean(np.square(errs))))
        assert rms < 5e-3

    def test_pure_jump_counting(self):
        spec = NoiseSpec(
            dimension=1,
            brownian_covariance=((0.0,),),
            jumps=CompoundPoissonSpec(3.0, ConstantMark((1.0,))),
        )
        model = ModelSpec(
            dimension=1,
            drift=affine_vector_field([[0.0]]),
            diffusion_family=(constant_matrix_field([[1.0]]),),
        )
        grid = np.linspace(0, 1, 101)
        for seed in range(5):
            noise = sample_noise_path(spec, grid, seed)
            path = integrate_full(model, 0.0, [2.0], noise)
            assert path.states[-1, 0] == pytest.approx(2.0 + len(noise.jump_times))
            assert len(path.jump_records) == len(noise.jump_times)

    def test_blowup_marked_not_raised(self):
        # cubic drift from x0=2 explodes; path must be frozen and flagged
        model = ModelSpec(
            dimension=1,
            drift=VectorField([PolynomialScalarField(1, {(3,): 1.0})]),
            diffusion_family=(zero_matrix_field(1),),
        )
        grid = np.linspace(0, 1, 1001)
        spec = NoiseSpec(dimension=1, brownian_covariance=((0.0,),))
        noise = sample_noise_path(spec, grid, 0)
        path = integrate_full(model, 0.0, [2.0], noise)
        assert path.blew_up
        assert np.all(np.isfinite(path.states))

    def test_negative_eps_rejected(self):
        model = gbm_model()
        grid = np.linspace(0, 1, 11)
        noise = brownian_noise(grid, 0)
        with pytest.raises(ValueError):
            integrate_full(model, -0.1, [1.0], noise)


class TestLinearIntegrator:
    def test_constant_loading_exact(self):
        # gamma = G = F = 0, g = c: X = x0 + c * eta(t) with no discretization error
        grid = np.linspace(0, 1, 101)
        spec = NoiseSpec(
            dimension=1,
            brownian_covariance=((1.0,),),
            drift_vector=(0.7,),
            jumps=CompoundPoissonSpec(2.0, ConstantMark((0.3,))),
        )
        noise = sample_noise_path(spec, grid, 21)
        c = 2.0
        path = integrate_linear(None, None, np.array([[c]]), [1.0], noise)
        eta = 0.7 * grid + noise.brownian_path()[:, 0]
        for j, t in enumerate(noise.jump_times):
            eta = eta + 0.3 * (grid >= grid[noise.jump_steps[j] + 1])
        assert np.allclose(path.states[:, 0], 1.0 + c * eta, atol=1e-12)

    def test_pure_time_forcing_exact(self):
        grid = np.linspace(0, 1, 51)
        noise = brownian_noise(grid, 3)
        path = integrate_linear(None, np.array([1.0]), None, [0.5], noise)
        assert np.allclose(path.states[:, 0], 0.5 + grid, atol=1e-14)

    def test_scalar_closed_form(self):
        # constant gamma, G: EM vs the stochastic exponential, strong order 1/2
        gamma, G = 0.1, 0.5
        grid = np.linspace(0, 1, 1001)
        coeffs = LinearSDECoefficients(
            gamma=np.array([[gamma]]), noise_state_loading=np.array([[[G]]])
        )
        errs = []
        for seed in range(100):
            noise = brownian_noise(grid, 500 + seed)
            path = integrate_linear(coeffs, None, None, [1.0], noise)
            B = noise.brownian_path()[:, 0]
            exact = np.exp((gamma - 0.5 * G**2) * grid + G * B)
            errs.append(np.abs(path.states[:, 0] - exact).max())
        assert np.sqrt(np.mean(np.square(errs))) < 0.03

    def test_strong_order_half_rate(self):
        # RMS error roughly halves when dt is quartered (common noise)
        model = gbm_model(r=0.05, sigma_tilde=0.5)
        fine = np.linspace(0, 1, 4001)
        coarse = fine[::4]
        spec = NoiseSpec(dimension=1, brownian_covariance=((1.0,),))
        batch_f = sample_noise_batch(spec, fine, 7000, 500)
        batch_c = batch_f.restrict(coarse)
        B_end = batch_f.increments[:, :, 0].sum(axis=1)
        exact_end = 1.0 * np.exp((0.05 - 0.5 * 0.5**2) * 1.0 + 0.5 * B_end)
        sf, _ = integrate_full_batch(model, 1.0, [1.0], batch_f)
        sc, _ = integrate_full_batch(model, 1.0, [1.0], batch_c)
        r_fine = np.sqrt(np.mean(np.square(sf[:, -1, 0] - exact_end)))
        r_coarse = np.sqrt(np.mean(np.square(sc[:, -1, 0] - exact_end)))
        ratio = r_fine / r_coarse
        assert 0.5 * 0.8 <= ratio <= 0.5 * 1.2

    def test_eps_zero_reduction(self):
        # full integrator at eps=0 equals the linear integrator configured
        # from the base-equation coefficients when sigma_0 is linear
        A = np.array([[-0.5, 0.2], [0.0, -0.3]])
        b = np.array([0.1, 0.0])
        Pi = np.array([[0.1, 0.0], [0.05, 0.1]])
        model = ModelSpec(
            dimension=2,
            drift=affine_vector_field(A, b),
            diffusion_family=(componentwise_linear_matrix_field(Pi),),
        )
        grid = np.linspace(0, 1, 501)
        spec = NoiseSpec(
            dimension=2,
            brownian_covariance=tuple(map(tuple, np.eye(2))),
            jumps=CompoundPoissonSpec(2.0, ConstantMark((0.1, -0.2))),
        )
        noise = sample_noise_path(spec, grid, 13)
        full = integrate_full(model, 0.0, [1.0, 1.0], noise)
        H = np.zeros((2, 2, 2))
        for j in range(2):
            H[j, :, j] = Pi[:, j]
        lin = integrate_linear(
            LinearSDECoefficients(gamma=A, noise_state_loading=H), b, None, [1.0, 1.0], noise
        )
        assert np.abs(full.states - lin.states).max() <= 1e-12

    def test_time_dependent_coefficients(self):
        # dX = t dt -> X = x0 + t^2/2 up to left-point quadrature error
        grid = np.linspace(0, 1, 1001)
        noise = brownian_noise(grid, 1)
        F = grid.reshape(-1, 1)
        path = integrate_linear(None, F, None, [0.0], noise)
        assert np.abs(path.states[:, 0] - grid**2 / 2).max() < 1e-3

"""Named model presets exposed by the CLI.

Diffusion families are padded with zero fields up to order 3 so expansions
to K = 3 are available while sigma_eps stays an exact polynomial in eps
(the omitted higher orders are identically zero).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .fields import (
    affine_vector_field,
    componentwise_linear_matrix_field,
    constant_matrix_field,
    zero_matrix_field,
)
from .model import ModelSpec, NoiseSpec

__all__ = ["PRESET_NAMES", "build_preset"]

PRESET_NAMES = ("gbm-small-vol", "stochastic-vol", "ou-additive", "linear-matrix")


def _pad(dim, family, order=3):
    family = list(family)
    while len(family) <= order:
        family.append(zero_matrix_field(dim))
    return tuple(family)


def build_preset(name):
    """Return a dict with keys model, noise, x0, params, description."""
    if name == "gbm-small-vol":
        r, sigma_tilde = 0.05, 1.0
        model = ModelSpec(
            dimension=1,
            drift=affine_vector_field([[r]]),
            diffusion_family=_pad(
                1, [zero_matrix_field(1), componentwise_linear_matrix_field([[sigma_tilde]])]
            ),
        )
        noise = NoiseSpec(dimension=1, brownian_covariance=((1.0,),))
        return {
            "model": model,
            "noise": noise,
            "x0": np.array([1.0]),
            "params": {"r": r, "sigma_tilde": sigma_tilde},
            "description": "Black-Scholes with volatility eps*sigma_tilde (small-volatility expansion)",
        }
    if name == "stochastic-vol":
        r, sigma_tilde, nu = 0.05, 0.2, 1.0
        model = ModelSpec(
            dimension=1,
            drift=affine_vector_field([[r]]),
            diffusion_family=_pad(
                1,
                [
                    componentwise_linear_matrix_field([[sigma_tilde]]),
                    componentwise_linear_matrix_field([[nu]]),
                ],
            ),
        )
        noise = NoiseSpec(dimension=1, brownian_covariance=((1.0,),))
        return {
            "model": model,
            "noise": noise,
            "x0": np.array([1.0]),
            "params": {"r": r, "sigma_tilde": sigma_tilde, "nu": nu},
            "description": "Black-Scholes leading order with eps-corrections to the volatility",
        }
    if name == "ou-additive":
        theta, lam = 1.0, 0.5
        model = ModelSpec(
            dimension=1,
            drift=affine_vector_field([[-theta]]),
            diffusion_family=_pad(
                1, [zero_matrix_field(1), constant_matrix_field([[lam]])]
            ),
        )
        noise = NoiseSpec(dimension=1, brownian_covariance=((1.0,),))
        return {
            "model": model,
            "noise": noise,
            "x0": np.array([0.5]),
            "params": {"theta": theta, "lambda": lam},
            "description": "mean-reverting drift with small additive noise",
        }
    if name == "linear-matrix":
        A = np.array([[-0.5, 0.2], [0.0, -0.3]])
        b = np.array([0.1, 0.0])
        Pi = np.array([[0.1, 0.0], [0.0, 0.1]])
        lam = np.array([[0.3, 0.1], [0.0, 0.2]])
        model = ModelSpec(
            dimension=2,
            drift=affine_vector_field(A, b),
            diffusion_family=_pad(
                2,
                [
                    componentwise_linear_matrix_field(Pi),
                    componentwise_linear_matrix_field(lam),
                ],
            ),
        )
        noise = NoiseSpec(dimension=2, brownian_covariance=tuple(map(tuple, np.eye(2))))
        return {
            "model": model,
            "noise": noise,
            "x0": np.array([1.0, 1.0]),
            "params": {
                "A": A.tolist(),
                "b": b.tolist(),
                "Pi": Pi.tolist(),
                "lambda": lam.tolist(),
            },
            "description": "2-d linear model with componentwise-linear diffusion",
        }
    raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESET_NAMES)}")

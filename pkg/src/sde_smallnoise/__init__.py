"""Small-noise asymptotic expansions for SDEs with multiplicative noise.

Computes u_eps(t) ~ sum_j eps^j u_j(t) for du = beta(u) dt + sigma_eps(u)
eta(ds) driven by Brownian motion plus compound-Poisson jumps, by solving the
recursive linear coefficient equations, and certifies the order-(k+1)
remainder scaling empirically with common-random-number Monte Carlo.
"""

from .errors import (
    ConfigError,
    Error,
    InsufficientPaths,
    MissingDerivative,
    NearSingular,
    NonPSDCovariance,
    SingularJump,
)
from .fields import (
    FiniteDifferenceScalarField,
    MatrixField,
    PolynomialScalarField,
    VectorField,
    affine_matrix_field,
    affine_vector_field,
    componentwise_linear_matrix_field,
    constant_matrix_field,
    constant_scalar_field,
    linear_scalar_field,
    zero_matrix_field,
)
from .multiindex import (
    MultiIndex,
    OrderPartition,
    TaylorRemainderBound,
    count_partitions,
    diffusion_order_term,
    drift_order_term,
    enumerate_partitions,
    multi_indices_of_order,
    taylor_polynomial,
    taylor_remainder_constant,
)
from .model import (
    CompoundPoissonSpec,
    ConstantMark,
    GaussianMark,
    ModelSpec,
    NoiseBatch,
    NoisePath,
    NoiseSpec,
    PiecewiseConstantDrift,
    lipschitz_estimate,
    model_from_config,
    noise_from_config,
    path_seed,
    sample_noise_batch,
    sample_noise_path,
)
from .simulate import (
    LinearSDECoefficients,
    SolutionPath,
    integrate_full,
    integrate_full_batch,
    integrate_linear,
    integrate_linear_batch,
)
from .expansion import (
    ExpansionResult,
    FundamentalMatrix,
    fundamental_matrix_constant,
    fundamental_matrix_scalar,
    solve_coefficients,
    solve_coefficients_batch,
    solve_coefficients_linear_model,
    solve_linear_by_variation_of_constants,
)
from .remainder import (
    BoundConstants,
    PerEpsStats,
    RemainderStudy,
    SlopeFit,
    estimate_bound_constants,
    run_remainder_study,
)
from .presets import PRESET_NAMES, build_preset

__version__ = "0.1.0"

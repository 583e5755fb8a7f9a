"""Numerical checks of entropic continuity inequalities and Sinkhorn bridge bounds."""

from .bounds import (
    BoundReport,
    Constants,
    DecayCurve,
    dumps_reports,
    empirical_t2_constant,
    epsilon_from_curvature,
    gaussian_constants,
    rho_from_curvature,
    rho_gaussian_kernel,
    summary_csv,
    verify_corollaries,
    verify_decay,
    verify_lemma,
    verify_pi_bounds,
    verify_potential_identities,
    verify_theorem1,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    SizeError,
    SupportError,
    ZeroMassRowWarning,
)
from .measures import (
    DiscreteJoint,
    GaussianJoint,
    GaussianKernel,
    GaussianMeasure,
    Grid,
    GridKernel,
    GridMeasure,
    discretize,
    disintegrate,
    flip,
    marginals,
    product,
    push,
)
from .metrics import fisher, kl, kl_disintegrated, w2, w2_kernel_avg
from .model import ConfigError, build_model, load_model
from .moments import cond_cov, cond_mean, cross_cov, field_norm, trace_constant
from .sinkhorn import Bridge, SinkhornState, iterate, kernel_at, sinkhorn_step, solve_bridge

__version__ = "0.1.0"

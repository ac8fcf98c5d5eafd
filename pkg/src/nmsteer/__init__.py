"""Steering detection with correlation matrices and volume estimates of steerable states."""

__version__ = "0.1.0"

from .das import DasConfig, das_steering_check, das_tau, is_npt, partial_transpose  # noqa: E402
from .hermitian import LOOBasis, bloch_expand, gellmann_basis, hs_inner, rotate_basis, trace_norm  # noqa: E402
from .povm import NMParams, NMPOVM, build_povm, construct_povm, sts_spectrum, validate_povm  # noqa: E402
from .sampler import BACKEND, SamplerConfig, sample_bloch, sample_states  # noqa: E402
from .states import BipartiteState, bell_diagonal_state, named_state, singlet, werner  # noqa: E402
from .steering import (  # noqa: E402
    correlation_matrix,
    loo_steering_check,
    optimize_rescaled_steering,
    povm_steering_check,
)
from .volume import EstimationJob, estimate_ratio, reproduce_table  # noqa: E402

__all__ = [
    "BACKEND",
    "BipartiteState",
    "DasConfig",
    "EstimationJob",
    "LOOBasis",
    "NMPOVM",
    "NMParams",
    "SamplerConfig",
    "bell_diagonal_state",
    "bloch_expand",
    "build_povm",
    "construct_povm",
    "correlation_matrix",
    "das_steering_check",
    "das_tau",
    "estimate_ratio",
    "gellmann_basis",
    "hs_inner",
    "is_npt",
    "loo_steering_check",
    "named_state",
    "optimize_rescaled_steering",
    "partial_transpose",
    "povm_steering_check",
    "reproduce_table",
    "rotate_basis",
    "sample_bloch",
    "sample_states",
    "singlet",
    "sts_spectrum",
    "trace_norm",
    "validate_povm",
    "werner",
]

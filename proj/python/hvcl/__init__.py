"""Python front end to the hvcl C++ library."""

from ._core import (
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    Error,
    NumericError,
    entropy_cost,
    evaluate,
    forgetting_metrics,
    kl_diag_gaussian,
    load_config,
    neg_log_det,
    run,
    selftest,
    softplus,
    softplus_inverse,
    w2_diag_gaussian,
    w2_exp_kernel,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "DomainError",
    "Error",
    "NumericError",
    "entropy_cost",
    "evaluate",
    "forgetting_metrics",
    "kl_diag_gaussian",
    "load_config",
    "neg_log_det",
    "run",
    "selftest",
    "softplus",
    "softplus_inverse",
    "w2_diag_gaussian",
    "w2_exp_kernel",
]

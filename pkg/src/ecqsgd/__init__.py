"""Error-compensated quantized SGD: codecs, trainer, and bound verification."""

__version__ = "0.1.0"

from .analysis import (
    BoundParams,
    empirical_second_moment,
    error_bound_rhs,
    gamma,
    lambda_of,
    pseudo_error_bounds,
    spectral_H,
    tau_ratio_bound,
    theta,
    theta_bound_coeff,
    variance_bound_ecq,
)
from .codec import (
    CostReport,
    decode,
    decode_any,
    encode,
    entropy_cost_bits,
    plain_cost_bits,
)
from .feedback import (
    FeedbackConfig,
    FeedbackState,
    compensate,
    reconstruct_error_history,
    update_error,
)
from .problems import (
    Dataset,
    QuadraticProblem,
    Task,
    gen_classification,
    gen_quadratic,
    gen_regression,
    gradient,
    load_libsvm,
    loss,
    optimum,
    save_libsvm,
)
from .quantizer import (
    NormKind,
    OneBitVector,
    QuantScheme,
    QuantizedVector,
    dequantize,
    dequantize_onebit,
    quantize,
    quantize_onebit,
    scale_of,
)
from .rng import RngStream
from .sim import (
    CodecKind,
    MetricsLog,
    TrainerConfig,
    WorkerState,
    aggregate,
    apply_update,
    run_experiment,
    worker_step,
)

__all__ = [
    "__version__",
    "BoundParams",
    "CodecKind",
    "CostReport",
    "Dataset",
    "FeedbackConfig",
    "FeedbackState",
    "MetricsLog",
    "NormKind",
    "OneBitVector",
    "QuadraticProblem",
    "QuantScheme",
    "QuantizedVector",
    "RngStream",
    "Task",
    "TrainerConfig",
    "WorkerState",
    "aggregate",
    "apply_update",
    "compensate",
    "decode",
    "decode_any",
    "dequantize",
    "dequantize_onebit",
    "empirical_second_moment",
    "encode",
    "entropy_cost_bits",
    "error_bound_rhs",
    "gamma",
    "gen_classification",
    "gen_quadratic",
    "gen_regression",
    "gradient",
    "lambda_of",
    "load_libsvm",
    "loss",
    "optimum",
    "plain_cost_bits",
    "pseudo_error_bounds",
    "quantize",
    "quantize_onebit",
    "reconstruct_error_history",
    "run_experiment",
    "save_libsvm",
    "scale_of",
    "spectral_H",
    "tau_ratio_bound",
    "theta",
    "theta_bound_coeff",
    "update_error",
    "variance_bound_ecq",
    "worker_step",
]

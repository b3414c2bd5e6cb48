"""Hybrid-precision sparse-quantized (SQ) tensor toolkit.

A small numpy reference stack for the banked high/low-precision tensor
format: encoding and decoding, calibration-driven weight and activation
quantizers, an exact-integer hybrid GEMM checked against a float oracle,
an analytical throughput model, and a design-space sweep harness.
"""

from .calibration import (
    CalibStats,
    SmoothResult,
    accumulate,
    hessian_inverse_diag,
    merge_stats,
    smooth,
)
from .core import (
    BankConfig,
    GroupScales,
    PrecisionPair,
    SqWeightMatrix,
    decode_weight,
    encode_weight,
    quantize_group,
    sentinel_code,
    symmetric_range,
    validate_weight_matrix,
)
from .errors import (
    ConfigError,
    ContainerError,
    NumericalError,
    SqFormatError,
    StructuralError,
)
from .gemm import GemmResult, PathStats, gemm_oracle, gemm_sq_activations, gemm_sq_weights
from .perfmodel import (
    LayerDims,
    equivalent_bits_activation,
    equivalent_bits_weight,
    estimate_mask_storage,
    llama3_70b_layer_dims,
    min_hidden_sparsity,
    static_split_speedup,
)
from .quantizers import (
    ActivationPlan,
    QuantizedUniformMatrix,
    SplitActivations,
    activation_channel_importance,
    apply_plan_to_weights,
    build_activation_plan,
    decode_split,
    decode_uniform,
    quantize_activations_dynamic,
    quantize_activations_static,
    quantize_uniform,
    quantize_weights_sq,
    select_weight_mask,
    weight_importance,
)
from .sweep import LayerSpec, SweepConfig, SweepRecord, run_sweep, write_csv, write_json
from .synth import (
    activation_output_error,
    gen_synthetic_layer,
    reconstruction_error,
    relative_output_error,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationPlan",
    "BankConfig",
    "CalibStats",
    "ConfigError",
    "ContainerError",
    "GemmResult",
    "GroupScales",
    "LayerDims",
    "LayerSpec",
    "NumericalError",
    "PathStats",
    "PrecisionPair",
    "QuantizedUniformMatrix",
    "SmoothResult",
    "SplitActivations",
    "SqFormatError",
    "SqWeightMatrix",
    "StructuralError",
    "SweepConfig",
    "SweepRecord",
    "accumulate",
    "activation_channel_importance",
    "activation_output_error",
    "apply_plan_to_weights",
    "build_activation_plan",
    "decode_split",
    "decode_uniform",
    "decode_weight",
    "encode_weight",
    "equivalent_bits_activation",
    "equivalent_bits_weight",
    "estimate_mask_storage",
    "gemm_oracle",
    "gemm_sq_activations",
    "gemm_sq_weights",
    "gen_synthetic_layer",
    "hessian_inverse_diag",
    "llama3_70b_layer_dims",
    "merge_stats",
    "min_hidden_sparsity",
    "quantize_activations_dynamic",
    "quantize_activations_static",
    "quantize_group",
    "quantize_uniform",
    "quantize_weights_sq",
    "reconstruction_error",
    "relative_output_error",
    "run_sweep",
    "select_weight_mask",
    "sentinel_code",
    "smooth",
    "static_split_speedup",
    "symmetric_range",
    "validate_weight_matrix",
    "weight_importance",
    "write_csv",
    "write_json",
]

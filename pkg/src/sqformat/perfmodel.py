"""Closed-form cost models: equivalent bit-widths, the Amdahl-style split
speedup, the break-even sparsity bound, and mask storage accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import PrecisionPair
from .errors import ConfigError

__all__ = [
    "equivalent_bits_weight",
    "equivalent_bits_activation",
    "min_hidden_sparsity",
    "static_split_speedup",
    "LayerDims",
    "estimate_mask_storage",
    "llama3_70b_layer_dims",
]


def _check_sparsity(s: float) -> float:
    if not (0.0 <= s <= 1.0):
        raise ConfigError(f"sparsity must lie in [0, 1], got {s!r}")
    return float(s)


def equivalent_bits_weight(precision: PrecisionPair, s: float) -> float:
    """Average stored bits per weight: (1-s)*h_high + h_low.

    The low grid stays dense (sentinels included), so h_low is paid in full.
    """
    s = _check_sparsity(s)
    return (1.0 - s) * precision.h_high + precision.h_low


def equivalent_bits_activation(precision: PrecisionPair, s: float) -> float:
    """Average moved bits per activation: (1-s)*h_high + s*h_low.

    Split activations are gathered, not sentinel-padded, so each side pays
    only for its own channels.
    """
    s = _check_sparsity(s)
    return (1.0 - s) * precision.h_high + s * precision.h_low


def min_hidden_sparsity(rate_ratio: float) -> float:
    """Smallest low fraction at which the high path hides behind the low path.

    With the low path ``rate_ratio`` times faster, the high path adds no wall
    time once ``s >= rate_ratio / (rate_ratio + 1)``.
    """
    if not (isinstance(rate_ratio, (int, float)) and math.isfinite(rate_ratio)
            and rate_ratio > 0):
        raise ConfigError(f"rate_ratio must be finite and positive, got {rate_ratio!r}")
    return rate_ratio / (rate_ratio + 1.0)


def static_split_speedup(s: float, rate_ratio: float, overhead: float = 0.0) -> float:
    """Amdahl-style end-to-end speedup of a (1-s)/s precision split.

    ``rate_ratio`` is the throughput advantage of the all-low-precision path
    over the baseline (``math.inf`` models a free low path, as with
    pure-sparse layouts). ``overhead`` is an additive fractional cost.
    """
    s = _check_sparsity(s)
    if not rate_ratio > 0:
        raise ConfigError(f"rate_ratio must be positive, got {rate_ratio!r}")
    if not (isinstance(overhead, (int, float)) and math.isfinite(overhead) and overhead >= 0):
        raise ConfigError(f"overhead must be finite and non-negative, got {overhead!r}")
    denom = (1.0 - s) + (s / rate_ratio if s > 0 else 0.0) + overhead
    if denom <= 0:
        raise ConfigError(f"degenerate split: denominator {denom:g} is not positive")
    return 1.0 / denom


@dataclass(frozen=True)
class LayerDims:
    """Input-channel widths of a model's linear layers as (K, count) pairs."""

    linears: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for entry in self.linears:
            if len(entry) != 2 or any(not isinstance(v, int) or v < 1 for v in entry):
                raise ConfigError(f"layer dims must be positive (K, count) pairs, got {entry!r}")


def estimate_mask_storage(dims: LayerDims) -> int:
    """Total bytes of static per-channel precision masks, one byte per input
    channel per linear layer."""
    return sum(k * count for k, count in dims.linears)


def llama3_70b_layer_dims() -> LayerDims:
    """Linear-layer widths of Llama-3-70B: 80 blocks, each with q/k/v/o and
    gate/up projections at K=8192 plus a down projection at K=28672."""
    return LayerDims(linears=((8192, 80 * 6), (28672, 80)))

"""Promotion-mask construction and the quantization pipelines for both GEMM
operands: Hessian-ranked weight encoding, static activation plans, per-row
dynamic splits, and the uniform baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import CalibStats, SmoothResult, hessian_inverse_diag, smooth
from .core import (
    BankConfig,
    PrecisionPair,
    QuantizedUniformMatrix,
    SqWeightMatrix,
    _codes_for_scale,
    _scale_for,
    encode_weight,
    symmetric_range,
)
from .errors import ConfigError, StructuralError

__all__ = [
    "ActivationPlan",
    "SplitActivations",
    "weight_importance",
    "select_weight_mask",
    "quantize_weights_sq",
    "activation_channel_importance",
    "build_activation_plan",
    "apply_plan_to_weights",
    "quantize_activations_static",
    "quantize_activations_dynamic",
    "decode_split",
    "quantize_uniform",
    "decode_uniform",
]


def weight_importance(w_smoothed, hinv_diag) -> np.ndarray:
    """Per-weight promotion score: squared magnitude over the squared
    Hessian-inverse diagonal of the weight's input channel."""
    w = np.asarray(w_smoothed, dtype=np.float64)
    if w.ndim != 2:
        raise StructuralError(f"expected a 2-D weight matrix, got shape {w.shape}")
    d = np.asarray(hinv_diag, dtype=np.float64)
    if d.shape != (w.shape[0],):
        raise StructuralError(
            f"hinv_diag must have one entry per input channel, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ConfigError("hinv_diag must be finite and strictly positive")
    return (w / d[:, None]) ** 2


def _check_importance(imp: np.ndarray) -> None:
    if not np.all(np.isfinite(imp)) or np.any(imp < 0):
        raise StructuralError("importance scores must be finite and non-negative")


def select_weight_mask(importance, banking: BankConfig) -> np.ndarray:
    """Boolean promotion mask: top ``n_high`` scores per (bank, column) group,
    ties broken toward the lower row index."""
    imp = np.asarray(importance, dtype=np.float64)
    if imp.ndim != 2:
        raise StructuralError(f"expected a 2-D importance matrix, got shape {imp.shape}")
    _check_importance(imp)
    K, N = imp.shape
    G = banking.num_banks(K)
    b, nh = banking.b, banking.n_high
    order = np.argsort(-imp.reshape(G, b, N), axis=1, kind="stable")[:, :nh, :]
    mask = np.zeros((G, b, N), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask.reshape(K, N)


def quantize_weights_sq(w, stats: CalibStats, banking: BankConfig,
                        precision: PrecisionPair, alpha: float = 0.5,
                        damping_frac: float = 0.01):
    """Full weight pipeline: smooth, rank by Hessian importance, encode.

    Returns ``(SqWeightMatrix, SmoothResult)``. The encoded matrix
    approximates the smoothed weights; at inference the activations must be
    divided channel-wise by ``channel_scale``.
    """
    sm = smooth(w, stats, alpha)
    hinv = hessian_inverse_diag(stats.hessian, damping_frac)
    imp = weight_importance(sm.w_smoothed, hinv)
    mask = select_weight_mask(imp, banking)
    return encode_weight(sm.w_smoothed, mask, banking, precision), sm


def activation_channel_importance(abar, w_smoothed) -> np.ndarray:
    """Per-channel score: |mean activation times the weight-row sum|."""
    a = np.asarray(abar, dtype=np.float64)
    w = np.asarray(w_smoothed, dtype=np.float64)
    if a.ndim != 1 or w.ndim != 2 or w.shape[0] != a.shape[0]:
        raise StructuralError(
            f"abar of shape {a.shape} does not match weights of shape {w.shape}")
    return np.abs(a * w.sum(axis=1))


@dataclass
class ActivationPlan:
    """Static channel split for one linear layer.

    ``channel_mask[j]`` marks channel j as high precision. ``perm`` is a
    gather order (new position i reads original channel ``perm[i]``) that
    moves every bank's promoted channels into its leading ``n_high`` slots
    while preserving relative order; it never crosses bank boundaries.
    """

    channel_mask: np.ndarray
    perm: np.ndarray
    banking: BankConfig
    precision: PrecisionPair

    def __post_init__(self):
        mask = np.asarray(self.channel_mask, dtype=bool)
        perm = np.asarray(self.perm, dtype=np.int64)
        k = mask.shape[0]
        if mask.ndim != 1 or perm.shape != (k,):
            raise StructuralError("channel_mask and perm must be 1-D of equal length")
        G = self.banking.num_banks(k)
        b, nh = self.banking.b, self.banking.n_high
        counts = mask.reshape(G, b).sum(axis=1)
        if not np.all(counts == nh):
            g = int(np.argwhere(counts != nh)[0][0])
            raise StructuralError(
                f"bank {g} marks {int(counts[g])} high channels, expected {nh}")
        if np.any(np.sort(perm) != np.arange(k)):
            raise StructuralError("perm is not a permutation")
        if np.any(perm // b != np.arange(k) // b):
            raise StructuralError("perm crosses bank boundaries")
        if not mask[perm].reshape(G, b)[:, :nh].all():
            raise StructuralError("perm does not gather high channels into leading slots")
        object.__setattr__(self, "channel_mask", mask)
        object.__setattr__(self, "perm", perm)
        mask.setflags(write=False)
        perm.setflags(write=False)

    @property
    def K(self) -> int:
        return self.channel_mask.shape[0]

    @property
    def inverse_perm(self) -> np.ndarray:
        return np.argsort(self.perm)


def build_activation_plan(importance, banking: BankConfig,
                          precision: PrecisionPair) -> ActivationPlan:
    """Rank channels per bank and derive the static mask plus permutation.

    Ties break toward the lower channel index; relative order is preserved
    inside the high and low groups of each bank.
    """
    imp = np.asarray(importance, dtype=np.float64)
    if imp.ndim != 1:
        raise StructuralError(f"expected 1-D channel importance, got shape {imp.shape}")
    _check_importance(imp)
    k = imp.shape[0]
    G = banking.num_banks(k)
    b, nh = banking.b, banking.n_high
    order = np.argsort(-imp.reshape(G, b), axis=1, kind="stable")
    hi = np.sort(order[:, :nh], axis=1)
    lo = np.sort(order[:, nh:], axis=1)
    offsets = np.arange(G)[:, None] * b
    perm = np.concatenate([hi, lo], axis=1) + offsets
    mask = np.zeros(k, dtype=bool)
    mask[(hi + offsets).reshape(-1)] = True
    return ActivationPlan(channel_mask=mask, perm=perm.reshape(k),
                          banking=banking, precision=precision)


def apply_plan_to_weights(w, plan: ActivationPlan) -> np.ndarray:
    """Reorder weight rows to match plan-permuted activations."""
    wm = np.asarray(w)
    if wm.ndim != 2 or wm.shape[0] != plan.K:
        raise StructuralError(
            f"weights of shape {wm.shape} do not match plan over {plan.K} channels")
    return wm[plan.perm, :]


@dataclass
class SplitActivations:
    """Row-quantized activations split into high and low channel groups.

    Codes are laid out bank-major. ``channels_high`` / ``channels_low`` give
    the original channel index of every code column: 1-D when all rows share
    the split (static plan), 2-D per row for the dynamic split. Each row
    carries one scale per precision group.
    """

    codes_high: np.ndarray
    codes_low: np.ndarray
    scale_high: np.ndarray
    scale_low: np.ndarray
    channels_high: np.ndarray
    channels_low: np.ndarray
    banking: BankConfig
    precision: PrecisionPair

    @property
    def M(self) -> int:
        return self.codes_high.shape[0]

    @property
    def K(self) -> int:
        return self.codes_high.shape[1] + self.codes_low.shape[1]

    @property
    def per_row(self) -> bool:
        return self.channels_high.ndim == 2

    @property
    def masks(self) -> np.ndarray:
        """Boolean M x K matrix, True where the channel took the high path."""
        m = np.zeros((self.M, self.K), dtype=bool)
        if self.per_row:
            np.put_along_axis(m, self.channels_high, True, axis=1)
        else:
            m[:, self.channels_high] = True
        return m


def _row_scales(values: np.ndarray, qmax: int) -> np.ndarray:
    if values.shape[1] == 0:
        return np.zeros(values.shape[0], dtype=np.float32)
    return _scale_for(np.abs(values).max(axis=1), qmax)


def _split_from_gathered(a_high, a_low, channels_high, channels_low,
                         banking, precision):
    qmax_hi = symmetric_range(precision.h_high)[1]
    scale_high = _row_scales(a_high, qmax_hi)
    codes_high = _codes_for_scale(a_high, scale_high[:, None], qmax_hi)
    if precision.pure_sparse:
        scale_low = np.zeros(a_low.shape[0], dtype=np.float32)
        codes_low = np.zeros(a_low.shape, dtype=np.int8)
    else:
        qmax_lo = symmetric_range(precision.h_low)[1]
        scale_low = _row_scales(a_low, qmax_lo)
        codes_low = _codes_for_scale(a_low, scale_low[:, None], qmax_lo)
    return SplitActivations(
        codes_high=codes_high, codes_low=codes_low,
        scale_high=scale_high, scale_low=scale_low,
        channels_high=channels_high, channels_low=channels_low,
        banking=banking, precision=precision,
    )


def _check_acts(acts, k: int | None = None) -> np.ndarray:
    a = np.asarray(acts, dtype=np.float64)
    if a.ndim != 2:
        raise StructuralError(f"expected a 2-D activation batch, got shape {a.shape}")
    if k is not None and a.shape[1] != k:
        raise StructuralError(f"activations have {a.shape[1]} channels, expected {k}")
    if not np.all(np.isfinite(a)):
        raise StructuralError("non-finite activation values")
    return a


def quantize_activations_static(acts, plan: ActivationPlan) -> SplitActivations:
    """Split a batch along the plan's fixed channel partition.

    Channels are taken in plan-permuted order, so every bank's leading
    ``n_high`` slots feed the high path. One symmetric scale per row per
    precision group.
    """
    a = _check_acts(acts, plan.K)
    G = plan.banking.num_banks(plan.K)
    b, nh = plan.banking.b, plan.banking.n_high
    ap = a[:, plan.perm]
    pos = np.arange(plan.K).reshape(G, b)
    hp = pos[:, :nh].reshape(-1)
    lp = pos[:, nh:].reshape(-1)
    return _split_from_gathered(
        ap[:, hp], ap[:, lp], plan.perm[hp], plan.perm[lp],
        plan.banking, plan.precision)


def quantize_activations_dynamic(acts, banking: BankConfig,
                                 precision: PrecisionPair) -> SplitActivations:
    """Split each row independently: per bank, the ``n_high`` largest
    magnitudes take the high path, ties toward the lower channel index."""
    a = _check_acts(acts)
    m, k = a.shape
    G = banking.num_banks(k)
    b, nh = banking.b, banking.n_high
    ab = a.reshape(m, G, b)
    order = np.argsort(-np.abs(ab), axis=2, kind="stable")
    hi = np.sort(order[:, :, :nh], axis=2)
    lo = np.sort(order[:, :, nh:], axis=2)
    a_high = np.take_along_axis(ab, hi, axis=2).reshape(m, G * nh)
    a_low = np.take_along_axis(ab, lo, axis=2).reshape(m, k - G * nh)
    offsets = (np.arange(G) * b)[None, :, None]
    channels_high = (hi + offsets).reshape(m, G * nh)
    channels_low = (lo + offsets).reshape(m, k - G * nh)
    return _split_from_gathered(a_high, a_low, channels_high, channels_low,
                                banking, precision)


def decode_split(split: SplitActivations) -> np.ndarray:
    """Dequantize a split batch back to a dense float64 M x K matrix in the
    original channel order."""
    out = np.zeros((split.M, split.K), dtype=np.float64)
    vh = split.codes_high.astype(np.float64) * split.scale_high.astype(np.float64)[:, None]
    vl = split.codes_low.astype(np.float64) * split.scale_low.astype(np.float64)[:, None]
    if split.per_row:
        np.put_along_axis(out, split.channels_high, vh, axis=1)
        np.put_along_axis(out, split.channels_low, vl, axis=1)
    else:
        out[:, split.channels_high] = vh
        out[:, split.channels_low] = vl
    return out


def quantize_uniform(x, nbits: int, granularity: str = "per_row",
                     bank_size: int | None = None) -> QuantizedUniformMatrix:
    """Uniform symmetric quantization at per_tensor, per_row, or
    per_bank_column scale granularity."""
    if not isinstance(nbits, (int, np.integer)) or not (1 <= nbits <= 8):
        raise ConfigError(f"nbits must be in 1..8, got {nbits!r}")
    xm = np.asarray(x, dtype=np.float64)
    if xm.ndim != 2:
        raise StructuralError(f"expected a 2-D matrix, got shape {xm.shape}")
    if not np.all(np.isfinite(xm)):
        raise StructuralError("non-finite values")
    qmax = symmetric_range(nbits)[1]

    if granularity == "per_tensor":
        scales = _scale_for(np.abs(xm).max(), qmax)
        codes = _codes_for_scale(xm, scales, qmax)
    elif granularity == "per_row":
        scales = _row_scales(xm, qmax)
        codes = _codes_for_scale(xm, scales[:, None], qmax)
    elif granularity == "per_bank_column":
        if not isinstance(bank_size, (int, np.integer)) or bank_size < 2:
            raise ConfigError("per_bank_column granularity needs bank_size >= 2")
        rows, cols = xm.shape
        if rows % bank_size != 0:
            raise ConfigError(f"bank size {bank_size} does not divide {rows} rows")
        g = rows // bank_size
        xb = xm.reshape(g, bank_size, cols)
        scales = _scale_for(np.abs(xb).max(axis=1), qmax)
        codes = _codes_for_scale(xb, scales[:, None, :], qmax).reshape(rows, cols)
    else:
        raise ConfigError(f"unknown granularity {granularity!r}")
    return QuantizedUniformMatrix(codes=codes, scales=scales, nbits=int(nbits),
                                  granularity=granularity,
                                  bank_size=None if bank_size is None else int(bank_size))


def decode_uniform(q: QuantizedUniformMatrix) -> np.ndarray:
    """Dequantize a uniform carrier back to float64."""
    codes = q.codes.astype(np.float64)
    if q.granularity == "per_tensor":
        return codes * np.float64(q.scales)
    if q.granularity == "per_row":
        return codes * q.scales.astype(np.float64)[:, None]
    if q.granularity == "per_bank_column":
        rows, cols = codes.shape
        g = rows // q.bank_size
        out = codes.reshape(g, q.bank_size, cols) * q.scales.astype(np.float64)[:, None, :]
        return out.reshape(rows, cols)
    raise ConfigError(f"unknown granularity {q.granularity!r}")

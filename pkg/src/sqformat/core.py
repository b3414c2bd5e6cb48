"""Banked hybrid-precision tensor format: domain types, symmetric quantization,
encode/decode.

A matrix in this format is split one (bank, column) group at a time, where a
bank is ``b`` consecutive rows along the reduction dimension. Each group keeps
its ``n_high = b * (1 - s)`` most important entries in a compact
high-precision store and quantizes the rest in place at low precision.
Promoted positions are marked in the low-precision grid with a reserved
sentinel code (the otherwise unused most negative two's-complement pattern),
so the compact store is addressable from the grid alone: the k-th sentinel of
a group in ascending row order corresponds to the k-th compact high code.

Scales are float32 and all value arithmetic runs in float64. Because any
``code * scale`` product with ``|code| <= 127`` is exact in float64 for a
float32 scale, decode followed by encode reproduces codes and scales bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StructuralError

__all__ = [
    "PrecisionPair",
    "BankConfig",
    "GroupScales",
    "SqWeightMatrix",
    "QuantizedUniformMatrix",
    "GRANULARITIES",
    "symmetric_range",
    "sentinel_code",
    "quantize_group",
    "encode_weight",
    "decode_weight",
    "validate_weight_matrix",
]

GRANULARITIES = ("per_tensor", "per_row", "per_bank_column")


def symmetric_range(nbits: int) -> tuple[int, int]:
    """Signed symmetric code range ``(qmin, qmax)`` for an ``nbits`` format.

    ``qmax = 2**(nbits-1) - 1`` and ``qmin = -qmax``; the most negative
    two's-complement pattern is excluded from value codes so it can serve as
    the sentinel. ``nbits = 0`` is the degenerate pure-sparse carrier whose
    only value code is 0.
    """
    if not isinstance(nbits, (int, np.integer)) or isinstance(nbits, bool):
        raise ConfigError(f"bit-width must be an integer, got {nbits!r}")
    if nbits < 0:
        raise ConfigError(f"bit-width must be non-negative, got {nbits}")
    if nbits == 0:
        return (0, 0)
    qmax = (1 << (nbits - 1)) - 1
    return (-qmax, qmax)


def sentinel_code(nbits: int) -> int:
    """Reserved code marking positions whose value lives in the compact store.

    For ``nbits >= 1`` this is the most negative two's-complement pattern,
    ``-2**(nbits-1)``. The zero-bit carrier has no patterns of its own; -1 is
    used there, the same byte a one-bit store would reserve.
    """
    if nbits == 0:
        return -1
    return -(1 << (nbits - 1))


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # np.round would round halves to even; the format pins half away from zero.
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _codes_for_scale(values: np.ndarray, scale, qmax: int) -> np.ndarray:
    """Quantize float64 ``values`` against broadcastable float32 ``scale``."""
    s = np.asarray(scale, dtype=np.float64)
    safe = np.where(s > 0, s, 1.0)
    codes = _round_half_away(values / safe)
    codes = np.clip(codes, -qmax, qmax)
    codes = np.where(s > 0, codes, 0.0)
    return codes.astype(np.int8)


def _scale_for(maxabs: np.ndarray, qmax: int) -> np.ndarray:
    return (np.asarray(maxabs, dtype=np.float64) / qmax).astype(np.float32)


def quantize_group(values, nbits: int):
    """Symmetric quantization of one scale group.

    Returns ``(codes, scale)`` with ``scale = max|v| / qmax`` at float32
    precision and integer codes rounded half away from zero, clamped to the
    symmetric range. An all-zero group gets scale 0 and all-zero codes.
    """
    if not isinstance(nbits, (int, np.integer)) or nbits < 1:
        raise ConfigError(f"quantize_group needs nbits >= 1, got {nbits!r}")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ConfigError("cannot quantize an empty group")
    if not np.all(np.isfinite(v)):
        raise StructuralError("non-finite value in quantization group")
    qmax = symmetric_range(nbits)[1]
    scale = _scale_for(np.max(np.abs(v)), qmax)
    codes = _codes_for_scale(v, scale, qmax)
    return codes, float(scale)


@dataclass(frozen=True)
class PrecisionPair:
    """High/low bit-width pair governing every bank partition."""

    h_high: int
    h_low: int

    def __post_init__(self):
        if not (2 <= self.h_high <= 8):
            raise ConfigError(f"h_high must be in 2..8, got {self.h_high!r}")
        if not (0 <= self.h_low <= 8):
            raise ConfigError(f"h_low must be in 0..8, got {self.h_low!r}")
        if self.h_low >= self.h_high:
            raise ConfigError(
                f"h_low must be strictly below h_high, got ({self.h_high}/{self.h_low})")

    @property
    def pure_sparse(self) -> bool:
        """True when the low part carries no value bits (kept-or-zero layout)."""
        return self.h_low == 0


@dataclass(frozen=True)
class BankConfig:
    """Bank size ``b`` along the reduction dimension and low fraction ``s``.

    ``b * (1 - s)`` must come out to a positive integer; fractional
    configurations are rejected rather than rounded.
    """

    b: int
    s: float

    def __post_init__(self):
        if not isinstance(self.b, (int, np.integer)) or self.b < 2:
            raise ConfigError(f"bank size must be an integer >= 2, got {self.b!r}")
        if not (0.0 <= self.s < 1.0):
            raise ConfigError(f"sparsity must lie in [0, 1), got {self.s!r}")
        nh = self.b * (1.0 - self.s)
        if abs(nh - round(nh)) > 1e-9 or round(nh) < 1:
            raise ConfigError(
                f"b*(1-s) must be a positive integer, got {nh:g} for b={self.b}, s={self.s:g}")

    @property
    def n_high(self) -> int:
        """High-precision positions kept per (bank, column) group."""
        return int(round(self.b * (1.0 - self.s)))

    def num_banks(self, k: int) -> int:
        if k % self.b != 0:
            raise ConfigError(f"bank size {self.b} does not divide K={k}")
        return k // self.b


@dataclass
class GroupScales:
    """One float32 (s_high, s_low) pair per (bank, column) group."""

    s_high: np.ndarray
    s_low: np.ndarray


@dataclass
class SqWeightMatrix:
    """A K x N matrix encoded in the banked hybrid-precision format.

    ``low_codes`` is the dense K x N int8 grid at ``h_low`` bits with
    sentinels at promoted positions. ``high_codes`` is the compact
    ``(num_banks * n_high) x N`` int8 store at ``h_high`` bits, laid out
    bank-major with each bank's promoted rows in ascending original order.
    Arrays are frozen after construction.
    """

    low_codes: np.ndarray
    high_codes: np.ndarray
    scales: GroupScales
    precision: PrecisionPair
    banking: BankConfig

    def __post_init__(self):
        for arr in (self.low_codes, self.high_codes, self.scales.s_high, self.scales.s_low):
            arr.setflags(write=False)

    @property
    def K(self) -> int:
        return self.low_codes.shape[0]

    @property
    def N(self) -> int:
        return self.low_codes.shape[1]

    @property
    def num_banks(self) -> int:
        return self.banking.num_banks(self.K)


@dataclass
class QuantizedUniformMatrix:
    """Uniform symmetric quantization carrier for the non-banked operand.

    ``scales`` is float32 shaped () for per_tensor, (rows,) for per_row, or
    (num_banks, cols) for per_bank_column.
    """

    codes: np.ndarray
    scales: np.ndarray
    nbits: int
    granularity: str
    bank_size: int | None = None


def encode_weight(w_smoothed, mask, banking: BankConfig,
                  precision: PrecisionPair) -> SqWeightMatrix:
    """Encode a float matrix given a per-group promotion mask.

    Every (bank, column) group must mark exactly ``n_high`` positions; those
    are quantized together at ``h_high`` into the compact store and the rest
    at ``h_low`` in place, one scale pair per group. Promoted grid positions
    hold the sentinel code. With ``h_low = 0`` the low side degenerates to
    scale 0 with all-zero codes.
    """
    w = np.ascontiguousarray(np.asarray(w_smoothed, dtype=np.float64))
    if w.ndim != 2:
        raise StructuralError(f"expected a 2-D weight matrix, got shape {w.shape}")
    m = np.asarray(mask, dtype=bool)
    if m.shape != w.shape:
        raise StructuralError(f"mask shape {m.shape} does not match weights {w.shape}")
    if not np.all(np.isfinite(w)):
        raise StructuralError("non-finite weight values")
    K, N = w.shape
    G = banking.num_banks(K)
    b, nh = banking.b, banking.n_high

    mb = m.reshape(G, b, N)
    counts = mb.sum(axis=1)
    if not np.all(counts == nh):
        g, n = map(int, np.argwhere(counts != nh)[0])
        raise StructuralError(
            f"mask marks {int(counts[g, n])} positions in (bank {g}, column {n}), "
            f"expected {nh}")
    wb = w.reshape(G, b, N)

    qmax_hi = symmetric_range(precision.h_high)[1]
    order = np.argsort(~mb, axis=1, kind="stable")[:, :nh, :]
    w_hi = np.take_along_axis(wb, order, axis=1)
    s_high = _scale_for(np.abs(w_hi).max(axis=1), qmax_hi)
    high_codes = _codes_for_scale(w_hi, s_high[:, None, :], qmax_hi).reshape(G * nh, N)

    sent = np.int8(sentinel_code(precision.h_low))
    if precision.pure_sparse:
        s_low = np.zeros((G, N), dtype=np.float32)
        low_codes = np.zeros((G, b, N), dtype=np.int8)
    else:
        qmax_lo = symmetric_range(precision.h_low)[1]
        w_lo = np.where(mb, 0.0, wb)
        s_low = _scale_for(np.abs(w_lo).max(axis=1), qmax_lo)
        low_codes = _codes_for_scale(w_lo, s_low[:, None, :], qmax_lo)
    low_codes = np.where(mb, sent, low_codes).reshape(K, N)

    return SqWeightMatrix(
        low_codes=low_codes,
        high_codes=high_codes,
        scales=GroupScales(s_high=s_high, s_low=s_low),
        precision=precision,
        banking=banking,
    )


def validate_weight_matrix(sq: SqWeightMatrix) -> None:
    """Re-check every structural invariant; raise StructuralError on the first hit."""
    lc, hc = sq.low_codes, sq.high_codes
    if lc.ndim != 2 or lc.dtype != np.int8:
        raise StructuralError("low_codes must be a 2-D int8 array")
    K, N = lc.shape
    try:
        G = sq.banking.num_banks(K)
    except ConfigError as exc:
        raise StructuralError(str(exc)) from exc
    b, nh = sq.banking.b, sq.banking.n_high
    if hc.dtype != np.int8 or hc.shape != (G * nh, N):
        raise StructuralError(
            f"high_codes must be int8 with shape {(G * nh, N)}, got {hc.dtype} {hc.shape}")
    sh, sl = sq.scales.s_high, sq.scales.s_low
    for name, arr in (("s_high", sh), ("s_low", sl)):
        if arr.shape != (G, N) or arr.dtype != np.float32:
            raise StructuralError(f"{name} must be float32 with shape {(G, N)}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise StructuralError(f"{name} must be finite and non-negative")

    sent = sentinel_code(sq.precision.h_low)
    lcb = lc.reshape(G, b, N)
    sm = lcb == sent
    census = sm.sum(axis=1)
    if not np.all(census == nh):
        g, n = map(int, np.argwhere(census != nh)[0])
        raise StructuralError(
            f"(bank {g}, column {n}) holds {int(census[g, n])} sentinel codes, expected {nh}")

    qmin_lo, qmax_lo = symmetric_range(sq.precision.h_low)
    low_vals = np.where(sm, 0, lcb)
    if np.any(low_vals < qmin_lo) or np.any(low_vals > qmax_lo):
        raise StructuralError("low code outside the symmetric value range")
    qmin_hi, qmax_hi = symmetric_range(sq.precision.h_high)
    if np.any(hc < qmin_hi) or np.any(hc > qmax_hi):
        raise StructuralError("high code outside the symmetric value range")

    hi_mags = np.abs(hc.reshape(G, nh, N)).max(axis=1)
    if np.any((sh == 0) & (hi_mags > 0)):
        raise StructuralError("zero s_high with nonzero high codes")
    if np.any((sl == 0) & (np.abs(low_vals).max(axis=1) > 0)):
        raise StructuralError("zero s_low with nonzero low codes")


def decode_weight(sq: SqWeightMatrix) -> np.ndarray:
    """Reconstruct the float64 matrix.

    Sentinel positions receive their compact high value (k-th sentinel in
    ascending row order takes the k-th high code of the group), everything
    else decodes as ``low_code * s_low``.
    """
    validate_weight_matrix(sq)
    K, N = sq.K, sq.N
    G = sq.banking.num_banks(K)
    b, nh = sq.banking.b, sq.banking.n_high
    lcb = sq.low_codes.reshape(G, b, N)
    sm = lcb == sentinel_code(sq.precision.h_low)

    out = lcb.astype(np.float64) * sq.scales.s_low.astype(np.float64)[:, None, :]
    order = np.argsort(~sm, axis=1, kind="stable")[:, :nh, :]
    hi = sq.high_codes.reshape(G, nh, N).astype(np.float64)
    hi *= sq.scales.s_high.astype(np.float64)[:, None, :]
    np.put_along_axis(out, order, hi, axis=1)
    return out.reshape(K, N)

"""Reference executors for the two hybrid matrix-multiply paths.

Integer dot products accumulate exactly in 64-bit; scales are applied once
per (row, group) after accumulation. This pins the bit-exact reference
semantics an optimized kernel must reproduce. Dense float64 products of the
dequantized operands serve as the cross-checking oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SqWeightMatrix, QuantizedUniformMatrix, sentinel_code, validate_weight_matrix
from .quantizers import SplitActivations
from .errors import ConfigError, StructuralError

__all__ = ["PathStats", "GemmResult", "gemm_oracle", "gemm_sq_weights", "gemm_sq_activations"]

# 8x8-bit products with 64-bit accumulators stay exact up to this reduction depth.
K_LIMIT = 1 << 24

_DYN_ROW_CHUNK = 32


@dataclass(frozen=True)
class PathStats:
    """Multiply-accumulate counts routed to each precision path."""

    high: int
    low: int

    @property
    def total(self) -> int:
        return self.high + self.low


@dataclass
class GemmResult:
    y: np.ndarray
    path_stats: PathStats


def _check_k(k: int) -> None:
    if k > K_LIMIT:
        raise ConfigError(
            f"reduction depth {k} exceeds the exact-accumulation limit {K_LIMIT}")


def gemm_oracle(a, w) -> np.ndarray:
    """Plain dense float64 product of two (dequantized) operands."""
    am = np.asarray(a, dtype=np.float64)
    wm = np.asarray(w, dtype=np.float64)
    if am.ndim != 2 or wm.ndim != 2 or am.shape[1] != wm.shape[0]:
        raise StructuralError(
            f"incompatible operand shapes {am.shape} x {wm.shape}")
    return am @ wm


def gemm_sq_weights(a_q: QuantizedUniformMatrix, w_sq: SqWeightMatrix) -> GemmResult:
    """Hybrid product of per-row quantized activations with an encoded weight.

    Per (bank, column) group the low path runs a dense integer dot at
    ``h_low`` with sentinels contributing zero, the high path an integer dot
    over the compact codes gathered at the sentinel rows. Scales apply after
    accumulation: ``Y = a_scale * sum_groups (s_low*dot_low + s_high*dot_high)``.
    """
    if a_q.granularity != "per_row":
        raise ConfigError(
            f"activation operand must be per_row quantized, got {a_q.granularity!r}")
    if a_q.codes.ndim != 2 or a_q.codes.shape[1] != w_sq.K:
        raise StructuralError(
            f"activation codes of shape {a_q.codes.shape} do not match K={w_sq.K}")
    _check_k(w_sq.K)
    validate_weight_matrix(w_sq)

    K, N = w_sq.K, w_sq.N
    G = w_sq.num_banks
    b, nh = w_sq.banking.b, w_sq.banking.n_high
    M = a_q.codes.shape[0]

    ac = a_q.codes.astype(np.int64)
    sent_mask = w_sq.low_codes == sentinel_code(w_sq.precision.h_low)
    low0 = np.where(sent_mask, 0, w_sq.low_codes).astype(np.int64)
    dot_low = np.einsum("mgb,gbn->mgn", ac.reshape(M, G, b), low0.reshape(G, b, N))

    order = np.argsort(~sent_mask.reshape(G, b, N), axis=1, kind="stable")[:, :nh, :]
    rows_global = order + (np.arange(G) * b)[:, None, None]
    a_hi = ac[:, rows_global]  # M x G x nh x N gather
    hc = w_sq.high_codes.reshape(G, nh, N).astype(np.int64)
    dot_high = np.einsum("mgtn,gtn->mgn", a_hi, hc)

    s_low = w_sq.scales.s_low.astype(np.float64)
    s_high = w_sq.scales.s_high.astype(np.float64)
    per_group = s_low[None] * dot_low + s_high[None] * dot_high
    y = a_q.scales.astype(np.float64)[:, None] * per_group.sum(axis=1)

    high_macs = M * N * G * nh
    return GemmResult(y=y, path_stats=PathStats(high=high_macs, low=M * K * N - high_macs))


def _uniform_group_scales(w_q: QuantizedUniformMatrix, banking, n_cols: int,
                          num_banks: int) -> np.ndarray:
    """Weight scales broadcastable to (G, N) for the activation-side product."""
    if w_q.granularity == "per_tensor":
        return np.full((1, 1), np.float64(w_q.scales))
    if w_q.granularity == "per_bank_column":
        if w_q.bank_size != banking.b:
            raise StructuralError(
                f"weight bank size {w_q.bank_size} does not match the split's {banking.b}")
        return w_q.scales.astype(np.float64)
    raise ConfigError(
        "activation-side product needs per_tensor or per_bank_column weight scales, "
        f"got {w_q.granularity!r}")


def gemm_sq_activations(a_split: SplitActivations, w_q: QuantizedUniformMatrix) -> GemmResult:
    """Hybrid product of split activations with a uniform-quantized weight.

    For a static split the weight rows must already be permuted by the same
    plan; for a dynamic split they stay in the original channel order and are
    gathered per row. Weight scales must be constant within each bank
    (per_tensor or per_bank_column), so every sub-product accumulates exactly
    in integers before its (row, group) scale is applied.
    """
    K = a_split.K
    if w_q.codes.ndim != 2 or w_q.codes.shape[0] != K:
        raise StructuralError(
            f"weight codes of shape {w_q.codes.shape} do not match K={K}")
    _check_k(K)
    M = a_split.M
    G = a_split.banking.num_banks(K)
    b, nh = a_split.banking.b, a_split.banking.n_high
    N = w_q.codes.shape[1]
    ws = _uniform_group_scales(w_q, a_split.banking, N, G)

    wc = w_q.codes.astype(np.int64)
    ch = a_split.codes_high.astype(np.int64)
    cl = a_split.codes_low.astype(np.int64)

    if not a_split.per_row:
        wb = wc.reshape(G, b, N)
        dot_high = np.einsum("mgt,gtn->mgn", ch.reshape(M, G, nh), wb[:, :nh, :])
        dot_low = np.einsum("mgt,gtn->mgn", cl.reshape(M, G, b - nh), wb[:, nh:, :])
    else:
        dot_high = np.empty((M, G, N), dtype=np.int64)
        dot_low = np.empty((M, G, N), dtype=np.int64)
        for start in range(0, M, _DYN_ROW_CHUNK):
            stop = min(start + _DYN_ROW_CHUNK, M)
            hi_rows = wc[a_split.channels_high[start:stop]].reshape(stop - start, G, nh, N)
            lo_rows = wc[a_split.channels_low[start:stop]].reshape(stop - start, G, b - nh, N)
            dot_high[start:stop] = np.einsum(
                "mgt,mgtn->mgn", ch[start:stop].reshape(stop - start, G, nh), hi_rows)
            dot_low[start:stop] = np.einsum(
                "mgt,mgtn->mgn", cl[start:stop].reshape(stop - start, G, b - nh), lo_rows)

    sh = a_split.scale_high.astype(np.float64)[:, None, None]
    sl = a_split.scale_low.astype(np.float64)[:, None, None]
    y = (ws[None] * (sh * dot_high + sl * dot_low)).sum(axis=1)

    high_macs = M * N * G * nh
    return GemmResult(y=y, path_stats=PathStats(high=high_macs, low=M * K * N - high_macs))

"""Single-section binary container for tensors, encoded matrices, activation
plans, and calibration statistics.

Layout: magic ``SQT1``, format version as u16, a section tag byte, then the
section payload. Everything is little-endian. Codes are stored one
sign-extended byte each, scales as float32, statistics as float64. Encoded
matrices are re-validated against the full invariant suite on load.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .calibration import CalibStats
from .core import (
    BankConfig,
    GroupScales,
    PrecisionPair,
    SqWeightMatrix,
    validate_weight_matrix,
)
from .errors import ConfigError, ContainerError
from .quantizers import ActivationPlan

__all__ = [
    "MAGIC",
    "VERSION",
    "write_tensor",
    "read_tensor",
    "write_sq_weight",
    "read_sq_weight",
    "write_activation_plan",
    "read_activation_plan",
    "write_calib_stats",
    "read_calib_stats",
    "load",
]

MAGIC = b"SQT1"
VERSION = 1

_SEC_FLOAT = 1
_SEC_SQ = 2
_SEC_PLAN = 3
_SEC_CALIB = 4

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class _Reader:
    def __init__(self, data: bytes, source: str):
        self._data = data
        self._pos = 0
        self._source = source

    def take(self, count: int, what: str) -> bytes:
        end = self._pos + count
        if end > len(self._data):
            raise ContainerError(
                f"{self._source}: truncated while reading {what} "
                f"(needed {count} bytes at offset {self._pos})")
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def scalar(self, fmt: str, what: str):
        return self.unpack(fmt, what)[0]

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        raw = self.take(dt.itemsize * count, what)
        return np.frombuffer(raw, dtype=dt).copy()

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise ContainerError(
                f"{self._source}: {len(self._data) - self._pos} unexpected trailing bytes")


def _header(section: int) -> bytes:
    return MAGIC + struct.pack("<HB", VERSION, section)


def _open(path) -> tuple[_Reader, int]:
    data = Path(path).read_bytes()
    rd = _Reader(data, str(path))
    magic = rd.take(4, "magic")
    if magic != MAGIC:
        raise ContainerError(f"{path}: not a {MAGIC.decode()} container")
    version = rd.scalar("<H", "format version")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    section = rd.scalar("<B", "section tag")
    return rd, section


def _tensor_bytes(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.dtype not in _CODE_FOR_DTYPE:
        raise ConfigError(f"only float32/float64 tensors are stored, got {arr.dtype}")
    if arr.ndim < 1 or arr.ndim > 255:
        raise ConfigError(f"unsupported tensor rank {arr.ndim}")
    out = [struct.pack("<BB", _CODE_FOR_DTYPE[arr.dtype], arr.ndim)]
    out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    out.append(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    return b"".join(out)


def _tensor_from(rd: _Reader) -> np.ndarray:
    code = rd.scalar("<B", "tensor dtype code")
    if code not in _DTYPE_CODES:
        raise ContainerError(f"unknown tensor dtype code {code}")
    ndim = rd.scalar("<B", "tensor rank")
    dims = rd.unpack(f"<{ndim}Q", "tensor dimensions")
    count = 1
    for d in dims:
        count *= d
    data = rd.array(_DTYPE_CODES[code], count, "tensor data")
    return data.reshape(dims).astype(_DTYPE_CODES[code].newbyteorder("="))


def write_tensor(path, array) -> None:
    Path(path).write_bytes(_header(_SEC_FLOAT) + _tensor_bytes(array))


def read_tensor(path) -> np.ndarray:
    rd, section = _open(path)
    if section != _SEC_FLOAT:
        raise ContainerError(f"{path}: expected a float tensor section, found tag {section}")
    arr = _tensor_from(rd)
    rd.finish()
    return arr


def _plan_bytes(plan: ActivationPlan) -> bytes:
    out = [struct.pack("<QIdBB", plan.K, plan.banking.b, plan.banking.s,
                       plan.precision.h_high, plan.precision.h_low)]
    out.append(plan.channel_mask.astype(np.uint8).tobytes())
    out.append(plan.perm.astype("<u4").tobytes())
    return b"".join(out)


def _plan_from(rd: _Reader) -> ActivationPlan:
    k, b, s, h_high, h_low = rd.unpack("<QIdBB", "plan header")
    mask = rd.array(np.uint8, k, "plan channel mask")
    if np.any(mask > 1):
        raise ContainerError("plan channel mask bytes must be 0 or 1")
    perm = rd.array("<u4", k, "plan permutation")
    return ActivationPlan(channel_mask=mask.astype(bool), perm=perm.astype(np.int64),
                          banking=BankConfig(b=b, s=s),
                          precision=PrecisionPair(h_high=h_high, h_low=h_low))


def write_activation_plan(path, plan: ActivationPlan) -> None:
    Path(path).write_bytes(_header(_SEC_PLAN) + _plan_bytes(plan))


def read_activation_plan(path) -> ActivationPlan:
    rd, section = _open(path)
    if section != _SEC_PLAN:
        raise ContainerError(f"{path}: expected an activation plan section, found tag {section}")
    plan = _plan_from(rd)
    rd.finish()
    return plan


def write_sq_weight(path, sq: SqWeightMatrix, plan: ActivationPlan | None = None) -> None:
    validate_weight_matrix(sq)
    out = [_header(_SEC_SQ)]
    out.append(struct.pack("<QQIdBB", sq.K, sq.N, sq.banking.b, sq.banking.s,
                           sq.precision.h_high, sq.precision.h_low))
    out.append(sq.low_codes.astype("<i1").tobytes())
    out.append(sq.high_codes.astype("<i1").tobytes())
    out.append(sq.scales.s_high.astype("<f4").tobytes())
    out.append(sq.scales.s_low.astype("<f4").tobytes())
    if plan is None:
        out.append(struct.pack("<B", 0))
    else:
        if plan.K != sq.K:
            raise ConfigError(f"plan covers {plan.K} channels, matrix has K={sq.K}")
        out.append(struct.pack("<B", 1))
        out.append(_plan_bytes(plan))
    Path(path).write_bytes(b"".join(out))


def read_sq_weight(path) -> tuple[SqWeightMatrix, ActivationPlan | None]:
    rd, section = _open(path)
    if section != _SEC_SQ:
        raise ContainerError(f"{path}: expected an encoded weight section, found tag {section}")
    k, n, b, s, h_high, h_low = rd.unpack("<QQIdBB", "encoded weight header")
    try:
        banking = BankConfig(b=b, s=s)
        precision = PrecisionPair(h_high=h_high, h_low=h_low)
        g = banking.num_banks(k)
    except ConfigError as exc:
        raise ContainerError(f"{path}: invalid encoded weight header: {exc}") from exc
    nh = banking.n_high
    low = rd.array("<i1", k * n, "low codes").reshape(k, n)
    high = rd.array("<i1", g * nh * n, "high codes").reshape(g * nh, n)
    s_high = rd.array("<f4", g * n, "high scales").reshape(g, n)
    s_low = rd.array("<f4", g * n, "low scales").reshape(g, n)
    sq = SqWeightMatrix(low_codes=low, high_codes=high,
                        scales=GroupScales(s_high=s_high, s_low=s_low),
                        precision=precision, banking=banking)
    validate_weight_matrix(sq)
    plan = None
    if rd.scalar("<B", "plan flag"):
        plan = _plan_from(rd)
        if plan.K != sq.K:
            raise ContainerError(f"{path}: embedded plan covers {plan.K} channels, K={sq.K}")
    rd.finish()
    return sq, plan


def write_calib_stats(path, stats: CalibStats) -> None:
    out = [_header(_SEC_CALIB)]
    out.append(struct.pack("<QQ", stats.K, stats.n_samples))
    out.append(stats.amax.astype("<f8").tobytes())
    out.append(stats.abar.astype("<f8").tobytes())
    out.append(stats.hessian.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


def read_calib_stats(path) -> CalibStats:
    rd, section = _open(path)
    if section != _SEC_CALIB:
        raise ContainerError(f"{path}: expected a calibration stats section, found tag {section}")
    k, n_samples = rd.unpack("<QQ", "stats header")
    amax = rd.array("<f8", k, "amax")
    abar = rd.array("<f8", k, "abar")
    hessian = rd.array("<f8", k * k, "hessian").reshape(k, k)
    rd.finish()
    return CalibStats(amax=amax, abar=abar, hessian=hessian, n_samples=int(n_samples))


def load(path):
    """Read any section: returns an ndarray, (SqWeightMatrix, plan) tuple,
    ActivationPlan, or CalibStats depending on the stored tag."""
    _, section = _open(path)
    if section == _SEC_FLOAT:
        return read_tensor(path)
    if section == _SEC_SQ:
        return read_sq_weight(path)
    if section == _SEC_PLAN:
        return read_activation_plan(path)
    if section == _SEC_CALIB:
        return read_calib_stats(path)
    raise ContainerError(f"{path}: unknown section tag {section}")

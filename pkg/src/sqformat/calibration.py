"""Calibration statistics and the two preconditioning stages that consume them:
magnitude smoothing and the damped Hessian inverse diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, StructuralError

__all__ = [
    "CalibStats",
    "SmoothResult",
    "accumulate",
    "merge_stats",
    "smooth",
    "hessian_inverse_diag",
]


@dataclass
class CalibStats:
    """Streaming per-channel statistics over calibration activations.

    ``amax`` is the running absolute maximum per channel, ``abar`` the running
    signed mean, and ``hessian`` the un-normalized Gram matrix ``X^T X``
    accumulated over every batch. All float64.
    """

    amax: np.ndarray
    abar: np.ndarray
    hessian: np.ndarray
    n_samples: int = 0

    @classmethod
    def empty(cls, k: int) -> "CalibStats":
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise ConfigError(f"channel count must be a positive integer, got {k!r}")
        return cls(
            amax=np.zeros(k, dtype=np.float64),
            abar=np.zeros(k, dtype=np.float64),
            hessian=np.zeros((k, k), dtype=np.float64),
            n_samples=0,
        )

    @property
    def K(self) -> int:
        return self.amax.shape[0]


def accumulate(stats: CalibStats, batch) -> CalibStats:
    """Fold one M x K activation batch into ``stats`` (mutates and returns it)."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise StructuralError(f"expected a 2-D batch, got shape {x.shape}")
    if x.shape[1] != stats.K:
        raise StructuralError(
            f"batch has {x.shape[1]} channels, stats track {stats.K}")
    if not np.all(np.isfinite(x)):
        raise StructuralError("non-finite activation values")
    m = x.shape[0]
    if m == 0:
        return stats
    np.maximum(stats.amax, np.abs(x).max(axis=0), out=stats.amax)
    total = stats.n_samples + m
    stats.abar *= stats.n_samples / total
    stats.abar += x.sum(axis=0) / total
    stats.hessian += x.T @ x
    stats.n_samples = total
    return stats


def merge_stats(a: CalibStats, b: CalibStats) -> CalibStats:
    """Combine two independently accumulated statistics objects."""
    if a.K != b.K:
        raise StructuralError(f"cannot merge stats over {a.K} and {b.K} channels")
    total = a.n_samples + b.n_samples
    if total == 0:
        abar = np.zeros(a.K, dtype=np.float64)
    else:
        abar = (a.abar * a.n_samples + b.abar * b.n_samples) / total
    return CalibStats(
        amax=np.maximum(a.amax, b.amax),
        abar=abar,
        hessian=a.hessian + b.hessian,
        n_samples=total,
    )


@dataclass
class SmoothResult:
    """Outcome of channel-wise magnitude migration.

    Row j of ``w_smoothed`` is the original row scaled by ``channel_scale[j]``;
    activations must be divided channel-wise by the same vector so the product
    is preserved.
    """

    w_smoothed: np.ndarray
    channel_scale: np.ndarray
    alpha: float

    def apply_to_activations(self, acts) -> np.ndarray:
        a = np.asarray(acts, dtype=np.float64)
        if a.shape[-1] != self.channel_scale.shape[0]:
            raise StructuralError(
                f"activations have {a.shape[-1]} channels, expected "
                f"{self.channel_scale.shape[0]}")
        return a / self.channel_scale


def smooth(w, stats: CalibStats, alpha: float = 0.5) -> SmoothResult:
    """Migrate activation magnitude into the weights.

    ``channel_scale[j] = amax[j]**alpha / wmax[j]**(1-alpha)`` with any zero
    base replaced by 1, where ``wmax[j]`` is the largest weight magnitude in
    row j. ``alpha = 0`` normalizes weight rows, ``alpha = 1`` absorbs the
    full activation range.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha!r}")
    wm = np.asarray(w, dtype=np.float64)
    if wm.ndim != 2:
        raise StructuralError(f"expected a 2-D weight matrix, got shape {wm.shape}")
    if wm.shape[0] != stats.K:
        raise StructuralError(
            f"weights have {wm.shape[0]} input channels, stats track {stats.K}")
    if stats.n_samples < 1:
        raise StructuralError("no calibration samples accumulated")
    if not np.all(np.isfinite(wm)):
        raise StructuralError("non-finite weight values")

    wmax = np.abs(wm).max(axis=1)
    amax_base = np.where(stats.amax > 0, stats.amax, 1.0)
    wmax_base = np.where(wmax > 0, wmax, 1.0)
    channel_scale = amax_base ** alpha / wmax_base ** (1.0 - alpha)
    return SmoothResult(
        w_smoothed=wm * channel_scale[:, None],
        channel_scale=channel_scale,
        alpha=float(alpha),
    )


def hessian_inverse_diag(hessian, damping_frac: float = 0.01) -> np.ndarray:
    """Diagonal of the damped Gram-matrix inverse.

    Damping is ``damping_frac * mean(diag(H))``, falling back to
    ``damping_frac`` itself when the diagonal mean is zero. The result is
    strictly positive for any positive semi-definite input.
    """
    if not (damping_frac > 0):
        raise ConfigError(f"damping_frac must be positive, got {damping_frac!r}")
    h = np.asarray(hessian, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise StructuralError(f"Hessian must be square, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise StructuralError("non-finite Hessian entries")
    asym = np.abs(h - h.T).max() if h.size else 0.0
    scale = np.abs(h).max() if h.size else 0.0
    if asym > 1e-8 * max(scale, 1.0):
        raise StructuralError("Hessian is not symmetric")

    k = h.shape[0]
    diag_mean = float(np.trace(h)) / k
    lam = damping_frac * diag_mean if diag_mean != 0.0 else damping_frac
    damped = (h + h.T) / 2.0
    damped[np.diag_indices(k)] += lam
    try:
        chol = np.linalg.cholesky(damped)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed after damping: {exc}") from exc
    # diag((L L^T)^-1) = column-wise squared norms of L^-1
    linv = np.linalg.solve(chol, np.eye(k))
    return np.einsum("ij,ij->j", linv, linv)

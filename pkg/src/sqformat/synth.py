"""Synthetic outlier layers and the layer-level error metrics the harness
records."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, StructuralError

__all__ = [
    "gen_synthetic_layer",
    "reconstruction_error",
    "relative_output_error",
    "activation_output_error",
]


def gen_synthetic_layer(k: int, n: int, m: int, outlier_frac: float = 0.01,
                        outlier_scale: float = 50.0, seed: int = 0):
    """Draw one Gaussian linear layer with amplified activation channels.

    Weights are N(0, 1/sqrt(K)). Calibration and evaluation batches are
    N(0, 1) with ``ceil(outlier_frac * K)`` randomly chosen channels
    multiplied by ``outlier_scale``; both batches share the same channel set.
    Returns ``(weights, calib_batch, eval_batch)``; identical arguments
    reproduce identical tensors.
    """
    for name, v in (("k", k), ("n", n), ("m", m)):
        if not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    if not (0.0 <= outlier_frac < 1.0):
        raise ConfigError(f"outlier_frac must lie in [0, 1), got {outlier_frac!r}")
    if not (isinstance(outlier_scale, (int, float)) and math.isfinite(outlier_scale)
            and outlier_scale > 0):
        raise ConfigError(f"outlier_scale must be finite and positive, got {outlier_scale!r}")

    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1.0 / np.sqrt(k), size=(k, n))
    n_out = int(np.ceil(outlier_frac * k))
    if n_out:
        idx = np.sort(rng.choice(k, size=n_out, replace=False))
    else:
        idx = np.empty(0, dtype=np.int64)
    calib = rng.standard_normal((m, k))
    ev = rng.standard_normal((m, k))
    calib[:, idx] *= outlier_scale
    ev[:, idx] *= outlier_scale
    return w, calib, ev


def reconstruction_error(x_hat, x_ref) -> float:
    """Relative Frobenius distance of a reconstruction from its reference."""
    ref = np.asarray(x_ref, dtype=np.float64)
    hat = np.asarray(x_hat, dtype=np.float64)
    if hat.shape != ref.shape:
        raise StructuralError(f"shape mismatch {hat.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise StructuralError("reference has zero norm")
    return float(np.linalg.norm(hat - ref) / denom)


def relative_output_error(a_eval, w_ref, w_hat) -> float:
    """``|A (W_hat - W_ref)|_F / |A W_ref|_F`` on held-out activations."""
    a = np.asarray(a_eval, dtype=np.float64)
    ref = np.asarray(w_ref, dtype=np.float64)
    hat = np.asarray(w_hat, dtype=np.float64)
    if a.ndim != 2 or ref.ndim != 2 or a.shape[1] != ref.shape[0]:
        raise StructuralError(f"incompatible shapes {a.shape} x {ref.shape}")
    if hat.shape != ref.shape:
        raise StructuralError(f"shape mismatch {hat.shape} vs {ref.shape}")
    denom = np.linalg.norm(a @ ref)
    if denom == 0:
        raise StructuralError("reference output has zero norm")
    return float(np.linalg.norm(a @ (hat - ref)) / denom)


def activation_output_error(a_ref, a_hat, w) -> float:
    """``|(A_hat - A_ref) W|_F / |A_ref W|_F`` for a quantized activation operand."""
    ref = np.asarray(a_ref, dtype=np.float64)
    hat = np.asarray(a_hat, dtype=np.float64)
    wm = np.asarray(w, dtype=np.float64)
    if ref.ndim != 2 or wm.ndim != 2 or ref.shape[1] != wm.shape[0]:
        raise StructuralError(f"incompatible shapes {ref.shape} x {wm.shape}")
    if hat.shape != ref.shape:
        raise StructuralError(f"shape mismatch {hat.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref @ wm)
    if denom == 0:
        raise StructuralError("reference output has zero norm")
    return float(np.linalg.norm((hat - ref) @ wm) / denom)

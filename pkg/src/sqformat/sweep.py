"""Grid sweep harness: synthetic layers, per-method error records, CSV/JSON
emission. Identical configurations and seeds produce byte-identical output."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .calibration import CalibStats, accumulate, hessian_inverse_diag, smooth
from .core import BankConfig, PrecisionPair, encode_weight, decode_weight
from .errors import ConfigError
from .perfmodel import (
    equivalent_bits_activation,
    equivalent_bits_weight,
    static_split_speedup,
)
from .quantizers import (
    activation_channel_importance,
    build_activation_plan,
    decode_split,
    decode_uniform,
    quantize_activations_dynamic,
    quantize_activations_static,
    quantize_uniform,
    select_weight_mask,
    weight_importance,
)
from .synth import (
    activation_output_error,
    gen_synthetic_layer,
    reconstruction_error,
    relative_output_error,
)

__all__ = [
    "LayerSpec",
    "SweepConfig",
    "SweepRecord",
    "run_sweep",
    "write_csv",
    "write_json",
    "CSV_COLUMNS",
    "DEFAULT_METHODS",
    "KNOWN_METHODS",
]

logger = logging.getLogger(__name__)

DEFAULT_BANK_SIZES = (4, 8, 16, 32, 64, 128)
DEFAULT_SPARSITIES = (0.5, 0.75, 0.875, 0.9375)
DEFAULT_PRECISIONS = ((8, 4), (8, 3), (8, 2), (4, 2))
DEFAULT_METHODS = ("sq_weights", "sq_act_static", "sq_act_dynamic", "uniform", "sparse24")
# uniform_act is the activation-side counterpart of the uniform weight baseline.
KNOWN_METHODS = DEFAULT_METHODS + ("uniform_act",)

CSV_COLUMNS = ("method", "b", "s", "h_high", "h_low", "seed", "K", "N",
               "w_err", "out_err", "eq_bits", "model_speedup")


@dataclass(frozen=True)
class LayerSpec:
    """Shape and outlier structure of one synthetic layer."""

    k: int = 256
    n: int = 256
    m: int = 64
    outlier_frac: float = 0.01
    outlier_scale: float = 50.0


@dataclass(frozen=True)
class SweepConfig:
    bank_sizes: tuple = DEFAULT_BANK_SIZES
    sparsities: tuple = DEFAULT_SPARSITIES
    precisions: tuple = DEFAULT_PRECISIONS
    methods: tuple = DEFAULT_METHODS
    seeds: tuple = (0,)
    layers: tuple = (LayerSpec(),)
    alpha: float = 0.5
    damping_frac: float = 0.01


@dataclass(frozen=True)
class SweepRecord:
    method: str
    b: int
    s: float
    h_high: int
    h_low: int
    seed: int
    K: int
    N: int
    w_err: float
    out_err: float
    eq_bits: float
    model_speedup: float


class _SeedContext:
    """Per-(layer, seed) caches shared across grid points.

    Stage results that do not depend on the grid point (smoothing, the
    Hessian inverse, importance scores) are computed once and reused; the
    records are identical to running each pipeline end to end.
    """

    def __init__(self, layer: LayerSpec, seed: int, config: SweepConfig):
        self.layer = layer
        self.seed = seed
        self.config = config
        self.w, calib, self.a_eval = gen_synthetic_layer(
            layer.k, layer.n, layer.m, layer.outlier_frac, layer.outlier_scale, seed)
        self.stats = accumulate(CalibStats.empty(layer.k), calib)

    @cached_property
    def smoothed(self):
        return smooth(self.w, self.stats, self.config.alpha)

    @cached_property
    def hinv_diag(self):
        return hessian_inverse_diag(self.stats.hessian, self.config.damping_frac)

    @cached_property
    def imp_weights(self):
        return weight_importance(self.smoothed.w_smoothed, self.hinv_diag)

    @cached_property
    def imp_acts(self):
        return activation_channel_importance(self.stats.abar, self.smoothed.w_smoothed)

    @cached_property
    def a_eval_smoothed(self):
        return self.smoothed.apply_to_activations(self.a_eval)


def _model_speedup(s: float, precision: PrecisionPair) -> float:
    rate = float("inf") if precision.h_low == 0 else precision.h_high / precision.h_low
    return static_split_speedup(s, rate)


def _run_method(method: str, ctx: _SeedContext, banking: BankConfig,
                precision: PrecisionPair) -> SweepRecord:
    layer, seed = ctx.layer, ctx.seed
    b, s = banking.b, banking.s

    if method == "sq_weights":
        mask = select_weight_mask(ctx.imp_weights, banking)
        w_hat = decode_weight(encode_weight(ctx.smoothed.w_smoothed, mask, banking, precision))
        w_err = reconstruction_error(w_hat, ctx.smoothed.w_smoothed)
        out_err = relative_output_error(ctx.a_eval_smoothed, ctx.smoothed.w_smoothed, w_hat)
        eq_bits = equivalent_bits_weight(precision, s)
        speedup = _model_speedup(s, precision)
    elif method == "sparse24":
        banking = BankConfig(b=4, s=0.5)
        precision = PrecisionPair(h_high=precision.h_high, h_low=0)
        b, s = banking.b, banking.s
        mask = select_weight_mask(np.abs(ctx.w), banking)
        w_hat = decode_weight(encode_weight(ctx.w, mask, banking, precision))
        w_err = reconstruction_error(w_hat, ctx.w)
        out_err = relative_output_error(ctx.a_eval, ctx.w, w_hat)
        eq_bits = equivalent_bits_weight(precision, s)
        speedup = _model_speedup(s, precision)
    elif method == "uniform":
        uq = quantize_uniform(ctx.w, precision.h_low, "per_bank_column", bank_size=b)
        w_hat = decode_uniform(uq)
        w_err = reconstruction_error(w_hat, ctx.w)
        out_err = relative_output_error(ctx.a_eval, ctx.w, w_hat)
        eq_bits = float(precision.h_low)
        speedup = static_split_speedup(1.0, precision.h_high / precision.h_low)
    elif method == "sq_act_static":
        plan = build_activation_plan(ctx.imp_acts, banking, precision)
        a_hat = decode_split(quantize_activations_static(ctx.a_eval_smoothed, plan))
        w_err = reconstruction_error(a_hat, ctx.a_eval_smoothed)
        out_err = activation_output_error(ctx.a_eval_smoothed, a_hat, ctx.smoothed.w_smoothed)
        eq_bits = equivalent_bits_activation(precision, s)
        speedup = _model_speedup(s, precision)
    elif method == "sq_act_dynamic":
        a_hat = decode_split(quantize_activations_dynamic(ctx.a_eval_smoothed, banking, precision))
        w_err = reconstruction_error(a_hat, ctx.a_eval_smoothed)
        out_err = activation_output_error(ctx.a_eval_smoothed, a_hat, ctx.smoothed.w_smoothed)
        eq_bits = equivalent_bits_activation(precision, s)
        speedup = _model_speedup(s, precision)
    elif method == "uniform_act":
        a_hat = decode_uniform(quantize_uniform(ctx.a_eval, precision.h_low, "per_row"))
        w_err = reconstruction_error(a_hat, ctx.a_eval)
        out_err = activation_output_error(ctx.a_eval, a_hat, ctx.w)
        eq_bits = float(precision.h_low)
        speedup = static_split_speedup(1.0, precision.h_high / precision.h_low)
    else:
        raise ConfigError(f"unknown sweep method {method!r}")

    return SweepRecord(method=method, b=b, s=s, h_high=precision.h_high,
                       h_low=precision.h_low, seed=seed, K=layer.k, N=layer.n,
                       w_err=w_err, out_err=out_err, eq_bits=eq_bits,
                       model_speedup=speedup)


def run_sweep(config: SweepConfig) -> list[SweepRecord]:
    """Run every method over every valid grid point, seed, and layer.

    Grid points where ``b * (1 - s)`` is fractional or ``b`` does not divide
    K are skipped with a logged reason. The sparse24 baseline has a fixed
    banked layout, so it runs once per (h_high, seed) rather than per grid
    point. Records come back in a deterministic sorted order.
    """
    unknown = [m for m in config.methods if m not in KNOWN_METHODS]
    if unknown:
        raise ConfigError(f"unknown sweep methods {unknown!r}; known: {KNOWN_METHODS}")
    if any(hl == 0 for _, hl in config.precisions):
        raise ConfigError("grid precision pairs need h_low >= 1; "
                          "the pure-sparse layout is covered by the sparse24 method")

    records: list[SweepRecord] = []
    skipped: set = set()
    for layer in config.layers:
        for seed in config.seeds:
            ctx = _SeedContext(layer, seed, config)
            ran_sparse24: set = set()
            for b in config.bank_sizes:
                for s in config.sparsities:
                    try:
                        banking = BankConfig(b=b, s=s)
                    except ConfigError as exc:
                        if (b, s) not in skipped:
                            skipped.add((b, s))
                            logger.warning("skipping grid point b=%s s=%s: %s", b, s, exc)
                        continue
                    if layer.k % b != 0:
                        if (b, layer.k) not in skipped:
                            skipped.add((b, layer.k))
                            logger.warning(
                                "skipping bank size %s: does not divide K=%s", b, layer.k)
                        continue
                    for hh, hl in config.precisions:
                        precision = PrecisionPair(h_high=hh, h_low=hl)
                        for method in config.methods:
                            if method == "sparse24":
                                if hh in ran_sparse24:
                                    continue
                                ran_sparse24.add(hh)
                            records.append(_run_method(method, ctx, banking, precision))

    records.sort(key=lambda r: (r.K, r.N, r.seed, r.method, r.b, r.s, r.h_high, r.h_low))
    return records


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_csv(records, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = asdict(rec)
            writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])


def write_json(records, path) -> None:
    with Path(path).open("w") as fh:
        json.dump([asdict(rec) for rec in records], fh, indent=2)
        fh.write("\n")

"""Command-line front end.

Subcommands cover synthetic layer generation, the two quantization
pipelines, a GEMM-vs-oracle check, the design-space sweep, and throughput
model queries. Exit codes: 0 success, 1 usage error, 2 data or invariant
error. Relative output paths are resolved under ``SQFORMAT_OUT_DIR`` when
that variable is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import container
from .calibration import CalibStats, accumulate, smooth
from .core import BankConfig, PrecisionPair, decode_weight, encode_weight
from .errors import ConfigError, SqFormatError
from .gemm import gemm_oracle, gemm_sq_activations, gemm_sq_weights
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
)
from .sweep import (
    DEFAULT_BANK_SIZES,
    DEFAULT_METHODS,
    DEFAULT_PRECISIONS,
    DEFAULT_SPARSITIES,
    LayerSpec,
    SweepConfig,
    run_sweep,
    write_csv,
    write_json,
)
from .synth import gen_synthetic_layer, reconstruction_error

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
OUT_DIR_ENV = "SQFORMAT_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _pair(text: str) -> PrecisionPair:
    try:
        hi, _, lo = text.partition("/")
        return PrecisionPair(h_high=int(hi), h_low=int(lo))
    except (ValueError, ConfigError) as exc:
        raise argparse.ArgumentTypeError(
            f"expected a precision pair like 8/4, got {text!r} ({exc})")


def _int_list(text: str) -> tuple:
    return tuple(int(part) for part in text.split(","))


def _float_list(text: str) -> tuple:
    return tuple(float(part) for part in text.split(","))


def _pair_list(text: str) -> tuple:
    pairs = []
    for part in text.split(","):
        p = _pair(part)
        pairs.append((p.h_high, p.h_low))
    return tuple(pairs)


def _str_list(text: str) -> tuple:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _layer_dims(text: str) -> LayerDims:
    try:
        pairs = []
        for part in text.split(","):
            k, _, count = part.partition(":")
            pairs.append((int(k), int(count)))
        return LayerDims(tuple(pairs))
    except (ValueError, ConfigError) as exc:
        raise argparse.ArgumentTypeError(
            f"expected K:count[,K:count...], got {text!r} ({exc})")


def _out_path(path) -> Path:
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    if p.parent != Path(""):
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2)
    print()


def _banking(args) -> BankConfig:
    return BankConfig(b=args.bank_size, s=args.sparsity)


def _load_stats(args) -> CalibStats:
    if args.stats is not None:
        return container.read_calib_stats(args.stats)
    batch = container.read_tensor(args.calib)
    if batch.ndim != 2:
        raise ConfigError(f"calibration tensor must be 2-D (rows, channels), got {batch.ndim}-D")
    return accumulate(CalibStats.empty(batch.shape[1]), batch)


def _maybe_save_stats(args, stats: CalibStats) -> None:
    if getattr(args, "stats_out", None):
        container.write_calib_stats(_out_path(args.stats_out), stats)


# --- subcommands -----------------------------------------------------------

def cmd_gen_synth(args) -> int:
    w, calib, a_eval = gen_synthetic_layer(
        args.k, args.n, args.m, args.outlier_frac, args.outlier_scale, args.seed)
    paths = {name: _out_path(f"{args.out_prefix}.{name}.sqt")
             for name in ("weights", "calib", "eval")}
    container.write_tensor(paths["weights"], w)
    container.write_tensor(paths["calib"], calib)
    container.write_tensor(paths["eval"], a_eval)
    _emit({"k": args.k, "n": args.n, "m": args.m, "seed": args.seed,
           **{name: str(p) for name, p in paths.items()}})
    return EXIT_OK


def cmd_quantize_weights(args) -> int:
    w = container.read_tensor(args.weights)
    stats = _load_stats(args)
    sq, smoothing = quantize_weights_sq(
        w, stats, _banking(args), args.pair,
        alpha=args.alpha, damping_frac=args.damping_frac)
    out = _out_path(args.out)
    container.write_sq_weight(out, sq)
    _maybe_save_stats(args, stats)
    if args.channel_scale_out:
        container.write_tensor(_out_path(args.channel_scale_out), smoothing.channel_scale)
    w_err = reconstruction_error(decode_weight(sq), smoothing.w_smoothed)
    _emit({"out": str(out), "k": sq.K, "n": sq.N,
           "bank_size": sq.banking.b, "sparsity": sq.banking.s,
           "h_high": sq.precision.h_high, "h_low": sq.precision.h_low,
           "w_err": w_err})
    return EXIT_OK


def cmd_gen_act_plan(args) -> int:
    w = container.read_tensor(args.weights)
    stats = _load_stats(args)
    smoothing = smooth(w, stats, args.alpha)
    importance = activation_channel_importance(stats.abar, smoothing.w_smoothed)
    plan = build_activation_plan(importance, _banking(args), args.pair)
    out = _out_path(args.out)
    container.write_activation_plan(out, plan)
    _maybe_save_stats(args, stats)
    _emit({"out": str(out), "k": plan.K,
           "bank_size": plan.banking.b, "sparsity": plan.banking.s,
           "high_channels": int(plan.channel_mask.sum()),
           "n_high_per_bank": plan.banking.n_high})
    return EXIT_OK


def cmd_quantize_acts(args) -> int:
    acts = container.read_tensor(args.acts)
    if args.plan is not None:
        plan = container.read_activation_plan(args.plan)
        split = quantize_activations_static(acts, plan)
        mode = "static"
    else:
        for name in ("bank_size", "sparsity", "pair"):
            if getattr(args, name) is None:
                raise ConfigError(f"--dynamic requires --{name.replace('_', '-')}")
        split = quantize_activations_dynamic(acts, _banking(args), args.pair)
        mode = "dynamic"
    a_hat = decode_split(split)
    payload = {"mode": mode, "rows": split.M, "k": split.K,
               "rel_error": reconstruction_error(a_hat, acts)}
    if args.out:
        out = _out_path(args.out)
        container.write_tensor(out, a_hat)
        payload["out"] = str(out)
    _emit(payload)
    return EXIT_OK


def _gemm_check_one(rng, m, k, n, banking, precision, side):
    """Return the relative deviation of one randomized hybrid GEMM vs the oracle."""
    w = rng.standard_normal((k, n)) / np.sqrt(k)
    a = rng.standard_normal((m, k))
    if side == "weights":
        mask = select_weight_mask(np.abs(w), banking)
        sq = encode_weight(w, mask, banking, precision)
        a_q = quantize_uniform(a, precision.h_high, "per_row")
        y = gemm_sq_weights(a_q, sq).y
        oracle = gemm_oracle(decode_uniform(a_q), decode_weight(sq))
    elif side == "acts-static":
        importance = np.abs(a).mean(axis=0) * np.abs(w.sum(axis=1))
        plan = build_activation_plan(importance, banking, precision)
        split = quantize_activations_static(a, plan)
        w_q = quantize_uniform(apply_plan_to_weights(w, plan), precision.h_high,
                               "per_bank_column", bank_size=banking.b)
        y = gemm_sq_activations(split, w_q).y
        oracle = gemm_oracle(decode_split(split), decode_uniform(w_q)[plan.inverse_perm])
    else:
        w_q = quantize_uniform(w, precision.h_high, "per_bank_column", bank_size=banking.b)
        split = quantize_activations_dynamic(a, banking, precision)
        y = gemm_sq_activations(split, w_q).y
        oracle = gemm_oracle(decode_split(split), decode_uniform(w_q))
    denom = np.linalg.norm(oracle)
    return float(np.linalg.norm(y - oracle) / denom) if denom else float(np.linalg.norm(y))


def cmd_gemm_check(args) -> int:
    if args.k % args.bank_size != 0:
        raise ConfigError(f"bank size {args.bank_size} must divide K={args.k}")
    banking = _banking(args)
    sides = ("weights", "acts-static", "acts-dynamic") if args.side == "all" else (args.side,)
    pairs = args.pairs or [PrecisionPair(hh, hl) for hh, hl in DEFAULT_PRECISIONS]
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.instances):
        for precision in pairs:
            for side in sides:
                dev = _gemm_check_one(rng, args.m, args.k, args.n, banking, precision, side)
                worst = max(worst, dev)
    passed = worst <= args.tolerance
    _emit({"max_rel_deviation": worst, "tolerance": args.tolerance,
           "instances": args.instances, "sides": list(sides),
           "pairs": [f"{p.h_high}/{p.h_low}" for p in pairs], "pass": passed})
    return EXIT_OK if passed else EXIT_DATA


def cmd_sweep(args) -> int:
    if not args.csv and not args.json:
        raise ConfigError("at least one of --csv or --json is required")
    layer = LayerSpec(k=args.k, n=args.n, m=args.m,
                      outlier_frac=args.outlier_frac, outlier_scale=args.outlier_scale)
    config = SweepConfig(bank_sizes=args.bank_sizes, sparsities=args.sparsities,
                         precisions=args.pairs, methods=args.methods,
                         seeds=args.seeds, layers=(layer,),
                         alpha=args.alpha, damping_frac=args.damping_frac)
    records = run_sweep(config)
    payload = {"records": len(records)}
    if args.csv:
        path = _out_path(args.csv)
        write_csv(records, path)
        payload["csv"] = str(path)
    if args.json:
        path = _out_path(args.json)
        write_json(records, path)
        payload["json"] = str(path)
    _emit(payload)
    return EXIT_OK


def cmd_model_eq_bits(args) -> int:
    _emit({"h_high": args.pair.h_high, "h_low": args.pair.h_low, "sparsity": args.sparsity,
           "weight_bits": equivalent_bits_weight(args.pair, args.sparsity),
           "activation_bits": equivalent_bits_activation(args.pair, args.sparsity)})
    return EXIT_OK


def cmd_model_speedup(args) -> int:
    if args.rate is not None:
        rate = args.rate
    else:
        rate = float("inf") if args.pair.h_low == 0 else args.pair.h_high / args.pair.h_low
    _emit({"sparsity": args.sparsity, "rate_ratio": rate, "overhead": args.overhead,
           "speedup": static_split_speedup(args.sparsity, rate, args.overhead)})
    return EXIT_OK


def cmd_model_min_sparsity(args) -> int:
    _emit({"rate_ratio": args.rate, "min_sparsity": min_hidden_sparsity(args.rate)})
    return EXIT_OK


def cmd_model_mask_storage(args) -> int:
    dims = llama3_70b_layer_dims() if args.preset else args.layers
    nbytes = estimate_mask_storage(dims)
    _emit({"layers": [[k, count] for k, count in dims.linears],
           "bytes": nbytes, "mib": round(nbytes / 2**20, 2)})
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _add_banking_args(p, required=True):
    p.add_argument("--bank-size", type=int, required=required,
                   help="bank length b along the reduction dimension")
    p.add_argument("--sparsity", type=float, required=required,
                   help="fraction s of each bank kept at low precision")
    p.add_argument("--pair", type=_pair, required=required,
                   help="precision pair HIGH/LOW, e.g. 8/4")


def _add_stats_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--calib", help="float tensor of calibration activations (rows, channels)")
    g.add_argument("--stats", help="previously saved calibration stats container")
    p.add_argument("--stats-out", help="save accumulated calibration stats for reuse")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sqformat",
                     description="hybrid-precision sparse-quantized tensor toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-synth", help="generate a synthetic outlier layer")
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--outlier-frac", type=float, default=0.01)
    p.add_argument("--outlier-scale", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True,
                   help="writes PREFIX.weights.sqt, PREFIX.calib.sqt, PREFIX.eval.sqt")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("quantize-weights", help="smooth, select, and encode a weight matrix")
    p.add_argument("--weights", required=True, help="float weight tensor (K, N)")
    _add_stats_args(p)
    _add_banking_args(p)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--damping-frac", type=float, default=0.01)
    p.add_argument("--out", required=True, help="output container for the encoded weights")
    p.add_argument("--channel-scale-out",
                   help="also save the per-channel activation divisors as a float tensor")
    p.set_defaults(func=cmd_quantize_weights)

    p = sub.add_parser("gen-act-plan", help="build a static activation split plan")
    p.add_argument("--weights", required=True, help="float weight tensor (K, N)")
    _add_stats_args(p)
    _add_banking_args(p)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output container for the plan")
    p.set_defaults(func=cmd_gen_act_plan)

    p = sub.add_parser("quantize-acts", help="split-quantize activations and report error")
    p.add_argument("--acts", required=True, help="float activation tensor (rows, K)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--plan", help="static plan container")
    g.add_argument("--dynamic", action="store_true",
                   help="per-row magnitude split (needs --bank-size/--sparsity/--pair)")
    _add_banking_args(p, required=False)
    p.add_argument("--out", help="save the dequantized activations as a float tensor")
    p.set_defaults(func=cmd_quantize_acts)

    p = sub.add_parser("gemm-check", help="compare the hybrid GEMM against the float oracle")
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--k", type=int, default=64)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bank-size", type=int, default=16)
    p.add_argument("--sparsity", type=float, default=0.75)
    p.add_argument("--pairs", type=_pair, action="append", dest="pairs", metavar="PAIR",
                   help="precision pair HIGH/LOW; repeatable (default: all four grid pairs)")
    p.add_argument("--side", choices=("weights", "acts-static", "acts-dynamic", "all"),
                   default="all")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gemm_check)

    p = sub.add_parser("sweep", help="run the bank-size/sparsity/precision design sweep")
    p.add_argument("--bank-sizes", type=_int_list, default=DEFAULT_BANK_SIZES)
    p.add_argument("--sparsities", type=_float_list, default=DEFAULT_SPARSITIES)
    p.add_argument("--pairs", type=_pair_list, default=DEFAULT_PRECISIONS,
                   help="comma-separated precision pairs, e.g. 8/4,8/2")
    p.add_argument("--methods", type=_str_list, default=DEFAULT_METHODS)
    p.add_argument("--seeds", type=_int_list, default=(0,))
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--outlier-frac", type=float, default=0.01)
    p.add_argument("--outlier-scale", type=float, default=50.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--damping-frac", type=float, default=0.01)
    p.add_argument("--csv", help="output CSV path")
    p.add_argument("--json", help="output JSON path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("model", help="analytical throughput model queries")
    msub = p.add_subparsers(dest="model_command", required=True, metavar="QUERY")

    q = msub.add_parser("eq-bits", help="storage-weighted equivalent bit widths")
    q.add_argument("--pair", type=_pair, required=True)
    q.add_argument("--sparsity", type=float, required=True)
    q.set_defaults(func=cmd_model_eq_bits)

    q = msub.add_parser("speedup", help="modeled speedup of the static split")
    q.add_argument("--sparsity", type=float, required=True)
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--rate", type=float, help="high:low throughput ratio r")
    g.add_argument("--pair", type=_pair, help="derive r from a precision pair")
    q.add_argument("--overhead", type=float, default=0.0)
    q.set_defaults(func=cmd_model_speedup)

    q = msub.add_parser("min-sparsity", help="sparsity needed to hide the low-rate path")
    q.add_argument("--rate", type=float, required=True)
    q.set_defaults(func=cmd_model_min_sparsity)

    q = msub.add_parser("mask-storage", help="static mask storage for a model's layers")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--layers", type=_layer_dims,
                   help="comma-separated K:count entries, e.g. 8192:480,28672:80")
    g.add_argument("--preset", choices=("llama3-70b",))
    q.set_defaults(func=cmd_model_mask_storage)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SqFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())

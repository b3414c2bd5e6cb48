"""CLI behavior: exit codes, the quantization pipeline end to end, and the
model query subcommands."""

import json

import numpy as np
import pytest

from sqformat.cli import main
from sqformat.container import read_sq_weight, read_tensor


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_bad_pair_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["model", "eq-bits", "--pair", "8x4", "--sparsity", "0.5"])
    assert exc.value.code == 1


def test_missing_input_file_is_data_error(tmp_path, capsys):
    code = main(["quantize-acts", "--acts", str(tmp_path / "nope.sqt"),
                 "--dynamic", "--bank-size", "4", "--sparsity", "0.5", "--pair", "8/4"])
    assert code == 2


def test_pipeline_end_to_end(tmp_path, capsys):
    prefix = str(tmp_path / "layer")
    code, info = run_cli(capsys, "gen-synth", "--k", "64", "--n", "32", "--m", "16",
                         "--seed", "5", "--out-prefix", prefix)
    assert code == 0

    out_sq = str(tmp_path / "w.sqt")
    code, info = run_cli(capsys, "quantize-weights",
                         "--weights", info["weights"], "--calib", info["calib"],
                         "--bank-size", "16", "--sparsity", "0.75", "--pair", "8/4",
                         "--out", out_sq,
                         "--stats-out", str(tmp_path / "stats.sqt"),
                         "--channel-scale-out", str(tmp_path / "cs.sqt"))
    assert code == 0
    assert 0 < info["w_err"] < 0.2
    sq, _ = read_sq_weight(out_sq)
    assert sq.K == 64 and sq.N == 32
    assert read_tensor(tmp_path / "cs.sqt").shape == (64,)

    plan_path = str(tmp_path / "plan.sqt")
    code, info = run_cli(capsys, "gen-act-plan",
                         "--weights", prefix + ".weights.sqt",
                         "--stats", str(tmp_path / "stats.sqt"),
                         "--bank-size", "16", "--sparsity", "0.75", "--pair", "8/4",
                         "--out", plan_path)
    assert code == 0
    assert info["high_channels"] == 16

    code, info = run_cli(capsys, "quantize-acts",
                         "--acts", prefix + ".eval.sqt", "--plan", plan_path,
                         "--out", str(tmp_path / "ahat.sqt"))
    assert code == 0
    assert info["mode"] == "static"
    assert 0 < info["rel_error"] < 0.5

    code, info = run_cli(capsys, "quantize-acts",
                         "--acts", prefix + ".eval.sqt", "--dynamic",
                         "--bank-size", "16", "--sparsity", "0.75", "--pair", "8/4")
    assert code == 0
    assert info["mode"] == "dynamic"


def test_dynamic_without_banking_flags(tmp_path, capsys):
    prefix = str(tmp_path / "l")
    _, info = run_cli(capsys, "gen-synth", "--k", "8", "--n", "4", "--m", "2",
                      "--out-prefix", prefix)
    code = main(["quantize-acts", "--acts", info["eval"], "--dynamic"])
    assert code == 1


def test_gemm_check_passes(capsys):
    code, info = run_cli(capsys, "gemm-check", "--instances", "2", "--k", "32",
                         "--bank-size", "8")
    assert code == 0
    assert info["pass"] is True
    assert info["max_rel_deviation"] <= 1e-5


def test_sweep_writes_outputs(tmp_path, capsys):
    csv_path = tmp_path / "out.csv"
    code, info = run_cli(capsys, "sweep", "--bank-sizes", "8", "--sparsities", "0.5",
                         "--pairs", "8/4", "--k", "32", "--n", "16", "--m", "8",
                         "--csv", str(csv_path), "--json", str(tmp_path / "out.json"))
    assert code == 0
    assert csv_path.exists()
    assert info["records"] == 5


def test_sweep_requires_an_output(capsys):
    code = main(["sweep", "--bank-sizes", "8", "--sparsities", "0.5",
                 "--k", "32", "--n", "16", "--m", "8"])
    assert code == 1


def test_out_dir_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SQFORMAT_OUT_DIR", str(tmp_path / "outputs"))
    code, info = run_cli(capsys, "sweep", "--bank-sizes", "8", "--sparsities", "0.5",
                         "--pairs", "8/4", "--k", "32", "--n", "16", "--m", "8",
                         "--csv", "rel.csv")
    assert code == 0
    assert (tmp_path / "outputs" / "rel.csv").exists()


def test_model_queries(capsys):
    _, info = run_cli(capsys, "model", "eq-bits", "--pair", "8/4", "--sparsity", "0.75")
    assert info["weight_bits"] == 6.0
    assert info["activation_bits"] == 5.0

    _, info = run_cli(capsys, "model", "speedup", "--sparsity", "0.875", "--rate", "1.92")
    assert info["speedup"] == pytest.approx(1.72, abs=0.01)

    _, info = run_cli(capsys, "model", "speedup", "--sparsity", "0.5", "--pair", "8/2")
    assert info["rate_ratio"] == 4.0

    _, info = run_cli(capsys, "model", "min-sparsity", "--rate", "3")
    assert info["min_sparsity"] == 0.75

    _, info = run_cli(capsys, "model", "mask-storage", "--preset", "llama3-70b")
    assert info["bytes"] == 6_225_920
    assert info["mib"] == 5.94

    _, info = run_cli(capsys, "model", "mask-storage", "--layers", "1024:1")
    assert info["bytes"] == 1024

"""SQT1 container round trips and parse failure diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_random_sq, valid_bank_configs
from sqformat import BankConfig, CalibStats, PrecisionPair, accumulate, build_activation_plan
from sqformat.container import (
    load,
    read_activation_plan,
    read_calib_stats,
    read_sq_weight,
    read_tensor,
    write_activation_plan,
    write_calib_stats,
    write_sq_weight,
    write_tensor,
)
from sqformat.errors import ContainerError, StructuralError


def test_tensor_round_trip_f64(tmp_path):
    arr = np.random.default_rng(0).standard_normal((7, 5))
    path = tmp_path / "t.sqt"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, arr)


def test_tensor_round_trip_f32_and_1d(tmp_path):
    arr = np.random.default_rng(1).standard_normal(9).astype(np.float32)
    path = tmp_path / "t.sqt"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_sq_weight_round_trip(tmp_path_factory, seed, with_plan):
    rng = np.random.default_rng(seed)
    banking = rng.choice(np.array(valid_bank_configs(), dtype=object))
    precision = PrecisionPair(*[(8, 4), (8, 3), (8, 2), (4, 2), (8, 0)][seed % 5])
    _, _, sq = make_random_sq(rng, banking, precision, num_banks=2, n=3)
    plan = None
    if with_plan:
        plan = build_activation_plan(rng.random(sq.K), banking, precision)
    path = tmp_path_factory.mktemp("sq") / "w.sqt"
    write_sq_weight(path, sq, plan)
    back, back_plan = read_sq_weight(path)
    np.testing.assert_array_equal(back.low_codes, sq.low_codes)
    np.testing.assert_array_equal(back.high_codes, sq.high_codes)
    np.testing.assert_array_equal(back.scales.s_high, sq.scales.s_high)
    np.testing.assert_array_equal(back.scales.s_low, sq.scales.s_low)
    assert back.banking == sq.banking and back.precision == sq.precision
    if with_plan:
        np.testing.assert_array_equal(back_plan.channel_mask, plan.channel_mask)
        np.testing.assert_array_equal(back_plan.perm, plan.perm)
    else:
        assert back_plan is None


def test_plan_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    plan = build_activation_plan(rng.random(32), BankConfig(b=8, s=0.875),
                                 PrecisionPair(8, 3))
    path = tmp_path / "plan.sqt"
    write_activation_plan(path, plan)
    back = read_activation_plan(path)
    np.testing.assert_array_equal(back.channel_mask, plan.channel_mask)
    np.testing.assert_array_equal(back.perm, plan.perm)
    assert back.banking == plan.banking
    assert back.precision == plan.precision


def test_calib_stats_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    stats = accumulate(CalibStats.empty(6), rng.standard_normal((10, 6)))
    path = tmp_path / "stats.sqt"
    write_calib_stats(path, stats)
    back = read_calib_stats(path)
    np.testing.assert_array_equal(back.amax, stats.amax)
    np.testing.assert_array_equal(back.abar, stats.abar)
    np.testing.assert_array_equal(back.hessian, stats.hessian)
    assert back.n_samples == stats.n_samples


def test_generic_load_dispatches(tmp_path):
    rng = np.random.default_rng(5)
    t = tmp_path / "t.sqt"
    write_tensor(t, rng.standard_normal((2, 2)))
    assert isinstance(load(t), np.ndarray)
    s = tmp_path / "s.sqt"
    write_calib_stats(s, accumulate(CalibStats.empty(2), rng.standard_normal((3, 2))))
    assert isinstance(load(s), CalibStats)


class TestParseFailures:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.sqt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ContainerError, match="magic"):
            read_tensor(path)

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "v9.sqt"
        path.write_bytes(b"SQT1" + (9).to_bytes(2, "little") + b"\x01" + b"\x00" * 8)
        with pytest.raises(ContainerError, match="version"):
            read_tensor(path)

    def test_truncation_names_missing_field(self, tmp_path):
        arr = np.random.default_rng(6).standard_normal((4, 4))
        path = tmp_path / "t.sqt"
        write_tensor(path, arr)
        clipped = tmp_path / "clip.sqt"
        clipped.write_bytes(path.read_bytes()[:12])
        with pytest.raises(ContainerError, match="truncated"):
            read_tensor(clipped)

    def test_wrong_section_type(self, tmp_path):
        path = tmp_path / "t.sqt"
        write_tensor(path, np.zeros((2, 2)))
        with pytest.raises(ContainerError, match="section"):
            read_sq_weight(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "t.sqt"
        write_tensor(path, np.zeros((2, 2)))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ContainerError):
            read_tensor(path)

    def test_corrupt_sq_payload_fails_invariants(self, tmp_path):
        rng = np.random.default_rng(7)
        _, _, sq = make_random_sq(rng, BankConfig(b=4, s=0.5), PrecisionPair(8, 4))
        path = tmp_path / "w.sqt"
        write_sq_weight(path, sq)
        raw = bytearray(path.read_bytes())
        # low_codes live right after the fixed header; zero them all so the
        # sentinel census fails on load
        header = 4 + 2 + 1 + 8 + 8 + 4 + 8 + 1 + 1
        for i in range(sq.low_codes.size):
            raw[header + i] = 0
        path.write_bytes(bytes(raw))
        with pytest.raises(StructuralError):
            read_sq_weight(path)

"""Config format, diagnostics CSV and checkpoints."""

import math
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dumbbell.diagnostics import DiagnosticsRecord
from dumbbell.errors import CheckpointError, ConfigurationError
from dumbbell.harness import ExperimentPlan, InitialConditionSpec, InitialState, run
from dumbbell.io import (CONFIG_KEYS, DiagnosticsWriter, apply_overrides, checkpoint_name, default_config_text,
                         diagnose_checkpoint, format_config, load_checkpoint, load_config, parse_config_text,
                         plan_from_raw, plan_to_raw, read_diagnostics_csv, run_with_output, save_checkpoint,
                         write_convergence_csv, write_diagnostics_csv)


def small_plan(**kw):
    ic = InitialConditionSpec(velocity="random_solenoidal", kinetic="perturbed_equilibrium", seed=5)
    base = dict(model="compare", T=0.02, dt=1e-3, nx=8, ny=8, nq=4, sample_stride=5, ic=ic)
    base.update(kw)
    return ExperimentPlan(**base)


def same_row(a, b):
    return all((x == y) or (math.isnan(x) and math.isnan(y)) for x, y in zip(a.as_row(), b.as_row()))


# --------------------------------------------------------------------------- config

def test_default_config_loads():
    plan = load_config()
    assert plan.model == "kinetic" and plan.nx == 32 and len(plan.ladder) == 3
    assert set(parse_config_text(default_config_text())) == set(CONFIG_KEYS)


def test_config_round_trip_is_lossless():
    plan = small_plan(trunc_R=4.0, ladder=((1e-3, 8, 4), (5e-4, 16, 6), (2.5e-4, 32, 8)), out_dir="runs/a")
    text = format_config(plan_to_raw(plan))
    back = plan_from_raw(parse_config_text(text))
    assert back == plan
    assert format_config(plan_to_raw(back)) == text


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 10.0), st.floats(1e-3, 10.0), st.integers(4, 128), st.integers(0, 2**31 - 1))
def test_config_round_trip_property(nu, mu, n, seed):
    plan = ExperimentPlan(nu=nu, mu=mu, nx=n, ny=n, ic=InitialConditionSpec(seed=seed))
    assert plan_from_raw(parse_config_text(format_config(plan_to_raw(plan)))) == plan


@pytest.mark.parametrize("text, message", [
    ("nu = 0.1\nbogus = 1\n", "unknown key"),
    ("nu = 0.1\nnu = 0.2\n", "duplicate key"),
    ("nu 0.1\n", "expected 'key = value'"),
])
def test_config_rejects_malformed_text(text, message):
    with pytest.raises(ConfigurationError, match=message):
        parse_config_text(text)


def test_overrides_and_value_errors(tmp_path):
    raw = apply_overrides(parse_config_text(default_config_text()), ["nx=16", "model = oldroyd"])
    assert raw["nx"] == "16" and raw["model"] == "oldroyd"
    with pytest.raises(ConfigurationError):
        apply_overrides(raw, ["nx16"])
    with pytest.raises(ConfigurationError):
        apply_overrides(raw, ["nope=1"])
    with pytest.raises(ConfigurationError):
        plan_from_raw(dict(raw, nx="sixteen"))
    with pytest.raises(ConfigurationError, match="viscosity must be positive"):
        load_config(None, ["nu=-1"])
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(str(tmp_path / "missing.cfg"))
    p = tmp_path / "c.cfg"
    p.write_text("# comment only\nnx = 12  # trailing\n")
    assert load_config(str(p)).nx == 12


# --------------------------------------------------------------------------- CSV

def test_single_equilibrium_record_gives_two_lines(tmp_path):
    plan = ExperimentPlan(model="kinetic", T=1e-3, dt=1e-3, nx=4, ny=4, nq=2)
    rec = run(plan).records[0]
    p = tmp_path / "d.csv"
    write_diagnostics_csv([rec], str(p))
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].split(",") == DiagnosticsRecord.columns() and len(lines[1].split(",")) == 25


def test_csv_reemits_byte_for_byte(tmp_path):
    res = run(small_plan())
    p, q = tmp_path / "a.csv", tmp_path / "b.csv"
    write_diagnostics_csv(res.records, str(p))
    back = read_diagnostics_csv(str(p))
    assert all(same_row(a, b) for a, b in zip(res.records, back))
    write_diagnostics_csv(back, str(q))
    assert p.read_bytes() == q.read_bytes()
    with pytest.raises(ValueError):
        write_diagnostics_csv([], str(q))


def test_csv_append_writes_header_once(tmp_path):
    p = str(tmp_path / "d.csv")
    rec = DiagnosticsRecord(t=0.0)
    with DiagnosticsWriter(p) as w:
        w.write(rec)
    with DiagnosticsWriter(p, append=True) as w:
        w.write(rec)
    assert len(open(p).read().splitlines()) == 3


def test_convergence_csv(tmp_path):
    rows = [dict(level=i, dt=1e-3 / 2**i, n=8 * 2**i, nq=4, gap_l2=1e-4 / 2**i, residual_nsfp_max=0.0,
                 residual_ob_max=0.0, order=float("nan") if i == 0 else 1.0) for i in range(3)]
    p = tmp_path / "conv.csv"
    write_convergence_csv(rows, str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == "level,dt,n,nq,gap_l2,residual_nsfp_max,residual_ob_max,order"
    assert lines[1].endswith(",nan") and len(lines) == 4


# --------------------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_is_bitwise(tmp_path):
    res = run(small_plan())
    p = str(tmp_path / checkpoint_name(20))
    save_checkpoint(p, res.plan, 20, res.flow, res.kin, res.mac, res.records[-2])
    ck = load_checkpoint(p)
    assert ck.plan == res.plan and ck.step == 20 and ck.t == res.kin.t
    assert np.array_equal(ck.kin.coeffs, res.kin.coeffs)
    assert np.array_equal(ck.flow.u.ux, res.flow.u.ux) and np.array_equal(ck.flow.p, res.flow.p)
    assert np.array_equal(ck.mac.sigma.data, res.mac.sigma.data)
    assert np.array_equal(ck.mac.flow.u.uy, res.mac.flow.u.uy)
    assert os.path.basename(p) == "checkpoint_00000020.dbck"


def test_diagnose_reproduces_logged_row(tmp_path):
    plan = small_plan(checkpoint_stride=10)
    run_with_output(plan, str(tmp_path))
    rows = read_diagnostics_csv(str(tmp_path / "diagnostics.csv"))
    logged = next(r for r in rows if r.step == 10)
    again = diagnose_checkpoint(str(tmp_path / checkpoint_name(10)))
    assert same_row(again, logged)
    assert (tmp_path / "config_echo.cfg").exists()


def test_resume_from_checkpoint_is_bitwise(tmp_path):
    plan = small_plan(checkpoint_stride=10)
    full = run_with_output(plan, str(tmp_path))
    ck = load_checkpoint(str(tmp_path / checkpoint_name(10)))
    prev = read_diagnostics_csv(str(tmp_path / "diagnostics.csv"))[2]
    assert prev.step == 10
    resumed = run(plan, state=InitialState(ck.flow, ck.kin, ck.mac), start_step=ck.step, prev=prev)
    assert np.array_equal(resumed.kin.coeffs, full.kin.coeffs)
    assert np.array_equal(resumed.mac.sigma.data, full.mac.sigma.data)
    assert same_row(resumed.records[-1], full.records[-1])


def test_checkpoint_errors(tmp_path):
    res = run(small_plan(T=0.005))
    p = tmp_path / "c.dbck"
    save_checkpoint(str(p), res.plan, 5, res.flow, res.kin, res.mac)
    data = bytearray(p.read_bytes())
    bad = tmp_path / "v.dbck"
    bad.write_bytes(bytes(data[:4]) + struct.pack("<I", 2) + bytes(data[8:]))
    with pytest.raises(CheckpointError, match="version 2"):
        load_checkpoint(str(bad))
    bad.write_bytes(b"XXXX" + bytes(data[4:]))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(str(bad))
    bad.write_bytes(bytes(data[:-8]))
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(str(bad))
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(str(tmp_path / "none.dbck"))

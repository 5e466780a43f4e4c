"""Persistent formats: flat run configuration, diagnostics CSV, checkpoints and
convergence tables.

Config: one ``key = value`` per line, ``#`` starts a comment, unknown keys are
rejected.  ``ic.sigma0`` takes three comma-separated numbers and ``ladder``
takes comma-separated ``dt:n:nq`` triples.

Checkpoint layout (all integers little-endian)::

    bytes 0-3     magic b"DBCK"
    bytes 4-7     uint32 format version (currently 1)
    bytes 8-15    uint64 header length H
    bytes 16..    H bytes of UTF-8 JSON header
    then          raw arrays, in header order, each C-order with its dtype tag

The header holds the config echo, t, step, grid dimensions, nq, the array
table (name, dtype, shape, offset, nbytes relative to the data section) and
the previous diagnostics sample, so residuals can be recomputed exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass, fields, replace
from importlib import resources

import numpy as np

from .diagnostics import DiagnosticsRecord, record
from .errors import CheckpointError, ConfigurationError
from .fokker_planck import KineticState
from .grid import SymTensorField, VectorFieldMAC
from .harness import ExperimentPlan, InitialConditionSpec, InitialState, RunResult, run
from .navier_stokes import FlowState
from .oldroyd import MacroState

MAGIC = b"DBCK"
VERSION = 1
CSV_NAME = "diagnostics.csv"

# config key -> (plan attribute path, kind)
_KEYS = {
    "model": ("model", "str"),
    "nu": ("nu", "float"),
    "mu": ("mu", "float"),
    "T": ("T", "float"),
    "dt": ("dt", "float"),
    "nx": ("nx", "int"),
    "ny": ("ny", "int"),
    "lx": ("lx", "float"),
    "ly": ("ly", "float"),
    "nq": ("nq", "int"),
    "bc_mode": ("bc_mode", "str"),
    "advection": ("advection", "str"),
    "trunc.R": ("trunc_R", "optfloat"),
    "trunc.L": ("trunc_L", "optfloat"),
    "ic.velocity": ("ic.velocity", "str"),
    "ic.kinetic": ("ic.kinetic", "str"),
    "ic.seed": ("ic.seed", "int"),
    "ic.amplitude": ("ic.amplitude", "float"),
    "ic.velocity_amplitude": ("ic.velocity_amplitude", "float"),
    "ic.sigma0": ("ic.sigma0", "floats3"),
    "ic.mode": ("ic.mode", "int"),
    "sample_stride": ("sample_stride", "int"),
    "checkpoint_stride": ("checkpoint_stride", "int"),
    "ladder": ("ladder", "ladder"),
    "out_dir": ("out_dir", "optstr"),
}
CONFIG_KEYS = tuple(_KEYS)


def _parse_value(key, kind, text):
    t = text.strip()
    try:
        if kind == "str":
            if not t:
                raise ValueError("empty value")
            return t
        if kind == "optstr":
            return None if t.lower() in ("", "none") else t
        if kind == "float":
            return float(t)
        if kind == "optfloat":
            return None if t.lower() in ("", "none") else float(t)
        if kind == "int":
            v = float(t)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v)
        if kind == "floats3":
            parts = [float(p) for p in t.split(",")]
            if len(parts) != 3:
                raise ValueError("expected three comma-separated numbers")
            return tuple(parts)
        if kind == "ladder":
            if t.lower() in ("", "none"):
                return ()
            levels = []
            for item in t.split(","):
                a, b, c = item.strip().split(":")
                levels.append((float(a), int(b), int(c)))
            return tuple(levels)
    except ValueError as exc:
        raise ConfigurationError(f"key {key!r}: cannot parse {text.strip()!r} ({exc})") from None
    raise ConfigurationError(f"key {key!r}: unknown kind {kind}")


def _format_value(kind, v):
    if kind in ("str",):
        return str(v)
    if kind == "optstr":
        return "none" if v is None else str(v)
    if kind == "float":
        return repr(float(v))
    if kind == "optfloat":
        return "none" if v is None else repr(float(v))
    if kind == "int":
        return str(int(v))
    if kind == "floats3":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "ladder":
        return ", ".join(f"{float(a)!r}:{int(b)}:{int(c)}" for a, b, c in v) if v else "none"
    raise ValueError(kind)


def parse_config_text(text: str) -> dict:
    """Parse the flat format into ``{key: raw string}``; duplicate or unknown keys are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        k, v = (p.strip() for p in s.split("=", 1))
        if k not in _KEYS:
            raise ConfigurationError(f"unknown key {k!r} (line {lineno})")
        if k in out:
            raise ConfigurationError(f"duplicate key {k!r} (line {lineno})")
        out[k] = v
    return out


def apply_overrides(raw: dict, overrides) -> dict:
    raw = dict(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        k, v = (p.strip() for p in item.split("=", 1))
        if k not in _KEYS:
            raise ConfigurationError(f"unknown key {k!r} in override")
        raw[k] = v
    return raw


def plan_from_raw(raw: dict) -> ExperimentPlan:
    """Build (and validate) a plan from raw config strings; absent keys take defaults."""
    top, ic = {}, {}
    for k, v in raw.items():
        if k not in _KEYS:
            raise ConfigurationError(f"unknown key {k!r}")
        attr, kind = _KEYS[k]
        val = _parse_value(k, kind, v)
        if attr.startswith("ic."):
            ic[attr[3:]] = val
        else:
            top[attr] = val
    plan = ExperimentPlan(**top, ic=InitialConditionSpec(**ic))
    return plan.validate()


def plan_to_raw(plan: ExperimentPlan) -> dict:
    out = {}
    for k, (attr, kind) in _KEYS.items():
        obj = plan.ic if attr.startswith("ic.") else plan
        out[k] = _format_value(kind, getattr(obj, attr.split(".")[-1]))
    return out


def format_config(raw: dict) -> str:
    return "".join(f"{k} = {raw[k]}\n" for k in CONFIG_KEYS if k in raw)


def default_config_text() -> str:
    return resources.files("dumbbell").joinpath("default.cfg").read_text()


def load_config(path: str | None = None, overrides=None) -> ExperimentPlan:
    if path is None:
        text = default_config_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return plan_from_raw(apply_overrides(parse_config_text(text), overrides))


# --------------------------------------------------------------------------- CSV

def format_number(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


class DiagnosticsWriter:
    """Append-only CSV writer; flushes after every row so a killed run leaves a valid prefix."""

    def __init__(self, path: str, append: bool = False):
        self.path = path
        exists = append and os.path.exists(path) and os.path.getsize(path) > 0
        try:
            self._fh = open(path, "a" if append else "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot open diagnostics file {path}: {exc}") from exc
        if not exists:
            self._fh.write(",".join(DiagnosticsRecord.columns()) + "\n")
            self._fh.flush()

    def write(self, rec: DiagnosticsRecord):
        self._fh.write(",".join(format_number(v) for v in rec.as_row()) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_diagnostics_csv(records, path: str):
    if not records:
        raise ValueError("no diagnostics records to write")
    with DiagnosticsWriter(path) as w:
        for r in records:
            w.write(r)


def read_diagnostics_csv(path: str) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header != DiagnosticsRecord.columns():
        raise ConfigurationError(f"{path}: unexpected CSV header")
    out = []
    for row in rows[1:]:
        vals = {}
        for name, s in zip(header, row):
            vals[name] = int(s) if name == "step" else float(s)
        out.append(DiagnosticsRecord(**vals))
    return out


def write_convergence_csv(rows, path: str):
    cols = ["level", "dt", "n", "nq", "gap_l2", "residual_nsfp_max", "residual_ob_max", "order"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(format_number(r[c]) for c in cols) + "\n")


# --------------------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    plan: ExperimentPlan
    t: float
    step: int
    flow: FlowState | None
    kin: KineticState | None
    mac: MacroState | None
    prev: DiagnosticsRecord | None


def _arrays(flow, kin, mac):
    arrs = []
    if flow is not None:
        arrs += [("u_x", flow.u.ux), ("u_y", flow.u.uy), ("p", flow.p)]
    if kin is not None:
        arrs.append(("psi_coeffs", kin.coeffs))
    if mac is not None:
        arrs += [("ob_u_x", mac.flow.u.ux), ("ob_u_y", mac.flow.u.uy), ("ob_p", mac.flow.p),
                 ("sigma_11", mac.sigma.a11), ("sigma_12", mac.sigma.a12), ("sigma_22", mac.sigma.a22)]
    return arrs


def _json_float(v):
    return None if v is None else float(v)


def save_checkpoint(path: str, plan: ExperimentPlan, step: int, flow=None, kin=None, mac=None,
                    prev: DiagnosticsRecord | None = None):
    t = (kin.t if kin is not None else mac.t)
    table, blobs, off = [], [], 0
    for name, a in _arrays(flow, kin, mac):
        b = np.ascontiguousarray(a, dtype="<f8").tobytes(order="C")
        table.append(dict(name=name, dtype="<f8", shape=list(a.shape), offset=off, nbytes=len(b)))
        blobs.append(b)
        off += len(b)
    header = dict(
        format="dumbbell-checkpoint", version=VERSION, config=plan_to_raw(plan), t=float(t), step=int(step),
        grid=dict(nx=plan.nx, ny=plan.ny, lx=plan.lx, ly=plan.ly, bc_mode=plan.bc_mode), nq=plan.nq,
        model=plan.model, arrays=table,
        prev_record=None if prev is None else prev.to_dict(),
        times=dict(flow=None if flow is None else float(flow.t), kin=None if kin is None else float(kin.t),
                   mac=None if mac is None else float(mac.t)),
    )
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<Q", len(hb)))
            fh.write(hb)
            for b in blobs:
                fh.write(b)
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint format version {version}, this build reads {VERSION}")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    base = 16 + hlen
    arrays = {}
    for ent in header["arrays"]:
        if ent["dtype"] != "<f8":
            raise CheckpointError(f"{path}: unsupported dtype {ent['dtype']} for {ent['name']}")
        lo = base + ent["offset"]
        hi = lo + ent["nbytes"]
        if hi > len(data):
            raise CheckpointError(f"{path}: truncated array {ent['name']}")
        arrays[ent["name"]] = np.frombuffer(data[lo:hi], dtype="<f8").reshape(ent["shape"]).astype(float)
    plan = plan_from_raw(header["config"])
    g = plan.grid()
    times = header["times"]
    flow = kin = mac = None
    if "u_x" in arrays:
        flow = FlowState(VectorFieldMAC(arrays["u_x"], arrays["u_y"]), arrays["p"], g, plan.nu, times["flow"])
    if "psi_coeffs" in arrays:
        kin = KineticState(arrays["psi_coeffs"], g, plan.basis(), times["kin"])
    if "sigma_11" in arrays:
        mflow = FlowState(VectorFieldMAC(arrays["ob_u_x"], arrays["ob_u_y"]), arrays["ob_p"], g, plan.nu,
                          times["mac"])
        sig = SymTensorField(np.stack([arrays["sigma_11"], arrays["sigma_12"], arrays["sigma_22"]]))
        mac = MacroState(mflow, sig, plan.mu, plan.advection)
    prev = header.get("prev_record")
    prev = None if prev is None else DiagnosticsRecord(**prev)
    return Checkpoint(plan, header["t"], header["step"], flow, kin, mac, prev)


def diagnose_checkpoint(path: str) -> DiagnosticsRecord:
    """Recompute the diagnostics sample logged at the checkpoint's step."""
    ck = load_checkpoint(path)
    return record(kin=ck.kin, mac=ck.mac, flow=ck.flow, prev=ck.prev, step=ck.step, mu=ck.plan.mu)


def checkpoint_name(step: int) -> str:
    return f"checkpoint_{step:08d}.dbck"


def run_with_output(plan: ExperimentPlan, out_dir: str | None = None) -> RunResult:
    """Run a plan, streaming the CSV and writing checkpoints into ``out_dir``."""
    out_dir = out_dir or plan.out_dir
    if out_dir is None:
        return run(plan)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_echo.cfg"), "w") as fh:
        fh.write(format_config(plan_to_raw(plan)))
    with DiagnosticsWriter(os.path.join(out_dir, CSV_NAME)) as w:
        def on_sample(rec, flow, kin, mac, prev):
            w.write(rec)
            if plan.checkpoint_stride and rec.step % plan.checkpoint_stride == 0:
                save_checkpoint(os.path.join(out_dir, checkpoint_name(rec.step)), plan, rec.step,
                                flow, kin, mac, prev)
        return run(plan, on_sample=on_sample)

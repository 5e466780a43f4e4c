"""Experiment orchestration: plans, initial data, coupled runs, refinement and
truncation studies.

Time splitting per step:

* kinetic model: Navier-Stokes with tau(psi^n), then Fokker-Planck with u^{n+1};
* macroscopic model: sigma with u^n, then Navier-Stokes with tau^{n+1}.

Both models share every spatial operator, so in compare mode the closure gap
only sees the O(dt) difference between the two splittings.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import DiagnosticsRecord, record
from .errors import ConfigurationError, InputError, SolverError
from .fokker_planck import FPStepConfig, KineticState, fp_step, homogeneous_matrix, upwind_weight
from .grid import BC_MODES, Grid, SymTensorField, VectorFieldMAC, divergence
from .hermite import (HermiteBasis, Quadrature, TruncationSpec, coeffs_from_sigma, default_nodes,
                      gaussian_coeffs, sigma_components)
from .navier_stokes import FlowState, ns_step
from .oldroyd import MacroState, coupled_macro_step

MODELS = ("kinetic", "oldroyd", "compare")
VELOCITY_PRESETS = ("zero", "taylor_green_like", "random_solenoidal")
KINETIC_PRESETS = ("equilibrium", "gaussian_variance", "conformation", "perturbed_equilibrium")


@dataclass(frozen=True)
class InitialConditionSpec:
    velocity: str = "zero"
    kinetic: str = "equilibrium"
    seed: int = 0
    amplitude: float = 0.5
    velocity_amplitude: float = 0.5
    sigma0: tuple = (1.0, 0.0, 1.0)
    mode: int = 1

    def validate(self):
        if self.velocity not in VELOCITY_PRESETS:
            raise ConfigurationError(f"ic.velocity must be one of {VELOCITY_PRESETS}, got {self.velocity!r}")
        if self.kinetic not in KINETIC_PRESETS:
            raise ConfigurationError(f"ic.kinetic must be one of {KINETIC_PRESETS}, got {self.kinetic!r}")
        if len(self.sigma0) != 3:
            raise ConfigurationError("ic.sigma0 needs three entries s11, s12, s22")
        if self.kinetic == "perturbed_equilibrium" and not 0.0 <= self.amplitude <= 1.0:
            raise ConfigurationError("ic.amplitude must lie in [0, 1] for perturbed_equilibrium")
        if self.velocity_amplitude < 0:
            raise ConfigurationError("ic.velocity_amplitude must be nonnegative")
        if int(self.mode) != self.mode or self.mode < 1:
            raise ConfigurationError("ic.mode must be a positive integer")


@dataclass(frozen=True)
class ExperimentPlan:
    model: str = "kinetic"
    nu: float = 0.1
    mu: float = 0.1
    T: float = 1.0
    dt: float = 1e-3
    nx: int = 32
    ny: int = 32
    lx: float = 1.0
    ly: float = 1.0
    nq: int = 8
    bc_mode: str = "no_slip_square"
    advection: str = "upwind"
    trunc_R: float | None = None
    trunc_L: float | None = None
    ic: InitialConditionSpec = field(default_factory=InitialConditionSpec)
    sample_stride: int = 1
    checkpoint_stride: int = 0
    ladder: tuple = ()
    out_dir: str | None = None

    def validate(self) -> "ExperimentPlan":
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.nu > 0:
            raise ConfigurationError(f"nu: viscosity must be positive (got {self.nu})")
        if not self.mu > 0:
            raise ConfigurationError(f"mu: centre-of-mass diffusion must be positive (got {self.mu})")
        if not self.T > 0:
            raise ConfigurationError(f"T: final time must be positive (got {self.T})")
        if not self.dt > 0:
            raise ConfigurationError(f"dt: time step must be positive (got {self.dt})")
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(f"nx, ny: grid needs at least 4 cells per side (got {self.nx}x{self.ny})")
        if not (self.lx > 0 and self.ly > 0):
            raise ConfigurationError("lx, ly: domain lengths must be positive")
        if self.nq < 2:
            raise ConfigurationError(f"nq: Hermite degree must be at least 2 (got {self.nq})")
        if self.bc_mode not in BC_MODES:
            raise ConfigurationError(f"bc_mode must be one of {BC_MODES}, got {self.bc_mode!r}")
        upwind_weight(self.advection)
        if self.trunc_R is not None and not self.trunc_R > 0:
            raise ConfigurationError("trunc.R must be positive")
        if self.trunc_L is not None and not self.trunc_L > 0:
            raise ConfigurationError("trunc.L must be positive")
        if self.sample_stride < 1:
            raise ConfigurationError("sample_stride must be at least 1")
        if self.checkpoint_stride < 0:
            raise ConfigurationError("checkpoint_stride must be nonnegative")
        if self.checkpoint_stride and self.checkpoint_stride % self.sample_stride:
            raise ConfigurationError("checkpoint_stride must be a multiple of sample_stride")
        self.nsteps()
        self.ic.validate()
        for lev in self.ladder:
            if len(lev) != 3:
                raise ConfigurationError("ladder entries are (dt, n, nq) triples")
        return self

    def nsteps(self) -> int:
        n = int(round(self.T / self.dt))
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigurationError(f"T = {self.T} is not an integer multiple of dt = {self.dt}")
        return n

    def grid(self) -> Grid:
        return Grid(self.nx, self.ny, self.lx, self.ly, self.bc_mode)

    def basis(self) -> HermiteBasis:
        return HermiteBasis(self.nq)

    def truncation(self) -> TruncationSpec | None:
        if self.trunc_R is None and self.trunc_L is None:
            return None
        return TruncationSpec(self.trunc_R if self.trunc_R is not None else float("inf"),
                              self.trunc_L if self.trunc_L is not None else float("inf"))

    def fp_config(self) -> FPStepConfig:
        return FPStepConfig(dt=self.dt, advection=self.advection, mu=self.mu, trunc=self.truncation())

    def at_level(self, dt: float, n: int, nq: int) -> "ExperimentPlan":
        return replace(self, dt=float(dt), nx=int(n), ny=int(n), nq=int(nq), ladder=())


# --------------------------------------------------------------------------- initial data

def _stream_to_velocity(psi, g: Grid) -> VectorFieldMAC:
    """Discrete curl of a node stream function: exactly divergence free."""
    if g.periodic:
        return VectorFieldMAC((np.roll(psi, -1, 1) - psi) / g.hy, -(np.roll(psi, -1, 0) - psi) / g.hx)
    psi = psi.copy()
    psi[[0, -1]] = 0.0
    psi[:, [0, -1]] = 0.0
    return VectorFieldMAC((psi[:, 1:] - psi[:, :-1]) / g.hy, -(psi[1:] - psi[:-1]) / g.hx)


RANDOM_MODES = 4


def random_stream_function(seed: int, x, y, periodic: bool):
    """Seeded smooth stream function on unit coordinates, independent of the grid.

    Random Fourier amplitudes on modes 1..RANDOM_MODES are weighted by the
    symbol of two inverse Laplacians, (m^2 + n^2)^-2.  In the walled case the
    result is multiplied by sin^2(pi x) sin^2(pi y) so the velocity vanishes
    on the boundary.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((RANDOM_MODES, RANDOM_MODES, 2, 2))
    psi = np.zeros_like(x)
    k = 2 * np.pi if periodic else np.pi
    for m in range(1, RANDOM_MODES + 1):
        for n in range(1, RANDOM_MODES + 1):
            w = (m * m + n * n) ** -2.0
            cx, sx = np.cos(k * m * x), np.sin(k * m * x)
            cy, sy = np.cos(k * n * y), np.sin(k * n * y)
            c = a[m - 1, n - 1]
            psi += w * (c[0, 0] * cx * cy + c[0, 1] * cx * sy + c[1, 0] * sx * cy + c[1, 1] * sx * sy)
    if not periodic:
        psi *= np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2
    return psi


def initial_velocity(ic: InitialConditionSpec, g: Grid) -> VectorFieldMAC:
    X, Y = g.nodes()
    if ic.velocity == "zero":
        return VectorFieldMAC.zeros(g)
    if ic.velocity == "taylor_green_like":
        if g.periodic:
            psi = np.sin(2 * np.pi * X / g.lx) * np.sin(2 * np.pi * Y / g.ly) * g.lx / (2 * np.pi)
        else:
            psi = np.sin(np.pi * X / g.lx) ** 2 * np.sin(np.pi * Y / g.ly) ** 2
        u = _stream_to_velocity(psi, g)
    elif ic.velocity == "random_solenoidal":
        psi = random_stream_function(ic.seed, X / g.lx, Y / g.ly, g.periodic)
        u = _stream_to_velocity(psi, g)
    else:
        raise ConfigurationError(f"unknown velocity preset {ic.velocity!r}")
    m = u.max_abs()
    return u * (ic.velocity_amplitude / m) if m > 0 else u


def initial_kinetic(ic: InitialConditionSpec, g: Grid, basis: HermiteBasis) -> np.ndarray:
    shape = g.shape + (basis.size,)
    if ic.kinetic == "equilibrium":
        c = np.zeros(shape)
        c[..., 0] = 1.0
        return c
    if ic.kinetic == "gaussian_variance":
        s11, s12, s22 = ic.sigma0
        c = gaussian_coeffs(np.array([[s11, s12], [s12, s22]]), basis)
        return np.broadcast_to(c, shape).copy()
    if ic.kinetic == "conformation":
        s11, s12, s22 = ic.sigma0
        B = np.array([[s11 - 1, s12], [s12, s22 - 1]])
        ev = np.linalg.eigvalsh(B)
        if ev.min() < -1e-12 or np.trace(B) > 2 + 1e-12:
            raise ConfigurationError("conformation preset needs sigma0 - Id positive semidefinite with trace <= 2")
        return np.broadcast_to(coeffs_from_sigma(s11, s12, s22, basis), shape).copy()
    if ic.kinetic == "perturbed_equilibrium":
        X, Y = g.cell_centers()
        k = ic.mode * np.pi
        cc = 0.5 * np.cos(k * X / g.lx) * np.cos(k * Y / g.ly)
        ss = 0.5 * np.sin(k * X / g.lx) * np.sin(k * Y / g.ly)
        a = ic.amplitude
        return coeffs_from_sigma(1 + a * (1 + cc), a * ss, 1 + a * (1 - cc), basis)
    raise ConfigurationError(f"unknown kinetic preset {ic.kinetic!r}")


def check_kinetic_data(c, basis: HermiteBasis, tol: float = 1e-10):
    """Initial data must be nonnegative at the quadrature nodes and have unit mass per cell."""
    quad, V, _, _ = basis.tables(default_nodes(basis))
    psi = c @ V
    if psi.min() < -1e-12:
        raise InputError(f"initial density is negative at a quadrature node (min {psi.min():.3e})")
    mass = c[..., 0]
    if np.abs(mass - 1.0).max() > tol:
        raise InputError(f"initial density does not have unit mass per cell (max defect {np.abs(mass - 1).max():.3e})")


@dataclass
class InitialState:
    flow: FlowState
    kin: KineticState | None
    mac: MacroState | None


def build_initial(plan: ExperimentPlan) -> InitialState:
    plan.validate()
    g = plan.grid()
    basis = plan.basis()
    u0 = initial_velocity(plan.ic, g)
    c0 = initial_kinetic(plan.ic, g, basis)
    check_kinetic_data(c0, basis)
    flow = FlowState(u0, np.zeros(g.shape), g, plan.nu, 0.0)
    kin = KineticState(c0, g, basis, 0.0) if plan.model in ("kinetic", "compare") else None
    mac = None
    if plan.model in ("oldroyd", "compare"):
        sigma0 = SymTensorField(sigma_components(c0, basis))
        mac = MacroState(flow.copy(), sigma0, plan.mu, plan.advection)
    return InitialState(flow, kin, mac)


# --------------------------------------------------------------------------- runs

@dataclass
class RunResult:
    plan: ExperimentPlan
    records: list
    flow: FlowState | None
    kin: KineticState | None
    mac: MacroState | None


def kinetic_step(flow: FlowState, kin: KineticState, cfg: FPStepConfig, step: int | None = None):
    flow = ns_step(flow, kin.tau(), cfg.dt, step=step)
    kin = fp_step(kin, flow.u, cfg, step=step)
    return flow, kin


def _sample(plan, flow, kin, mac, prev, step):
    return record(kin=kin, mac=mac, flow=flow if kin is not None else None, prev=prev, step=step, mu=plan.mu)


def run(plan: ExperimentPlan, on_sample=None, state: InitialState | None = None, start_step: int = 0,
        prev: DiagnosticsRecord | None = None) -> RunResult:
    """Deterministic run of ``plan``.

    ``on_sample(rec, flow, kin, mac, prev)`` is called for every sample (used by
    the writers).  ``state``/``start_step``/``prev`` resume from a checkpoint.
    """
    plan.validate()
    st = state or build_initial(plan)
    flow, kin, mac = st.flow, st.kin, st.mac
    cfg = plan.fp_config()
    nsteps = plan.nsteps()
    records = []
    if state is None:
        rec = _sample(plan, flow, kin, mac, None, 0)
        records.append(rec)
        if on_sample:
            on_sample(rec, flow, kin, mac, None)
        prev = rec
    for n in range(start_step + 1, nsteps + 1):
        try:
            if kin is not None:
                flow, kin = kinetic_step(flow, kin, cfg, step=n)
            if mac is not None:
                mac = coupled_macro_step(mac, plan.dt, step=n)
        except SolverError as exc:
            if exc.step is None:
                exc.step = n
            raise
        if n % plan.sample_stride == 0 or n == nsteps:
            rec = _sample(plan, flow if kin is not None else None, kin, mac, prev, n)
            records.append(rec)
            if on_sample:
                on_sample(rec, flow if kin is not None else None, kin, mac, prev)
            prev = rec
    return RunResult(plan, records, flow if kin is not None else None, kin, mac)


# --------------------------------------------------------------------------- studies

def _check_ladder(ladder):
    if len(ladder) < 3:
        raise ConfigurationError("a refinement ladder needs at least 3 levels")
    for a, b in zip(ladder, ladder[1:]):
        if b[0] > a[0] or b[1] < a[1] or b[2] < a[2]:
            raise ConfigurationError(f"ladder is not monotone: {a} -> {b}")


ORDER_FLOOR = 1e-13


def observed_order(e_coarse, e_fine, ratio, floor: float = ORDER_FLOOR):
    """log(e_coarse/e_fine)/log(ratio); NaN when undefined or either error is at roundoff level."""
    if not (e_coarse > floor and e_fine > floor) or ratio <= 1.0 or not np.isfinite(e_coarse) \
            or not np.isfinite(e_fine):
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(ratio)


def _max_abs(records, key):
    vals = [abs(getattr(r, key)) for r in records if np.isfinite(getattr(r, key))]
    return max(vals) if vals else float("nan")


def refinement_study(plan: ExperimentPlan, levels=None):
    """Run every ladder level; return a list of row dicts.

    Each row carries level, dt, n, nq, gap_l2 (final), the max residuals and
    the observed order of gap_l2 relative to the previous level (per dt halving).
    """
    ladder = tuple(tuple(l) for l in (levels if levels is not None else plan.ladder))
    _check_ladder(ladder)
    rows = []
    for i, (dt, n, nq) in enumerate(ladder):
        res = run(plan.at_level(dt, n, nq))
        last = res.records[-1]
        row = dict(level=i, dt=float(dt), n=int(n), nq=int(nq), gap_l2=last.gap_l2,
                   residual_nsfp_max=_max_abs(res.records, "residual_nsfp"),
                   residual_ob_max=_max_abs(res.records, "residual_ob"), order=float("nan"))
        if rows:
            p = rows[-1]
            key = "gap_l2" if plan.model == "compare" else ("residual_nsfp_max" if plan.model == "kinetic"
                                                           else "residual_ob_max")
            row["order"] = observed_order(p[key], row[key], p["dt"] / row["dt"])
        rows.append(row)
    return rows


def homogeneous_spectral_sigma(gradu, T: float, nq: int = 8, c0=None) -> np.ndarray:
    """sigma(T) of the untruncated homogeneous Hermite system (matrix exponential)."""
    from scipy.linalg import expm
    basis = HermiteBasis(nq)
    if c0 is None:
        c0 = basis.unit(0, 0)
    c = expm(T * homogeneous_matrix(gradu, basis)) @ c0
    s11, s12, s22 = sigma_components(c, basis)
    return np.array([[s11, s12], [s12, s22]])


def truncation_sweep(Rs=(4.0, 8.0, 16.0), gradu=((0.0, 1.0), (0.0, 0.0)), T: float = 0.5,
                     L: float | None = None, qgrid=None, nq: int = 8):
    """Error of the truncated q-grid oracle against the untruncated spectral solution.

    Starts from equilibrium; returns ``(rows, slope)`` with rows ``(R, error)``
    and the least-squares log-log slope of error against R.
    """
    from .qgrid_oracle import QGrid, fp_truncated_grid_oracle, grid_sigma, stable_dt
    A = np.asarray(gradu, dtype=float)
    qg = qgrid or QGrid(321, 8.0)
    ref = homogeneous_spectral_sigma(A, T, nq)
    dt0 = stable_dt(qg, A)
    ns = int(math.ceil(T / dt0))
    rows = []
    for R in Rs:
        t = TruncationSpec(float(R), float("inf") if L is None else float(L))
        if t.support_radius > qg.half_width:
            raise ConfigurationError(f"q-grid half width {qg.half_width} does not cover the support of chi_R at R={R}")
        psi = fp_truncated_grid_oracle(np.ones((qg.n, qg.n)), A, t, dt=T / ns, nsteps=ns, qgrid=qg)
        rows.append((float(R), float(np.abs(grid_sigma(psi, qg) - ref).max())))
    x = np.log([r for r, _ in rows])
    y = np.log([e for _, e in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) >= 2 else float("nan")
    return rows, slope

"""Monitored quantities: energies, entropy, Fisher informations, identity residuals,
moment bounds, the closure gap and the relative energy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigurationError, InputError
from .grid import Grid, SymTensorField, divergence, integrate, inner_vector, velocity_dissipation
from .hermite import nodal_entropy_terms

NAN = float("nan")
PSD_TOL = 1e-14


@dataclass
class DiagnosticsRecord:
    """One time sample.  Fields that do not apply to the run are NaN.

    ``*_ob`` fields refer to the macroscopic model; in compare mode the plain
    energy fields belong to the kinetic model.
    """

    t: float = NAN
    step: int = 0
    kinetic_energy: float = NAN
    velocity_dissipation: float = NAN
    entropy: float = NAN
    fisher_x: float = NAN
    fisher_q: float = NAN
    trace_sigma: float = NAN
    residual_nsfp: float = NAN
    second_moment_slack: float = NAN
    rho_min: float = NAN
    rho_max: float = NAN
    mass: float = NAN
    neg_fraction: float = NAN
    max_div: float = NAN
    kinetic_energy_ob: float = NAN
    velocity_dissipation_ob: float = NAN
    trace_sigma_ob: float = NAN
    residual_ob: float = NAN
    sigma_min_eig: float = NAN
    gap_l2: float = NAN
    gap_trace: float = NAN
    gap_psd: float = NAN
    m_ns_proxy: float = NAN
    m_ob_proxy: float = NAN

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> list:
        return [getattr(self, c) for c in self.columns()]

    def energy_nsfp(self) -> float:
        return self.kinetic_energy + self.entropy

    def energy_ob(self) -> float:
        return self.kinetic_energy_ob + 0.5 * self.trace_sigma_ob

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClosureGap:
    gap_field: SymTensorField
    gap_l2: float
    gap_trace: float
    gap_psd: bool
    m_ns_proxy: float
    m_ob_proxy: float


def kinetic_energy(u, g: Grid) -> float:
    return 0.5 * inner_vector(u, u, g)


def _fisher_x_nodal(pc, lp, quad, g: Grid) -> float:
    if g.periodic:
        sx = ((np.roll(pc, -1, 0) - pc) * (np.roll(lp, -1, 0) - lp)).sum(axis=(0, 1))
        sy = ((np.roll(pc, -1, 1) - pc) * (np.roll(lp, -1, 1) - lp)).sum(axis=(0, 1))
    else:
        sx = ((pc[1:] - pc[:-1]) * (lp[1:] - lp[:-1])).sum(axis=(0, 1))
        sy = ((pc[:, 1:] - pc[:, :-1]) * (lp[:, 1:] - lp[:, :-1])).sum(axis=(0, 1))
    s = sx / g.hx**2 + sy / g.hy**2
    return float(0.25 * quad.integrate(s) * g.cell_area)


def fisher_x(c, basis, g: Grid, nodes: int | None = None) -> float:
    """Discrete int int M |grad_x sqrt(psi)|^2.

    Per quadrature node the face form 1/4 sum_faces D(ln psi) D(psi) is used
    (clipped at EPS_CLIP); it equals 1/4 |D psi|^2/psi to second order and is
    the exact entropy production of the five-point Neumann Laplacian.
    """
    d = nodal_entropy_terms(c, basis, nodes)
    return _fisher_x_nodal(d["pc"], d["log_pc"], d["quad"], g)


def kinetic_quantities(kin) -> dict:
    g = kin.grid
    d = nodal_entropy_terms(kin.coeffs, kin.basis)
    tr = kin.sigma().trace()
    rho = kin.rho
    return dict(
        entropy=float(integrate(d["entropy"], g)),
        fisher_q=float(integrate(d["fisher_q"], g)),
        fisher_x=_fisher_x_nodal(d["pc"], d["log_pc"], d["quad"], g),
        neg_fraction=float(integrate(d["neg"], g)) / g.area,
        trace_sigma=float(integrate(tr, g)),
        rho_min=float(rho.min()),
        rho_max=float(rho.max()),
        mass=float(integrate(rho, g)),
    )


def second_moment_slack(entropy: float, trace_sigma: float, g: Grid) -> float:
    """4 * entropy + 8|Omega| - int tr sigma (nonnegative when psi >= 0, d = 2)."""
    return 4.0 * entropy + 8.0 * g.area - trace_sigma


def closure_gap(kin, mac, dt: float | None = None) -> ClosureGap:
    """sigma_OB - sigma(psi) and its integral proxies."""
    g = kin.grid
    if mac.grid.shape != g.shape or mac.grid.lx != g.lx or mac.grid.ly != g.ly:
        raise ConfigurationError("closure gap needs both states on the same grid")
    if dt is not None and abs(kin.t - mac.t) > 0.5 * dt:
        raise InputError(f"time mismatch: kinetic t={kin.t}, macro t={mac.t}")
    gap = mac.sigma - kin.sigma()
    fro = gap.frobenius()
    tr = gap.trace()
    lo, _ = gap.eigvals()
    scale = max(1.0, float(np.abs(gap.data).max()))
    psd = bool(lo.min() >= -PSD_TOL * scale)
    return ClosureGap(
        gap_field=gap,
        gap_l2=math.sqrt(float(integrate(fro**2, g))),
        gap_trace=float(integrate(tr, g)),
        gap_psd=psd,
        m_ns_proxy=float(integrate(fro, g)),
        m_ob_proxy=float(integrate(tr, g)),
    )


def compatibility_check(gap: ClosureGap, grad_theta, g: Grid) -> dict:
    """Test |<gap, grad theta>| against the Frobenius bound and, for PSD gaps, the trace bound.

    ``grad_theta[i, j]`` is a cell field; the C^1 scale used is max |grad theta|_F
    (Frobenius) and max |grad theta|_op respectively.
    """
    B = np.asarray(grad_theta, dtype=float)
    Bs = SymTensorField(np.stack([B[0, 0], 0.5 * (B[0, 1] + B[1, 0]), B[1, 1]]))
    lhs = abs(float(integrate(gap.gap_field.contract(Bs), g)))
    fro_scale = float(np.sqrt(np.sum(B * B, axis=(0, 1))).max())
    out = dict(lhs=lhs, frobenius_bound=fro_scale * gap.m_ns_proxy)
    out["frobenius_ok"] = lhs <= out["frobenius_bound"] * (1 + 1e-12) + 1e-300
    if gap.gap_psd:
        lo, hi = Bs.eigvals()
        op = float(np.maximum(np.abs(lo), np.abs(hi)).max())
        out["trace_bound"] = op * gap.m_ob_proxy
        out["trace_ok"] = lhs <= out["trace_bound"] * (1 + 1e-12) + 1e-300
    return out


def relative_energy(a, b) -> float:
    """1/2 int |u_a - u_b|^2 + 1/2 int |sigma_a - sigma_b|_F^2 for two macro states."""
    ga, gb = a.grid, b.grid
    if ga != gb:
        raise ConfigurationError("relative energy needs states on the same grid")
    du = a.flow.u - b.flow.u
    ds = a.sigma - b.sigma
    return 0.5 * inner_vector(du, du, ga) + 0.5 * float(integrate(ds.frobenius() ** 2, ga))


def record(kin=None, mac=None, flow=None, prev: DiagnosticsRecord | None = None,
           step: int = 0, mu: float | None = None, with_gap: bool = True) -> DiagnosticsRecord:
    """Assemble one sample.

    ``flow`` is the flow paired with ``kin`` and ``mu`` its centre-of-mass
    diffusion (taken from ``mac`` when omitted).  Residuals are backward differences against ``prev``;
    the first sample (``prev is None``) reports zero residuals.
    """
    if kin is None and mac is None:
        raise InputError("record needs a kinetic or a macroscopic state")
    rec = DiagnosticsRecord(step=int(step))
    if kin is not None:
        if flow is None:
            raise InputError("a kinetic state must be recorded together with its flow")
        if mu is None:
            if mac is None:
                raise InputError("mu is required to record a kinetic state")
            mu = mac.mu
        g = kin.grid
        rec.t = float(kin.t)
        rec.kinetic_energy = kinetic_energy(flow.u, g)
        rec.velocity_dissipation = velocity_dissipation(flow.u, g)
        rec.max_div = float(np.abs(divergence(flow.u, g)).max())
        for k, v in kinetic_quantities(kin).items():
            setattr(rec, k, v)
        rec.second_moment_slack = second_moment_slack(rec.entropy, rec.trace_sigma, g)
        lo, _ = kin.sigma().eigvals()
        rec.sigma_min_eig = float(lo.min())
        if prev is None:
            rec.residual_nsfp = 0.0
        else:
            dt = rec.t - prev.t
            rec.residual_nsfp = ((rec.energy_nsfp() - prev.energy_nsfp()) / dt + flow.nu * rec.velocity_dissipation
                                 + 4.0 * mu * rec.fisher_x + 4.0 * rec.fisher_q)
    if mac is not None:
        g = mac.grid
        rec.t = float(mac.t) if kin is None else rec.t
        rec.kinetic_energy_ob = kinetic_energy(mac.flow.u, g)
        rec.velocity_dissipation_ob = velocity_dissipation(mac.flow.u, g)
        tr = mac.sigma.trace()
        rec.trace_sigma_ob = float(integrate(tr, g))
        lo, _ = mac.sigma.eigvals()
        rec.sigma_min_eig = float(lo.min())
        if kin is None:
            rec.max_div = float(np.abs(divergence(mac.flow.u, g)).max())
        if prev is None:
            rec.residual_ob = 0.0
        else:
            dt = rec.t - prev.t
            rec.residual_ob = ((rec.energy_ob() - prev.energy_ob()) / dt + mac.flow.nu * rec.velocity_dissipation_ob
                               + float(integrate(tr - 2.0, g)))
    if kin is not None and mac is not None and with_gap:
        cg = closure_gap(kin, mac)
        rec.gap_l2 = cg.gap_l2
        rec.gap_trace = cg.gap_trace
        rec.gap_psd = 1.0 if cg.gap_psd else 0.0
        rec.m_ns_proxy = cg.m_ns_proxy
        rec.m_ob_proxy = cg.m_ob_proxy
    return rec


"""Oldroyd-B model with stress diffusion, in conformation form

    d_t sigma + (u . grad) sigma - (G sigma + sigma G^T) - mu Lap sigma + 2 (sigma - Id) = 0,

coupled to the Navier-Stokes solver through tau = sigma - Id.  The stress
form (tau_step) is kept as an algebraic cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StabilityError
from .fokker_planck import upwind_weight
from .grid import Grid, SymTensorField, VectorFieldMAC, advect_scalar, cell_gradient
from .linsolve import helmholtz_cells
from .navier_stokes import FlowState, max_stable_dt, ns_step


@dataclass
class MacroState:
    flow: FlowState
    sigma: SymTensorField
    mu: float = 0.1
    advection: object = "upwind"

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("stress diffusion mu must be positive")
        if self.sigma.data.shape != (3,) + self.flow.grid.shape:
            raise ConfigurationError("sigma does not match the flow grid")
        upwind_weight(self.advection)

    @property
    def grid(self) -> Grid:
        return self.flow.grid

    @property
    def t(self) -> float:
        return self.flow.t

    def tau(self) -> SymTensorField:
        d = self.sigma.data.copy()
        d[0] -= 1.0
        d[2] -= 1.0
        return SymTensorField(d)

    def copy(self) -> "MacroState":
        return MacroState(self.flow.copy(), self.sigma.copy(), self.mu, self.advection)


def stretching(G, s: SymTensorField) -> SymTensorField:
    """Components of G s + s G^T for a cell gradient ``G[i, j]``."""
    a, b, c = s.data
    return SymTensorField(np.stack([
        2 * (G[0, 0] * a + G[0, 1] * b),
        G[0, 0] * b + G[0, 1] * c + G[1, 0] * a + G[1, 1] * b,
        2 * (G[1, 0] * b + G[1, 1] * c),
    ]))


def _check_cfl(u: VectorFieldMAC, g: Grid, dt: float, step):
    lim = max_stable_dt(u, g)
    if dt > lim:
        raise StabilityError(f"CFL violated: dt={dt:g} > {lim:.3e}", advisory_dt=0.9 * lim, step=step)


def _transport(data, u, g, scheme):
    if u.max_abs() == 0:
        return np.zeros_like(data)
    # components on the trailing axis for the scalar transport kernel
    return np.moveaxis(advect_scalar(np.moveaxis(data, 0, -1), u, g, upwind_weight(scheme)), -1, 0)


def _frozen_gradient(gradu, g: Grid):
    G = np.asarray(gradu, dtype=float)
    return np.broadcast_to(G.reshape(G.shape + (1, 1)) if G.ndim == 2 else G, (2, 2) + g.shape)


def sigma_step(state: MacroState, dt: float, step: int | None = None, gradu=None) -> MacroState:
    """Advance sigma with the current velocity; relaxation and diffusion implicit.

    ``gradu`` optionally freezes the stretching gradient (2x2 or ``(2, 2, nx, ny)``).
    """
    g = state.grid
    if not dt > 0:
        raise ConfigurationError("time step must be positive")
    u = state.flow.u
    _check_cfl(u, g, dt, step)
    s = state.sigma.data
    G = cell_gradient(u, g) if gradu is None else _frozen_gradient(gradu, g)
    rhs = s - dt * _transport(s, u, g, state.advection) + dt * stretching(G, state.sigma).data
    rhs[0] += 2 * dt
    rhs[2] += 2 * dt
    new = helmholtz_cells(np.moveaxis(rhs, 0, -1), g, 1.0 + 2 * dt, dt * state.mu, bc="neumann")
    out = state.copy()
    out.sigma = SymTensorField(np.ascontiguousarray(np.moveaxis(new, -1, 0)))
    return out


def tau_step(tau: SymTensorField, u: VectorFieldMAC, g: Grid, dt: float, mu: float,
             advection="upwind") -> SymTensorField:
    """Stress form: d_t tau + (u.grad) tau - (G tau + tau G^T) - mu Lap tau + 2 tau = G + G^T."""
    G = cell_gradient(u, g)
    rhs = tau.data - dt * _transport(tau.data, u, g, advection) + dt * stretching(G, tau).data
    rhs[0] += 2 * dt * G[0, 0]
    rhs[1] += dt * (G[0, 1] + G[1, 0])
    rhs[2] += 2 * dt * G[1, 1]
    new = helmholtz_cells(np.moveaxis(rhs, 0, -1), g, 1.0 + 2 * dt, dt * mu, bc="neumann")
    return SymTensorField(np.ascontiguousarray(np.moveaxis(new, -1, 0)))


def coupled_macro_step(state: MacroState, dt: float, forcing=None, step: int | None = None) -> MacroState:
    """Stress first (with u^n), then Navier-Stokes driven by tau^{n+1} = sigma^{n+1} - Id."""
    mid = sigma_step(state, dt, step)
    flow = ns_step(state.flow, mid.tau(), dt, forcing=forcing, step=step)
    mid.flow = flow
    return mid

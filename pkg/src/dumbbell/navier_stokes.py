"""Incompressible Navier-Stokes with an extra-stress force on the MAC grid.

First-order incremental projection: explicit centred advection, explicit
stress and pressure gradient, implicit viscosity, then a Neumann pressure
correction.  Walls carry no-slip data; the periodic mode is for validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SolverError, StabilityError
from .grid import (Grid, SymTensorField, VectorFieldMAC, _check_tensor, divergence, gradient,
                   momentum_advection, node_interp)
from .linsolve import helmholtz_velocity, poisson

CFL = 0.5
DIV_TOL = 1e-10


@dataclass
class FlowState:
    u: VectorFieldMAC
    p: np.ndarray
    grid: Grid
    nu: float = 0.1
    t: float = 0.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError("viscosity must be positive")
        if self.p.shape != self.grid.shape:
            raise ConfigurationError(f"pressure shape {self.p.shape} does not match grid {self.grid.shape}")

    @classmethod
    def at_rest(cls, g: Grid, nu: float = 0.1, t: float = 0.0) -> "FlowState":
        return cls(VectorFieldMAC.zeros(g), np.zeros(g.shape), g, nu, t)

    def copy(self) -> "FlowState":
        return FlowState(self.u.copy(), self.p.copy(), self.grid, self.nu, self.t)


def stress_divergence(tau: SymTensorField, g: Grid) -> VectorFieldMAC:
    """Face-centred div(tau); the negative adjoint of the cell velocity gradient.

    Normal components use the two adjacent cells, shear components use node
    averages of tau_12.  Boundary faces (no-slip mode) are zero.
    """
    _check_tensor(tau, g)
    t11, t12, t22 = tau.data
    P = node_interp(t12, g)
    if g.periodic:
        fx = (t11 - np.roll(t11, 1, 0)) / g.hx + (np.roll(P, -1, 1) - P) / g.hy
        fy = (np.roll(P, -1, 0) - P) / g.hx + (t22 - np.roll(t22, 1, 1)) / g.hy
        return VectorFieldMAC(fx, fy)
    fx = np.zeros(g.ux_shape)
    fy = np.zeros(g.uy_shape)
    fx[1:-1] = (t11[1:] - t11[:-1]) / g.hx + (P[1:-1, 1:] - P[1:-1, :-1]) / g.hy
    fy[:, 1:-1] = (P[1:, 1:-1] - P[:-1, 1:-1]) / g.hx + (t22[:, 1:] - t22[:, :-1]) / g.hy
    return VectorFieldMAC(fx, fy)


def max_stable_dt(u: VectorFieldMAC, g: Grid) -> float:
    umax = u.max_abs()
    return np.inf if umax == 0 else CFL * min(g.hx, g.hy) / umax


def project(u: VectorFieldMAC, g: Grid, method: str = "transform"):
    """Return ``(P u, phi)`` with ``P u = u - grad phi`` discretely divergence free."""
    phi = poisson(divergence(u, g), g, method=method)
    gp = gradient(phi, g)
    return u - gp, phi


def _enforce_walls(u: VectorFieldMAC, g: Grid):
    if not g.periodic:
        u.ux[[0, -1]] = 0.0
        u.uy[:, [0, -1]] = 0.0


def ns_step(flow: FlowState, tau: SymTensorField | None, dt: float, forcing=None,
            step: int | None = None, poisson_method: str = "transform") -> FlowState:
    """Advance (u, p) by one incremental-projection step.

    ``forcing`` is ``None``, a :class:`VectorFieldMAC`, or a callable ``f(t)``
    returning one (evaluated at the new time level).
    """
    g = flow.grid
    if not dt > 0:
        raise ConfigurationError("time step must be positive")
    lim = max_stable_dt(flow.u, g)
    if dt > lim:
        raise StabilityError(f"CFL violated: dt={dt:g} > {lim:.3e}", advisory_dt=0.9 * lim, step=step)
    u = flow.u
    rhs = u - dt * momentum_advection(u, g) - dt * gradient(flow.p, g)
    if tau is not None:
        rhs = rhs + dt * stress_divergence(tau, g)
    if forcing is not None:
        f = forcing(flow.t + dt) if callable(forcing) else forcing
        rhs = rhs + dt * f
    _enforce_walls(rhs, g)
    ustar = helmholtz_velocity(rhs, g, 1.0, dt * flow.nu)
    phi = poisson(divergence(ustar, g) / dt, g, method=poisson_method)
    unew = ustar - dt * gradient(phi, g)
    _enforce_walls(unew, g)
    p = flow.p + phi
    p = p - p.mean()
    div = float(np.abs(divergence(unew, g)).max())
    scale = max(1.0, unew.max_abs() / min(g.hx, g.hy))
    if not np.isfinite(div) or div > DIV_TOL * scale:
        raise SolverError(f"projection left max |div u| = {div:.3e}", residual=div, step=step)
    return FlowState(unew, p, g, flow.nu, flow.t + dt)

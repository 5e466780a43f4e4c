"""Hermite-spectral / finite-difference solver for the normalised Fokker-Planck equation

    d_t psi + u . grad_x psi + M^{-1} div_q((grad u) q M psi) - mu Lap_x psi = M^{-1} div_q(M grad_q psi)

with Neumann data in x.  The configuration operators act per cell on the
coefficient axis; x-transport and x-diffusion act per coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, StabilityError
from .grid import Grid, SymTensorField, VectorFieldMAC, advect_scalar, cell_gradient, laplacian
from .hermite import HermiteBasis, TruncationSpec, moments, sigma_components
from .linsolve import helmholtz_cells

C_STAB = 0.5
TRACE_TOL = 1e-8
ADVECTION_SCHEMES = {"upwind": 1.0, "centered": 0.0}


def upwind_weight(scheme) -> float:
    """Map an advection scheme name (or a blend weight in [0, 1]) to the upwind weight."""
    if isinstance(scheme, str):
        if scheme not in ADVECTION_SCHEMES:
            raise ConfigurationError(f"advection must be one of {sorted(ADVECTION_SCHEMES)}, got {scheme!r}")
        return ADVECTION_SCHEMES[scheme]
    w = float(scheme)
    if not 0.0 <= w <= 1.0:
        raise ConfigurationError(f"upwind blend weight must lie in [0, 1], got {w}")
    return w


@dataclass
class KineticState:
    """Coefficients of psi_hat per cell, stored as an ``(nx, ny, |K|)`` array."""

    coeffs: np.ndarray
    grid: Grid
    basis: HermiteBasis
    t: float = 0.0

    def __post_init__(self):
        expect = self.grid.shape + (self.basis.size,)
        if self.coeffs.shape != expect:
            raise ConfigurationError(f"coefficient array shape {self.coeffs.shape}, expected {expect}")

    @classmethod
    def equilibrium(cls, g: Grid, basis: HermiteBasis, t: float = 0.0) -> "KineticState":
        c = np.zeros(g.shape + (basis.size,))
        c[..., 0] = 1.0
        return cls(c, g, basis, t)

    @property
    def flat(self) -> np.ndarray:
        """View of the coefficients as ``(nx*ny, |K|)``."""
        return self.coeffs.reshape(-1, self.basis.size)

    def copy(self) -> "KineticState":
        return KineticState(self.coeffs.copy(), self.grid, self.basis, self.t)

    @property
    def rho(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def sigma(self) -> SymTensorField:
        return SymTensorField(sigma_components(self.coeffs, self.basis))

    def tau(self) -> SymTensorField:
        s = sigma_components(self.coeffs, self.basis)
        s[0] -= self.rho
        s[2] -= self.rho
        return SymTensorField(s)

    def moments(self):
        return moments(self.coeffs, self.basis)


@dataclass(frozen=True)
class FPStepConfig:
    dt: float
    advection: object = "upwind"
    implicit_q: bool = True
    implicit_x: bool = True
    mu: float = 0.1
    trunc: TruncationSpec | None = None
    quad_nodes: int | None = None
    check_stability: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("time step must be positive")
        if not self.mu > 0:
            raise ConfigurationError("centre-of-mass diffusion mu must be positive")
        upwind_weight(self.advection)


def q_fp_operator(c, basis: HermiteBasis) -> np.ndarray:
    """Coefficient action of psi -> M^{-1} div_q(M grad_q psi): multiply by -(k1 + k2)."""
    c = np.asarray(c, dtype=float)
    return -basis.degree * c


def _as_gradu(gradu, lead):
    G = np.asarray(gradu, dtype=float)
    if G.shape[-2:] != (2, 2):
        raise InputError(f"velocity gradient must end in a 2x2 matrix, got shape {G.shape}")
    tr = G[..., 0, 0] + G[..., 1, 1]
    scale = max(1.0, float(np.abs(G).max()))
    if np.abs(tr).max(initial=0.0) > TRACE_TOL * scale:
        raise InputError(f"velocity gradient is not trace free (max |tr| = {np.abs(tr).max():.3e})")
    return np.broadcast_to(G, lead + (2, 2))


def drift_operator(c, gradu, basis: HermiteBasis, trunc: TruncationSpec | None = None,
                   nodes: int | None = None) -> np.ndarray:
    """Coefficient action of psi -> -M^{-1} div_q((grad u) q M psi).

    ``gradu[..., i, j] = d u_i / d x_j`` broadcasts against the leading axes
    of ``c``.  Without ``trunc`` this is the exact sparse Hermite action,
    ``sum_ij G_ij (R_i A_j + R_i R_j) c``.  With ``trunc`` the Galerkin projection
    of ``-M^{-1} div_q(Lambda_L(psi) chi_R (grad u) q M)`` is taken by quadrature.
    """
    c = np.asarray(c, dtype=float)
    lead = c.shape[:-1]
    G = _as_gradu(gradu, lead)
    out = np.zeros_like(c)
    if trunc is None:
        E = basis.drift_blocks
        for i in range(2):
            for j in range(2):
                gij = G[..., i, j]
                if np.any(gij != 0):
                    out += gij[..., None] * (c @ E[i][j].T)
        return out
    quad, V, G1, G2 = basis.tables(nodes or 2 * basis.N + 24)
    q = quad.points
    psi = c @ V
    f = trunc.Lambda_L(psi) * trunc.radial(q) * quad.weights
    grads = (G1, G2)
    for i in range(2):
        for j in range(2):
            gij = G[..., i, j]
            if np.any(gij != 0):
                out += gij[..., None] * ((f * q[:, j]) @ grads[i].T)
    return out


def homogeneous_matrix(gradu, basis: HermiteBasis) -> np.ndarray:
    """Dense generator of the spatially homogeneous coefficient ODE (drift + q-diffusion)."""
    G = _as_gradu(gradu, ())
    E = basis.drift_blocks
    return -np.diag(basis.degree.astype(float)) + sum(G[i, j] * E[i][j] for i in range(2) for j in range(2))


def max_stable_dt(gradu_max: float, basis: HermiteBasis) -> float:
    if gradu_max <= 0:
        return np.inf
    return C_STAB / (gradu_max * (2.0 * np.sqrt(basis.N) + 1.0))


def gradient_norm(G) -> float:
    """max over cells of the Frobenius norm; G has the 2x2 matrix on the leading axes."""
    return float(np.sqrt(np.sum(G * G, axis=(0, 1))).max())


def fp_step(state: KineticState, u: VectorFieldMAC, cfg: FPStepConfig, step: int | None = None,
            gradu=None) -> KineticState:
    """One IMEX step: explicit transport and drift, implicit q- and x-diffusion.

    ``gradu`` (a 2x2 matrix, or ``(2, 2, nx, ny)``) freezes the velocity
    gradient seen by the drift; by default it is the cell gradient of ``u``.
    """
    g, basis, dt = state.grid, state.basis, cfg.dt
    if gradu is None:
        G = cell_gradient(u, g)
    else:
        G = np.asarray(gradu, dtype=float)
        G = np.broadcast_to(G.reshape(G.shape + (1, 1)) if G.ndim == 2 else G, (2, 2) + g.shape)
    if cfg.check_stability:
        gmax = gradient_norm(G)
        lim = max_stable_dt(gmax, basis)
        umax = u.max_abs()
        if umax > 0:
            lim = min(lim, 0.5 * min(g.hx, g.hy) / umax)
        if dt > lim:
            raise StabilityError(f"kinetic step dt={dt:g} exceeds stable bound {lim:.3e}",
                                 advisory_dt=0.9 * lim, step=step)
    c = state.coeffs
    Gc = np.moveaxis(G, (0, 1), (-2, -1))
    rhs = c + dt * drift_operator(c, Gc, basis, cfg.trunc, cfg.quad_nodes)
    if u.max_abs() > 0:
        rhs -= dt * advect_scalar(c, u, g, upwind_weight(cfg.advection))
    deg = basis.degree.astype(float)
    if cfg.implicit_q:
        a = 1.0 + dt * deg
    else:
        rhs += dt * q_fp_operator(c, basis)
        a = np.ones_like(deg)
    if cfg.implicit_x:
        new = helmholtz_cells(rhs, g, a, dt * cfg.mu, bc="neumann")
    else:
        new = (rhs + dt * cfg.mu * laplacian(c, g, "neumann")) / a
    return KineticState(new, g, basis, state.t + dt)

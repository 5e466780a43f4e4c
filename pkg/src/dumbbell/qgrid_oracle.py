"""Finite-difference oracle in configuration space, independent of the Hermite machinery.

Two tools live here:

* pointwise operator oracles: high-order central differences of a density
  sampled on a uniform q-grid, projected back on the Hermite basis with an
  M-weighted trapezoid rule;
* ``fp_truncated_grid_oracle``: an explicit conservative finite-volume solver
  for the spatially homogeneous, truncated Fokker-Planck equation

      M d_t psi = div_q(M grad_q psi) - div_q(Lambda_L(psi) chi_R (A q) M).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, OracleInvalidError
from .hermite import HermiteBasis, TruncationSpec, maxwellian_eval

BAND_CELLS = 4
BAND_TOL = 1e-8

# central first/second-derivative stencils, offsets -3..3
_D1 = {2: np.array([0, 0, -1 / 2, 0, 1 / 2, 0, 0]),
       4: np.array([0, 1 / 12, -2 / 3, 0, 2 / 3, -1 / 12, 0]),
       6: np.array([-1 / 60, 3 / 20, -3 / 4, 0, 3 / 4, -3 / 20, 1 / 60])}
_D2 = {2: np.array([0, 0, 1, -2, 1, 0, 0]),
       4: np.array([0, -1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12, 0]),
       6: np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])}


@dataclass(frozen=True)
class QGrid:
    """Uniform node grid on [-W, W]^2 with n points per axis."""

    n: int = 401
    half_width: float = 10.0

    def __post_init__(self):
        if self.n < 16 or not self.half_width > 0:
            raise ConfigurationError("q-grid needs n >= 16 and a positive half width")

    @property
    def h(self) -> float:
        return 2 * self.half_width / (self.n - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    @cached_property
    def mesh(self):
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @cached_property
    def points(self) -> np.ndarray:
        Q1, Q2 = self.mesh
        return np.stack([Q1, Q2], axis=-1)

    @cached_property
    def M(self) -> np.ndarray:
        return maxwellian_eval(self.points)

    @cached_property
    def trap_weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[[0, -1]] *= 0.5
        return np.outer(w, w)

    def integrate_M(self, f) -> float:
        """Trapezoid rule for int M f dq."""
        return float(np.sum(self.trap_weights * self.M * f))


def reconstruct(c, basis: HermiteBasis, qg: QGrid) -> np.ndarray:
    return basis.evaluate(c, qg.points.reshape(-1, 2)).reshape(qg.n, qg.n)


def project(psi, basis: HermiteBasis, qg: QGrid) -> np.ndarray:
    """Coefficients <psi, h_k>_M by the M-weighted trapezoid rule."""
    V = basis.values(qg.points.reshape(-1, 2))
    return V @ (qg.trap_weights * qg.M * psi).ravel()


def _apply(f, stencil, axis, h, power):
    n = f.shape[axis]
    out = np.zeros_like(f)
    core = [slice(None)] * f.ndim
    core[axis] = slice(3, n - 3)
    for off, s in zip(range(-3, 4), stencil):
        if s == 0:
            continue
        src = [slice(None)] * f.ndim
        src[axis] = slice(3 + off, n - 3 + off)
        out[tuple(core)] += s * f[tuple(src)]
    return out / h**power


def d1(f, h, axis, order=6):
    return _apply(f, _D1[order], axis, h, 1)


def d2(f, h, axis, order=6):
    return _apply(f, _D2[order], axis, h, 2)


def fp_operator_fd(psi, qg: QGrid, order: int = 6) -> np.ndarray:
    """M^{-1} div_q(M grad_q psi) = Lap psi - q . grad psi."""
    Q1, Q2 = qg.mesh
    h = qg.h
    return (d2(psi, h, 0, order) + d2(psi, h, 1, order)
            - Q1 * d1(psi, h, 0, order) - Q2 * d1(psi, h, 1, order))


def drift_fd(psi, gradu, qg: QGrid, trunc: TruncationSpec | None = None, order: int = 6) -> np.ndarray:
    """-M^{-1} div_q(f (A q) M) with f = Lambda_L(psi) chi_R (or psi when untruncated)."""
    A = np.asarray(gradu, dtype=float)
    Q1, Q2 = qg.mesh
    f = psi if trunc is None else trunc.Lambda_L(psi) * trunc.radial(qg.points)
    Aq1 = A[0, 0] * Q1 + A[0, 1] * Q2
    Aq2 = A[1, 0] * Q1 + A[1, 1] * Q2
    qAq = Q1 * Aq1 + Q2 * Aq2
    h = qg.h
    return -(np.trace(A) * f + Aq1 * d1(f, h, 0, order) + Aq2 * d1(f, h, 1, order) - qAq * f)


def band_mass(p, qg: QGrid, cells: int = BAND_CELLS) -> float:
    """Mass of the density p = M psi in the outer ``cells`` layers of the grid."""
    inner = np.zeros_like(p, dtype=bool)
    inner[cells:-cells, cells:-cells] = True
    return float(np.sum(np.abs(p[~inner]) * qg.trap_weights[~inner]))


def stable_dt(qg: QGrid, gradu=None) -> float:
    """Explicit step bound for the finite-volume scheme (diffusive plus drift part)."""
    h = qg.h
    W = qg.half_width
    # worst face-to-node Maxwellian ratio at the grid edge
    ratio = np.exp(W * h / 2)
    dt = 0.2 * h * h / ratio
    if gradu is not None:
        a = float(np.abs(np.asarray(gradu)).sum())
        if a > 0:
            dt = min(dt, 0.25 * h / (a * W))
    return dt


def fp_truncated_grid_oracle(psi0, gradu, trunc: TruncationSpec | None, mu_off: bool = True,
                             dt: float | None = None, nsteps: int = 0, qgrid: QGrid | None = None,
                             drift: bool = True) -> np.ndarray:
    """Advance psi_hat (sampled on ``qgrid``) by ``nsteps`` explicit finite-volume steps.

    The unknown is the density p = M psi; face fluxes are
    ``-M_f (psi_{i+1} - psi_i)/h`` (diffusion, monotone) and the centred drift
    flux ``(A q)_f * avg(Lambda_L(psi) chi_R M)``.  No flux leaves the box.
    ``mu_off`` records that there is no x-diffusion in this homogeneous setting.
    ``drift=False`` switches the drift off, leaving a monotone scheme.
    """
    if not mu_off:
        raise ConfigurationError("the configuration-space oracle is spatially homogeneous (mu_off must be set)")
    qg = qgrid or QGrid()
    A = np.asarray(gradu, dtype=float)
    if A.shape != (2, 2):
        raise ConfigurationError("gradu must be a 2x2 matrix")
    if dt is None:
        dt = stable_dt(qg, A if drift else None)
    if not dt > 0 or dt > 1.0001 * stable_dt(qg, A if drift else None):
        raise ConfigurationError(f"oracle time step {dt} outside (0, {stable_dt(qg, A if drift else None):.3e}]")
    psi = np.array(psi0, dtype=float)
    M = qg.M
    h = qg.h
    x = qg.axis
    p = M * psi
    if band_mass(p, qg) > BAND_TOL:
        raise OracleInvalidError(f"initial boundary-band mass {band_mass(p, qg):.2e} exceeds {BAND_TOL}")

    xf = 0.5 * (x[1:] + x[:-1])
    Mf0 = np.exp(-0.5 * xf**2)[:, None] * np.exp(-0.5 * x**2)[None, :] / (2 * np.pi)   # x-faces
    Mf1 = Mf0.T                                                                        # y-faces
    Qf0 = (xf[:, None], x[None, :])
    Qf1 = (x[:, None], xf[None, :])
    Aqf0 = A[0, 0] * Qf0[0] + A[0, 1] * Qf0[1]
    Aqf1 = A[1, 0] * Qf1[0] + A[1, 1] * Qf1[1]
    chi = np.ones_like(M) if trunc is None else trunc.radial(qg.points)

    for _ in range(int(nsteps)):
        F0 = -Mf0 * (psi[1:] - psi[:-1]) / h
        F1 = -Mf1 * (psi[:, 1:] - psi[:, :-1]) / h
        if drift:
            lam = psi if trunc is None else trunc.Lambda_L(psi)
            gm = lam * chi * M
            F0 = F0 + Aqf0 * 0.5 * (gm[1:] + gm[:-1])
            F1 = F1 + Aqf1 * 0.5 * (gm[:, 1:] + gm[:, :-1])
        div = np.zeros_like(p)
        div[:-1] += F0
        div[1:] -= F0
        div[:, :-1] += F1
        div[:, 1:] -= F1
        p = p - dt * div / h
        psi = p / M
    if band_mass(p, qg) > BAND_TOL:
        raise OracleInvalidError(f"boundary-band mass {band_mass(p, qg):.2e} exceeds {BAND_TOL}; enlarge the q-grid")
    return psi


def grid_sigma(psi, qg: QGrid) -> np.ndarray:
    """Second moment int M psi q (x) q dq by trapezoid rule."""
    Q1, Q2 = qg.mesh
    return np.array([[qg.integrate_M(psi * Q1 * Q1), qg.integrate_M(psi * Q1 * Q2)],
                     [qg.integrate_M(psi * Q2 * Q1), qg.integrate_M(psi * Q2 * Q2)]])

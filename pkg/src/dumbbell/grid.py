"""Staggered (MAC) grid, field containers and second-order difference operators.

Layout conventions (index ``[i, j]`` is x then y):

* cell-centred scalars have shape ``(nx, ny)`` and live at ``((i+1/2) hx, (j+1/2) hy)``;
* ``ux`` lives on vertical faces ``x = i hx``; ``uy`` on horizontal faces ``y = j hy``;
* in ``no_slip_square`` mode the boundary faces are stored, so ``ux`` is
  ``(nx+1, ny)`` and ``uy`` is ``(nx, ny+1)``; in ``periodic`` mode both are
  ``(nx, ny)`` and face ``i`` is the left face of cell ``i``;
* nodes (cell corners) carry the shear derivatives.  With walls, wall nodes
  use one-sided half-cell differences against the tangential wall velocity.

Cell arrays may carry trailing axes (e.g. Hermite coefficients); every
scalar operator acts on the first two axes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

BC_MODES = ("no_slip_square", "periodic")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    bc_mode: str = "no_slip_square"

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigurationError("nx, ny must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(f"grid needs nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ConfigurationError("domain side lengths must be positive")
        if self.bc_mode not in BC_MODES:
            raise ConfigurationError(f"bc_mode must be one of {BC_MODES}, got {self.bc_mode!r}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def periodic(self) -> bool:
        return self.bc_mode == "periodic"

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def ux_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny) if self.periodic else (self.nx + 1, self.ny)

    @property
    def uy_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny) if self.periodic else (self.nx, self.ny + 1)

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def ux_points(self):
        x = np.arange(self.ux_shape[0]) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def uy_points(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.uy_shape[1]) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def nodes(self):
        nnx = self.nx if self.periodic else self.nx + 1
        nny = self.ny if self.periodic else self.ny + 1
        return np.meshgrid(np.arange(nnx) * self.hx, np.arange(nny) * self.hy, indexing="ij")


@dataclass
class VectorFieldMAC:
    """Face-centred velocity; ``ux`` on vertical faces, ``uy`` on horizontal faces."""

    ux: np.ndarray
    uy: np.ndarray

    @classmethod
    def zeros(cls, g: Grid) -> "VectorFieldMAC":
        return cls(np.zeros(g.ux_shape), np.zeros(g.uy_shape))

    @classmethod
    def from_functions(cls, g: Grid, fx, fy) -> "VectorFieldMAC":
        """Sample ``fx(x, y)`` and ``fy(x, y)`` on the respective faces."""
        X, Y = g.ux_points()
        ux = np.broadcast_to(np.asarray(fx(X, Y), dtype=float), X.shape).copy()
        X, Y = g.uy_points()
        uy = np.broadcast_to(np.asarray(fy(X, Y), dtype=float), X.shape).copy()
        return cls(ux, uy)

    def copy(self) -> "VectorFieldMAC":
        return VectorFieldMAC(self.ux.copy(), self.uy.copy())

    def __add__(self, other):
        return VectorFieldMAC(self.ux + other.ux, self.uy + other.uy)

    def __sub__(self, other):
        return VectorFieldMAC(self.ux - other.ux, self.uy - other.uy)

    def __mul__(self, a):
        return VectorFieldMAC(a * self.ux, a * self.uy)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.abs(self.ux).max(), np.abs(self.uy).max()))


@dataclass
class SymTensorField:
    """Symmetric 2x2 tensor per cell; ``data[0], data[1], data[2]`` = a11, a12, a22."""

    data: np.ndarray = field(repr=False)

    @classmethod
    def zeros(cls, g: Grid) -> "SymTensorField":
        return cls(np.zeros((3,) + g.shape))

    @classmethod
    def identity(cls, g: Grid) -> "SymTensorField":
        d = np.zeros((3,) + g.shape)
        d[0] = 1.0
        d[2] = 1.0
        return cls(d)

    @classmethod
    def from_components(cls, a11, a12, a22) -> "SymTensorField":
        return cls(np.stack(np.broadcast_arrays(a11, a12, a22)).astype(float))

    @property
    def a11(self):
        return self.data[0]

    @property
    def a12(self):
        return self.data[1]

    @property
    def a22(self):
        return self.data[2]

    def copy(self) -> "SymTensorField":
        return SymTensorField(self.data.copy())

    def __add__(self, other):
        return SymTensorField(self.data + other.data)

    def __sub__(self, other):
        return SymTensorField(self.data - other.data)

    def __mul__(self, a):
        return SymTensorField(a * self.data)

    __rmul__ = __mul__

    def trace(self) -> np.ndarray:
        return self.data[0] + self.data[2]

    def frobenius(self) -> np.ndarray:
        """Pointwise Frobenius norm (off-diagonal counted twice)."""
        return np.sqrt(self.data[0] ** 2 + 2 * self.data[1] ** 2 + self.data[2] ** 2)

    def eigvals(self):
        """Pointwise (min, max) eigenvalues."""
        m = 0.5 * (self.data[0] + self.data[2])
        r = np.sqrt(0.25 * (self.data[0] - self.data[2]) ** 2 + self.data[1] ** 2)
        return m - r, m + r

    def contract(self, other) -> np.ndarray:
        """Pointwise Frobenius product A : B."""
        return self.data[0] * other.data[0] + 2 * self.data[1] * other.data[1] + self.data[2] * other.data[2]


def _check_scalar(s, g: Grid):
    if s.shape[:2] != g.shape:
        raise ConfigurationError(f"scalar field shape {s.shape[:2]} does not match grid {g.shape}")


def _check_vector(v: VectorFieldMAC, g: Grid):
    if v.ux.shape != g.ux_shape or v.uy.shape != g.uy_shape:
        raise ConfigurationError(
            f"vector field shapes {v.ux.shape}, {v.uy.shape} do not match grid "
            f"({g.ux_shape}, {g.uy_shape})"
        )


def _check_tensor(t: SymTensorField, g: Grid):
    if t.data.shape != (3,) + g.shape:
        raise ConfigurationError(f"tensor field shape {t.data.shape} does not match grid {g.shape}")


def inner_scalar(a, b, g: Grid) -> float:
    return float(np.sum(a * b) * g.cell_area)


def inner_vector(v: VectorFieldMAC, w: VectorFieldMAC, g: Grid) -> float:
    return float((np.sum(v.ux * w.ux) + np.sum(v.uy * w.uy)) * g.cell_area)


def integrate(s, g: Grid):
    """Midpoint-rule integral over the domain (sums the first two axes)."""
    return np.sum(s, axis=(0, 1)) * g.cell_area


def divergence(v: VectorFieldMAC, g: Grid) -> np.ndarray:
    _check_vector(v, g)
    if g.periodic:
        return (np.roll(v.ux, -1, 0) - v.ux) / g.hx + (np.roll(v.uy, -1, 1) - v.uy) / g.hy
    return (v.ux[1:] - v.ux[:-1]) / g.hx + (v.uy[:, 1:] - v.uy[:, :-1]) / g.hy


def gradient(s, g: Grid) -> VectorFieldMAC:
    """Face-centred gradient; zero normal derivative on walls."""
    _check_scalar(s, g)
    if g.periodic:
        return VectorFieldMAC((s - np.roll(s, 1, 0)) / g.hx, (s - np.roll(s, 1, 1)) / g.hy)
    gx = np.zeros(g.ux_shape)
    gy = np.zeros(g.uy_shape)
    gx[1:-1] = (s[1:] - s[:-1]) / g.hx
    gy[:, 1:-1] = (s[:, 1:] - s[:, :-1]) / g.hy
    return VectorFieldMAC(gx, gy)


def _pad_cells(s, bc: str):
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (s.ndim - 2)
    if bc == "periodic":
        return np.pad(s, pad, mode="wrap")
    if bc == "neumann":
        return np.pad(s, pad, mode="edge")
    if bc == "dirichlet0":
        p = np.pad(s, pad, mode="edge")
        p[0] *= -1
        p[-1] *= -1
        p[:, 0] *= -1
        p[:, -1] *= -1
        return p
    raise ConfigurationError(f"unknown laplacian bc {bc!r}")


def laplacian(s, g: Grid, bc: str = "neumann") -> np.ndarray:
    """Five-point Laplacian of a cell-centred field with ghost-cell boundary data."""
    _check_scalar(s, g)
    p = _pad_cells(s, bc)
    c = p[1:-1, 1:-1]
    return (p[2:, 1:-1] - 2 * c + p[:-2, 1:-1]) / g.hx**2 + (p[1:-1, 2:] - 2 * c + p[1:-1, :-2]) / g.hy**2


def _wall_values(g: Grid, wall):
    wall = wall or {}
    def get(key, n):
        w = wall.get(key, 0.0)
        return np.broadcast_to(np.asarray(w, dtype=float), (n,))
    return (get("bottom", g.nx + 1), get("top", g.nx + 1), get("left", g.ny + 1), get("right", g.ny + 1))


def node_shear(v: VectorFieldMAC, g: Grid, wall=None):
    """Return (du_x/dy, du_y/dx) at cell corners.

    ``wall`` optionally gives tangential wall velocities: ``bottom``/``top``
    for ``ux`` (length nx+1) and ``left``/``right`` for ``uy`` (length ny+1).
    """
    if g.periodic:
        dudy = (v.ux - np.roll(v.ux, 1, 1)) / g.hy
        dvdx = (v.uy - np.roll(v.uy, 1, 0)) / g.hx
        return dudy, dvdx
    wb, wt, wl, wr = _wall_values(g, wall)
    dudy = np.empty((g.nx + 1, g.ny + 1))
    dudy[:, 1:-1] = (v.ux[:, 1:] - v.ux[:, :-1]) / g.hy
    dudy[:, 0] = 2 * (v.ux[:, 0] - wb) / g.hy
    dudy[:, -1] = 2 * (wt - v.ux[:, -1]) / g.hy
    dvdx = np.empty((g.nx + 1, g.ny + 1))
    dvdx[1:-1] = (v.uy[1:] - v.uy[:-1]) / g.hx
    dvdx[0] = 2 * (v.uy[0] - wl) / g.hx
    dvdx[-1] = 2 * (wr - v.uy[-1]) / g.hx
    return dudy, dvdx


def _corner_average(n, g: Grid):
    if g.periodic:
        n1 = np.roll(n, -1, 0)
        return 0.25 * (n + n1 + np.roll(n, -1, 1) + np.roll(n1, -1, 1))
    return 0.25 * (n[:-1, :-1] + n[1:, :-1] + n[:-1, 1:] + n[1:, 1:])


def cell_gradient(v: VectorFieldMAC, g: Grid, wall=None) -> np.ndarray:
    """Full velocity gradient at cell centres, ``G[i, j] = d u_i / d x_j``.

    The trace equals :func:`divergence` exactly, and the symmetric part is the
    negative adjoint of :func:`dumbbell.navier_stokes.stress_divergence`.
    """
    _check_vector(v, g)
    G = np.empty((2, 2) + g.shape)
    if g.periodic:
        G[0, 0] = (np.roll(v.ux, -1, 0) - v.ux) / g.hx
        G[1, 1] = (np.roll(v.uy, -1, 1) - v.uy) / g.hy
    else:
        G[0, 0] = (v.ux[1:] - v.ux[:-1]) / g.hx
        G[1, 1] = (v.uy[:, 1:] - v.uy[:, :-1]) / g.hy
    dudy, dvdx = node_shear(v, g, wall)
    G[0, 1] = _corner_average(dudy, g)
    G[1, 0] = _corner_average(dvdx, g)
    return G


def sym_grad(v: VectorFieldMAC, g: Grid, wall=None) -> SymTensorField:
    """Cell-centred symmetric velocity gradient D(u)."""
    G = cell_gradient(v, g, wall)
    return SymTensorField(np.stack([G[0, 0], 0.5 * (G[0, 1] + G[1, 0]), G[1, 1]]))


def node_interp(s, g: Grid) -> np.ndarray:
    """Average of the (existing) cells around each node."""
    if g.periodic:
        s1 = np.roll(s, 1, 0)
        return 0.25 * (s + s1 + np.roll(s, 1, 1) + np.roll(s1, 1, 1))
    p = np.pad(s, [(1, 1), (1, 1)])
    cnt = np.pad(np.ones(g.shape), [(1, 1), (1, 1)])
    tot = p[:-1, :-1] + p[1:, :-1] + p[:-1, 1:] + p[1:, 1:]
    n = cnt[:-1, :-1] + cnt[1:, :-1] + cnt[:-1, 1:] + cnt[1:, 1:]
    return tot / n


def vector_laplacian(v: VectorFieldMAC, g: Grid) -> VectorFieldMAC:
    """Viscous operator; no-slip walls via antisymmetric ghosts, boundary faces untouched (zero)."""
    _check_vector(v, g)
    hx2, hy2 = g.hx**2, g.hy**2
    if g.periodic:
        def lap(a):
            return ((np.roll(a, -1, 0) - 2 * a + np.roll(a, 1, 0)) / hx2
                    + (np.roll(a, -1, 1) - 2 * a + np.roll(a, 1, 1)) / hy2)
        return VectorFieldMAC(lap(v.ux), lap(v.uy))
    ux, uy = v.ux, v.uy
    lx = np.zeros_like(ux)
    py = np.pad(ux[1:-1], [(0, 0), (1, 1)])
    py[:, 0] = -ux[1:-1, 0]
    py[:, -1] = -ux[1:-1, -1]
    lx[1:-1] = (ux[2:] - 2 * ux[1:-1] + ux[:-2]) / hx2 + (py[:, 2:] - 2 * py[:, 1:-1] + py[:, :-2]) / hy2
    ly = np.zeros_like(uy)
    px = np.pad(uy[:, 1:-1], [(1, 1), (0, 0)])
    px[0] = -uy[0, 1:-1]
    px[-1] = -uy[-1, 1:-1]
    ly[:, 1:-1] = (px[2:] - 2 * px[1:-1] + px[:-2]) / hx2 + (uy[:, 2:] - 2 * uy[:, 1:-1] + uy[:, :-2]) / hy2
    return VectorFieldMAC(lx, ly)


def velocity_dissipation(v: VectorFieldMAC, g: Grid) -> float:
    """Discrete ``int |grad u|^2`` consistent with :func:`vector_laplacian`."""
    return -inner_vector(v, vector_laplacian(v, g), g)


def _expand(a, ndim):
    return a.reshape(a.shape + (1,) * (ndim - a.ndim))


def _face_value(left, right, vel, upwind):
    vel = _expand(vel, left.ndim)
    centred = 0.5 * (left + right)
    if upwind == 0.0:
        return centred
    up = np.where(vel > 0, left, right)
    return (1.0 - upwind) * centred + upwind * up


def advect_scalar(phi, v: VectorFieldMAC, g: Grid, upwind: float = 1.0) -> np.ndarray:
    """Conservative transport term ``div(u phi)`` for cell fields.

    ``upwind`` blends centred (0) and first-order upwind (1) face values.
    """
    _check_scalar(phi, g)
    _check_vector(v, g)
    nd = phi.ndim
    if g.periodic:
        left = np.roll(phi, 1, 0)
        fx = _expand(v.ux, nd) * _face_value(left, phi, v.ux, upwind)
        low = np.roll(phi, 1, 1)
        fy = _expand(v.uy, nd) * _face_value(low, phi, v.uy, upwind)
        return (np.roll(fx, -1, 0) - fx) / g.hx + (np.roll(fy, -1, 1) - fy) / g.hy
    fx = np.zeros((g.nx + 1,) + phi.shape[1:])
    ui = v.ux[1:-1]
    fx[1:-1] = _expand(ui, nd) * _face_value(phi[:-1], phi[1:], ui, upwind)
    fy = np.zeros((g.nx, g.ny + 1) + phi.shape[2:])
    vi = v.uy[:, 1:-1]
    fy[:, 1:-1] = _expand(vi, nd) * _face_value(phi[:, :-1], phi[:, 1:], vi, upwind)
    return (fx[1:] - fx[:-1]) / g.hx + (fy[:, 1:] - fy[:, :-1]) / g.hy


def momentum_advection(v: VectorFieldMAC, g: Grid) -> VectorFieldMAC:
    """Centred divergence-form ``div(u (x) u)`` on the MAC grid (kinetic-energy conserving)."""
    _check_vector(v, g)
    ux, uy = v.ux, v.uy
    if g.periodic:
        uc = 0.5 * (ux + np.roll(ux, -1, 0))
        vc = 0.5 * (uy + np.roll(uy, -1, 1))
        fxy = 0.5 * (ux + np.roll(ux, 1, 1)) * 0.5 * (uy + np.roll(uy, 1, 0))
        fxx, fyy = uc * uc, vc * vc
        nx_ = (fxx - np.roll(fxx, 1, 0)) / g.hx + (np.roll(fxy, -1, 1) - fxy) / g.hy
        ny_ = (np.roll(fxy, -1, 0) - fxy) / g.hx + (fyy - np.roll(fyy, 1, 1)) / g.hy
        return VectorFieldMAC(nx_, ny_)
    uc = 0.5 * (ux[:-1] + ux[1:])
    vc = 0.5 * (uy[:, :-1] + uy[:, 1:])
    un = np.zeros((g.nx + 1, g.ny + 1))
    un[:, 1:-1] = 0.5 * (ux[:, :-1] + ux[:, 1:])
    vn = np.zeros((g.nx + 1, g.ny + 1))
    vn[1:-1] = 0.5 * (uy[:-1] + uy[1:])
    fxy = un * vn
    fxx, fyy = uc * uc, vc * vc
    nx_ = np.zeros_like(ux)
    nx_[1:-1] = (fxx[1:] - fxx[:-1]) / g.hx + (fxy[1:-1, 1:] - fxy[1:-1, :-1]) / g.hy
    ny_ = np.zeros_like(uy)
    ny_[:, 1:-1] = (fxy[1:, 1:-1] - fxy[:-1, 1:-1]) / g.hx + (fyy[:, 1:] - fyy[:, :-1]) / g.hy
    return VectorFieldMAC(nx_, ny_)

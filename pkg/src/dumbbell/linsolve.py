"""Direct transform solvers for the Helmholtz and Poisson problems on the MAC grid.

Every five-point operator used by the solvers is diagonalised by a real
trigonometric transform matching its boundary treatment:

* cell-centred Neumann (mirrored ghosts)      -> DCT-II
* cell-centred zero Dirichlet (odd ghosts)    -> DST-II
* face unknowns between two Dirichlet faces   -> DST-I
* periodic                                    -> FFT

A CG path for the Neumann Poisson problem is kept as a cross-check.  Each
direct solve verifies its residual and raises :class:`SolverError` if it is
above tolerance.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError
from .grid import Grid, VectorFieldMAC, laplacian, vector_laplacian

RESIDUAL_TOL = 1e-10


def workers() -> int:
    try:
        return max(1, int(os.environ.get("DUMBBELL_THREADS", "1")))
    except ValueError:
        return 1


def _eig(kind: str, n: int, h: float) -> np.ndarray:
    if kind == "dct2":
        p = np.arange(n)
        return -(4.0 / h**2) * np.sin(np.pi * p / (2 * n)) ** 2
    if kind == "dst2":
        p = np.arange(1, n + 1)
        return -(4.0 / h**2) * np.sin(np.pi * p / (2 * n)) ** 2
    if kind == "dst1":
        p = np.arange(1, n + 1)
        return -(4.0 / h**2) * np.sin(np.pi * p / (2 * (n + 1))) ** 2
    if kind == "fft":
        p = np.arange(n)
        return -(4.0 / h**2) * np.sin(np.pi * p / n) ** 2
    raise ValueError(kind)


def _forward(x, kind, axis):
    w = workers()
    if kind == "dct2":
        return sfft.dct(x, type=2, axis=axis, norm="ortho", workers=w)
    if kind == "dst2":
        return sfft.dst(x, type=2, axis=axis, norm="ortho", workers=w)
    if kind == "dst1":
        return sfft.dst(x, type=1, axis=axis, norm="ortho", workers=w)
    return sfft.fft(x, axis=axis, workers=w)


def _inverse(x, kind, axis):
    w = workers()
    if kind == "dct2":
        return sfft.idct(x, type=2, axis=axis, norm="ortho", workers=w)
    if kind == "dst2":
        return sfft.idst(x, type=2, axis=axis, norm="ortho", workers=w)
    if kind == "dst1":
        return sfft.idst(x, type=1, axis=axis, norm="ortho", workers=w)
    return sfft.ifft(x, axis=axis, workers=w)


def _transform_solve(r, kx, ky, hx, hy, a, b, singular_ok):
    """Solve (a - b*L) x = r for the separable L diagonalised by (kx, ky)."""
    nx, ny = r.shape[:2]
    lam = _eig(kx, nx, hx)[:, None] + _eig(ky, ny, hy)[None, :]
    lam = lam.reshape(lam.shape + (1,) * (r.ndim - 2))
    den = a - b * lam
    rh = _forward(_forward(r, kx, 0), ky, 1)
    zero = np.abs(den) < 1e-14 * max(1.0, abs(b) * np.abs(lam).max())
    if np.any(zero):
        if not singular_ok:
            raise SolverError("singular Helmholtz operator")
        den = np.where(zero, 1.0, den)
        rh = np.where(zero, 0.0, rh)
    x = _inverse(_inverse(rh / den, ky, 1), kx, 0)
    if np.iscomplexobj(x):
        x = x.real
    return np.ascontiguousarray(x)


def _check(res, r, what):
    scale = max(1.0, float(np.abs(r).max()))
    err = float(np.abs(res).max()) / scale
    if not np.isfinite(err) or err > RESIDUAL_TOL:
        raise SolverError(f"{what}: residual {err:.3e} above tolerance", residual=err)
    return err


def helmholtz_cells(r, g: Grid, a: float, b: float, bc: str = "neumann", check: bool = True):
    """Solve ``(a - b*Lap) x = r`` for cell-centred data.

    Trailing axes of ``r`` are independent right-hand sides; ``a`` may be an
    array broadcasting against them (one shift per trailing index).
    """
    if r.shape[:2] != g.shape:
        raise ConfigurationError(f"rhs shape {r.shape[:2]} does not match grid {g.shape}")
    if g.periodic:
        bc = "periodic"
    kind = {"neumann": "dct2", "dirichlet0": "dst2", "periodic": "fft"}.get(bc)
    if kind is None:
        raise ConfigurationError(f"unknown bc {bc!r}")
    singular = bool(np.any(np.asarray(a) == 0.0))
    x = _transform_solve(r, kind, kind, g.hx, g.hy, a, b, singular_ok=singular)
    if check:
        _check(a * x - b * laplacian(x, g, bc) - _project_out(r, a, kind), r, "helmholtz")
    return x


def _project_out(r, a, kind):
    # the singular (constant) mode is dropped when a == 0
    if kind in ("dct2", "fft") and np.any(np.asarray(a) == 0.0):
        return np.where(np.asarray(a) == 0.0, r - r.mean(axis=(0, 1), keepdims=True), r)
    return r


def helmholtz_velocity(rhs: VectorFieldMAC, g: Grid, a: float, b: float, check: bool = True) -> VectorFieldMAC:
    """Solve ``(a - b*VecLap) u = rhs`` with no-slip (or periodic) velocity boundaries.

    Boundary faces of the result are zero in no-slip mode.
    """
    if g.periodic:
        ux = _transform_solve(rhs.ux, "fft", "fft", g.hx, g.hy, a, b, False)
        uy = _transform_solve(rhs.uy, "fft", "fft", g.hx, g.hy, a, b, False)
        out = VectorFieldMAC(ux, uy)
    else:
        ux = np.zeros(g.ux_shape)
        uy = np.zeros(g.uy_shape)
        ux[1:-1] = _transform_solve(rhs.ux[1:-1], "dst1", "dst2", g.hx, g.hy, a, b, False)
        uy[:, 1:-1] = _transform_solve(rhs.uy[:, 1:-1], "dst2", "dst1", g.hx, g.hy, a, b, False)
        out = VectorFieldMAC(ux, uy)
    if check:
        L = vector_laplacian(out, g)
        rx = a * out.ux - b * L.ux - rhs.ux
        ry = a * out.uy - b * L.uy - rhs.uy
        if not g.periodic:
            rx[[0, -1]] = 0.0
            ry[:, [0, -1]] = 0.0
        _check(np.concatenate([rx.ravel(), ry.ravel()]), np.concatenate([rhs.ux.ravel(), rhs.uy.ravel()]),
               "velocity helmholtz")
    return out


def _neumann_matrix(g: Grid):
    def d2(n, h, periodic):
        main = -2.0 * np.ones(n)
        if not periodic:
            main[0] = main[-1] = -1.0
        m = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="lil")
        if periodic:
            m[0, n - 1] = 1.0
            m[n - 1, 0] = 1.0
        return m.tocsr() / h**2
    Ax = d2(g.nx, g.hx, g.periodic)
    Ay = d2(g.ny, g.hy, g.periodic)
    return sp.kron(Ax, sp.identity(g.ny)) + sp.kron(sp.identity(g.nx), Ay)


def poisson(r, g: Grid, method: str = "transform", rtol: float = 1e-12):
    """Mean-zero solution of ``Lap phi = r`` with homogeneous Neumann (or periodic) data.

    The mean of ``r`` is removed first (compatibility).  ``method`` is
    ``"transform"`` (default, direct) or ``"cg"``.
    """
    if r.shape != g.shape:
        raise ConfigurationError(f"rhs shape {r.shape} does not match grid {g.shape}")
    rc = r - r.mean()
    if method == "transform":
        phi = -helmholtz_cells(rc, g, 0.0, 1.0, bc="periodic" if g.periodic else "neumann", check=False)
    elif method == "cg":
        A = _neumann_matrix(g)
        # A is negative semidefinite; solve the SPD problem -A phi = -r
        sol, info = spla.cg(-A, -rc.ravel(), rtol=rtol, atol=0.0, maxiter=20 * g.nx * g.ny)
        if info != 0:
            raise SolverError(f"CG did not converge (info={info})")
        phi = sol.reshape(g.shape)
    else:
        raise ConfigurationError(f"unknown poisson method {method!r}")
    phi = phi - phi.mean()
    bc = "periodic" if g.periodic else "neumann"
    res = laplacian(phi, g, bc) - rc
    scale = max(1.0, float(np.abs(rc).max()))
    tol = RESIDUAL_TOL if method == "transform" else max(RESIDUAL_TOL, 1e3 * rtol)
    err = float(np.abs(res).max()) / scale
    if not np.isfinite(err) or err > tol:
        raise SolverError(f"poisson: residual {err:.3e} above tolerance", residual=err)
    return phi


"""Spectral Fokker-Planck operators and the IMEX kinetic step."""

import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import HermiteE, hermegauss
from scipy.linalg import expm

from dumbbell.errors import InputError, OracleInvalidError, StabilityError
from dumbbell.fokker_planck import (FPStepConfig, KineticState, drift_operator, fp_step, homogeneous_matrix,
                                    q_fp_operator)
from dumbbell.grid import Grid, VectorFieldMAC, integrate
from dumbbell.hermite import HermiteBasis, TruncationSpec, coeffs_from_sigma, moments, sigma_components
from dumbbell.navier_stokes import project
from dumbbell.qgrid_oracle import (QGrid, drift_fd, fp_operator_fd, fp_truncated_grid_oracle, grid_sigma,
                                   project as qproject, reconstruct)

RNG = np.random.default_rng(2024)
SHEAR = np.array([[0.0, 1.0], [0.0, 0.0]])


@pytest.fixture(scope="module")
def qgrid():
    return QGrid(401, 10.0)


# --------------------------------------------------------------------------- independent generator

def _hermite_polys(N):
    # normalised probabilists' Hermite polynomials built from numpy's HermiteE class
    return [HermiteE.basis(n) / math.sqrt(math.factorial(n)) for n in range(N + 1)]


def dense_generator(gradu, basis):
    """Galerkin matrix of L psi = Lap psi - q.grad psi - tr(A) psi - (Aq).grad psi + (q.Aq) psi by quadrature."""
    A = np.asarray(gradu, dtype=float)
    N = basis.N
    x, w = hermegauss(2 * N + 6)
    w = w / math.sqrt(2 * math.pi)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    P = _hermite_polys(N)
    v = [p(x) for p in P]
    d1 = [p.deriv(1)(x) for p in P]
    d2 = [p.deriv(2)(x) for p in P]
    K = basis.size
    vals, Lvals = np.empty((K,) + X1.shape), np.empty((K,) + X1.shape)
    for k, (a, b) in enumerate(basis.indices):
        f = np.outer(v[a], v[b])
        f1 = np.outer(d1[a], v[b])
        f2 = np.outer(v[a], d1[b])
        lap = np.outer(d2[a], v[b]) + np.outer(v[a], d2[b])
        Aq1 = A[0, 0] * X1 + A[0, 1] * X2
        Aq2 = A[1, 0] * X1 + A[1, 1] * X2
        qAq = X1 * Aq1 + X2 * Aq2
        vals[k] = f
        Lvals[k] = lap - X1 * f1 - X2 * f2 - np.trace(A) * f - Aq1 * f1 - Aq2 * f2 + qAq * f
    return np.einsum("jab,kab,ab->jk", vals, Lvals, W)


def rk4(Lmat, c0, T, dt):
    c = c0.copy()
    n = int(round(T / dt))
    for _ in range(n):
        k1 = Lmat @ c
        k2 = Lmat @ (c + 0.5 * dt * k1)
        k3 = Lmat @ (c + 0.5 * dt * k2)
        k4 = Lmat @ (c + dt * k3)
        c = c + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return c


# --------------------------------------------------------------------------- operators

def test_q_fp_operator_examples(qgrid):
    b = HermiteBasis(6)
    assert np.all(q_fp_operator(b.unit(0, 0), b) == 0)
    out = q_fp_operator(b.unit(2, 1), b)
    assert out[b.index(2, 1)] == -3 and np.count_nonzero(out) == 1
    fd = qproject(fp_operator_fd(reconstruct(b.unit(2, 1), b, qgrid), qgrid), b, qgrid)
    assert np.abs(fd - out).max() <= 1e-6
    # dyadic data keeps the floating-point sums exact
    c1, c2 = RNG.integers(-64, 64, (2, b.size)) / 8.0
    assert np.array_equal(q_fp_operator(c1 + c2, b), q_fp_operator(c1, b) + q_fp_operator(c2, b))


def test_drift_examples():
    b = HermiteBasis(6)
    c = RNG.standard_normal(b.size)
    assert np.all(drift_operator(c, np.zeros((2, 2)), b) == 0)
    out = drift_operator(b.unit(0, 0), SHEAR, b)
    assert np.count_nonzero(out) == 1 and out[b.index(1, 1)] != 0
    _, dsigma, _ = moments(out, b)
    assert np.allclose(dsigma, [[0.0, 1.0], [1.0, 0.0]], atol=1e-14)


def test_drift_matches_grid_oracle(qgrid):
    b = HermiteBasis(6)
    for _ in range(3):
        a, bb, cc = RNG.uniform(-1, 1, 3)
        A = np.array([[a, bb], [cc, -a]])
        c = RNG.standard_normal(b.size)
        ref = qproject(drift_fd(reconstruct(c, b, qgrid), A, qgrid), b, qgrid)
        assert np.abs(drift_operator(c, A, b) - ref).max() <= 1e-5


def test_drift_rejects_compressible_gradient():
    b = HermiteBasis(4)
    with pytest.raises(InputError):
        drift_operator(b.unit(0, 0), np.eye(2), b)


def test_truncated_drift_reduces_to_untruncated():
    b = HermiteBasis(6)
    A = np.array([[0.3, 1.0], [-0.5, -0.3]])
    c = coeffs_from_sigma(1.4, 0.3, 0.8, b)
    big = TruncationSpec(R=400.0, L=1e6)
    assert np.abs(drift_operator(c, A, b, trunc=big) - drift_operator(c, A, b)).max() <= 1e-4


def test_homogeneous_generator_matches_independent_assembly():
    b = HermiteBasis(6)
    A = np.array([[0.2, 0.7], [-0.4, -0.2]])
    assert np.abs(homogeneous_matrix(A, b) - dense_generator(A, b)).max() <= 1e-11


def test_homogeneous_shear_against_rk4():
    # the RK4 reference (dt = 1e-5) on the independently assembled generator
    # agrees with the matrix exponential of the spectral generator; the IMEX
    # step converges to it at first order
    b = HermiteBasis(8)
    A = 0.8 * SHEAR
    c0 = coeffs_from_sigma(1.5, 0.0, 0.7, b)
    ref = rk4(dense_generator(A, b), c0, 0.5, 1e-5)
    assert np.abs(expm(0.5 * homogeneous_matrix(A, b)) @ c0 - ref).max() <= 1e-6

    g = Grid(4, 4)
    u = VectorFieldMAC.zeros(g)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        st = KineticState(np.broadcast_to(c0, g.shape + (b.size,)).copy(), g, b)
        for _ in range(int(round(0.5 / dt))):
            st = fp_step(st, u, FPStepConfig(dt=dt), gradu=A)
        errs.append(np.abs(st.coeffs - ref).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 0.9) & (orders < 1.1))


# --------------------------------------------------------------------------- fp_step

def test_equilibrium_is_fixed():
    g, b = Grid(8, 8), HermiteBasis(6)
    st = KineticState.equilibrium(g, b)
    cfg = FPStepConfig(dt=1e-3)
    u = VectorFieldMAC.zeros(g)
    for _ in range(10):
        new = fp_step(st, u, cfg)
        assert np.abs(new.coeffs - st.coeffs).max() <= 1e-14
        st = new


def test_relaxation_of_uniform_conformation():
    g, b = Grid(4, 4), HermiteBasis(8)
    c0 = np.broadcast_to(coeffs_from_sigma(3.0, 0.0, 1.0, b), g.shape + (b.size,)).copy()
    st = KineticState(c0, g, b)
    cfg = FPStepConfig(dt=1e-3)
    u = VectorFieldMAC.zeros(g)
    for _ in range(1000):
        st = fp_step(st, u, cfg)
    exact = np.array([1 + 2 * math.exp(-2.0), 0.0, 1.0])
    s = sigma_components(st.coeffs, b)[:, 0, 0]
    assert np.abs(s - exact).max() / np.abs(exact).max() <= 1e-3


def test_mass_conserved_in_no_slip_mode():
    g, b = Grid(16, 16), HermiteBasis(4)
    rng = np.random.default_rng(5)
    c = np.zeros(g.shape + (b.size,))
    c[..., 0] = 1 + 0.3 * rng.random(g.shape)
    c[..., 1:] = 0.05 * rng.standard_normal(g.shape + (b.size - 1,))
    st = KineticState(c, g, b)
    u = VectorFieldMAC(rng.standard_normal(g.ux_shape), rng.standard_normal(g.uy_shape)) * 0.1
    u.ux[[0, -1]] = 0
    u.uy[:, [0, -1]] = 0
    u, _ = project(u, g)
    m0 = float(integrate(st.rho, g))
    for _ in range(20):
        st = fp_step(st, u, FPStepConfig(dt=1e-3))
    assert abs(float(integrate(st.rho, g)) - m0) <= 1e-10 * m0


def test_stability_guard():
    g, b = Grid(8, 8), HermiteBasis(6)
    u = VectorFieldMAC.from_functions(g, lambda x, y: 50 * np.sin(np.pi * y), lambda x, y: 0 * x)
    u.ux[[0, -1]] = 0
    with pytest.raises(StabilityError) as exc:
        fp_step(KineticState.equilibrium(g, b), u, FPStepConfig(dt=1e-2), step=7)
    assert exc.value.advisory_dt < 1e-2 and exc.value.step == 7


def test_explicit_and_implicit_variants_agree_to_first_order():
    g, b = Grid(8, 8), HermiteBasis(4)
    c0 = np.broadcast_to(coeffs_from_sigma(2.0, 0.1, 1.0, b), g.shape + (b.size,)).copy()
    u = VectorFieldMAC.zeros(g)
    outs = []
    for iq, ix in ((True, True), (False, False)):
        st = KineticState(c0.copy(), g, b)
        for _ in range(100):
            st = fp_step(st, u, FPStepConfig(dt=1e-3, implicit_q=iq, implicit_x=ix))
        outs.append(st.coeffs)
    assert np.abs(outs[0] - outs[1]).max() <= 1e-3


# --------------------------------------------------------------------------- grid oracle

def test_oracle_drift_free_fixed_point_and_positivity():
    qg = QGrid(121, 8.0)
    psi = fp_truncated_grid_oracle(np.ones((qg.n, qg.n)), SHEAR, None, nsteps=20, qgrid=qg, drift=False)
    assert np.abs(psi - 1).max() <= 1e-12
    Q1, Q2 = qg.mesh
    psi0 = np.exp(-((Q1 - 1) ** 2 + Q2**2)) * 3.0
    psi = fp_truncated_grid_oracle(psi0, SHEAR, None, nsteps=50, qgrid=qg, drift=False)
    assert psi.min() >= 0


def test_oracle_untruncated_shear_matches_spectral():
    qg = QGrid(161, 8.0)
    T = 0.1
    from dumbbell.qgrid_oracle import stable_dt
    n = int(math.ceil(T / stable_dt(qg, SHEAR)))
    psi = fp_truncated_grid_oracle(np.ones((qg.n, qg.n)), SHEAR, None, dt=T / n, nsteps=n, qgrid=qg)
    b = HermiteBasis(4)
    c = expm(T * homogeneous_matrix(SHEAR, b)) @ b.unit(0, 0)
    _, sigma, _ = moments(c, b)
    assert np.abs(grid_sigma(psi, qg) - sigma).max() <= 1e-3


def test_oracle_rejects_mass_at_the_box_edge():
    qg = QGrid(41, 3.0)
    with pytest.raises(OracleInvalidError):
        fp_truncated_grid_oracle(np.ones((qg.n, qg.n)), SHEAR, None, nsteps=1, qgrid=qg)

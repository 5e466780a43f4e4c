"""Configuration space q in R^2: Maxwellian, orthonormal Hermite basis, quadrature,
moments, truncation operators and entropy functionals.

A density ``psi_hat`` at one spatial point is a coefficient vector ``c`` over
the index set ``K = {(k1, k2): k1 + k2 <= N}`` with

    psi_hat(q) = sum_k c_k h_k1(q1) h_k2(q2),   h_n = He_n / sqrt(n!)

so the basis is orthonormal in L^2 with weight M.  Coefficient arrays may
carry any number of leading (spatial) axes; the last axis is the index set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import ConfigurationError

DIM = 2
EPS_CLIP = 1e-12


@dataclass(frozen=True)
class MaxwellianSpec:
    """Hookean Maxwellian in d = 2: spring constant 1, potential U(s) = s."""

    d: int = DIM
    H: float = 1.0

    @property
    def Z(self) -> float:
        return normalization_constant(self.d)

    def __call__(self, q):
        return maxwellian_eval(q)

    def potential(self, s):
        return s


def normalization_constant(d: int = DIM) -> float:
    return (2.0 * np.pi) ** (d / 2)


def maxwellian_eval(q) -> np.ndarray:
    """M(q) = exp(-|q|^2/2)/Z; ``q`` has its components on the last axis."""
    q = np.asarray(q, dtype=float)
    return np.exp(-0.5 * np.sum(q * q, axis=-1)) / normalization_constant(q.shape[-1])


def hermite_1d(n_max: int, x) -> np.ndarray:
    """Normalised probabilists' Hermite values, shape ``(n_max+1,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    h = np.empty((n_max + 1,) + x.shape)
    h[0] = 1.0
    if n_max >= 1:
        h[1] = x
    for n in range(1, n_max):
        h[n + 1] = (x * h[n] - np.sqrt(n) * h[n - 1]) / np.sqrt(n + 1)
    return h


@lru_cache(maxsize=None)
def _gh_rule(nodes: int):
    x, w = hermegauss(nodes)
    return x, w / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Quadrature:
    """Tensor Gauss-Hermite rule for the weight M: ``int M f dq ~ sum w f(q)``."""

    nodes: int

    def __post_init__(self):
        if self.nodes < 2:
            raise ConfigurationError(f"quadrature needs at least 2 nodes per axis, got {self.nodes}")

    @cached_property
    def points(self) -> np.ndarray:
        x, _ = _gh_rule(self.nodes)
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        _, w = _gh_rule(self.nodes)
        return np.outer(w, w).ravel()

    def integrate(self, values) -> np.ndarray:
        """Quadrature over the last axis of values sampled at ``points``."""
        return values @ self.weights


def gauss_hermite_quadrature(f, nodes: int):
    """``int M(q) f(q) dq`` with an ``nodes x nodes`` tensor rule; ``f(q1, q2)`` is vectorised."""
    quad = Quadrature(int(nodes))
    p = quad.points
    vals = np.broadcast_to(np.asarray(f(p[:, 0], p[:, 1]), dtype=float), p[:, 0].shape)
    return float(quad.integrate(vals))


class HermiteBasis:
    """Orthonormal Hermite basis of total degree <= N in two variables.

    Indices are ordered by total degree, then by descending ``k1``.
    """

    def __init__(self, max_degree: int):
        if int(max_degree) != max_degree or max_degree < 0:
            raise ConfigurationError(f"max_degree must be a nonnegative integer, got {max_degree}")
        self.N = int(max_degree)
        idx = [(n - j, j) for n in range(self.N + 1) for j in range(n + 1)]
        self.indices = np.array(idx, dtype=int)
        self._pos = {k: i for i, k in enumerate(idx)}
        self.size = len(idx)
        self.degree = self.indices.sum(axis=1)

    def __repr__(self):
        return f"HermiteBasis(N={self.N}, |K|={self.size})"

    def __eq__(self, other):
        return isinstance(other, HermiteBasis) and other.N == self.N

    def __hash__(self):
        return hash(("HermiteBasis", self.N))

    def index(self, k1: int, k2: int) -> int:
        """Position of multi-index (k1, k2), or -1 if outside the basis."""
        return self._pos.get((int(k1), int(k2)), -1)

    def unit(self, k1: int, k2: int) -> np.ndarray:
        c = np.zeros(self.size)
        c[self.index(k1, k2)] = 1.0
        return c

    def _ladder(self, axis: int, up: bool) -> np.ndarray:
        m = np.zeros((self.size, self.size))
        for col, k in enumerate(self.indices):
            kk = list(k)
            if up:
                kk[axis] += 1
                f = np.sqrt(k[axis] + 1)
            else:
                if k[axis] == 0:
                    continue
                kk[axis] -= 1
                f = np.sqrt(k[axis])
            row = self.index(*kk)
            if row >= 0:
                m[row, col] = f
        return m

    @cached_property
    def raising(self):
        """``R_i``: multiplication by the creation operator, truncated at degree N."""
        return (self._ladder(0, True), self._ladder(1, True))

    @cached_property
    def lowering(self):
        """``A_i``: coefficient action of d/dq_i."""
        return (self._ladder(0, False), self._ladder(1, False))

    def multiply_q(self, i: int) -> np.ndarray:
        """Coefficient action of multiplication by q_i (truncated)."""
        return self.raising[i] + self.lowering[i]

    @cached_property
    def drift_blocks(self):
        """``E[i][j] = R_i A_j + R_i R_j`` so that the drift is ``sum A_ij E[i][j]``."""
        R, A = self.raising, self.lowering
        return [[R[i] @ A[j] + R[i] @ R[j] for j in range(2)] for i in range(2)]

    def evaluate(self, c, q) -> np.ndarray:
        """psi_hat at points ``q`` (shape (P, 2)); result shape ``c.shape[:-1] + (P,)``."""
        return np.asarray(c) @ self.values(q)

    def values(self, q) -> np.ndarray:
        """Basis values, shape (|K|, P)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        h1 = hermite_1d(self.N, q[:, 0])
        h2 = hermite_1d(self.N, q[:, 1])
        return h1[self.indices[:, 0]] * h2[self.indices[:, 1]]

    def gradients(self, q):
        """Basis derivatives (d/dq1, d/dq2), each shape (|K|, P)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        h1 = hermite_1d(self.N, q[:, 0])
        h2 = hermite_1d(self.N, q[:, 1])
        d1 = np.zeros_like(h1)
        d2 = np.zeros_like(h2)
        n = np.sqrt(np.arange(1, self.N + 1))[:, None]
        d1[1:] = n * h1[:-1]
        d2[1:] = n * h2[:-1]
        k1, k2 = self.indices[:, 0], self.indices[:, 1]
        return d1[k1] * h2[k2], h1[k1] * d2[k2]

    def project(self, f, nodes: int | None = None) -> np.ndarray:
        """Coefficients of ``f(q1, q2)`` by quadrature (default ``N + 20`` nodes)."""
        quad = Quadrature(nodes or self.N + 20)
        p = quad.points
        vals = np.asarray(f(p[:, 0], p[:, 1]), dtype=float)
        return (self.values(p) * vals) @ quad.weights

    @lru_cache(maxsize=8)
    def tables(self, nodes: int):
        """(quadrature, values, grad1, grad2) cached per node count."""
        quad = Quadrature(int(nodes))
        V = self.values(quad.points)
        G1, G2 = self.gradients(quad.points)
        return quad, V, G1, G2

    def gram(self, nodes: int | None = None) -> np.ndarray:
        quad, V, _, _ = self.tables(nodes or self.N + 2)
        return (V * quad.weights) @ V.T


def _require(basis: HermiteBasis, c):
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != basis.size:
        raise ConfigurationError(f"coefficient axis has length {c.shape[-1]}, basis needs {basis.size}")
    return c


def moments(c, basis: HermiteBasis):
    """Return ``(rho, sigma, tau)``; sigma/tau have the 2x2 matrix on the last two axes."""
    if basis.N < 2:
        raise ConfigurationError("moments need max_degree >= 2 (sigma involves degree-2 modes)")
    c = _require(basis, c)
    rho = c[..., 0]
    s11 = rho + np.sqrt(2.0) * c[..., basis.index(2, 0)]
    s22 = rho + np.sqrt(2.0) * c[..., basis.index(0, 2)]
    s12 = c[..., basis.index(1, 1)]
    sigma = np.stack([np.stack([s11, s12], -1), np.stack([s12, s22], -1)], -2)
    tau = sigma - rho[..., None, None] * np.eye(2)
    return rho, sigma, tau


def sigma_components(c, basis: HermiteBasis) -> np.ndarray:
    """(s11, s12, s22) stacked on the first axis; leading axes of ``c`` follow."""
    c = _require(basis, c)
    r2 = np.sqrt(2.0)
    return np.stack([
        c[..., 0] + r2 * c[..., basis.index(2, 0)],
        c[..., basis.index(1, 1)],
        c[..., 0] + r2 * c[..., basis.index(0, 2)],
    ])


def coeffs_from_sigma(s11, s12, s22, basis: HermiteBasis) -> np.ndarray:
    """Degree-2 density ``1 + (q^T B q - tr B)/2`` with ``B = sigma - Id``; its moments are sigma."""
    s11, s12, s22 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (s11, s12, s22)))
    c = np.zeros(s11.shape + (basis.size,))
    c[..., 0] = 1.0
    c[..., basis.index(2, 0)] = (s11 - 1.0) / np.sqrt(2.0)
    c[..., basis.index(0, 2)] = (s22 - 1.0) / np.sqrt(2.0)
    c[..., basis.index(1, 1)] = s12
    return c


def gaussian_coeffs(S, basis: HermiteBasis, nodes: int | None = None) -> np.ndarray:
    """Coefficients of psi_hat = N(0, S)/M for an SPD 2x2 covariance S.

    The ratio is square integrable against M only when S < 2 Id.
    """
    S = np.asarray(S, dtype=float)
    ev = np.linalg.eigvalsh(S)
    if ev.min() <= 0 or ev.max() >= 2:
        raise ConfigurationError(f"gaussian covariance needs eigenvalues in (0, 2), got {ev}")
    Si = np.linalg.inv(S)
    det = np.linalg.det(S)
    P = Si - np.eye(2)

    def f(q1, q2):
        quad = P[0, 0] * q1 * q1 + 2 * P[0, 1] * q1 * q2 + P[1, 1] * q2 * q2
        return np.exp(-0.5 * quad) / np.sqrt(det)

    return basis.project(f, nodes or 4 * basis.N + 40)


# --------------------------------------------------------------------------- truncation

def chi(s):
    """C^1 polynomial cutoff: 1 on [0, 1], smooth step down on [1, 2], 0 beyond."""
    s = np.asarray(s, dtype=float)
    r = s - 1.0
    mid = 1.0 - r * r * (3.0 - 2.0 * r)
    return np.where(s <= 1.0, 1.0, np.where(s >= 2.0, 0.0, mid))


def _chi_integral(s):
    """int_0^s chi(r) dr for s >= 0."""
    s = np.asarray(s, dtype=float)
    r = np.clip(s - 1.0, 0.0, 1.0)
    # int_0^r (1 - 3x^2 + 2x^3) dx
    tail = r - r**3 + 0.5 * r**4
    return np.minimum(s, 1.0) + tail


@dataclass(frozen=True)
class TruncationSpec:
    """Cutoffs chi_R, T_L, Lambda_L.

    ``squared_radius`` selects whether chi_R acts on |q|^2 (default) or on |q|.
    ``L = inf`` disables the amplitude truncation.
    """

    R: float
    L: float = float("inf")
    squared_radius: bool = True

    def __post_init__(self):
        if not self.R > 0 or not self.L > 0:
            raise ConfigurationError("truncation parameters R, L must be positive")

    def chi_R(self, s):
        return chi(np.asarray(s, dtype=float) / self.R)

    def chi_L(self, s):
        if np.isinf(self.L):
            return np.ones_like(np.asarray(s, dtype=float))
        return chi(np.asarray(s, dtype=float) / self.L)

    def T_L(self, s):
        s = np.asarray(s, dtype=float)
        if np.isinf(self.L):
            return s.copy()
        return np.where(s < 0, s, self.L * _chi_integral(np.maximum(s, 0.0) / self.L))

    def Lambda_L(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < 0, s, s * self.chi_L(np.maximum(s, 0.0)))

    def radial(self, q) -> np.ndarray:
        """chi_R evaluated at configuration points q (components on last axis)."""
        q = np.asarray(q, dtype=float)
        r2 = np.sum(q * q, axis=-1)
        return self.chi_R(r2 if self.squared_radius else np.sqrt(r2))

    @property
    def support_radius(self) -> float:
        """|q| beyond which chi_R vanishes."""
        return float(np.sqrt(2 * self.R) if self.squared_radius else 2 * self.R)


def apply_truncation(t: TruncationSpec, which: str, s):
    if which == "chiR":
        return t.chi_R(s)
    if which == "TL":
        return t.T_L(s)
    if which == "LambdaL":
        return t.Lambda_L(s)
    raise ConfigurationError(f"unknown truncation {which!r}")


# --------------------------------------------------------------------------- entropy

def F(s):
    """Relative entropy density s ln s - s + 1, with F(0) = 1."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)) - s + 1.0, 1.0)


def nodal_entropy_terms(c, basis: HermiteBasis, nodes: int | None = None) -> dict:
    """Quadrature-node quantities shared by the entropy functionals.

    Returns the quadrature rule, the nodal values ``psi``, the clipped values
    ``pc = max(psi, EPS_CLIP)``, ``log_pc``, and the per-point entropy,
    q-Fisher information and negative mass (integrated over q).
    """
    c = _require(basis, c)
    nodes = nodes or default_nodes(basis)
    if nodes < basis.N + 2:
        raise ConfigurationError(f"entropy quadrature needs >= N+2 = {basis.N + 2} nodes")
    quad, V, G1, G2 = basis.tables(nodes)
    psi = c @ V
    pc = np.maximum(psi, EPS_CLIP)
    lp = np.log(pc)
    ent = quad.integrate(pc * lp - pc + 1.0)
    g1 = c @ G1
    g2 = c @ G2
    fish = np.where(psi > EPS_CLIP, (g1 * g1 + g2 * g2) / (4.0 * pc), 0.0)
    return dict(quad=quad, psi=psi, pc=pc, log_pc=lp, entropy=ent, fisher_q=quad.integrate(fish),
                neg=quad.integrate(np.maximum(-psi, 0.0)))


def entropy_and_fisher(c, basis: HermiteBasis, nodes: int | None = None):
    """Return ``(entropy, fisher_q, neg_fraction)`` per leading index of ``c``.

    entropy = int M F(max(psi, eps)); fisher_q = int M |grad_q sqrt(max(psi, eps))|^2;
    neg_fraction = int M max(-psi, 0).
    """
    d = nodal_entropy_terms(c, basis, nodes)
    return d["entropy"], d["fisher_q"], d["neg"]


def default_nodes(basis: HermiteBasis) -> int:
    return basis.N + 8

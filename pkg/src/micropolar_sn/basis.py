"""Divergence-free sine Galerkin space on the unit square and operator assembly.

Scalar modes are ``phi_kl = sin(k pi y1) sin(l pi y2)``; velocity modes are
``Z_kl = M psi_kl`` with ``psi_kl = curl(phi_kl)``, so ``div(M^{-1} z) = 0``
holds exactly for every coefficient vector.  Matrices follow the convention
``A[a, b] = (operator applied to mode b, tested against mode a)``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import QuadratureOrderError, SizeError
from .fields import CoefficientFields
from .motion import ROT, coefficients_at

MAX_MODES = 32


def _sines(n, x):
    """Rows ``sin(k pi x)``, ``k pi cos(k pi x)``, ``-(k pi)^2 sin(k pi x)`` for ``k = 1..n``."""
    k = np.arange(1, n + 1)[:, None] * np.pi
    s = np.sin(k * x[None, :])
    c = np.cos(k * x[None, :])
    return s, k * c, -(k * k) * s


@dataclass
class Tabulation:
    """Basis values and derivatives at a set of points (last axis)."""
    phi: np.ndarray    # (n, P)
    dphi: np.ndarray   # (n, 2, P)
    d2phi: np.ndarray  # (n, 2, 2, P)
    psi: np.ndarray    # (n, 2, P)
    dpsi: np.ndarray   # (n, 2, 2, P)  dpsi[a, c, l] = d psi_a,c / d y_l
    Z: np.ndarray      # (n, 2, P)     M psi
    DZ: np.ndarray     # (n, 2, 2, P)


class SpectralBasis:
    def __init__(self, n_modes, M=None):
        if not (isinstance(n_modes, (int, np.integer)) and 1 <= n_modes <= MAX_MODES):
            raise SizeError(f"number of modes per axis must be in 1..{MAX_MODES}, got {n_modes!r}")
        self.n_modes = int(n_modes)
        self.M = np.eye(2) if M is None else np.asarray(M, dtype=float).reshape(2, 2)
        self.modes = [(k, l) for k in range(1, self.n_modes + 1) for l in range(1, self.n_modes + 1)]
        self._tab_cache = {}

    @property
    def dim(self):
        return self.n_modes ** 2

    def __repr__(self):
        return f"SpectralBasis(N={self.n_modes})"

    def index(self, k, l):
        return (k - 1) * self.n_modes + (l - 1)

    @cached_property
    def eigenvalues(self):
        """``pi^2 (k^2 + l^2)`` for each mode (Dirichlet Laplacian)."""
        return np.array([np.pi ** 2 * (k * k + l * l) for k, l in self.modes])

    def tabulate(self, points):
        points = np.asarray(points, dtype=float).reshape(2, -1)
        n = self.n_modes
        s1, c1, e1 = _sines(n, points[0])
        s2, c2, e2 = _sines(n, points[1])
        P = points.shape[1]
        # mode index a = (k-1) n + (l-1): outer over (k, l)
        def outer(a, b):
            return (a[:, None, :] * b[None, :, :]).reshape(n * n, P)
        phi = outer(s1, s2)
        d1, d2 = outer(c1, s2), outer(s1, c2)
        d11, d22, d12 = outer(e1, s2), outer(s1, e2), outer(c1, c2)
        dphi = np.stack([d1, d2], axis=1)
        d2phi = np.stack([np.stack([d11, d12], 1), np.stack([d12, d22], 1)], axis=1)
        psi = np.stack([d2, -d1], axis=1)
        dpsi = np.stack([d2phi[:, 1, :, :], -d2phi[:, 0, :, :]], axis=1)
        Z = np.einsum("ij,ajp->aip", self.M, psi)
        DZ = np.einsum("ij,ajlp->ailp", self.M, dpsi)
        return Tabulation(phi, dphi, d2phi, psi, dpsi, Z, DZ)

    def grid_table(self, grid):
        key = id(grid)
        hit = self._tab_cache.get(key)
        if hit is None or hit[0] is not grid:
            hit = (grid, self.tabulate(grid.nodes))
            self._tab_cache[key] = hit
        return hit[1]


def build_basis(n_modes, M=None):
    return SpectralBasis(n_modes, M)


def evaluate(basis, coefficients, points, kind="scalar"):
    """Values of ``sum_a c_a mode_a`` at ``points`` (shape ``(2, ...)``).

    ``kind="velocity"`` evaluates ``z = M zeta`` (shape ``(2, ...)``),
    ``kind="stream"`` evaluates ``zeta`` itself.
    """
    points = np.asarray(points, dtype=float)
    shape = points.shape[1:]
    tab = basis.tabulate(points.reshape(2, -1))
    c = np.asarray(coefficients, dtype=float)
    if kind == "scalar":
        return (c @ tab.phi).reshape(shape)
    if kind == "velocity":
        return np.einsum("a,acp->cp", c, tab.Z).reshape((2,) + shape)
    if kind == "stream":
        return np.einsum("a,acp->cp", c, tab.psi).reshape((2,) + shape)
    raise ValueError(f"unknown kind {kind!r}")


def project(basis, function, grid, kind="scalar"):
    """L2 projection onto the span (exact on the span up to quadrature)."""
    tab = basis.grid_table(grid)
    w = grid.weights
    vals = np.asarray(function(grid.nodes), dtype=float)
    if kind == "scalar":
        G = _gram(tab.phi, tab.phi, w)
        rhs = tab.phi @ (w * vals)
    elif kind == "velocity":
        G = _gram(tab.Z, tab.Z, w)
        rhs = np.einsum("acp,cp,p->a", tab.Z, vals, w)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return np.linalg.solve(G, rhs)


@dataclass
class StaticOperators:
    """Time-independent integrals; the time dependence of every transformed
    coefficient enters through the scalars ``k(t)``, ``k'(t)``."""
    mass_v: np.ndarray
    mass_w: np.ndarray
    grad_v: np.ndarray    # (2, 2, n, n): int dZ_b/dy_r . dZ_a/dy_l  at [l, r]
    grad_w: np.ndarray
    ydot_v: np.ndarray    # int (y . grad Z_b) . Z_a
    ydot_w: np.ndarray
    curl_phi: np.ndarray  # (2, 2, n, n): int Z_a,i (ROT grad phi_c)_k  at [i, k]
    dpsi_phi: np.ndarray  # (2, 2, n, n): int d(M psi_b)_i / dy_l  phi_a  at [i, l]


def _gram(test, trial, w):
    """``out[a, b] = sum over components and nodes of test_a * trial_b * w``."""
    n = test.shape[0]
    return (test * w).reshape(n, -1) @ trial.reshape(trial.shape[0], -1).T


def static_operators(basis, grid):
    tab = basis.grid_table(grid)
    w = grid.weights
    y = grid.nodes
    phi, dphi, Z, DZ = tab.phi, tab.dphi, tab.Z, tab.DZ
    mass_v = _gram(Z, Z, w)
    mass_w = _gram(phi, phi, w)
    grad_v = np.array([[_gram(DZ[:, :, l], DZ[:, :, r], w) for r in range(2)] for l in range(2)])
    grad_w = np.array([[_gram(dphi[:, l], dphi[:, r], w) for r in range(2)] for l in range(2)])
    ydot_v = _gram(Z, np.einsum("lp,bclp->bcp", y, DZ), w)
    ydot_w = _gram(phi, np.einsum("lp,blp->bp", y, dphi), w)
    rot_grad = np.einsum("ij,cjp->cip", ROT, dphi)
    curl_phi = np.array([[_gram(Z[:, i], rot_grad[:, k], w) for k in range(2)] for i in range(2)])
    dpsi_phi = np.array([[_gram(phi, DZ[:, i, l], w) for l in range(2)] for i in range(2)])
    return StaticOperators(mass_v, mass_w, grad_v, grad_w, ydot_v, ydot_w, curl_phi, dpsi_phi)


@dataclass
class DiscreteOperators:
    t: float
    mass_v: np.ndarray
    mass_w: np.ndarray
    stiff_v: np.ndarray
    stiff_w: np.ndarray
    drift_v: np.ndarray
    drift_w: np.ndarray
    adv_v: np.ndarray
    adv_w: np.ndarray
    lin_v: np.ndarray
    lin_w: np.ndarray
    curl_wv: np.ndarray
    curl_zw: np.ndarray
    dsym_v: np.ndarray
    weight: float

    @property
    def velocity_block(self):
        return self.stiff_v + self.drift_v + self.adv_v + self.lin_v

    @property
    def scalar_block(self):
        return self.stiff_w + self.drift_w + self.adv_w

    def operator(self, coupling=True):
        """Spatial operator ``L`` with ``Mass x' + L x = sources``."""
        n = self.mass_v.shape[0]
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.velocity_block
        out[n:, n:] = self.scalar_block
        out[n:, :n] = self.lin_w
        if coupling:
            out[:n, n:] = -self.curl_wv
            out[n:, :n] -= self.curl_zw
        return out

    def mass(self):
        n = self.mass_v.shape[0]
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.mass_v
        out[n:, n:] = self.mass_w
        return out


def check_quadrature(basis, geometry):
    if geometry.quad.points < basis.n_modes + 2:
        raise QuadratureOrderError(
            f"{geometry.quad.points} Gauss points per cell under-integrates N={basis.n_modes} "
            f"(need at least {basis.n_modes + 2})")


def curl_source_matrix(beta, curl_phi_static, cof_inv):
    """``int Z_a . cof(K^{-1})^T ROT grad phi_c``."""
    return np.einsum("ik,ikac->ac", cof_inv.T, curl_phi_static)


def curl_z_matrix(beta, dpsi_phi):
    """Literal curl formula of the scalar equation applied to velocity modes.

    ``(b11 + b22)(dz2/dy1 - dz1/dy2) + sum_{i,j} (-1)^{j+1} b_ij dz_i/dy_{3-j}``.
    """
    d = dpsi_phi
    out = (beta[0, 0] + beta[1, 1]) * (d[1, 0] - d[0, 1])
    for i in range(2):
        for j in range(2):
            out = out + (-1) ** j * beta[i, j] * d[i, 1 - j]
    return out


def assemble(basis, geometry, motion, fields=None, t=0.0, static=None):
    check_quadrature(basis, geometry)
    fields = fields if fields is not None else CoefficientFields()
    c = coefficients_at(motion, t)
    grid = geometry.grid
    st = static if static is not None else static_operators(basis, grid)
    n = basis.dim
    A = c.diffusion
    stiff_v = np.einsum("lr,lrab->ab", A, st.grad_v)
    stiff_w = np.einsum("lr,lrab->ab", A, st.grad_w)
    rate = c.drift_rate
    drift_v = -rate * st.ydot_v
    drift_w = -rate * st.ydot_w
    curl_wv = curl_source_matrix(c.beta, st.curl_phi, c.cof_inv)
    curl_zw = curl_z_matrix(c.beta, st.dpsi_phi)

    adv_v = np.zeros((n, n))
    adv_w = np.zeros((n, n))
    lin_v = np.zeros((n, n))
    lin_w = np.zeros((n, n))
    dsym_v = np.zeros((n, n))
    if not fields.is_zero:
        tab = basis.grid_table(grid)
        w = grid.weights
        y = grid.nodes
        if not fields.h.is_zero:
            h = fields.h(y, t)
            gh = fields.h.grad(y, t)          # gh[c, l] = dh_c/dy_l
            vel = c.beta @ h                  # K^{-1} h
            adv_v = _gram(tab.Z, np.einsum("lp,bclp->bcp", vel, tab.DZ), w)
            adv_w = _gram(tab.phi, np.einsum("lp,blp->bp", vel, tab.dphi), w)
            # (K^{-1} M psi_b . grad) h = (1/k) (psi_b . grad) h
            lin_v = _gram(tab.Z, np.einsum("blp,clp->bcp", tab.psi, gh), w) / c.k
            dsym_v = _dsym(tab, c.beta, h, w)
        if not fields.theta.is_zero:
            gt = fields.theta.grad(y, t)
            lin_w = _gram(tab.phi, np.einsum("blp,lp->bp", tab.psi, gt), w) / c.k
    return DiscreteOperators(t, st.mass_v, st.mass_w, stiff_v, stiff_w, drift_v, drift_w,
                             adv_v, adv_w, lin_v, lin_w, curl_wv, curl_zw, dsym_v, c.weight)


def _dsym(tab, beta, h, w):
    """``int (K^{-1})^T (DZ_b + DZ_b^T) h . Z_a`` with the symmetric gradient."""
    sym = tab.DZ + np.swapaxes(tab.DZ, 1, 2)          # [b, c, l, p]
    vec = np.einsum("bclp,lp->bcp", sym, h)
    vec = np.einsum("ic,bcp->bip", beta.T, vec)
    return _gram(tab.Z, vec, w)

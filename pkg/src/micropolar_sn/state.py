"""Implicit-Euler solver for the pulled-back linear micropolar system.

Unknown ``x = (zeta, w)`` holds velocity and micro-rotation coefficients.
One step from ``t_{m-1}`` to ``t_m`` solves

    (Mass + dt L(t_m)) x_m = Mass x_{m-1} + dt b_m,

where ``b_m`` is the load of the controls acting on the interval
``(t_{m-1}, t_m]``.  Controls are piecewise constant and stored with
interval ``m`` at array index ``m - 1``.  Control and observation samples
live on the quadrature nodes inside their rectangle only.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .basis import assemble, check_quadrature, static_operators
from .errors import GridMismatch, SingularStep
from .fields import CoefficientFields

COND_LIMIT = 1e14


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class InitialData:
    z0: np.ndarray
    w0: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @property
    def x0(self):
        return np.concatenate([self.z0, self.w0])


@dataclass
class TrajectorySolution:
    grid: TimeGrid
    zeta: np.ndarray   # (n_steps + 1, n)
    w: np.ndarray      # (n_steps + 1, n)

    @classmethod
    def from_x(cls, grid, X):
        n = X.shape[1] // 2
        return cls(grid, X[:, :n].copy(), X[:, n:].copy())

    @property
    def x(self):
        return np.concatenate([self.zeta, self.w], axis=1)

    @property
    def terminal(self):
        return self.x[-1]

    def __add__(self, other):
        return TrajectorySolution(self.grid, self.zeta + other.zeta, self.w + other.w)

    def __sub__(self, other):
        return TrajectorySolution(self.grid, self.zeta - other.zeta, self.w - other.w)


@dataclass
class Region:
    """Quadrature nodes of one rectangle with the basis tabulated on them."""
    name: str
    idx: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray
    Z: np.ndarray      # (n, 2, q)
    phi: np.ndarray    # (n, q)

    @property
    def size(self):
        return self.idx.size


@dataclass
class ControlSet:
    """Leader pair ``(f, g)`` on O and follower controls ``v[i]``, ``u[i]`` on O_i.

    Vector samples have shape ``(n_steps, 2, q)`` and scalar samples
    ``(n_steps, q)`` where ``q`` counts the nodes of the region.  ``None``
    stands for zero.
    """
    f: np.ndarray = None
    g: np.ndarray = None
    v: tuple = (None, None)
    u: tuple = (None, None)

    def entries(self):
        """Yield ``(region name, kind, samples)`` for the nonzero controls."""
        if self.f is not None:
            yield "O", "vector", self.f
        if self.g is not None:
            yield "O", "scalar", self.g
        for i in range(2):
            if self.v[i] is not None:
                yield f"O{i + 1}", "vector", self.v[i]
            if self.u[i] is not None:
                yield f"O{i + 1}", "scalar", self.u[i]

    @classmethod
    def zeros(cls, ctx):
        s = ctx.grid.n_steps
        nO, n1, n2 = (ctx.region(r).size for r in ("O", "O1", "O2"))
        return cls(np.zeros((s, 2, nO)), np.zeros((s, nO)),
                   (np.zeros((s, 2, n1)), np.zeros((s, 2, n2))),
                   (np.zeros((s, n1)), np.zeros((s, n2))))

    def leader_only(self):
        return ControlSet(self.f, self.g)

    def followers_only(self):
        return ControlSet(None, None, self.v, self.u)


class Context:
    """Everything fixed for a run: discretization, motion, fields, time grid.

    Step matrices and their LU factors are built once on construction.
    ``coupling=False`` removes the two curl coupling terms (used for closed
    form checks of the uncoupled scalar dynamics).
    """

    def __init__(self, basis, geometry, motion, grid, fields=None, coupling=True):
        check_quadrature(basis, geometry)
        if abs(grid.T - motion.T) > 1e-12 * max(1.0, motion.T):
            raise GridMismatch(f"time grid T={grid.T} differs from motion T={motion.T}")
        if not np.allclose(basis.M, motion.M, rtol=0, atol=0):
            raise GridMismatch("basis substitution matrix differs from the motion matrix M")
        self.basis = basis
        self.geometry = geometry
        self.motion = motion
        self.grid = grid
        self.fields = fields if fields is not None else CoefficientFields()
        self.coupling = coupling
        self.n = basis.dim
        self.static = static_operators(basis, geometry.grid)
        times = grid.times[1:]
        self.ops = [assemble(basis, geometry, motion, self.fields, t, self.static) for t in times]
        self.rho = np.array([op.weight for op in self.ops])
        self.mass = self.ops[0].mass()
        dt = grid.dt
        self.step_matrices = []
        self.lu = []
        for m, op in enumerate(self.ops, start=1):
            S = self.mass + dt * op.operator(coupling)
            cond = np.linalg.cond(S)
            if not np.isfinite(cond) or cond > COND_LIMIT:
                raise SingularStep(f"step {m}: condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
            self.step_matrices.append(S)
            self.lu.append(lu_factor(S))
        self._regions = {}

    @property
    def dt(self):
        return self.grid.dt

    @property
    def n_steps(self):
        return self.grid.n_steps

    def region(self, name):
        hit = self._regions.get(name)
        if hit is None:
            rect = self.geometry.resolve(name)
            qgrid = self.geometry.grid
            idx = np.flatnonzero(rect.indicator(qgrid.nodes))
            tab = self.basis.grid_table(qgrid)
            hit = Region(name, idx, qgrid.weights[idx], qgrid.nodes[:, idx],
                         tab.Z[:, :, idx], tab.phi[:, idx])
            self._regions[name] = hit
        return hit

    # loads and observations -------------------------------------------------

    def load(self, region, kind, samples):
        """Coefficient-space load ``(n_steps, 2n)`` of control samples."""
        r = self.region(region)
        samples = np.asarray(samples, dtype=float)
        self._check_samples(r, kind, samples)
        out = np.zeros((self.n_steps, 2 * self.n))
        if kind == "vector":
            out[:, :self.n] = np.einsum("acq,mcq->ma", r.Z, samples * r.weights)
        else:
            out[:, self.n:] = (samples * r.weights) @ r.phi.T
        return out

    def _check_samples(self, r, kind, samples):
        want = (self.n_steps, 2, r.size) if kind == "vector" else (self.n_steps, r.size)
        if samples.shape != want:
            raise GridMismatch(f"{kind} samples on {r.name} have shape {samples.shape}, expected {want}")

    def control_load(self, controls):
        total = np.zeros((self.n_steps, 2 * self.n))
        for region, kind, samples in controls.entries():
            total += self.load(region, kind, samples)
        return total

    def observe(self, region, kind, X):
        """Node values of a trajectory on a region at ``t_1..t_n``.

        ``X`` has shape ``(n_steps + 1, 2n)``; the initial snapshot is skipped.
        """
        r = self.region(region)
        X = np.asarray(X)
        if X.shape[0] != self.n_steps + 1:
            raise GridMismatch(f"trajectory has {X.shape[0]} snapshots, expected {self.n_steps + 1}")
        if kind == "vector":
            return np.einsum("acq,ma->mcq", r.Z, X[1:, :self.n])
        return X[1:, self.n:] @ r.phi

    def represent(self, region, kind, P):
        """Riesz representer of the load functional of adjoint states ``P``.

        ``P[m - 1]`` is the adjoint at step ``m``.  The result ``g`` satisfies
        ``<g, s>_rho = sum_m dt P[m-1] . load(s)[m-1]`` for every sample ``s``.
        """
        r = self.region(region)
        if kind == "vector":
            vals = np.einsum("acq,ma->mcq", r.Z, P[:, :self.n])
            return vals / self.rho[:, None, None]
        return (P[:, self.n:] @ r.phi) / self.rho[:, None]

    def inner(self, region, kind, a, b):
        """rho-weighted space-time inner product on a region."""
        r = self.region(region)
        if kind == "vector":
            per = np.einsum("mcq,mcq,q->m", a, b, r.weights)
        else:
            per = np.einsum("mq,mq,q->m", a, b, r.weights)
        return float(self.dt * np.dot(self.rho, per))

    def sample_target(self, region, kind, target):
        """Node samples of a closed-form target field at ``t_1..t_n``."""
        r = self.region(region)
        out = [target(r.nodes, t) for t in self.grid.times[1:]]
        return np.asarray(out, dtype=float)

    # sweeps ---------------------------------------------------------------

    def forward(self, loads, x0=None):
        """Run the scheme; ``loads`` is ``(n_steps, 2n[, k])``."""
        loads = np.asarray(loads, dtype=float)
        shape = loads.shape[1:]
        X = np.zeros((self.n_steps + 1,) + shape)
        if x0 is not None:
            X[0] = x0
        dt = self.dt
        for m in range(1, self.n_steps + 1):
            rhs = self.mass @ X[m - 1] + dt * loads[m - 1]
            X[m] = lu_solve(self.lu[m - 1], rhs)
        return X

    def backward(self, sources, terminal=None):
        """Transposed sweep: ``S_m^T p_m = Mass p_{m+1} + sources[m-1]``.

        ``p_{n+1}`` is ``terminal`` (zero by default).  Returns ``P`` with
        ``P[m - 1] = p_m``.
        """
        sources = np.asarray(sources, dtype=float)
        P = np.zeros(sources.shape)
        nxt = np.zeros(sources.shape[1:]) if terminal is None else np.asarray(terminal, float)
        for m in range(self.n_steps, 0, -1):
            rhs = self.mass @ nxt + sources[m - 1]
            P[m - 1] = lu_solve(self.lu[m - 1], rhs, trans=1)
            nxt = P[m - 1]
        return P

    def tracking_source(self, region, kind, residual, weight=1.0):
        """Adjoint source of ``weight/2 ||residual||^2_rho`` (residual on nodes)."""
        r = self.region(region)
        scale = self.dt * self.rho * weight
        out = np.zeros((self.n_steps, 2 * self.n))
        if kind == "vector":
            out[:, :self.n] = np.einsum("acq,mcq,m->ma", r.Z, residual * r.weights, scale)
        else:
            out[:, self.n:] = ((residual * r.weights) @ r.phi.T) * scale[:, None]
        return out


def solve_state(controls, init, ctx):
    x0 = None if init is None else init.x0
    X = ctx.forward(ctx.control_load(controls), x0)
    return TrajectorySolution.from_x(ctx.grid, X)


def solve_follower_response(i, v_i, u_i, ctx):
    if i not in (1, 2):
        raise ValueError("follower index must be 1 or 2")
    v = [None, None]
    u = [None, None]
    v[i - 1], u[i - 1] = v_i, u_i
    return solve_state(ControlSet(None, None, tuple(v), tuple(u)), None, ctx)


def solve_uncontrolled(f, g, init, ctx):
    return solve_state(ControlSet(f, g), init, ctx)


def mass_norm(ctx, x):
    return float(np.sqrt(x @ ctx.mass @ x))

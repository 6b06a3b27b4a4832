"""Leader control by the dual (HUM-type) method.

With the followers at their Nash response, the terminal state is an affine
function of the leader control: ``x(T) = L0 (f, g) + c``.  The leader asks
for ``||x(T) - target|| <= eps`` at least cost.  Its dual is the
minimization over terminal data ``td`` of

    Theta(td) = 1/2 ||L0* td||^2_rho + eps (sqrt(||td||^2 + delta^2) - delta) - (td, target - c)

and the optimal leader control is ``L0* td``, i.e. the backward solution of
the coupled system restricted to O.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize_scalar

from .adjoint import TerminalData, leader_controls, solve_leader_coupled
from .errors import MaxIterations
from .functionals import eval_J
from .nash import solve_nash
from .state import TrajectorySolution


def _mass_inner(ctx, a, b):
    return float(a @ ctx.mass @ b)


def _mass_norm(ctx, a):
    return float(np.sqrt(max(_mass_inner(ctx, a, a), 0.0)))


def _td_vec(td):
    return td.x if isinstance(td, TerminalData) else np.asarray(td, dtype=float)


def follower_free(weights):
    """The same costs with zero follower targets (the linear part of the game)."""
    return weights.with_(z_d=(None, None), w_d=(None, None))


def apply_L0(f, g, weights, ctx, tol=1e-12):
    """Terminal state for leader control ``(f, g)`` with zero data and Nash followers."""
    w0 = follower_free(weights)
    nash = solve_nash(f, g, None, w0, ctx, tol=tol)
    X = ctx.forward(ctx.control_load(nash.xi.controls(f, g)))
    return X[-1]


def apply_L0_adjoint(td, weights, ctx, tol=1e-13):
    sol = solve_leader_coupled(td, weights, ctx, tol=tol)
    f, g = leader_controls(ctx, sol.P)
    return f, g, sol


def free_terminal(weights, ctx, init=None, tol=1e-12):
    """``c``: terminal state with zero leader control (followers still respond)."""
    nash = solve_nash(None, None, init, weights, ctx, tol=tol)
    X = ctx.forward(ctx.control_load(nash.xi.controls()), None if init is None else init.x0)
    return X[-1]


@dataclass
class DualProblem:
    """Data fixed during the dual minimization."""
    ctx: object
    weights: object
    init: object
    target: np.ndarray
    offset: np.ndarray
    delta: float

    @classmethod
    def build(cls, weights, ctx, init=None, delta=None):
        target = weights.target(ctx.n)
        offset = free_terminal(weights, ctx, init)
        if delta is None:
            delta = 1e-6 * max(_mass_norm(ctx, target), 1e-300)
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        return cls(ctx, weights, init, target, offset, float(delta))

    @property
    def rhs(self):
        return self.target - self.offset

    def smooth_norm(self, x):
        return np.sqrt(_mass_inner(self.ctx, x, x) + self.delta ** 2)

    def value(self, x, quad):
        eps = self.weights.eps
        return quad + eps * (self.smooth_norm(x) - self.delta) - _mass_inner(self.ctx, x, self.rhs)

    def grad(self, x, L0L0x):
        sn = self.smooth_norm(x)
        smooth = self.weights.eps * x / sn if sn > 0 else np.zeros_like(x)
        return L0L0x + smooth - self.rhs


def _quad(ctx, f, g):
    return 0.5 * (ctx.inner("O", "vector", f, f) + ctx.inner("O", "scalar", g, g))


def theta(td, weights, ctx, delta=0.0, init=None, problem=None):
    prob = problem or DualProblem.build(weights, ctx, init, delta)
    x = _td_vec(td)
    f, g, _ = apply_L0_adjoint(x, weights, ctx)
    return prob.value(x, _quad(ctx, f, g))


def theta_grad(td, weights, ctx, delta=1e-6, init=None, problem=None):
    """Gradient of ``theta`` in the L2 (mass) metric, as a coefficient vector."""
    prob = problem or DualProblem.build(weights, ctx, init, delta)
    if prob.delta <= 0:
        raise ValueError("the gradient needs delta > 0")
    x = _td_vec(td)
    f, g, _ = apply_L0_adjoint(x, weights, ctx)
    return prob.grad(x, apply_L0(f, g, weights, ctx))


@dataclass
class DualIterate:
    td: TerminalData
    theta: float
    grad_norm: float
    coupled: object
    iterations: int = 0
    history: list = field(default_factory=list)
    problem: object = None


class _LinearImage:
    """Tracks ``L0* x`` and ``L0 L0* x`` along the iteration (both linear in x)."""

    def __init__(self, ctx, weights, n):
        self.ctx, self.weights = ctx, weights
        self.f = np.zeros((ctx.n_steps, 2, ctx.region("O").size))
        self.g = np.zeros((ctx.n_steps, ctx.region("O").size))
        self.image = np.zeros(2 * n)

    def exact(self, x):
        self.f, self.g, _ = apply_L0_adjoint(x, self.weights, self.ctx)
        self.image = apply_L0(self.f, self.g, self.weights, self.ctx)

    def direction(self, d):
        f, g, _ = apply_L0_adjoint(d, self.weights, self.ctx)
        return f, g, apply_L0(f, g, self.weights, self.ctx)


def minimize_theta(weights, ctx, delta=None, tol=1e-8, max_iter=500, init=None, refresh=10):
    """Polak-Ribiere nonlinear CG with exact line search, started at zero."""
    prob = DualProblem.build(weights, ctx, init, delta)
    if prob.delta <= 0:
        raise ValueError("minimize_theta needs delta > 0")
    n2 = 2 * ctx.n
    x = np.zeros(n2)
    lin = _LinearImage(ctx, weights, ctx.n)
    grad = prob.grad(x, lin.image)
    gnorm = _mass_norm(ctx, grad)
    goal = tol * max(1.0, _mass_norm(ctx, prob.target))
    history = [(0, prob.value(x, 0.0), gnorm)]
    d = -grad
    it = 0
    while gnorm > goal:
        if it >= max_iter:
            best = _finish(prob, x, lin, it, history)
            raise MaxIterations(f"dual minimization stopped at grad norm {gnorm:.3e} > {goal:.3e}", best)
        it += 1
        df, dg, dimage = lin.direction(d)
        # 1-D restriction of theta: quadratic part exact, smoothed norm evaluated directly
        qa = ctx.inner("O", "vector", lin.f, df) + ctx.inner("O", "scalar", lin.g, dg)
        qb = 2 * _quad(ctx, df, dg)
        q0 = _quad(ctx, lin.f, lin.g)

        def phi(s):
            return prob.value(x + s * d, q0 + s * qa + 0.5 * s * s * qb)

        slope = _mass_inner(ctx, grad, d)
        if slope >= 0:
            d = -grad
            continue
        s = _line_search(phi, qb, slope, prob, ctx, d)
        x = x + s * d
        lin.f, lin.g, lin.image = lin.f + s * df, lin.g + s * dg, lin.image + s * dimage
        if it % refresh == 0:
            lin.exact(x)
        new_grad = prob.grad(x, lin.image)
        beta = max(0.0, _mass_inner(ctx, new_grad, new_grad - grad) / max(_mass_inner(ctx, grad, grad), 1e-300))
        if it % n2 == 0:
            beta = 0.0
        d = -new_grad + beta * d
        grad = new_grad
        gnorm = _mass_norm(ctx, grad)
        if gnorm <= goal:
            lin.exact(x)
            grad = prob.grad(x, lin.image)
            gnorm = _mass_norm(ctx, grad)
        history.append((it, prob.value(x, _quad(ctx, lin.f, lin.g)), gnorm))
    return _finish(prob, x, lin, it, history)


def _line_search(phi, curvature, slope, prob, ctx, d):
    """Exact minimizer of the convex 1-D restriction."""
    eps = prob.weights.eps
    dn2 = _mass_inner(ctx, d, d)
    # curvature of the smoothed norm is at most eps |d|^2 / delta
    upper = -slope / max(curvature, 1e-300)
    lower = -slope / (curvature + eps * dn2 / max(prob.delta, 1e-300))
    if upper <= lower * (1 + 1e-12):
        return upper
    res = minimize_scalar(phi, bounds=(lower, upper), method="bounded",
                          options={"xatol": 1e-14 * upper, "maxiter": 500})
    return float(res.x)


def _finish(prob, x, lin, it, history):
    ctx, weights = prob.ctx, prob.weights
    lin.exact(x)
    grad = prob.grad(x, lin.image)
    sol = solve_leader_coupled(x, weights, ctx, tol=1e-13)
    return DualIterate(TerminalData.from_x(x), prob.value(x, _quad(ctx, lin.f, lin.g)),
                       _mass_norm(ctx, grad), sol, it, history, prob)


@dataclass
class LeaderSolution:
    f_bar: np.ndarray
    g_bar: np.ndarray
    terminal_gap: float
    eps: float
    J_value: float
    dual_value: float
    tol_disc: float
    trajectory: TrajectorySolution = None
    followers: object = None


def recover_leader(it, weights, ctx, init=None, tol=1e-12):
    """Leader control from the dual iterate and the full pipeline run with it."""
    f, g = leader_controls(ctx, it.coupled.P)
    nash = solve_nash(f, g, init, weights, ctx, tol=tol)
    X = ctx.forward(ctx.control_load(nash.xi.controls(f, g)), None if init is None else init.x0)
    traj = TrajectorySolution.from_x(ctx.grid, X)
    target = weights.target(ctx.n)
    gap = _mass_norm(ctx, X[-1] - target)
    delta = it.problem.delta if it.problem is not None else 0.0
    tol_disc = 10 * delta + it.grad_norm + tol * max(1.0, _mass_norm(ctx, target))
    return LeaderSolution(f, g, gap, weights.eps, eval_J(f, g, weights, ctx), -it.theta,
                          tol_disc, traj, nash.xi)


@dataclass
class DensityReport:
    singular_values: np.ndarray
    rank: int
    dim: int

    @property
    def passed(self):
        return self.rank == self.dim


def density_probe(ctx, weights, rel=1e-10):
    """Singular values of ``(f, g) -> x(T)`` (Nash followers) from columns of its adjoint.

    The Gram matrix ``G[i, j] = (L0* e_i, L0* e_j)_rho`` equals
    ``Mass L0 L0*``; its generalized eigenvalues against the mass matrix
    are the squared singular values of ``L0``.
    """
    n2 = 2 * ctx.n
    if n2 > 64:
        raise ValueError(f"state dimension {n2} is too large for the dense probe (max 64)")
    cols = []
    for j in range(n2):
        e = np.zeros(n2)
        e[j] = 1.0
        f, g, _ = apply_L0_adjoint(e, weights, ctx)
        cols.append((f, g))
    G = np.empty((n2, n2))
    for i in range(n2):
        for j in range(i, n2):
            G[i, j] = G[j, i] = (ctx.inner("O", "vector", cols[i][0], cols[j][0])
                                 + ctx.inner("O", "scalar", cols[i][1], cols[j][1]))
    lam = eigh(G, ctx.mass, eigvals_only=True)
    sv = np.sqrt(np.clip(lam, 0.0, None))[::-1]
    rank = int(np.sum(sv > rel * sv[0])) if sv[0] > 0 else 0
    return DensityReport(sv, rank, n2)


def adjoint_identity_check(ctx, weights, n_pairs=10, seed=0, tol=1e-13):
    """Worst relative mismatch of ``(L0* td, (f, g))_rho = (td, L0 (f, g))``.

    Random terminal data ``td`` and random leader controls are drawn per pair.
    """
    rng = np.random.default_rng(seed)
    nO = ctx.region("O").size
    worst = 0.0
    for _ in range(n_pairs):
        td = rng.standard_normal(2 * ctx.n)
        f = rng.standard_normal((ctx.n_steps, 2, nO))
        g = rng.standard_normal((ctx.n_steps, nO))
        af, ag, _ = apply_L0_adjoint(td, weights, ctx, tol=tol)
        lhs = ctx.inner("O", "vector", af, f) + ctx.inner("O", "scalar", ag, g)
        rhs = _mass_inner(ctx, td, apply_L0(f, g, weights, ctx, tol=tol))
        scale = max(abs(lhs), abs(rhs))
        worst = max(worst, abs(lhs - rhs) / scale if scale > 0 else 0.0)
    return worst

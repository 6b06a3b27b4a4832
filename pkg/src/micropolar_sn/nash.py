"""Follower Nash equilibrium: the operator equation ``LL(Xi) = Psi``.

The four followers are v1, v2 (velocity controls on O1, O2) and u1, u2
(micro-rotation controls on O1, O2).  Player ``k`` minimizes its own cost,
so ``LL`` stacks the four partial gradients.  Because the velocity players
track the velocity and the scalar players track the micro-rotation, ``LL``
is not symmetric in general; the default solver is GMRES in the
rho-weighted control inner product.  A conjugate-gradient path is kept for
the symmetric sub-cases.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, gmres

from .adjoint import player_region, representers, solve_adjoint, tracking_sources
from .errors import IndefiniteOperator, MaxIterations, PowerIterationStall
from .functionals import PLAYERS, eval_Ji, eval_Jti
from .state import ControlSet, TrajectorySolution

DEFAULT_SEED = 20240611


class FollowerVector:
    """``Xi = ((v1, v2), (u1, u2))`` as node samples on O1, O2."""

    def __init__(self, parts):
        self.parts = [np.asarray(p, dtype=float) for p in parts]

    @classmethod
    def zeros(cls, ctx):
        return cls([np.zeros(s) for s in block_shapes(ctx)])

    @classmethod
    def random(cls, ctx, rng, players=range(4)):
        parts = [np.zeros(s) for s in block_shapes(ctx)]
        for k in players:
            parts[k] = rng.standard_normal(parts[k].shape)
        return cls(parts)

    @classmethod
    def from_flat(cls, ctx, vec):
        parts, start = [], 0
        for s in block_shapes(ctx):
            size = int(np.prod(s))
            parts.append(np.asarray(vec[start:start + size]).reshape(s))
            start += size
        return cls(parts)

    @property
    def v(self):
        return self.parts[0], self.parts[1]

    @property
    def u(self):
        return self.parts[2], self.parts[3]

    def flat(self):
        return np.concatenate([p.ravel() for p in self.parts])

    def controls(self, f=None, g=None):
        return ControlSet(f, g, self.v, self.u)

    def only(self, k):
        parts = [np.zeros_like(p) for p in self.parts]
        parts[k] = self.parts[k].copy()
        return FollowerVector(parts)

    def __add__(self, other):
        return FollowerVector([a + b for a, b in zip(self.parts, other.parts)])

    def __sub__(self, other):
        return FollowerVector([a - b for a, b in zip(self.parts, other.parts)])

    def __mul__(self, s):
        return FollowerVector([s * a for a in self.parts])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def inner(self, ctx, other, players=range(4)):
        total = 0.0
        for k in players:
            region, kind = player_region(k)
            total += ctx.inner(region, kind, self.parts[k], other.parts[k])
        return total

    def norm(self, ctx, players=range(4)):
        return float(np.sqrt(max(self.inner(ctx, self, players), 0.0)))


def block_shapes(ctx):
    shapes = []
    for k in range(4):
        region, kind = player_region(k)
        q = ctx.region(region).size
        shapes.append((ctx.n_steps, 2, q) if kind == "vector" else (ctx.n_steps, q))
    return shapes


def flat_weights(ctx):
    """Diagonal of the rho-weighted inner product in the flat layout."""
    out = []
    for k, s in enumerate(block_shapes(ctx)):
        region, kind = player_region(k)
        r = ctx.region(region)
        w = ctx.dt * ctx.rho[:, None] * r.weights[None, :]
        if kind == "vector":
            w = np.repeat(w[:, None, :], 2, axis=1)
        out.append(w.ravel())
    return np.concatenate(out)


def _mu(weights):
    return [mu for _, mu in weights.player_weights()]


def apply_L(xi, weights, ctx):
    X = ctx.forward(ctx.control_load(xi.controls()))
    P = ctx.backward(tracking_sources(ctx, weights, X, with_targets=False))
    reps = representers(ctx, P)
    return FollowerVector([m * p + r for m, p, r in zip(_mu(weights), xi.parts, reps)])


def apply_L_transpose(xi, weights, ctx):
    """Adjoint of ``apply_L`` in the rho-weighted inner product."""
    loads = np.zeros((ctx.n_steps, 2 * ctx.n, 4))
    for k in range(4):
        region, kind = player_region(k)
        loads[:, :, k] = ctx.load(region, kind, xi.parts[k])
    X = ctx.forward(loads)
    src = np.zeros((ctx.n_steps, 2 * ctx.n))
    for k, (a, _) in enumerate(weights.player_weights()):
        if a == 0.0:
            continue
        kind, i = PLAYERS[k]
        obs = ctx.observe(f"O{i + 1}d", kind, X[:, :, k])
        src += ctx.tracking_source(f"O{i + 1}d", kind, obs, a)
    P = ctx.backward(src)
    out = []
    for k, m in enumerate(_mu(weights)):
        region, kind = player_region(k)
        out.append(m * xi.parts[k] + ctx.represent(region, kind, P))
    return FollowerVector(out)


def build_Psi(f, g, init, weights, ctx):
    X = ctx.forward(ctx.control_load(ControlSet(f, g)), None if init is None else init.x0)
    P = ctx.backward(tracking_sources(ctx, weights, X, with_targets=True))
    return FollowerVector([-r for r in representers(ctx, P)])


@dataclass
class NashResult:
    xi: FollowerVector
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def _scaled_operator(ctx, weights, transpose=False, symmetrize=False):
    sw = np.sqrt(flat_weights(ctx))
    dim = sw.size

    def L(y):
        xi = FollowerVector.from_flat(ctx, y / sw)
        return sw * apply_L(xi, weights, ctx).flat()

    def Lt(y):
        xi = FollowerVector.from_flat(ctx, y / sw)
        return sw * apply_L_transpose(xi, weights, ctx).flat()

    if symmetrize:
        return LinearOperator((dim, dim), matvec=lambda y: 0.5 * (L(y) + Lt(y)), dtype=float), sw
    return LinearOperator((dim, dim), matvec=L, rmatvec=Lt, dtype=float), sw


def conjugate_gradient(matvec, b, tol, max_iter):
    """Plain CG; raises IndefiniteOperator on non-positive curvature."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    bnorm = np.sqrt(b @ b)
    history = [1.0]
    for it in range(1, max_iter + 1):
        Ap = matvec(p)
        curv = p @ Ap
        if curv <= 0:
            raise IndefiniteOperator(f"non-positive curvature {curv:.3e} at iteration {it}", p)
        a = rr / curv
        x += a * p
        r -= a * Ap
        rr_new = r @ r
        history.append(np.sqrt(rr_new) / bnorm)
        if history[-1] <= tol:
            return x, it, history
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise MaxIterations(f"CG stopped after {max_iter} iterations (residual {history[-1]:.3e})", x)


def solve_nash(f, g, init, weights, ctx, tol=1e-8, method="gmres", max_iter=2000, psi=None):
    """Nash equilibrium of the followers for leader controls ``(f, g)``."""
    psi = build_Psi(f, g, init, weights, ctx) if psi is None else psi
    sw = np.sqrt(flat_weights(ctx))
    b = sw * psi.flat()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return NashResult(FollowerVector.zeros(ctx), 0, 0.0, [0.0])
    A, _ = _scaled_operator(ctx, weights)
    if method == "cg":
        y, its, history = conjugate_gradient(A.matvec, b, tol, max_iter)
    elif method == "gmres":
        history = []
        y, info = gmres(A, b, rtol=tol, atol=0.0, restart=min(200, b.size), maxiter=max(1, max_iter // 200),
                        callback=history.append, callback_type="pr_norm")
        its = len(history)
        if info != 0:
            raise MaxIterations(f"GMRES did not reach {tol:g} within {max_iter} iterations",
                                FollowerVector.from_flat(ctx, y / sw))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(A.matvec(y) - b) / bnorm)
    return NashResult(FollowerVector.from_flat(ctx, y / sw), its, res, history)


def _solve_all(xi, f, g, init, ctx):
    X = ctx.forward(ctx.control_load(xi.controls(f, g)), None if init is None else init.x0)
    return TrajectorySolution.from_x(ctx.grid, X)


def player_cost(k, xi, f, g, init, weights, ctx):
    traj = _solve_all(xi, f, g, init, ctx)
    controls = xi.controls(f, g)
    kind, i = PLAYERS[k]
    if kind == "vector":
        return eval_Ji(i + 1, traj, controls, weights, ctx)
    return eval_Jti(i + 1, traj, controls, weights, ctx)


@dataclass
class NashReport:
    max_derivative: float
    min_gain: float
    cross_changes: list
    n_directions: int

    def passed(self, deriv_tol=1e-7, gain_tol=1e-10):
        return self.max_derivative <= deriv_tol and self.min_gain >= -gain_tol


def verify_nash(xi_star, f, g, init, weights, ctx, n_directions=100, seed=DEFAULT_SEED, h=1e-3,
                deviation_scales=(1e-3, 1e-1, 10.0)):
    """Check the equilibrium with finite differences of the follower costs.

    Directions are unit vectors (rho-weighted norm) in one player's block.
    """
    rng = np.random.default_rng(seed)
    max_d = 0.0
    min_gain = np.inf
    cross = []
    base = [player_cost(k, xi_star, f, g, init, weights, ctx) for k in range(4)]
    for d in range(n_directions):
        k = d % 4
        direction = FollowerVector.random(ctx, rng, [k])
        direction = direction * (1.0 / direction.norm(ctx))

        def cost(x, k=k):
            return player_cost(k, x, f, g, init, weights, ctx)
        max_d = max(max_d, abs(_central(cost, xi_star, direction, h)))
        if d < 4 * len(deviation_scales):
            s = deviation_scales[d // 4]
            moved = xi_star + s * direction
            min_gain = min(min_gain, cost(moved) - base[k])
            cross.append({"player": k, "scale": s,
                          "others": [player_cost(j, moved, f, g, init, weights, ctx) - base[j]
                                     for j in range(4) if j != k]})
    return NashReport(max_d, float(min_gain), cross, n_directions)


def _central(F, x, d, h):
    return (F(x + h * d) - F(x - h * d)) / (2.0 * h)


@dataclass
class CharacterizationReport:
    v_residual: tuple
    u_residual: tuple
    fixed_point_residual: float

    @property
    def max_residual(self):
        return max(self.v_residual + self.u_residual + (self.fixed_point_residual,))


def characterize_nash(xi_star, f, g, init, weights, ctx):
    """Compare the equilibrium with ``-(1/mu) adjoint`` on each control region."""
    traj = _solve_all(xi_star, f, g, init, ctx)
    bundle = solve_adjoint(traj, weights, ctx)
    reps = representers(ctx, bundle.P)
    mus = _mu(weights)
    res = []
    for k in range(4):
        region, kind = player_region(k)
        diff = xi_star.parts[k] + reps[k] / mus[k]
        num = np.sqrt(ctx.inner(region, kind, diff, diff))
        den = np.sqrt(ctx.inner(region, kind, xi_star.parts[k], xi_star.parts[k]))
        res.append(float(num / den) if den > 0 else float(num))
    # one pass of the optimality system: controls from adjoints, state, adjoints again
    new = FollowerVector([-r / m for r, m in zip(reps, mus)])
    traj2 = _solve_all(new, f, g, init, ctx)
    reps2 = representers(ctx, solve_adjoint(traj2, weights, ctx).P)
    again = FollowerVector([-r / m for r, m in zip(reps2, mus)])
    scale = max(new.norm(ctx), 1e-300)
    fp = (again - new).norm(ctx) / scale if new.norm(ctx) > 0 else (again - new).norm(ctx)
    return CharacterizationReport((res[0], res[1]), (res[2], res[3]), float(fp))


# coercivity -------------------------------------------------------------------

NORM_LABELS = {  # label -> (input player, output kind)
    "L11": (0, "vector"), "L12": (1, "vector"), "L21": (0, "scalar"), "L22": (1, "scalar"),
    "Lt11": (2, "vector"), "Lt12": (3, "vector"), "Lt21": (2, "scalar"), "Lt22": (3, "scalar"),
}


def operator_norm(ctx, player, out_kind, obs_region, tol=1e-4, max_iter=500, seed=DEFAULT_SEED):
    """Power iteration for the norm of ``control of player -> observation``.

    Both spaces carry the rho-weighted inner product.
    """
    region, kind = player_region(player)
    rng = np.random.default_rng(seed)
    xi = FollowerVector.random(ctx, rng, [player]).parts[player]

    def nrm(a):
        return np.sqrt(ctx.inner(region, kind, a, a))
    xi = xi / nrm(xi)
    lam_old = None
    for _ in range(max_iter):
        X = ctx.forward(ctx.load(region, kind, xi))
        obs = ctx.observe(obs_region, out_kind, X)
        P = ctx.backward(ctx.tracking_source(obs_region, out_kind, obs))
        y = ctx.represent(region, kind, P)
        lam = ctx.inner(region, kind, xi, y)
        ny = nrm(y)
        if ny == 0.0:
            return 0.0
        xi = y / ny
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            return float(np.sqrt(max(lam, 0.0)))
        lam_old = lam
    raise PowerIterationStall(f"power iteration did not settle within {max_iter} steps")


@dataclass
class CoercivityReport:
    norms: dict
    norms_by_region: dict
    inequalities: tuple
    condition_holds: bool
    gamma: float
    min_eig: float
    label: str = "discrete estimates"


def coercivity_terms(weights, nm):
    a1, a2 = weights.alpha
    t1, t2 = weights.alpha_tilde
    m1, m2 = weights.mu
    n1, n2 = weights.mu_tilde
    lhs = (a1 * nm["L12"] ** 2 + (t1 + t2) * nm["L22"] ** 2,
           a2 * nm["L11"] ** 2 + (t1 + t2) * nm["L21"] ** 2,
           t1 * nm["Lt22"] ** 2 + (a1 + a2) * nm["Lt12"] ** 2,
           t2 * nm["Lt21"] ** 2 + (a1 + a2) * nm["Lt11"] ** 2)
    caps = (m2, m1, n2, n1)
    inequalities = tuple(bool(l < 4.0 / 3.0 * c) for l, c in zip(lhs, caps))
    gamma = min(c - 0.75 * l for l, c in zip(lhs, caps))
    return inequalities, gamma


def min_eigenvalue(weights, ctx, tol=1e-8, seed=DEFAULT_SEED):
    """Smallest eigenvalue of the symmetric part of ``LL`` (rho-weighted).

    The bottom of the spectrum is a tight cluster near ``min(mu)``, so a wide
    Krylov space pays off more than a tighter tolerance.
    """
    A, sw = _scaled_operator(ctx, weights, symmetrize=True)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(sw.size)
    vals = eigsh(A, k=1, which="SA", tol=tol, v0=v0, return_eigenvectors=False,
                 ncv=min(sw.size, 80), maxiter=20000)
    return float(vals[0])


def check_coercivity(weights, ctx, tol=1e-4, max_iter=500, seed=DEFAULT_SEED, eig=True):
    by_region = {}
    norms = {}
    for label, (player, out_kind) in NORM_LABELS.items():
        vals = [operator_norm(ctx, player, out_kind, f"O{i}d", tol, max_iter, seed) for i in (1, 2)]
        by_region[label] = tuple(vals)
        norms[label] = max(vals)
    inequalities, gamma = coercivity_terms(weights, norms)
    min_eig = min_eigenvalue(weights, ctx, seed=seed) if eig else float("nan")
    return CoercivityReport(norms, by_region, inequalities, all(inequalities), gamma, min_eig)

"""Discrete adjoints of the implicit-Euler scheme.

The backward sweep uses the transposed step matrices, so every duality
identity between forward and backward solves holds to round-off.

Adjoint trajectories are stored raw: ``P[m - 1] = p_m`` with
``S_m^T p_m = Mass p_{m+1} + source_m``.  The adjoint *field* seen by a
control is ``p_m / rho(t_m)`` evaluated on the control nodes; this is the
Riesz representer of the derivative in the rho-weighted control space.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import NoConvergence
from .functionals import PLAYERS, tracking_residual
from .state import ControlSet


@dataclass
class TerminalData:
    xi: np.ndarray
    eta: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_x(cls, x):
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())

    @property
    def x(self):
        return np.concatenate([self.xi, self.eta])


def player_region(player):
    kind, i = PLAYERS[player]
    return f"O{i + 1}", kind


def tracking_sources(ctx, weights, X, with_targets=True):
    """Adjoint sources of the four tracking terms, stacked on the last axis."""
    out = np.zeros((ctx.n_steps, 2 * ctx.n, 4))
    for k, (a, _) in enumerate(weights.player_weights()):
        if a == 0.0:
            continue
        kind, i = PLAYERS[k]
        res = tracking_residual(ctx, weights, X, k, with_targets)
        out[:, :, k] = ctx.tracking_source(f"O{i + 1}d", kind, res, a)
    return out


def representers(ctx, P):
    """Player-k component of the control gradient from the k-th adjoint column."""
    out = []
    for k in range(4):
        region, kind = player_region(k)
        out.append(ctx.represent(region, kind, P[:, :, k]))
    return out


@dataclass
class AdjointBundle:
    """Adjoints of the four follower costs.

    Column ``k`` of ``P`` belongs to player ``k`` (v1, v2, u1, u2): it is
    driven by that player's tracking mismatch only.
    """
    P: np.ndarray       # (n_steps, 2n, 4)
    rho: np.ndarray
    n: int

    def q(self, i):
        """Velocity adjoint coefficients for follower ``i`` (rho-scaled)."""
        return self.P[:, :self.n, i - 1] / self.rho[:, None]

    def r(self, i):
        """Scalar adjoint coefficients for follower ``i`` (rho-scaled)."""
        return self.P[:, self.n:, i + 1] / self.rho[:, None]

    @property
    def terminal(self):
        """Adjoint data after the final step (always zero)."""
        return np.zeros(self.P.shape[1:])


def solve_adjoint(traj, weights, ctx, with_targets=True):
    src = tracking_sources(ctx, weights, traj.x, with_targets)
    return AdjointBundle(ctx.backward(src), ctx.rho, ctx.n)


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def _random_controls(ctx, rng, players=range(4)):
    v = [None, None]
    u = [None, None]
    for k in players:
        region, kind = player_region(k)
        size = ctx.region(region).size
        shape = (ctx.n_steps, 2, size) if kind == "vector" else (ctx.n_steps, size)
        if kind == "vector":
            v[PLAYERS[k][1]] = rng.standard_normal(shape)
        else:
            u[PLAYERS[k][1]] = rng.standard_normal(shape)
    return v, u


def duality_check(ctx, weights, n_trials=1, seed=0, scale=1.0):
    """Worst relative mismatch of the forward/backward duality identities.

    Each trial draws a random state (random leader and follower controls,
    the configured targets) and random follower perturbations.  For player
    ``k`` the identity reads
    ``alpha_k (obs_k - target_k, obs_k[response to d])_rho = (adjoint_k, d)_rho``
    where ``d`` is a perturbation of the control of any follower (own or
    other), with the matching component of the adjoint on the right.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    nO = ctx.region("O").size
    for _ in range(n_trials):
        v, u = _random_controls(ctx, rng)
        base = ControlSet(rng.standard_normal((ctx.n_steps, 2, nO)),
                          rng.standard_normal((ctx.n_steps, nO)), tuple(v), tuple(u))
        X = ctx.forward(ctx.control_load(base))
        P = ctx.backward(tracking_sources(ctx, weights, X))
        for j in range(4):
            region_j, kind_j = player_region(j)
            dv, du = _random_controls(ctx, rng, [j])
            d = (dv[PLAYERS[j][1]] if kind_j == "vector" else du[PLAYERS[j][1]]) * scale
            Xd = ctx.forward(ctx.load(region_j, kind_j, d))
            for k, (a, _) in enumerate(weights.player_weights()):
                kind_k, i_k = PLAYERS[k]
                obs_region = f"O{i_k + 1}d"
                res = tracking_residual(ctx, weights, X, k)
                lhs = a * ctx.inner(obs_region, kind_k, res, ctx.observe(obs_region, kind_k, Xd))
                rep = ctx.represent(region_j, kind_j, P[:, :, k])
                rhs = ctx.inner(region_j, kind_j, rep, d)
                worst = max(worst, _rel(lhs, rhs))
    return worst


@dataclass
class LeaderCoupledSolution:
    """Backward pair ``(phi, psi)`` and the four forward duals.

    ``P`` holds the raw backward states (``P[m-1] = p_m``, ``p_{n+1}`` is the
    terminal data); ``duals[..., k]`` is the forward dual of player ``k``.
    """
    td: object
    P: np.ndarray
    duals: np.ndarray
    iterations: int
    residual: float
    method: str
    history: list = field(default_factory=list)

    def phi(self, rho):
        n = self.P.shape[1] // 2
        return self.P[:, :n] / rho[:, None]

    def psi(self, rho):
        n = self.P.shape[1] // 2
        return self.P[:, n:] / rho[:, None]


def leader_controls(ctx, P):
    """``(phi chi_O, psi chi_O)`` as node samples on O."""
    return ctx.represent("O", "vector", P), ctx.represent("O", "scalar", P)


def _dual_controls(ctx, weights, P):
    """Loads of the forward duals driven by ``-(1/mu_k)`` times the adjoint."""
    loads = np.zeros((ctx.n_steps, 2 * ctx.n, 4))
    for k, (a, mu) in enumerate(weights.player_weights()):
        if a == 0.0:
            continue  # the dual only enters through its own tracking term
        region, kind = player_region(k)
        loads[:, :, k] = ctx.load(region, kind, -ctx.represent(region, kind, P) / mu)
    return loads


def _coupling_map(ctx, weights, P):
    """One pass ``P -> backward(sources of the duals driven by P)`` with zero terminal."""
    duals = ctx.forward(_dual_controls(ctx, weights, P))
    src = np.zeros((ctx.n_steps, 2 * ctx.n))
    for k, (a, _) in enumerate(weights.player_weights()):
        if a == 0.0:
            continue
        kind, i = PLAYERS[k]
        obs = ctx.observe(f"O{i + 1}d", kind, duals[:, :, k])
        src += ctx.tracking_source(f"O{i + 1}d", kind, obs, a)
    return ctx.backward(src), duals


def _rho_norm(ctx, P):
    Q = P / ctx.rho[:, None]
    return float(np.sqrt(ctx.dt * np.einsum("m,mi,ij,mj->", ctx.rho, Q, ctx.mass, Q)))


def solve_leader_coupled(td, weights, ctx, tol=1e-12, max_iter=100):
    """Solve the coupled forward-backward leader system for terminal data ``td``.

    Picard iteration first; if the successive change does not fall below
    ``tol`` (relative, rho-norm) within ``max_iter`` passes, GMRES on the
    affine fixed-point form ``(I - K) P = P0``.
    """
    x = td.x if isinstance(td, TerminalData) else np.asarray(td, dtype=float)
    zero_src = np.zeros((ctx.n_steps, 2 * ctx.n))
    P0 = ctx.backward(zero_src, terminal=x)
    norm0 = _rho_norm(ctx, P0)
    if norm0 == 0.0:
        return LeaderCoupledSolution(td, P0, np.zeros((ctx.n_steps + 1, 2 * ctx.n, 4)), 1, 0.0, "picard")
    P = P0
    history = []
    for it in range(1, max_iter + 1):
        KP, duals = _coupling_map(ctx, weights, P)
        P_new = P0 + KP
        change = _rho_norm(ctx, P_new - P) / max(_rho_norm(ctx, P_new), norm0)
        history.append(change)
        P = P_new
        if change <= tol or not np.isfinite(change):
            break
        if it >= 4 and change > history[-4]:
            break  # not contracting: leave it to the Krylov solve
    if np.isfinite(change) and change <= tol:
        KP, duals = _coupling_map(ctx, weights, P)
        res = _rho_norm(ctx, P - P0 - KP) / norm0
        return LeaderCoupledSolution(td, P, duals, it + 1, res, "picard", history)

    shape = P0.shape

    def matvec(p):
        p = p.reshape(shape)
        return (p - _coupling_map(ctx, weights, p)[0]).ravel()

    dim = P0.size
    A = LinearOperator((dim, dim), matvec=matvec, dtype=float)
    sol, info = gmres(A, P0.ravel(), rtol=tol, atol=0.0, restart=min(dim, 200), maxiter=20)
    P = sol.reshape(shape)
    KP, duals = _coupling_map(ctx, weights, P)
    res = _rho_norm(ctx, P - P0 - KP) / norm0
    if info != 0 or res > 10 * tol + 1e-14:
        history.append(res)
        raise NoConvergence(f"coupled leader system did not converge (residual {res:.3e})", history)
    return LeaderCoupledSolution(td, P, duals, max_iter, res, "gmres", history)

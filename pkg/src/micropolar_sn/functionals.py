"""Follower and leader cost functionals with the moving-domain weight.

Every space-time integral uses the rule of the control parameterization:
the quadrature nodes in space and, in time, the values at ``t_m`` times
``dt`` for ``m = 1..n_steps`` (the same rule under which controls are
piecewise constant).  Each integrand carries ``rho(t) = |det K(t)|``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridMismatch
from .fields import as_scalar, as_vector


def _pair(value, name):
    vals = tuple(float(v) for v in value)
    if len(vals) != 2:
        raise ConfigError(f"{name} needs two entries, got {value!r}")
    return vals


@dataclass
class CostWeights:
    """Cost parameters and targets.

    ``z_d[i]``/``w_d[i]`` are follower targets (closed-form fields of ``y, t``),
    observed on ``O{i+1}d``.  ``z_T``/``w_T`` are the leader's terminal
    targets as coefficient vectors.
    """
    alpha: tuple = (1.0, 1.0)
    mu: tuple = (1.0, 1.0)
    alpha_tilde: tuple = (1.0, 1.0)
    mu_tilde: tuple = (1.0, 1.0)
    z_d: tuple = (None, None)
    w_d: tuple = (None, None)
    z_T: np.ndarray = None
    w_T: np.ndarray = None
    eps: float = 0.1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.alpha = _pair(self.alpha, "alpha")
        self.mu = _pair(self.mu, "mu")
        self.alpha_tilde = _pair(self.alpha_tilde, "alpha_tilde")
        self.mu_tilde = _pair(self.mu_tilde, "mu_tilde")
        if min(self.alpha + self.alpha_tilde) < 0:
            raise ConfigError("tracking weights alpha, alpha_tilde must be nonnegative")
        if min(self.mu + self.mu_tilde) <= 0:
            raise ConfigError("control costs mu, mu_tilde must be positive")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        self.z_d = tuple(as_vector(z) for z in self.z_d)
        self.w_d = tuple(as_scalar(w) for w in self.w_d)

    def with_(self, **changes):
        data = dict(alpha=self.alpha, mu=self.mu, alpha_tilde=self.alpha_tilde,
                    mu_tilde=self.mu_tilde, z_d=self.z_d, w_d=self.w_d,
                    z_T=self.z_T, w_T=self.w_T, eps=self.eps)
        data.update(changes)
        return CostWeights(**data)

    def player_weights(self):
        """``(alpha, mu)`` per player in the order v1, v2, u1, u2."""
        return [(self.alpha[0], self.mu[0]), (self.alpha[1], self.mu[1]),
                (self.alpha_tilde[0], self.mu_tilde[0]), (self.alpha_tilde[1], self.mu_tilde[1])]

    def target(self, n):
        z = np.zeros(n) if self.z_T is None else np.asarray(self.z_T, float)
        w = np.zeros(n) if self.w_T is None else np.asarray(self.w_T, float)
        return np.concatenate([z, w])

    def tracking_targets(self, ctx):
        """Node samples of the follower targets, cached per context."""
        key = id(ctx)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not ctx:
            zd = [ctx.sample_target(f"O{i + 1}d", "vector", self.z_d[i]) for i in range(2)]
            wd = [ctx.sample_target(f"O{i + 1}d", "scalar", self.w_d[i]) for i in range(2)]
            hit = (ctx, zd, wd)
            self._cache[key] = hit
        return hit[1], hit[2]

    @property
    def targets_zero(self):
        return all(z.is_zero for z in self.z_d) and all(w.is_zero for w in self.w_d)


# players: (kind observed, region of control, kind of control)
PLAYERS = (("vector", 0), ("vector", 1), ("scalar", 0), ("scalar", 1))


def _check(traj, ctx):
    if traj.grid.n_steps != ctx.n_steps:
        raise GridMismatch(f"trajectory has {traj.grid.n_steps} steps, context {ctx.n_steps}")


def tracking_residual(ctx, weights, X, player, with_targets=True):
    kind, i = PLAYERS[player]
    obs = ctx.observe(f"O{i + 1}d", kind, X)
    if with_targets:
        zd, wd = weights.tracking_targets(ctx)
        obs = obs - (zd[i] if kind == "vector" else wd[i])
    return obs


def _control_term(ctx, region, kind, samples):
    if samples is None:
        return 0.0
    return ctx.inner(region, kind, samples, samples)


def eval_Ji(i, traj, controls, weights, ctx):
    """Velocity follower cost ``J_i`` (``i`` is 1 or 2)."""
    _check(traj, ctx)
    res = tracking_residual(ctx, weights, traj.x, i - 1)
    track = ctx.inner(f"O{i}d", "vector", res, res)
    ctrl = _control_term(ctx, f"O{i}", "vector", controls.v[i - 1])
    return 0.5 * weights.alpha[i - 1] * track + 0.5 * weights.mu[i - 1] * ctrl


def eval_Jti(i, traj, controls, weights, ctx):
    """Micro-rotation follower cost ``J~_i``."""
    _check(traj, ctx)
    res = tracking_residual(ctx, weights, traj.x, i + 1)
    track = ctx.inner(f"O{i}d", "scalar", res, res)
    ctrl = _control_term(ctx, f"O{i}", "scalar", controls.u[i - 1])
    return 0.5 * weights.alpha_tilde[i - 1] * track + 0.5 * weights.mu_tilde[i - 1] * ctrl


def eval_J(f, g, weights, ctx):
    """Leader cost ``1/2 ||(f, g)||^2`` over O."""
    return 0.5 * (_control_term(ctx, "O", "vector", f) + _control_term(ctx, "O", "scalar", g))


def directional_derivative(functional, point, direction, h=1e-4):
    """Central difference ``(F(x + h d) - F(x - h d)) / (2h)``."""
    if not (1e-8 <= h <= 1e-2):
        raise ValueError(f"step h={h} outside [1e-8, 1e-2]")
    return (functional(point + h * direction) - functional(point - h * direction)) / (2.0 * h)

"""Property checks shared by the ``check`` subcommand and the test-suite.

Each check returns a :class:`CheckResult` with the measured quantity and
the threshold it is held to.  All randomness flows from an explicit seed.
"""
from dataclasses import dataclass, replace

import numpy as np

from .adjoint import duality_check
from .basis import build_basis
from .fields import CoefficientFields, ScalarField, VectorField
from .geometry import QuadratureSpec
from .leader import (DualProblem, adjoint_identity_check, density_probe, minimize_theta,
                     recover_leader, theta, theta_grad)
from .motion import MotionLaw, identity_motion, verify_chain_rule
from .nash import characterize_nash, check_coercivity, solve_nash, verify_nash
from .reference import ReferenceSolver
from .state import Context, ControlSet, InitialData, TimeGrid, solve_follower_response, solve_state

CHAIN_FIELDS = ("sin(pi*y1)*sin(2*pi*y2)*exp(-t)",
                "y1**2*y2 + cos(3*y1)*t",
                "exp(y1 - y2)*sin(t + y1*y2)")


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""

    @classmethod
    def upper(cls, name, value, tol, note=""):
        return cls(name, float(value), float(tol), bool(value <= tol), note)

    @classmethod
    def lower(cls, name, value, tol, note=""):
        return cls(name, float(value), float(tol), bool(value >= tol), note)


def sample_motions(M=((1.0, 0.2), (0.1, 1.0)), T=1.0):
    return [
        MotionLaw("constant", (1.3,), M, T),
        MotionLaw("affine", (1.0, 0.5), M, T),
        MotionLaw("exponential", (1.0, 0.4), M, T),
        MotionLaw("affine", (2.0, -0.8), ((0.9, -0.3), (0.2, 1.1)), T),
        MotionLaw("spline", ((0.0, 0.3, 0.7, 1.0), (1.0, 1.2, 1.1, 1.4)), M, T),
    ]


def chain_rule_check(motions, fields=CHAIN_FIELDS, t=0.37, h=1e-4):
    worst = 0.0
    for m in motions:
        for expr in fields:
            rep = verify_chain_rule(m, ScalarField(expr), t, h=h)
            worst = max(worst, rep.max_discrepancy)
    return worst


def random_controls(ctx, rng):
    nO, n1, n2 = (ctx.region(r).size for r in ("O", "O1", "O2"))
    s = ctx.n_steps
    return ControlSet(rng.standard_normal((s, 2, nO)), rng.standard_normal((s, nO)),
                      (rng.standard_normal((s, 2, n1)), rng.standard_normal((s, 2, n2))),
                      (rng.standard_normal((s, n1)), rng.standard_normal((s, n2))))


def superposition_check(ctx, n_scenarios=5, seed=0):
    """Full state against uncontrolled part plus the two follower responses."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_scenarios):
        c = random_controls(ctx, rng)
        init = InitialData(rng.standard_normal(ctx.n), rng.standard_normal(ctx.n))
        full = solve_state(c, init, ctx).x
        parts = solve_state(c.leader_only(), init, ctx).x
        for i in (1, 2):
            parts = parts + solve_follower_response(i, c.v[i - 1], c.u[i - 1], ctx).x
        scale = np.maximum(np.linalg.norm(full, axis=1), 1e-300)
        worst = max(worst, float(np.max(np.linalg.norm(full - parts, axis=1) / scale)))
    return worst


def theta_gradient_check(ctx, weights, n_points=10, seed=0, delta_scale=1e-4, h=1e-5):
    """Worst relative error of the gradient against central differences of theta."""
    target_norm = float(np.sqrt(max(weights.target(ctx.n) @ ctx.mass @ weights.target(ctx.n), 0.0)))
    prob = DualProblem.build(weights, ctx, delta=delta_scale * max(1.0, target_norm))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        x = rng.standard_normal(2 * ctx.n) * 0.1
        d = rng.standard_normal(2 * ctx.n)
        d /= np.sqrt(d @ ctx.mass @ d)
        g = theta_grad(x, weights, ctx, problem=prob)
        exact = float(g @ ctx.mass @ d)
        fd = (theta(x + h * d, weights, ctx, problem=prob)
              - theta(x - h * d, weights, ctx, problem=prob)) / (2 * h)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-12))
    return worst


def reduction_check(n_modes, n_steps, fields_h, fields_theta, geometry, seed=0):
    """Identity-motion run of the main solver against the independent solver.

    The comparison is about the formulation, so the rectangles are kept but
    the quadrature is raised to at least the default rule; a coarse rule
    would otherwise show up as a quadrature error in the field terms.
    """
    q = geometry.quad
    geometry = replace(geometry, quad=QuadratureSpec(max(q.points, 12), min(q.max_cell_width, 0.2)))
    motion = identity_motion(1.0)
    ctx = Context(build_basis(n_modes, motion.M), geometry, motion, TimeGrid(n_steps, 1.0),
                  CoefficientFields(VectorField(*fields_h), fields_theta))
    ref = ReferenceSolver(n_modes, n_steps, 1.0, fields_h, fields_theta)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(2 * ctx.n)
    f = ("sin(pi*y1)*t", "y2 - 0.5")
    g = "cos(pi*y1)*exp(t)"
    rect = geometry.o_leader
    r = ctx.region("O")
    times = ctx.grid.times[1:]
    fs = np.array([[np.sin(np.pi * r.nodes[0]) * t, r.nodes[1] - 0.5] for t in times])
    gs = np.array([np.cos(np.pi * r.nodes[0]) * np.exp(t) for t in times])
    X = ctx.forward(ctx.control_load(ControlSet(fs, gs)), x0)
    Xr = ref.solve(x0, [((rect.x0, rect.x1, rect.y0, rect.y1), f, g)])
    return float(np.max(np.abs(X - Xr)) / np.max(np.abs(Xr)))


def run_checks(scenario, seed=0, log=None):
    """The property suite on one configured scenario."""
    ctx, w, init = scenario.ctx, scenario.weights, scenario.init
    nash_tol = float(scenario.solver("nash_tol", 1e-10))
    results = []

    def add(res):
        results.append(res)
        if log is not None:
            log(res)

    motions = [ctx.motion] + sample_motions(ctx.motion.M, ctx.motion.T)[:4]
    add(CheckResult.upper("chain_rule", chain_rule_check(motions), 1e-8))
    add(CheckResult.upper("duality", duality_check(ctx, w, n_trials=3, seed=seed), 1e-10))
    add(CheckResult.upper("leader_duality", adjoint_identity_check(ctx, w, n_pairs=3, seed=seed), 1e-8))
    add(CheckResult.upper("superposition", superposition_check(ctx, 2, seed), 1e-10))

    nash = solve_nash(None, None, init, w, ctx, tol=nash_tol)
    add(CheckResult.upper("nash_residual", nash.residual, nash_tol))
    char = characterize_nash(nash.xi, None, None, init, w, ctx)
    add(CheckResult.upper("nash_characterization", char.max_residual, 1e-6))
    rep = verify_nash(nash.xi, None, None, init, w, ctx, n_directions=8, seed=seed)
    add(CheckResult.upper("nash_stationarity", rep.max_derivative, 1e-7))
    add(CheckResult.lower("nash_deviation_gain", rep.min_gain, -1e-10))

    coer = check_coercivity(w, ctx, tol=float(scenario.solver("power_tol", 1e-6)),
                            max_iter=int(scenario.solver("power_max_iter", 500)), seed=seed)
    add(CheckResult.lower("coercivity_condition", float(coer.condition_holds), 1.0,
                          "4/3 inequalities with estimated norms"))
    add(CheckResult.lower("coercivity_min_eig", coer.min_eig - coer.gamma, -1e-4, "min_eig - gamma"))

    add(CheckResult.upper("theta_gradient", theta_gradient_check(ctx, w, 2, seed), 1e-6))

    it = minimize_theta(w, ctx, delta=scenario.leader_opt("delta", None),
                        tol=float(scenario.leader_opt("tol", 1e-8)),
                        max_iter=int(scenario.leader_opt("max_iter", 500)), init=init)
    sol = recover_leader(it, w, ctx, init)
    add(CheckResult.upper("terminal_gap", sol.terminal_gap, sol.eps + sol.tol_disc, "eps + tol_disc"))
    add(CheckResult.upper("tol_disc", sol.tol_disc, 1e-3))
    value_gap = abs(sol.J_value - sol.dual_value) / max(1.0, abs(it.theta))
    add(CheckResult.upper("strong_duality", value_gap, 1e-4))

    f = ctx.fields
    h_expr = tuple(str(c.expr) for c in f.h.components)
    add(CheckResult.upper("reduction", reduction_check(ctx.basis.n_modes, ctx.n_steps, h_expr,
                                                       str(f.theta.expr), ctx.geometry, seed), 1e-10))
    if 2 * ctx.n <= 64:
        dens = density_probe(ctx, w)
        add(CheckResult.lower("density_rank", dens.rank, dens.dim, "rank of (f, g) -> x(T)"))
    return results

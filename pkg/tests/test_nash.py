import numpy as np
import pytest

from conftest import make_tiny_weights
from micropolar_sn.errors import IndefiniteOperator, MaxIterations
from micropolar_sn.geometry import default_geometry
from micropolar_sn.nash import (FollowerVector, apply_L, apply_L_transpose, characterize_nash,
                                check_coercivity, conjugate_gradient, operator_norm, solve_nash,
                                verify_nash)


def _pair(ctx, rng):
    return FollowerVector.random(ctx, rng), FollowerVector.random(ctx, rng)


def test_transpose_in_weighted_product(tiny_ctx, rng):
    w = make_tiny_weights()
    x, y = _pair(tiny_ctx, rng)
    lhs = apply_L(x, w, tiny_ctx).inner(tiny_ctx, y)
    rhs = x.inner(tiny_ctx, apply_L_transpose(y, w, tiny_ctx))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_operator_is_not_symmetric_in_general(tiny_ctx, rng):
    w = make_tiny_weights()
    x, y = _pair(tiny_ctx, rng)
    a = apply_L(x, w, tiny_ctx).inner(tiny_ctx, y)
    b = x.inner(tiny_ctx, apply_L(y, w, tiny_ctx))
    assert abs(a - b) > 1e-8 * abs(a)


def test_velocity_block_symmetric_and_coercive_in_symmetric_case(rng):
    from conftest import make_tiny_ctx
    # one shared observation region and equal velocity weights
    ctx = make_tiny_ctx()
    assert ctx.geometry.resolve("O1d") == ctx.geometry.resolve("O2d")
    w = make_tiny_weights(alpha=(1.5, 1.5), alpha_tilde=(0.0, 0.0))
    x = FollowerVector.random(ctx, rng, [0, 1])
    y = FollowerVector.random(ctx, rng, [0, 1])
    Lx, Ly = apply_L(x, w, ctx), apply_L(y, w, ctx)
    v = [0, 1]
    assert Lx.inner(ctx, y, v) == pytest.approx(x.inner(ctx, Ly, v), rel=1e-12)
    assert Lx.inner(ctx, x, v) >= min(w.mu) * x.inner(ctx, x, v)


def test_solvers_agree_on_symmetric_case(tiny_ctx):
    w = make_tiny_weights(alpha=(1.5, 1.5), alpha_tilde=(0.0, 0.0))
    g = solve_nash(None, None, None, w, tiny_ctx, tol=1e-12)
    c = solve_nash(None, None, None, w, tiny_ctx, tol=1e-12, method="cg")
    assert (g.xi - c.xi).norm(tiny_ctx) <= 1e-9 * g.xi.norm(tiny_ctx)


def test_conjugate_gradient_plain():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    x, its, _ = conjugate_gradient(lambda v: A @ v, np.array([1.0, 2.0]), 1e-14, 10)
    np.testing.assert_allclose(A @ x, [1.0, 2.0], atol=1e-13)
    with pytest.raises(IndefiniteOperator):
        conjugate_gradient(lambda v: np.diag([1.0, -1.0]) @ v, np.array([0.0, 1.0]), 1e-10, 10)
    with pytest.raises(MaxIterations):
        conjugate_gradient(lambda v: np.diag(np.arange(1.0, 50)) @ v, np.ones(49), 1e-14, 2)


def test_equilibrium_is_verified(tiny_ctx):
    w = make_tiny_weights()
    res = solve_nash(None, None, None, w, tiny_ctx, tol=1e-12)
    rep = verify_nash(res.xi, None, None, None, w, tiny_ctx, n_directions=12)
    assert rep.passed()
    char = characterize_nash(res.xi, None, None, None, w, tiny_ctx)
    assert char.max_residual < 1e-9


def test_perturbed_point_fails_verification(tiny_ctx, rng):
    w = make_tiny_weights()
    res = solve_nash(None, None, None, w, tiny_ctx, tol=1e-12)
    bad = res.xi + 0.1 * FollowerVector.random(tiny_ctx, rng)
    assert not verify_nash(bad, None, None, None, w, tiny_ctx, n_directions=8).passed()


def test_zero_right_hand_side_gives_zero(tiny_ctx):
    w = make_tiny_weights(z_d=(None, None), w_d=(None, None))
    assert solve_nash(None, None, None, w, tiny_ctx).xi.norm(tiny_ctx) == 0.0


def test_power_iteration_matches_dense_svd(tiny_ctx):
    ctx = tiny_ctx
    region = ctx.region("O1")
    cols = []
    sw_in = np.sqrt(np.repeat((ctx.dt * ctx.rho)[:, None], region.size, 1) * region.weights).ravel()
    obs = ctx.region("O2d")
    sw_out = np.sqrt(np.repeat((ctx.dt * ctx.rho)[:, None], obs.size, 1) * obs.weights).ravel()
    for j in range(sw_in.size):
        e = np.zeros(sw_in.size)
        e[j] = 1.0 / sw_in[j]
        X = ctx.forward(ctx.load("O1", "scalar", e.reshape(ctx.n_steps, region.size)))
        cols.append(sw_out * ctx.observe("O2d", "scalar", X).ravel())
    dense = np.column_stack(cols)
    expect = np.linalg.norm(dense, 2)
    got = operator_norm(ctx, 2, "scalar", "O2d", tol=1e-12, max_iter=5000)
    assert got == pytest.approx(expect, rel=1e-5)


def test_coercivity_without_tracking(tiny_ctx):
    w = make_tiny_weights(alpha=(0.0, 0.0), alpha_tilde=(0.0, 0.0))
    rep = check_coercivity(w, tiny_ctx)
    assert rep.gamma == pytest.approx(min(w.mu + w.mu_tilde))
    assert rep.min_eig == pytest.approx(rep.gamma, abs=1e-10)
    assert rep.condition_holds


def test_coercivity_condition_fails_for_tiny_costs(tiny_ctx):
    w = make_tiny_weights(mu=(1e-9, 1e-9), mu_tilde=(1e-9, 1e-9))
    rep = check_coercivity(w, tiny_ctx, eig=False)
    assert not rep.condition_holds and rep.gamma < 0

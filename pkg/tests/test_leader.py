import numpy as np
import pytest

from conftest import make_tiny_ctx, make_tiny_weights
from micropolar_sn.errors import MaxIterations
from micropolar_sn.leader import (DualProblem, adjoint_identity_check, apply_L0, density_probe,
                                  free_terminal, minimize_theta, recover_leader, theta, theta_grad)


def test_L0_is_linear(tiny_ctx, rng):
    w = make_tiny_weights()
    nO = tiny_ctx.region("O").size
    f, g = rng.standard_normal((4, 2, nO)), rng.standard_normal((4, nO))
    np.testing.assert_allclose(apply_L0(2.5 * f, 2.5 * g, w, tiny_ctx), 2.5 * apply_L0(f, g, w, tiny_ctx),
                               rtol=1e-9, atol=1e-14)


def test_adjoint_identity(tiny_ctx):
    assert adjoint_identity_check(tiny_ctx, make_tiny_weights(), n_pairs=3, seed=4) < 1e-10


def test_theta_at_origin_and_gradient(tiny_ctx, rng):
    w = make_tiny_weights()
    prob = DualProblem.build(w, tiny_ctx, delta=1e-3)
    assert theta(np.zeros(2 * tiny_ctx.n), w, tiny_ctx, problem=prob) == 0.0
    x = 0.1 * rng.standard_normal(2 * tiny_ctx.n)
    d = rng.standard_normal(2 * tiny_ctx.n)
    h = 1e-5
    fd = (theta(x + h * d, w, tiny_ctx, problem=prob) - theta(x - h * d, w, tiny_ctx, problem=prob)) / (2 * h)
    g = theta_grad(x, w, tiny_ctx, problem=prob)
    assert fd == pytest.approx(g @ tiny_ctx.mass @ d, rel=1e-7)
    with pytest.raises(ValueError):
        theta_grad(x, w, tiny_ctx, delta=0.0)


def test_leader_reaches_the_ball(tiny_ctx):
    w = make_tiny_weights(eps=0.05)
    it = minimize_theta(w, tiny_ctx, tol=1e-9)
    sol = recover_leader(it, w, tiny_ctx)
    assert sol.terminal_gap <= sol.eps + sol.tol_disc
    assert abs(sol.J_value - sol.dual_value) <= 1e-6 * max(1.0, abs(sol.J_value))
    assert it.history[-1][2] == pytest.approx(it.grad_norm, rel=1e-3, abs=1e-10)


def test_no_control_needed_when_free_state_is_close(tiny_ctx):
    w0 = make_tiny_weights()
    c = free_terminal(w0, tiny_ctx)
    n = tiny_ctx.n
    w = w0.with_(z_T=c[:n], w_T=c[n:], eps=0.2)
    it = minimize_theta(w, tiny_ctx)
    sol = recover_leader(it, w, tiny_ctx)
    assert it.iterations == 0 and sol.J_value == 0.0
    assert sol.terminal_gap < 1e-10


def test_iteration_cap(tiny_ctx):
    with pytest.raises(MaxIterations) as err:
        minimize_theta(make_tiny_weights(eps=0.01), tiny_ctx, tol=1e-14, max_iter=1)
    assert err.value.best is not None


def test_density_probe_full_rank(tiny_ctx):
    rep = density_probe(tiny_ctx, make_tiny_weights())
    assert rep.passed and rep.dim == 8
    assert np.all(np.diff(rep.singular_values) <= 0)


def test_density_probe_size_limit():
    from micropolar_sn.basis import build_basis
    from micropolar_sn.geometry import default_geometry
    from micropolar_sn.motion import identity_motion
    from micropolar_sn.state import Context, TimeGrid
    ctx = Context(build_basis(6), default_geometry(points=8), identity_motion(), TimeGrid(2))
    with pytest.raises(ValueError):
        density_probe(ctx, make_tiny_weights(z_T=None, w_T=None))

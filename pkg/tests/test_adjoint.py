import numpy as np
import pytest

from conftest import make_tiny_weights
from micropolar_sn.adjoint import (TerminalData, duality_check, leader_controls, solve_adjoint,
                                   solve_leader_coupled)
from micropolar_sn.errors import NoConvergence
from micropolar_sn.functionals import eval_Ji, eval_Jti
from micropolar_sn.state import ControlSet, solve_state


def test_terminal_data_roundtrip():
    x = np.arange(8.0)
    td = TerminalData.from_x(x)
    np.testing.assert_array_equal(td.x, x)
    assert TerminalData.zeros(3).x.shape == (6,)


def test_duality_on_tiny_instance(tiny_ctx):
    assert duality_check(tiny_ctx, make_tiny_weights(), n_trials=3, seed=2) < 1e-11


def test_adjoint_gives_follower_gradient(tiny_ctx, rng):
    ctx, w = tiny_ctx, make_tiny_weights()
    q1, q2 = ctx.region("O1").size, ctx.region("O2").size
    v = (rng.standard_normal((4, 2, q1)), rng.standard_normal((4, 2, q2)))
    u = (rng.standard_normal((4, q1)), rng.standard_normal((4, q2)))
    c = ControlSet(None, None, v, u)
    bundle = solve_adjoint(solve_state(c, None, ctx), w, ctx)
    # velocity follower 2 perturbing its own control
    d = rng.standard_normal(v[1].shape)

    def J2(s):
        cs = ControlSet(None, None, (v[0], v[1] + s * d), u)
        return eval_Ji(2, solve_state(cs, None, ctx), cs, w, ctx)
    fd = (J2(1e-4) - J2(-1e-4)) / 2e-4
    grad = w.mu[1] * v[1] + ctx.represent("O2", "vector", bundle.P[:, :, 1])
    assert fd == pytest.approx(ctx.inner("O2", "vector", grad, d), rel=1e-8)
    # scalar follower 1
    e = rng.standard_normal(u[0].shape)

    def Jt1(s):
        cs = ControlSet(None, None, v, (u[0] + s * e, u[1]))
        return eval_Jti(1, solve_state(cs, None, ctx), cs, w, ctx)
    fd = (Jt1(1e-4) - Jt1(-1e-4)) / 2e-4
    grad = w.mu_tilde[0] * u[0] + ctx.represent("O1", "scalar", bundle.P[:, :, 2])
    assert fd == pytest.approx(ctx.inner("O1", "scalar", grad, e), rel=1e-8)
    np.testing.assert_allclose(bundle.q(2), bundle.P[:, :ctx.n, 1] / ctx.rho[:, None])


def test_coupled_solve_picard_and_krylov_agree(tiny_ctx, rng):
    w = make_tiny_weights()
    td = rng.standard_normal(2 * tiny_ctx.n)
    picard = solve_leader_coupled(td, w, tiny_ctx, tol=1e-13)
    assert picard.method == "picard" and picard.residual < 1e-12
    krylov = solve_leader_coupled(td, w, tiny_ctx, tol=1e-13, max_iter=1)
    assert krylov.method == "gmres"
    np.testing.assert_allclose(krylov.P, picard.P, rtol=1e-10, atol=1e-12 * np.abs(picard.P).max())
    f, g = leader_controls(tiny_ctx, picard.P)
    assert f.shape[1] == 2 and g.shape == (4, tiny_ctx.region("O").size)


def test_zero_terminal_data_short_circuits(tiny_ctx):
    sol = solve_leader_coupled(np.zeros(2 * tiny_ctx.n), make_tiny_weights(), tiny_ctx)
    assert np.all(sol.P == 0) and sol.residual == 0.0


def test_coupled_solve_reports_failure(tiny_ctx, rng, monkeypatch):
    import micropolar_sn.adjoint as adj
    monkeypatch.setattr(adj, "gmres", lambda A, b, **kw: (np.zeros_like(b), 1))
    with pytest.raises(NoConvergence):
        solve_leader_coupled(rng.standard_normal(2 * tiny_ctx.n), make_tiny_weights(), tiny_ctx, max_iter=1)

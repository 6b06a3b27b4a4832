import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from micropolar_sn.basis import assemble, build_basis, evaluate, project, static_operators
from micropolar_sn.errors import QuadratureOrderError, SizeError
from micropolar_sn.fields import CoefficientFields, stream_velocity
from micropolar_sn.geometry import default_geometry
from micropolar_sn.motion import MotionLaw, identity_motion

M = np.array([[1.0, 0.2], [0.1, 1.0]])
GEO = default_geometry(points=8, max_cell_width=0.25)


@pytest.mark.parametrize("n", [0, 33, 2.5])
def test_size_limits(n):
    with pytest.raises(SizeError):
        build_basis(n)


def test_quadrature_order_guard():
    with pytest.raises(QuadratureOrderError):
        assemble(build_basis(4), default_geometry(points=5), identity_motion())


def test_velocity_modes_are_divergence_free_after_unmapping():
    b = build_basis(3, M)
    y = np.random.default_rng(0).random((2, 50))
    tab = b.tabulate(y)
    psi_grad = np.einsum("ij,ajlp->ailp", np.linalg.inv(M), tab.DZ)
    np.testing.assert_allclose(psi_grad[:, 0, 0] + psi_grad[:, 1, 1], 0.0, atol=1e-10)


def test_identity_matrices_have_closed_forms():
    b = build_basis(3)
    op = assemble(b, GEO, identity_motion())
    lam = b.eigenvalues
    np.testing.assert_allclose(op.mass_v, np.diag(lam / 4), atol=1e-11)
    np.testing.assert_allclose(op.mass_w, np.eye(b.dim) / 4, atol=1e-13)
    np.testing.assert_allclose(op.stiff_v, np.diag(lam ** 2 / 4), atol=1e-9)
    np.testing.assert_allclose(op.stiff_w, np.diag(lam / 4), atol=1e-11)
    np.testing.assert_allclose(op.curl_wv, np.diag(lam / 4), atol=1e-11)
    np.testing.assert_allclose(op.curl_zw, np.diag(lam / 4), atol=1e-11)
    assert np.all(op.drift_v == 0) and op.weight == 1.0


def test_scalar_drift_by_parts():
    b = build_basis(3, M)
    st_ = static_operators(b, GEO.grid)
    # int (y . grad phi_b) phi_a + (a <-> b) = -2 int phi_a phi_b since div y = 2
    np.testing.assert_allclose(st_.ydot_w + st_.ydot_w.T, -2 * st_.mass_w, atol=1e-12)


def test_divergence_free_advection_is_skew():
    b = build_basis(3)
    F = CoefficientFields(stream_velocity("sin(pi*y1)**2*sin(pi*y2)**2"), None)
    op = assemble(b, GEO, identity_motion(), F, t=0.3)
    np.testing.assert_allclose(op.adv_w + op.adv_w.T, 0.0, atol=1e-10)


def test_operator_scales_with_dilation():
    b = build_basis(2, M)
    m = MotionLaw("constant", (2.0,), M)
    one = assemble(b, GEO, MotionLaw("constant", (1.0,), M))
    two = assemble(b, GEO, m)
    np.testing.assert_allclose(two.stiff_v, one.stiff_v / 4, rtol=1e-12, atol=1e-12)
    # curl terms carry one derivative
    np.testing.assert_allclose(two.curl_wv, one.curl_wv / 2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(two.curl_zw, one.curl_zw / 2, rtol=1e-12, atol=1e-14)
    assert two.weight == pytest.approx(4 * abs(np.linalg.det(M)))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=9, max_size=9))
def test_projection_reproduces_span(coeffs):
    b = build_basis(3, M)
    c = np.array(coeffs)
    back = project(b, lambda y: evaluate(b, c, y, "scalar"), GEO.grid)
    np.testing.assert_allclose(back, c, atol=1e-10)
    back_v = project(b, lambda y: evaluate(b, c, y, "velocity"), GEO.grid, kind="velocity")
    np.testing.assert_allclose(back_v, c, atol=1e-10)


def test_evaluate_velocity_is_mapped_stream():
    b = build_basis(2, M)
    y = np.random.default_rng(1).random((2, 7))
    c = np.arange(4.0)
    np.testing.assert_allclose(evaluate(b, c, y, "velocity"), M @ evaluate(b, c, y, "stream"))

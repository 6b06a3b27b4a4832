import numpy as np

from micropolar_sn.basis import build_basis
from micropolar_sn.fields import CoefficientFields, VectorField
from micropolar_sn.geometry import default_geometry
from micropolar_sn.motion import identity_motion
from micropolar_sn.reference import ReferenceSolver
from micropolar_sn.state import Context, TimeGrid

H = ("sin(pi*y1)*y2", "0.2*t")
TH = "y1*y2*(1 - y1)"


def test_reference_operator_matches_assembly():
    ctx = Context(build_basis(3), default_geometry(), identity_motion(), TimeGrid(4),
                  CoefficientFields(VectorField(*H), TH))
    ref = ReferenceSolver(3, 4, 1.0, H, TH)
    np.testing.assert_allclose(ref.mass, ctx.mass, atol=1e-12)
    for m, t in enumerate(ctx.grid.times[1:]):
        L = ctx.ops[m].operator()
        np.testing.assert_allclose(ref.operator(t), L, atol=1e-10 * np.abs(L).max())


def test_reference_free_decay():
    ref = ReferenceSolver(2, 3)
    x0 = np.zeros(8)
    x0[4] = 1.0
    X = ref.solve(x0)
    assert np.all(np.abs(X[-1]) < np.abs(X[0]).max())
    assert np.all(np.isfinite(X))

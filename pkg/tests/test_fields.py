import numpy as np
import pytest

from micropolar_sn.errors import ConfigError
from micropolar_sn.fields import CoefficientFields, ScalarField, VectorField, stream_velocity


def test_scalar_field_values_and_derivatives():
    s = ScalarField("sin(pi*y1)*y2**2*exp(t)")
    y = np.array([[0.3, 0.7], [0.2, 0.5]])
    t = 0.4
    np.testing.assert_allclose(s(y, t), np.sin(np.pi * y[0]) * y[1] ** 2 * np.exp(t))
    g = s.grad(y, t)
    np.testing.assert_allclose(g[0], np.pi * np.cos(np.pi * y[0]) * y[1] ** 2 * np.exp(t))
    np.testing.assert_allclose(g[1], 2 * np.sin(np.pi * y[0]) * y[1] * np.exp(t))
    np.testing.assert_allclose(s.hess(y, t)[1, 1], 2 * np.sin(np.pi * y[0]) * np.exp(t))
    np.testing.assert_allclose(s.dt(y, t), s(y, t))


def test_constant_fields_broadcast():
    s = ScalarField("1.5")
    assert s(np.zeros((2, 3))).shape == (3,)
    assert ScalarField(0).is_zero and not s.is_zero


@pytest.mark.parametrize("bad", ["log(y1)", "y3 + 1", "sin(", "import os"])
def test_grammar_rejects(bad):
    with pytest.raises(ConfigError):
        ScalarField(bad)


def test_stream_velocity_is_divergence_free():
    v = stream_velocity("sin(pi*y1)*sin(2*pi*y2)*y1")
    y = np.random.default_rng(0).random((2, 20))
    g = v.grad(y)
    np.testing.assert_allclose(g[0, 0] + g[1, 1], 0.0, atol=1e-12)


def test_coefficient_fields_default_to_zero():
    F = CoefficientFields()
    assert F.is_zero
    assert not CoefficientFields(VectorField("y1", 0)).is_zero

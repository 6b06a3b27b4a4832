"""Closed-form scalar and vector fields on the cylinder.

Expressions use the variables ``y1``, ``y2``, ``t`` and the constant ``pi``;
the only functions accepted are ``sin``, ``cos`` and ``exp``, combined with
``+ - * /`` and integer or real powers.  Examples::

    "0.5*sin(pi*y1)*sin(2*pi*y2)*exp(-t)"
    "1 + t**2"
"""
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import ConfigError

Y1, Y2, T = sp.symbols("y1 y2 t", real=True)
_LOCALS = {"y1": Y1, "y2": Y2, "t": T, "pi": sp.pi,
           "sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_ALLOWED_FUNCS = (sp.sin, sp.cos, sp.exp)


def parse_expression(text):
    if isinstance(text, (int, float)):
        return sp.Float(text) if isinstance(text, float) else sp.Integer(text)
    if isinstance(text, sp.Expr):
        expr = text
    else:
        try:
            expr = sp.sympify(str(text), locals=_LOCALS, evaluate=True)
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"cannot parse field expression {text!r}: {exc}") from None
    bad = expr.free_symbols - {Y1, Y2, T}
    if bad:
        raise ConfigError(f"unknown symbols {sorted(map(str, bad))} in expression {text!r}")
    for f in expr.atoms(sp.Function):
        if not isinstance(f, _ALLOWED_FUNCS):
            raise ConfigError(f"function {f.func} is outside the expression grammar ({text!r})")
    return expr


def _compile(expr):
    fn = sp.lambdify((Y1, Y2, T), expr, modules="numpy")

    def call(y, t):
        y = np.asarray(y, dtype=float)
        out = fn(y[0], y[1], t)
        return np.broadcast_to(np.asarray(out, dtype=float), y.shape[1:]).copy()
    return call


class ScalarField:
    """A scalar field ``s(y, t)`` with exact first and second derivatives."""

    def __init__(self, expr):
        self.expr = parse_expression(expr)
        self.is_zero = self.expr == 0
        self._v = _compile(self.expr)
        self._g = [_compile(sp.diff(self.expr, v)) for v in (Y1, Y2)]
        self._h = [[_compile(sp.diff(self.expr, a, b)) for b in (Y1, Y2)] for a in (Y1, Y2)]
        self._t = _compile(sp.diff(self.expr, T))

    def __repr__(self):
        return f"ScalarField({self.expr})"

    def __call__(self, y, t=0.0):
        return self._v(y, t)

    def grad(self, y, t=0.0):
        return np.stack([g(y, t) for g in self._g])

    def hess(self, y, t=0.0):
        return np.stack([np.stack([h(y, t) for h in row]) for row in self._h])

    def dt(self, y, t=0.0):
        return self._t(y, t)


class VectorField:
    """Two-component field built from two :class:`ScalarField` objects."""

    def __init__(self, c1, c2):
        self.components = (as_scalar(c1), as_scalar(c2))
        self.is_zero = all(c.is_zero for c in self.components)

    def __repr__(self):
        return f"VectorField({self.components[0].expr}, {self.components[1].expr})"

    def __call__(self, y, t=0.0):
        return np.stack([c(y, t) for c in self.components])

    def grad(self, y, t=0.0):
        """``out[k, l] = d(component k)/d(y_l)``."""
        return np.stack([c.grad(y, t) for c in self.components])

    def dt(self, y, t=0.0):
        return np.stack([c.dt(y, t) for c in self.components])


def as_scalar(value):
    if isinstance(value, ScalarField):
        return value
    return ScalarField(0 if value is None else value)


def as_vector(value):
    if isinstance(value, VectorField):
        return value
    if value is None:
        return VectorField(0, 0)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return VectorField(*value)
    raise ConfigError(f"a vector field needs exactly two component expressions, got {value!r}")


def stream_velocity(expr):
    """Divergence-free field ``curl(s) = (ds/dy2, -ds/dy1)`` of a stream function."""
    s = parse_expression(expr)
    return VectorField(sp.diff(s, Y2), -sp.diff(s, Y1))


@dataclass
class CoefficientFields:
    """Linearization profile: velocity ``h`` and scalar ``theta`` on the cylinder."""
    h: VectorField = None
    theta: ScalarField = None

    def __post_init__(self):
        self.h = as_vector(self.h)
        self.theta = as_scalar(self.theta)

    @property
    def is_zero(self):
        return self.h.is_zero and self.theta.is_zero

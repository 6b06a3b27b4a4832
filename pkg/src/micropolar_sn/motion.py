"""Moving-domain law ``K(t) = k(t) M`` and the coefficients of the pulled-back system.

Points move as ``x = K(t) y``; a field ``z`` on the fixed cylinder corresponds
to ``z_hat(x, t) = z(K(t)^{-1} x, t)`` on the moving domain.
"""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import MotionError, NonInvertible, OutOfRange, StepTooLarge

KINDS = ("constant", "affine", "exponential", "spline")
ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])   # curl(s) = ROT @ grad(s)


class MotionLaw:
    """Scalar dilation ``k(t)`` composed with a fixed invertible matrix ``M``.

    ``params`` per kind: constant ``(a,)``; affine ``(a, b)`` with
    ``k = a + b t``; exponential ``(a, b)`` with ``k = a exp(b t)``;
    spline ``(times, values)`` interpolated by a C2 cubic spline.
    """

    def __init__(self, kind="constant", params=(1.0,), M=None, T=1.0, k0=None):
        if kind not in KINDS:
            raise MotionError(f"unknown motion kind {kind!r}; expected one of {KINDS}")
        self.kind = kind
        self.params = tuple(params) if kind != "spline" else tuple(np.asarray(p, float) for p in params)
        self.M = np.eye(2) if M is None else np.asarray(M, dtype=float).reshape(2, 2)
        self.T = float(T)
        if self.T <= 0:
            raise MotionError("final time T must be positive")
        self.det_M = float(np.linalg.det(self.M))
        if kind == "spline":
            times, values = self.params
            self._spline = CubicSpline(times, values, bc_type="natural")
        ts = np.linspace(0.0, self.T, 2001)
        kmin = float(np.min(self.k(ts)))
        self.k0 = kmin if k0 is None else float(k0)
        if self.k0 <= 0 or kmin < self.k0 - 1e-12:
            raise MotionError(f"k(t) must stay above k0={self.k0} > 0 on [0, T]; min is {kmin:g}")

    def __repr__(self):
        return f"MotionLaw({self.kind!r}, {self.params}, M={self.M.tolist()}, T={self.T})"

    def k(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return self.params[0] + 0.0 * t
        if self.kind == "affine":
            a, b = self.params
            return a + b * t
        if self.kind == "exponential":
            a, b = self.params
            return a * np.exp(b * t)
        return self._spline(t)

    def dk(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return 0.0 * t
        if self.kind == "affine":
            return self.params[1] + 0.0 * t
        if self.kind == "exponential":
            a, b = self.params
            return a * b * np.exp(b * t)
        return self._spline(t, 1)

    def d2k(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind in ("constant", "affine"):
            return 0.0 * t
        if self.kind == "exponential":
            a, b = self.params
            return a * b * b * np.exp(b * t)
        return self._spline(t, 2)

    def K(self, t):
        return float(self.k(t)) * self.M

    def K_inv(self, t):
        return np.linalg.inv(self.M) / float(self.k(t))

    def weight(self, t):
        return np.asarray(self.k(t)) ** 2 * abs(self.det_M)

    @property
    def is_identity(self):
        return (self.kind == "constant" and self.params[0] == 1.0
                and np.array_equal(self.M, np.eye(2)))


def identity_motion(T=1.0):
    return MotionLaw("constant", (1.0,), np.eye(2), T)


@dataclass(frozen=True)
class TransformCoefficients:
    t: float
    k: float
    dk: float
    alpha: np.ndarray       # K(t)
    beta: np.ndarray        # K(t)^{-1}
    drift: np.ndarray       # K'(t) K(t)^{-1}
    diffusion: np.ndarray   # A = beta beta^T
    weight: float           # |det K(t)|
    cof_inv: np.ndarray     # cofactor matrix of K(t)^{-1}
    beta_prime: np.ndarray  # d/dt K(t)^{-1}

    @property
    def drift_rate(self):
        return self.dk / self.k


def cofactor(B):
    """Cofactor matrix of a 2x2 matrix, ``det(B) B^{-T}`` written branch-free."""
    return np.array([[B[1, 1], -B[1, 0]], [-B[0, 1], B[0, 0]]])


def coefficients_at(motion, t):
    t = float(t)
    if not (-1e-12 <= t <= motion.T * (1 + 1e-12)):
        raise OutOfRange(f"t={t} outside [0, {motion.T}]")
    if abs(motion.det_M) < 1e-12:
        raise NonInvertible(f"|det M| = {abs(motion.det_M):.3e} < 1e-12")
    return _coefficients(motion, t)


def _coefficients(motion, t):
    k = float(motion.k(t))
    dk = float(motion.dk(t))
    Minv = np.linalg.inv(motion.M)
    alpha = k * motion.M
    beta = Minv / k
    return TransformCoefficients(
        t=t, k=k, dk=dk, alpha=alpha, beta=beta,
        drift=(dk / k) * np.eye(2),
        diffusion=beta @ beta.T,
        weight=k * k * abs(motion.det_M),
        cof_inv=cofactor(beta),
        beta_prime=-(dk / (k * k)) * Minv,
    )


def pushforward_field(field, coeffs):
    """Field on the cylinder at time ``coeffs.t`` -> field on the moving slice.

    ``field`` maps points of shape ``(2, ...)`` to values; the result maps
    physical points ``x`` to ``field(K(t)^{-1} x)``.
    """
    beta = coeffs.beta

    def pushed(x):
        x = np.asarray(x, dtype=float)
        return field(np.tensordot(beta, x, axes=1))
    return pushed


def pullback_field(field, coeffs):
    alpha = coeffs.alpha

    def pulled(y):
        y = np.asarray(y, dtype=float)
        return field(np.tensordot(alpha, y, axes=1))
    return pulled


# 4th-order central stencils
def _d1(f, h):
    return (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2)) / (12.0 * h)


def _d2(f, h):
    return (-f(-2) + 16.0 * f(-1) - 30.0 * f(0) + 16.0 * f(1) - f(2)) / (12.0 * h * h)


@dataclass
class ChainRuleReport:
    discrepancies: dict
    tolerance: float
    h: float

    @property
    def max_discrepancy(self):
        return max(self.discrepancies.values())

    @property
    def passed(self):
        return self.max_discrepancy <= self.tolerance


def _rel(lhs, rhs):
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(rhs)))))


def verify_chain_rule(motion, test_field, t, h=1e-4, points=5, C=1.0):
    """Compare moving-domain derivatives with their pulled-back expressions.

    ``test_field`` is a :class:`~micropolar_sn.fields.ScalarField` (exact
    y-derivatives) or a plain callable ``f(y, t)`` (y-derivatives by finite
    differences).  Moving-domain derivatives are always finite differences
    of ``x -> f(K(t)^{-1} x, t)``.  Rows: ``time`` (drift identity),
    ``grad`` (first derivatives), ``laplace`` (anisotropic diffusion),
    ``curl_w`` and ``curl_z`` (the two curl transformations).
    """
    if h > 1e-2:
        raise StepTooLarge(f"h={h} > 1e-2")
    if h <= 0:
        raise ValueError("h must be positive")
    h2 = max(h, 1e-3)
    c = _coefficients(motion, t)
    s = np.linspace(0.15, 0.85, points)
    Y = np.stack(np.meshgrid(s, s, indexing="ij")).reshape(2, -1)
    X = c.alpha @ Y

    analytic = hasattr(test_field, "grad")
    f = test_field if analytic else (lambda y, tt: np.asarray(test_field(y, tt), float))

    def zhat(x, tt):
        return f(np.asarray(motion.K_inv(tt)) @ x, tt)

    def ey(j):
        e = np.zeros((2, 1))
        e[j] = 1.0
        return e

    if analytic:
        grad_y = test_field.grad(Y, t)
        hess_y = test_field.hess(Y, t)
        dt_y = test_field.dt(Y, t)
    else:
        grad_y = np.stack([_d1(lambda i, j=j: f(Y + i * h * ey(j), t), h) for j in range(2)])
        hess_y = np.stack([np.stack([
            _d1(lambda i, a=a, b=b: _d1(lambda k: f(Y + i * h2 * ey(a) + k * h2 * ey(b), t), h2), h2)
            if a != b else _d2(lambda i, a=a: f(Y + i * h2 * ey(a), t), h2)
            for b in range(2)]) for a in range(2)])
        dt_y = _d1(lambda i: f(Y, t + i * h), h)

    out = {}
    # d/dt z_hat = -grad z . (K^{-1} K' y) + z_t
    B = c.beta @ (c.dk * motion.M)
    lhs = _d1(lambda i: zhat(X, t + i * h), h)
    rhs = -np.einsum("ln,lj,jn->n", grad_y, B, Y) + dt_y
    out["time"] = _rel(lhs, rhs)
    # d z_hat / dx_j = sum_l beta_lj dz/dy_l
    grad_x = np.stack([_d1(lambda i, j=j: zhat(X + i * h * ey(j), t), h) for j in range(2)])
    out["grad"] = _rel(grad_x, np.einsum("lj,ln->jn", c.beta, grad_y))
    # laplace_x z_hat = sum_{l,r} A_lr d2z/dy_l dy_r
    lhs = sum(_d2(lambda i, j=j: zhat(X + i * h2 * ey(j), t), h2) for j in range(2))
    out["laplace"] = _rel(lhs, np.einsum("lr,lrn->n", c.diffusion, hess_y))
    # curl of a scalar: ROT grad_x w_hat = cof(K^{-1})^T ROT grad_y w
    out["curl_w"] = _rel(ROT @ grad_x, c.cof_inv.T @ (ROT @ grad_y))

    # curl of the vector field z = (f(y1, y2), f(y2, y1)) against the literal sum formula
    if analytic:
        g_sw = test_field.grad(Y[::-1], t)[::-1]
    else:
        g_sw = np.stack([_d1(lambda i, j=j: f((Y + i * h * ey(j))[::-1], t), h) for j in range(2)])
    dz = np.stack([grad_y, g_sw])          # dz[i, l] = dz_i/dy_l
    b = c.beta
    rhs = ((b[0, 0] + b[1, 1]) * (dz[1, 0] - dz[0, 1])
           + sum((-1) ** j * b[i, j] * dz[i, 1 - j] for i in range(2) for j in range(2)))

    def z2hat(x, tt):
        return f((np.asarray(motion.K_inv(tt)) @ x)[::-1], tt)
    lhs = (_d1(lambda i: z2hat(X + i * h * ey(0), t), h)
           - _d1(lambda i: zhat(X + i * h * ey(1), t), h))
    out["curl_z"] = _rel(lhs, rhs)
    return ChainRuleReport(out, max(1e-6, C * h * h), h)

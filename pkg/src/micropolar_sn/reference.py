"""Independent solver on the fixed unit square (no domain motion).

This is a second implementation of the linearized system used only as a
cross-check: with ``k = 1`` and ``M = I`` the transformed problem must
coincide with the plain one.  It shares nothing with the main assembly.
The constant-coefficient blocks come from closed forms for sine modes, the
field-dependent blocks from a single tensor Gauss-Legendre rule on the
square, and control loads from a Gauss rule on the control rectangle.

Unknowns are stream coefficients ``c`` (velocity ``sum c_a curl(phi_a)``)
and scalar coefficients ``d`` (micro-rotation ``sum d_a phi_a``) with
``phi_kl = sin(k pi y1) sin(l pi y2)``.
"""
import numpy as np
import sympy as sp

_Y1, _Y2, _T = sp.symbols("y1 y2 t")


def _lam(expr):
    f = sp.lambdify((_Y1, _Y2, _T), sp.sympify(expr), "numpy")

    def call(y1, y2, t):
        return np.broadcast_to(np.asarray(f(y1, y2, t), dtype=float), np.shape(y1)).astype(float)
    return call


def _gauss(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _modes(N, y1, y2):
    """phi, grad phi, curl phi and the gradient of curl phi at flat points."""
    out = {"phi": [], "g1": [], "g2": [], "p1": [], "p2": [], "dp": []}
    for k in range(1, N + 1):
        for l in range(1, N + 1):
            a, b = k * np.pi, l * np.pi
            sk, ck = np.sin(a * y1), np.cos(a * y1)
            sl, cl = np.sin(b * y2), np.cos(b * y2)
            out["phi"].append(sk * sl)
            out["g1"].append(a * ck * sl)
            out["g2"].append(b * sk * cl)
            # curl phi = (d2 phi, -d1 phi)
            out["p1"].append(b * sk * cl)
            out["p2"].append(-a * ck * sl)
            # [[d1 p1, d2 p1], [d1 p2, d2 p2]]
            out["dp"].append(np.array([[a * b * ck * cl, -b * b * sk * sl],
                                       [a * a * sk * sl, -a * b * ck * cl]]))
    return {k: np.array(v) for k, v in out.items()}


class ReferenceSolver:
    def __init__(self, N, n_steps, T=1.0, h=("0", "0"), theta="0", quad=64):
        self.N, self.n_steps, self.T = N, n_steps, T
        self.dt = T / n_steps
        self.dim = N * N
        lam = np.array([np.pi ** 2 * (k * k + l * l) for k in range(1, N + 1) for l in range(1, N + 1)])
        self.lam = lam
        self.mass = np.diag(np.concatenate([lam / 4.0, np.full(self.dim, 0.25)]))
        self._const = np.zeros((2 * self.dim, 2 * self.dim))
        n = self.dim
        self._const[:n, :n] = np.diag(lam ** 2 / 4.0)          # -Laplace on velocity
        self._const[n:, n:] = np.diag(lam / 4.0)               # -Laplace on micro-rotation
        self._const[:n, n:] = -np.diag(lam / 4.0)              # -curl w tested with curl phi
        self._const[n:, :n] = -np.diag(lam / 4.0)              # -curl z tested with phi
        x, w = _gauss(0.0, 1.0, quad)
        Y1, Y2 = np.meshgrid(x, x, indexing="ij")
        self._y1, self._y2 = Y1.ravel(), Y2.ravel()
        self._w = np.outer(w, w).ravel()
        self._tab = _modes(N, self._y1, self._y2)
        sh = [sp.sympify(e) for e in h]
        st = sp.sympify(theta)
        self._h = [_lam(e) for e in sh]
        self._dh = [[_lam(sp.diff(e, v)) for v in (_Y1, _Y2)] for e in sh]
        self._dth = [_lam(sp.diff(st, v)) for v in (_Y1, _Y2)]
        self._zero_fields = all(e == 0 for e in sh) and st == 0

    def operator(self, t):
        L = self._const.copy()
        if self._zero_fields:
            return L
        n = self.dim
        y1, y2, w, tb = self._y1, self._y2, self._w, self._tab
        h = [f(y1, y2, t) for f in self._h]
        dh = [[f(y1, y2, t) for f in row] for row in self._dh]
        dth = [f(y1, y2, t) for f in self._dth]
        p = [tb["p1"], tb["p2"]]
        dp = tb["dp"]
        # (h . grad) z and (z . grad) h for z = curl phi_b, tested with curl phi_a
        for c in range(2):
            conv = h[0] * dp[:, c, 0] + h[1] * dp[:, c, 1]
            react = p[0] * dh[c][0] + p[1] * dh[c][1]
            L[:n, :n] += (p[c] * w) @ (conv + react).T
        # h . grad w and z . grad theta, tested with phi_a
        L[n:, n:] += (tb["phi"] * w) @ (h[0] * tb["g1"] + h[1] * tb["g2"]).T
        L[n:, :n] += (tb["phi"] * w) @ (p[0] * dth[0] + p[1] * dth[1]).T
        return L

    def load(self, rect, f=None, g=None, t=0.0, quad=24):
        """Load of closed-form controls ``f = (f1, f2)``, ``g`` on ``rect = (x0, x1, y0, y1)``."""
        n = self.dim
        x, wx = _gauss(rect[0], rect[1], quad)
        y, wy = _gauss(rect[2], rect[3], quad)
        Y1, Y2 = np.meshgrid(x, y, indexing="ij")
        y1, y2, w = Y1.ravel(), Y2.ravel(), np.outer(wx, wy).ravel()
        tb = _modes(self.N, y1, y2)
        out = np.zeros(2 * n)
        if f is not None:
            f1, f2 = (_lam(e)(y1, y2, t) for e in f)
            out[:n] = (tb["p1"] * f1 + tb["p2"] * f2) @ w
        if g is not None:
            out[n:] = (tb["phi"] * _lam(g)(y1, y2, t)) @ w
        return out

    def solve(self, x0=None, controls=()):
        """Implicit Euler; ``controls`` is a list of ``(rect, f, g)`` evaluated at ``t_m``."""
        X = np.zeros((self.n_steps + 1, 2 * self.dim))
        if x0 is not None:
            X[0] = x0
        for m in range(1, self.n_steps + 1):
            t = m * self.dt
            b = np.zeros(2 * self.dim)
            for rect, f, g in controls:
                b += self.load(rect, f, g, t)
            S = self.mass + self.dt * self.operator(t)
            X[m] = np.linalg.solve(S, self.mass @ X[m - 1] + self.dt * b)
        return X

"""Reference domain, control/observation rectangles and quadrature masks.

The fixed domain is the unit square.  Every quadrature cell boundary is
aligned with the edges of all declared rectangles, so each indicator is
constant on every cell and its quadrature integral is exact.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ContainmentError, DegenerateRegion, OverlapError, UnknownRegion


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    @classmethod
    def from_seq(cls, seq):
        x0, x1, y0, y1 = (float(s) for s in seq)
        return cls(x0, x1, y0, y1)

    @property
    def area(self):
        return max(self.x1 - self.x0, 0.0) * max(self.y1 - self.y0, 0.0)

    def contains(self, other):
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def intersects(self, other):
        return (min(self.x1, other.x1) > max(self.x0, other.x0)
                and min(self.y1, other.y1) > max(self.y0, other.y0))

    def indicator(self, y):
        """Membership of points ``y`` (shape ``(2, ...)``) in the open rectangle."""
        return ((y[0] > self.x0) & (y[0] < self.x1)
                & (y[1] > self.y0) & (y[1] < self.y1))

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule: ``points`` nodes per axis in every cell."""
    points: int = 12
    max_cell_width: float = 0.2


@dataclass(frozen=True)
class QuadratureGrid:
    x: np.ndarray      # nodes along y1
    wx: np.ndarray
    y: np.ndarray      # nodes along y2
    wy: np.ndarray
    points: int

    @cached_property
    def nodes(self):
        """Tensor nodes, shape ``(2, n_nodes)``, y1 varying slowest."""
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()])

    @cached_property
    def weights(self):
        return np.outer(self.wx, self.wy).ravel()

    @property
    def n_nodes(self):
        return self.x.size * self.y.size


def _axis_rule(breaks, points, max_width):
    g, w = np.polynomial.legendre.leggauss(points)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n_sub = max(1, int(np.ceil((b - a) / max_width - 1e-12)))
        edges = np.linspace(a, b, n_sub + 1)
        for c0, c1 in zip(edges[:-1], edges[1:]):
            h = 0.5 * (c1 - c0)
            xs.append(c0 + h * (g + 1.0))
            ws.append(h * w)
    return np.concatenate(xs), np.concatenate(ws)


def _breaks(values):
    vals = sorted(set([0.0, 1.0] + [float(v) for v in values]))
    out = [vals[0]]
    for v in vals[1:]:
        if v - out[-1] > 1e-12:
            out.append(v)
    return np.array(out)


REGION_NAMES = ("omega", "O", "O1", "O2", "O1d", "O2d")


@dataclass(frozen=True)
class Geometry:
    o_leader: Rect
    o_follower: tuple
    o_obs: tuple
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    extra: tuple = ()
    omega: Rect = UNIT_SQUARE

    def regions(self):
        out = {"omega": self.omega, "O": self.o_leader,
               "O1": self.o_follower[0], "O2": self.o_follower[1],
               "O1d": self.o_obs[0], "O2d": self.o_obs[1]}
        for i, r in enumerate(self.extra):
            out[f"extra{i}"] = r
        return out

    def resolve(self, region):
        """Map a region name or rectangle onto a stored rectangle."""
        regions = self.regions()
        if isinstance(region, str):
            if region not in regions:
                raise UnknownRegion(f"no region named {region!r}")
            return regions[region]
        for r in regions.values():
            if r == region:
                return r
        raise UnknownRegion(f"{region} is not one of the declared rectangles")

    @cached_property
    def grid(self):
        rects = list(self.regions().values())
        bx = _breaks([v for r in rects for v in (r.x0, r.x1)])
        by = _breaks([v for r in rects for v in (r.y0, r.y1)])
        x, wx = _axis_rule(bx, self.quad.points, self.quad.max_cell_width)
        y, wy = _axis_rule(by, self.quad.points, self.quad.max_cell_width)
        return QuadratureGrid(x, wx, y, wy, self.quad.points)


@dataclass(frozen=True)
class Mask:
    values: np.ndarray
    region: Rect

    def integral(self, weights):
        return float(np.dot(weights, self.values))


def _check_inside(name, r):
    if not (r.x1 > r.x0 and r.y1 > r.y0):
        raise DegenerateRegion(f"region {name} has non-positive area: {r}")
    if not (0.0 < r.x0 and r.x1 < 1.0 and 0.0 < r.y0 and r.y1 < 1.0):
        raise ContainmentError(f"region {name} does not lie strictly inside the unit square")


def make_geometry(o_leader, o_follower, o_obs, quad=None, extra=()):
    """Validate the rectangles and build a :class:`Geometry`.

    Rectangles are ``(x0, x1, y0, y1)`` sequences or :class:`Rect`.
    """
    def as_rect(r):
        return r if isinstance(r, Rect) else Rect.from_seq(r)

    o = as_rect(o_leader)
    fol = tuple(as_rect(r) for r in o_follower)
    obs = tuple(as_rect(r) for r in o_obs)
    ext = tuple(as_rect(r) for r in extra)
    if len(fol) != 2 or len(obs) != 2:
        raise ValueError("exactly two follower and two observation regions are required")
    named = [("O", o), ("O1", fol[0]), ("O2", fol[1]), ("O1d", obs[0]), ("O2d", obs[1])]
    named += [(f"extra{i}", r) for i, r in enumerate(ext)]
    for name, r in named:
        _check_inside(name, r)
    for i, r in enumerate(fol):
        if not o.contains(r):
            raise ContainmentError(f"follower region O{i + 1}={r.as_tuple()} is not inside O={o.as_tuple()}")
    if fol[0].intersects(fol[1]):
        raise OverlapError(f"follower regions intersect: {fol[0].as_tuple()} and {fol[1].as_tuple()}")
    return Geometry(o, fol, obs, quad or QuadratureSpec(), ext)


def make_mask(geometry, region):
    rect = geometry.resolve(region)
    values = rect.indicator(geometry.grid.nodes).astype(float)
    return Mask(values, rect)


def default_geometry(points=12, max_cell_width=0.2):
    return make_geometry((0.2, 0.8, 0.2, 0.8),
                         [(0.25, 0.4, 0.25, 0.4), (0.6, 0.75, 0.6, 0.75)],
                         [(0.1, 0.3, 0.6, 0.9), (0.1, 0.3, 0.6, 0.9)],
                         QuadratureSpec(points, max_cell_width))

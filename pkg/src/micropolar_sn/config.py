"""Run configuration (TOML) with a strict schema.

Unknown sections or keys raise :class:`ConfigError` naming the key.  Field
entries are expressions in ``y1``, ``y2``, ``t`` (see :mod:`.fields`).
"""
import hashlib
from dataclasses import dataclass
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .basis import build_basis, project
from .errors import ConfigError
from .fields import CoefficientFields, ScalarField, stream_velocity
from .functionals import CostWeights
from .geometry import QuadratureSpec, make_geometry
from .motion import MotionLaw
from .state import Context, InitialData, TimeGrid

SCHEMA = {
    "": {"seed", "output"},
    "discretization": {"modes", "n_steps", "quad_points", "max_cell_width"},
    "motion": {"kind", "params", "M", "T", "k0", "times", "values"},
    "geometry": {"O", "O1", "O2", "O1d", "O2d"},
    "fields": {"h", "theta", "h_stream"},
    "initial": {"z0_stream", "w0"},
    "weights": {"alpha", "mu", "alpha_tilde", "mu_tilde", "z1d", "z2d", "w1d", "w2d", "eps"},
    "leader": {"target_stream", "target_w", "delta", "tol", "max_iter"},
    "solver": {"nash_tol", "coupled_tol", "power_tol", "power_max_iter"},
}
REQUIRED = ("discretization", "motion", "geometry", "weights", "leader")


def default_config_path():
    return resources.files("micropolar_sn") / "data" / "default.toml"


def _check_keys(raw):
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"unknown section [{key}]")
            for sub in value:
                if sub not in SCHEMA[key]:
                    raise ConfigError(f"unknown key '{key}.{sub}'")
        elif key not in SCHEMA[""]:
            raise ConfigError(f"unknown key '{key}'")
    for sec in REQUIRED:
        if sec not in raw:
            raise ConfigError(f"missing section [{sec}]")


def _get(section, key, default=None, required=False, where=""):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"missing key '{where}.{key}'")
    return default


@dataclass
class RunConfig:
    raw: dict
    text: bytes
    seed: int
    output: str

    @property
    def hash(self):
        return hashlib.sha256(self.text).hexdigest()

    def section(self, name):
        return self.raw.get(name, {})


def load_config(path=None, overrides=None):
    if path is None:
        text = default_config_path().read_bytes()
    else:
        try:
            with open(path, "rb") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def parse_config(text, overrides=None):
    if isinstance(text, str):
        text = text.encode()
    try:
        raw = tomllib.loads(text.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    _check_keys(raw)
    for (sec, key), value in (overrides or {}).items():
        if value is None:
            continue
        if sec:
            raw.setdefault(sec, {})[key] = value
        else:
            raw[key] = value
    # override values are part of the identity of the run
    active = sorted((k, v) for k, v in (overrides or {}).items() if v is not None)
    if active:
        text = text + b"\n# overrides " + repr(active).encode()
    return RunConfig(raw, text, int(raw.get("seed", 0)), str(raw.get("output", "out")))


def build_motion(cfg):
    sec = cfg.section("motion")
    kind = _get(sec, "kind", required=True, where="motion")
    M = _get(sec, "M", [[1.0, 0.0], [0.0, 1.0]])
    T = float(_get(sec, "T", 1.0))
    if kind == "spline":
        params = (_get(sec, "times", required=True, where="motion"),
                  _get(sec, "values", required=True, where="motion"))
    else:
        params = tuple(_get(sec, "params", required=True, where="motion"))
    try:
        return MotionLaw(kind, params, M, T, _get(sec, "k0"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"motion: {exc}") from None


def build_geometry(cfg):
    sec = cfg.section("geometry")
    disc = cfg.section("discretization")
    quad = QuadratureSpec(int(_get(disc, "quad_points", 12)), float(_get(disc, "max_cell_width", 0.2)))
    rects = {k: _get(sec, k, required=True, where="geometry") for k in ("O", "O1", "O2", "O1d", "O2d")}
    for k, r in rects.items():
        if len(r) != 4:
            raise ConfigError(f"geometry.{k} needs four numbers (x0, x1, y0, y1)")
    return make_geometry(rects["O"], [rects["O1"], rects["O2"]], [rects["O1d"], rects["O2d"]], quad)


def build_fields(cfg):
    sec = cfg.section("fields")
    if "h" in sec and "h_stream" in sec:
        raise ConfigError("give either fields.h or fields.h_stream, not both")
    if "h_stream" in sec:
        h = stream_velocity(sec["h_stream"])
    else:
        h = _get(sec, "h")
    return CoefficientFields(h, _get(sec, "theta"))


def _project_stream(basis, geometry, expr):
    s = ScalarField(expr)
    if s.is_zero:
        return np.zeros(basis.dim)
    vel = stream_velocity(s.expr)

    def z(y):
        return np.einsum("ij,j...->i...", basis.M, vel(y))
    return project(basis, z, geometry.grid, kind="velocity")


def _project_scalar(basis, geometry, expr):
    s = ScalarField(expr)
    if s.is_zero:
        return np.zeros(basis.dim)
    return project(basis, lambda y: s(y), geometry.grid)


def build_weights(cfg, basis, geometry):
    sec = cfg.section("weights")
    lead = cfg.section("leader")
    try:
        return CostWeights(
            alpha=_get(sec, "alpha", (1.0, 1.0)), mu=_get(sec, "mu", (1.0, 1.0)),
            alpha_tilde=_get(sec, "alpha_tilde", (1.0, 1.0)), mu_tilde=_get(sec, "mu_tilde", (1.0, 1.0)),
            z_d=(_get(sec, "z1d"), _get(sec, "z2d")), w_d=(_get(sec, "w1d"), _get(sec, "w2d")),
            z_T=_project_stream(basis, geometry, _get(lead, "target_stream", 0)),
            w_T=_project_scalar(basis, geometry, _get(lead, "target_w", 0)),
            eps=float(_get(sec, "eps", 0.1)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"weights: {exc}") from None


def build_initial(cfg, basis, geometry):
    sec = cfg.section("initial")
    return InitialData(_project_stream(basis, geometry, _get(sec, "z0_stream", 0)),
                       _project_scalar(basis, geometry, _get(sec, "w0", 0)))


@dataclass
class Scenario:
    config: RunConfig
    ctx: Context
    weights: CostWeights
    init: InitialData

    def solver(self, key, default):
        return self.config.section("solver").get(key, default)

    def leader_opt(self, key, default):
        return self.config.section("leader").get(key, default)


def build_scenario(cfg):
    disc = cfg.section("discretization")
    motion = build_motion(cfg)
    geometry = build_geometry(cfg)
    basis = build_basis(int(_get(disc, "modes", required=True, where="discretization")), motion.M)
    grid = TimeGrid(int(_get(disc, "n_steps", required=True, where="discretization")), motion.T)
    ctx = Context(basis, geometry, motion, grid, build_fields(cfg))
    return Scenario(cfg, ctx, build_weights(cfg, basis, geometry), build_initial(cfg, basis, geometry))

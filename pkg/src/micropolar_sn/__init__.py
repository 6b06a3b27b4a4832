"""Stackelberg-Nash control of a linearized micropolar fluid on a moving domain.

The state is solved on the fixed unit square after the change of variables
``x = K(t) y``; see the submodules for each layer:

``geometry``, ``motion``, ``basis``, ``state``, ``functionals``, ``adjoint``,
``nash``, ``leader``, ``config``, ``checks``, ``reference``, ``cli``.

Submodules load lazily so that ``micropolar-sn --threads`` can configure
BLAS before numpy is imported.
"""
import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "Rect": "geometry", "QuadratureSpec": "geometry", "make_geometry": "geometry",
    "default_geometry": "geometry",
    "MotionLaw": "motion", "identity_motion": "motion", "verify_chain_rule": "motion",
    "build_basis": "basis", "assemble": "basis",
    "Context": "state", "TimeGrid": "state", "InitialData": "state", "ControlSet": "state",
    "solve_state": "state",
    "CostWeights": "functionals",
    "solve_adjoint": "adjoint", "duality_check": "adjoint", "solve_leader_coupled": "adjoint",
    "solve_nash": "nash", "verify_nash": "nash", "characterize_nash": "nash",
    "check_coercivity": "nash",
    "minimize_theta": "leader", "recover_leader": "leader", "theta": "leader",
    "theta_grad": "leader", "density_probe": "leader",
    "CoefficientFields": "fields", "VectorField": "fields", "ScalarField": "fields",
    "load_config": "config", "build_scenario": "config",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    mod = _EXPORTS.get(name)
    if mod is None:
        raise AttributeError(f"module 'micropolar_sn' has no attribute {name!r}")
    return getattr(importlib.import_module(f".{mod}", __name__), name)

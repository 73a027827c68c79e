"""Sparse phase-space basis engine for 1-D strong-field quantum dynamics.

Submodules are imported lazily so that the command-line front end can pin
BLAS thread environment variables before numpy loads.
"""
import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "GridSpec": "grid", "periodic_grid": "grid", "grid_for_k_limit": "grid",
    "VnLattice": "lattice", "vn_lattice": "lattice",
    "VnBasis": "lattice", "vn_basis": "lattice", "GOLDEN_OFFSET": "lattice",
    "ActiveSet": "reduced", "ReducedState": "reduced",
    "EmptyBasisError": "reduced",
    "reduce_from_grid": "reduced", "synthesize_grid": "reduced",
    "full_coefficients": "reduced",
    "He1dParams": "model", "NirPulse": "model", "XuvPulse": "model",
    "Field": "model", "build_helium": "model", "build_one_electron": "model",
    "factorize_pair_potential": "model", "SystemOperators": "model",
    "EigenConfig": "eigensolve", "eigensolve": "eigensolve",
    "PropagateConfig": "propagate", "propagate": "propagate",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    try:
        mod = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(importlib.import_module(f".{mod}", __name__), name)


def __dir__():
    return __all__

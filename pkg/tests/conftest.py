"""Shared fixtures.

The expensive objects (two-electron systems, ground states) are built once
per session and reused across test modules; tests must treat them as
read-only.
"""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def grid48():
    from pvb.grid import periodic_grid

    return periodic_grid(20.0, 48)


@pytest.fixture(scope="session")
def basis48(grid48):
    from pvb.lattice import vn_basis

    return vn_basis(grid48)


@pytest.fixture(scope="session")
def helium32():
    """He model on a deliberately small box: fast, slightly under-resolved."""
    from pvb.grid import periodic_grid
    from pvb.lattice import vn_basis
    from pvb.model import Field, He1dParams, NirPulse, build_helium

    g = periodic_grid(20.0, 32)
    b = vn_basis(g)
    field = Field([NirPulse(amplitude=0.6627, period=110.32)])
    return build_helium((b, b), He1dParams(), sop_tol=1e-10, field=field)


@pytest.fixture(scope="session")
def helium32_ground(helium32):
    from pvb.eigensolve import EigenConfig, eigensolve

    res = eigensolve(helium32, EigenConfig(W=1e-8))
    assert res.status == "converged"
    return res


@pytest.fixture(scope="session")
def harmonic_system():
    from pvb.grid import periodic_grid
    from pvb.lattice import vn_basis
    from pvb.model import build_one_electron

    g = periodic_grid(30.0, 96)
    b = vn_basis(g)
    return build_one_electron(b, 0.5 * b.grid.x**2)


def rng(seed=0):
    return np.random.default_rng(seed)

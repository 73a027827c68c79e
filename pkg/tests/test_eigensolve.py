import numpy as np
import pytest

from pvb.eigensolve import EigenConfig, eigensolve, error_estimate, seed_cells
from pvb.grid import periodic_grid
from pvb.lattice import vn_basis
from pvb.model import build_helium, build_one_electron
from pvb.oracle import dense_helium, dense_one_electron
from pvb.reduced import synthesize_grid


def test_harmonic_ground_state(harmonic_system):
    res = eigensolve(harmonic_system, EigenConfig(W=1e-8))
    assert res.status == "converged"
    assert res.energy == pytest.approx(0.5, abs=1e-10)
    assert res.error_estimate < 1e-8
    assert not res.boundary_touch
    # adaptive basis stays far below the 96-cell lattice
    assert res.size < 96


def test_harmonic_first_excited_state(harmonic_system):
    res = eigensolve(harmonic_system, EigenConfig(W=1e-8, target=1))
    assert res.status == "converged"
    assert res.energy == pytest.approx(1.5, abs=1e-9)


def test_harmonic_state_matches_dense_oracle(harmonic_system):
    res = eigensolve(harmonic_system, EigenConfig(W=1e-9))
    g = harmonic_system.bases[0].grid
    w, v = dense_one_electron(g, 0.5 * g.x**2).ground_state()
    psi = synthesize_grid(res.state)
    ov = abs(np.vdot(psi, v[:, 0])) / (np.linalg.norm(psi) * np.linalg.norm(v[:, 0]))
    assert ov > 1 - 1e-10
    assert res.energy == pytest.approx(w[0], abs=1e-10)


def test_helium_energy_matches_dense_oracle(helium32, helium32_ground):
    g = helium32.bases[0].grid
    w, _ = dense_helium(g).ground_state()
    # at W = 1e-8 the reduced basis reproduces the same-grid dense answer
    assert helium32_ground.energy == pytest.approx(w[0], abs=1e-9)
    assert helium32_ground.status == "converged"


def test_helium_small_box_flags_boundary_touch(helium32_ground):
    # on a 20 a.u. box the W = 1e-8 skirt presses into the box walls
    assert helium32_ground.boundary_touch
    assert helium32_ground.error_estimate > 0


def test_error_estimate_tracks_under_resolution(helium32, helium32_ground):
    """On a too-small box the intrinsic estimate must flag the real error.

    The N=32, 20 a.u. box misses the true ground energy by ~5e-3; the
    estimate has to land within an order of magnitude of that."""
    better = -2.903386016643   # well-converged box value
    actual = abs(helium32_ground.energy - better)
    est = helium32_ground.error_estimate
    assert actual > 1e-4
    assert est > actual / 10
    assert est < actual * 10


def test_threshold_controls_accuracy_monotonically(helium32):
    g = helium32.bases[0].grid
    e_ref = dense_helium(g).ground_state()[0][0]
    errs = []
    for W in (1e-2, 1e-3, 1e-4):
        res = eigensolve(helium32, EigenConfig(W=W))
        errs.append(abs(res.energy - e_ref))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-7


def test_basis_grows_with_tighter_threshold(helium32):
    r_coarse = eigensolve(helium32, EigenConfig(W=1e-3)).size
    r_fine = eigensolve(helium32, EigenConfig(W=1e-6)).size
    assert r_fine > r_coarse


def test_seed_cells_sit_at_the_potential_minimum(helium32):
    seeds = seed_cells(helium32)
    lat = helium32.bases[0].lattice
    e = helium32.classical_cell_energy().ravel()
    assert (e[seeds] == e.min()).all()
    assert seeds.size >= 1


def test_lanczos_and_dense_pencil_agree(helium32):
    dense = eigensolve(helium32, EigenConfig(W=1e-5, dense_cutoff=10**9))
    # crossover at 200 cells: early solves dense, the bulk shift-invert
    lanczos = eigensolve(helium32, EigenConfig(W=1e-5, dense_cutoff=200))
    assert dense.energy == pytest.approx(lanczos.energy, abs=1e-9)
    assert dense.size == lanczos.size


def test_max_iterations_reported(helium32):
    res = eigensolve(helium32, EigenConfig(W=1e-6, max_iterations=2))
    assert res.status == "max_iterations"
    assert res.iterations == 2


def test_cell_budget_stops_growth(helium32):
    res = eigensolve(helium32, EigenConfig(W=1e-8, max_cells=40))
    assert res.status == "cell_budget"
    assert res.size <= 40


def test_history_records_growth(helium32):
    res = eigensolve(helium32, EigenConfig(W=1e-4))
    assert res.iterations == len(res.history)
    rs = [h["R"] for h in res.history]
    assert rs[0] < rs[-1]
    assert all(h["E"] is not None for h in res.history)
    assert res.counters["blocks"] > 0


def test_error_estimate_zero_when_no_skirt(harmonic_system):
    # with the skirt floor above W every sub-threshold cell is ignored
    res = eigensolve(harmonic_system, EigenConfig(W=1e-6))
    est, n_skirt, C = error_estimate(
        harmonic_system, res.state, res.energy, (False,), floor=1.0)
    assert (est, n_skirt, C) == (0.0, 0, 0.0)


def test_reported_scaling_constant_bounds_estimate(harmonic_system):
    # away from the box walls the estimate is C * sum of squared skirt
    # amplitudes, each amplitude at most W
    res = eigensolve(harmonic_system, EigenConfig(W=1e-6))
    assert not res.boundary_touch
    assert res.n_skirt > 0
    assert res.error_estimate <= res.error_constant * res.n_skirt * res.state.W**2 * (1 + 1e-12)
    assert res.error_constant > 0


def test_custom_seeds_accepted(harmonic_system):
    lat = harmonic_system.bases[0].lattice
    seeds = np.array([lat.flat_index(lat.n_x // 2, lat.n_p // 2)])
    res = eigensolve(harmonic_system, EigenConfig(W=1e-7), seeds=seeds)
    assert res.energy == pytest.approx(0.5, abs=1e-9)

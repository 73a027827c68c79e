import numpy as np
import pytest

from pvb.eigensolve import EigenConfig, eigensolve
from pvb.grid import periodic_grid
from pvb.lattice import vn_basis
from pvb.model import Field, XuvPulse, build_one_electron
from pvb.propagate import TAYLOR_THETA, PropagateConfig, propagate, taylor_step
from pvb.reduced import ReducedState, synthesize_grid


@pytest.fixture(scope="module")
def well_ground(harmonic_system):
    res = eigensolve(harmonic_system, EigenConfig(W=1e-8))
    return ReducedState(res.state.active, res.state.coeffs, 1e-7, 0.0), res.energy


def _kick_pulse(scale):
    # period >> sigma makes the carrier quasi-static: a clean momentum kick
    # of roughly 0.0011 * scale
    return Field([XuvPulse(center=1.5, sigma=0.4, period=60.0, scale=scale)])


@pytest.fixture(scope="module")
def kicked_system():
    # 15 momentum rows: the kicked packet (delta-p ~ 4) stays well clear of
    # the lattice border
    g = periodic_grid(30.0, 150)
    b = vn_basis(g)
    return build_one_electron(b, 0.5 * g.x**2, field=_kick_pulse(2300.0))


@pytest.fixture(scope="module")
def kicked_start(kicked_system):
    res = eigensolve(kicked_system, EigenConfig(W=1e-8))
    return ReducedState(res.state.active, res.state.coeffs, 1e-7, 0.0)


def test_ground_state_is_stationary(harmonic_system, well_ground):
    state0, E = well_ground
    res = propagate(harmonic_system, state0,
                    PropagateConfig(t0=0.0, t1=3.0, dt0=0.05, W=1e-7,
                                    prune_batch_min=10**9))
    assert res.status == "completed"
    # phase advance is e^{-iEt} on every coefficient
    phase = np.exp(-1j * E * res.state.t)
    np.testing.assert_allclose(res.state.coeffs, phase * state0.coeffs, atol=1e-6)
    norms = [row["norm"] for row in res.trace]
    assert abs(norms[-1] / norms[0] - 1) < 1e-7
    drift = max(abs(row["energy"] - E) for row in res.trace if "energy" in row)
    assert drift < 1e-8


def test_taylor_step_defect_shrinks_with_order(harmonic_system, well_ground):
    import scipy.linalg as sla

    state0, _ = well_ground
    ops = harmonic_system.reduced()
    ops.rebuild(state0.active)
    # a random vector excites the whole spectrum of the reduced generator
    # (an eigenvector would make every order look exact)
    r = np.random.default_rng(30)
    c = r.normal(size=ops.size) + 1j * r.normal(size=ops.size)
    c /= ops.norm(c)
    M = np.linalg.solve(ops.S, ops.H0)
    dt = 0.1 / np.linalg.norm(M, 2)
    exact = sla.expm(-1j * dt * M) @ c
    errs = []
    for order in (2, 4, 6):
        approx = taylor_step(ops, c, dt, 0.0, order)
        errs.append(np.linalg.norm(approx - exact))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-10


def test_stability_table_is_conservative():
    # orders with a genuine imaginary-axis stability interval
    for order in (3, 4, 7, 8, 11, 12):
        theta = TAYLOR_THETA[order]
        z = 1j * theta
        # |p_n(z)| <= 1 inside the stability reach
        term, acc = 1.0 + 0j, 1.0 + 0j
        for j in range(1, order + 1):
            term *= z / j
            acc += term
        assert abs(acc) <= 1.0 + 1e-9, f"order {order} unstable at theta"


def test_kicked_packet_tracks_dense_oracle(kicked_system, kicked_start):
    """Momentum-kicked ground state vs split-operator on the full grid."""
    from pvb.oracle import dense_one_electron

    sys = kicked_system
    g = sys.bases[0].grid
    res = propagate(sys, kicked_start,
                    PropagateConfig(t0=0.0, t1=6.0, dt0=0.02, W=1e-7,
                                    norm_tol=1e-9, prune_batch_min=10**9))
    assert res.status == "completed"
    oracle = dense_one_electron(g, 0.5 * g.x**2, pulse=sys.field)
    psi_ref = oracle.propagate_split4(synthesize_grid(kicked_start), 0.0, 6.0, dt=0.001)
    psi = synthesize_grid(res.state)
    ov = abs(np.vdot(psi, psi_ref)) / (np.linalg.norm(psi) * np.linalg.norm(psi_ref))
    assert ov > 1 - 1e-6
    # the kick drives the packet across the lattice; growth must happen
    assert res.stats["expansions"] > 0
    assert res.max_size > kicked_start.size


def test_sub_threshold_skirt_prunes_away(kicked_start, kicked_system):
    # the eigensolver basis carries a 1e-8-level skirt; propagating at a
    # much coarser threshold must shed it within a few steps and stay put
    state0 = ReducedState(kicked_start.active, kicked_start.coeffs, 1e-4, 0.0)
    field_free = build_one_electron(
        kicked_system.bases[0], 0.5 * kicked_system.bases[0].grid.x**2)
    res = propagate(field_free, state0,
                    PropagateConfig(t0=0.0, t1=2.0, dt0=0.02, W=1e-4,
                                    remove_patience=3, prune_batch_min=4))
    assert res.status == "completed"
    assert res.stats["removals"] > 0
    sizes = [row["R"] for row in res.trace]
    assert sizes[-1] < state0.size
    assert max(sizes) == pytest.approx(state0.size, abs=1)


def test_norm_rejection_halves_dt(harmonic_system, well_ground):
    state0, _ = well_ground
    r = np.random.default_rng(31)
    noisy = r.normal(size=state0.size) + 1j * r.normal(size=state0.size)
    state = ReducedState(state0.active, noisy / np.linalg.norm(noisy), 1e-7, 0.0)
    # floating point cannot conserve the norm to 1e-30; every retry fails
    # and dt halves until it underflows
    res = propagate(harmonic_system, state,
                    PropagateConfig(t0=0.0, t1=1.0, dt0=0.01, W=1e-7,
                                    norm_tol=1e-30, dt_min=1e-3))
    assert res.status == "dt_underflow"
    assert res.stats["rejections"] > 0
    assert res.stats["steps"] == 0


def test_trace_rows_are_consistent(harmonic_system, well_ground):
    state0, _ = well_ground
    res = propagate(harmonic_system, state0,
                    PropagateConfig(t0=0.0, t1=1.0, dt0=0.05, W=1e-7))
    assert res.status == "completed"
    assert len(res.trace) == res.stats["steps"]
    steps = [row["step"] for row in res.trace]
    assert steps == list(range(1, len(steps) + 1))
    ts = [row["t"] for row in res.trace]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert ts[-1] == pytest.approx(1.0, abs=1e-9)
    for row in res.trace:
        assert row["dt"] > 0 and row["R"] > 0


def test_time_window_shorter_than_dt(harmonic_system, well_ground):
    state0, _ = well_ground
    res = propagate(harmonic_system, state0,
                    PropagateConfig(t0=0.0, t1=1e-5, dt0=0.05, W=1e-7))
    assert res.status == "completed"
    assert res.state.t == pytest.approx(1e-5)
    assert len(res.trace) == 1
    assert res.trace[0]["dt"] == pytest.approx(1e-5)


def test_zero_length_window_returns_input(harmonic_system, well_ground):
    state0, _ = well_ground
    res = propagate(harmonic_system, state0,
                    PropagateConfig(t0=0.0, t1=0.0, dt0=0.05, W=1e-7))
    assert res.status == "completed"
    assert res.stats["steps"] == 0
    np.testing.assert_array_equal(res.state.coeffs, state0.coeffs)


def test_edge_action_abort_vs_continue():
    """A kick past the momentum border must trip the edge handling."""
    g = periodic_grid(30.0, 96)
    b = vn_basis(g)
    sys = build_one_electron(b, 0.5 * g.x**2, field=_kick_pulse(12000.0))
    gs = eigensolve(sys, EigenConfig(W=1e-7))
    state0 = ReducedState(gs.state.active, gs.state.coeffs, 1e-4, 0.0)
    kw = dict(t0=0.0, t1=3.0, dt0=0.02, W=1e-4, norm_tol=1e-6)
    aborted = propagate(sys, state0, PropagateConfig(**kw, edge_action="abort"))
    assert aborted.status == "edge_collision"
    assert aborted.trace[-1].get("edge") is True
    assert aborted.state.t < 3.0
    carried = propagate(sys, state0, PropagateConfig(**kw, edge_action="continue"))
    assert carried.status == "completed"
    assert carried.stats["edge_steps"] > 0


def test_cell_budget_aborts_growth(kicked_system, kicked_start):
    res = propagate(kicked_system, kicked_start,
                    PropagateConfig(t0=0.0, t1=6.0, dt0=0.02, W=1e-7,
                                    max_cells=kicked_start.size + 4))
    assert res.status == "cell_budget"


def test_checkpoint_resume_is_bit_identical(kicked_system, kicked_start):
    """Interrupting at a checkpoint and resuming retraces the original run."""
    sys = kicked_system
    cfg = PropagateConfig(t0=0.0, t1=4.0, dt0=0.02, W=1e-7, checkpoint_every=25)

    ops_a = sys.reduced()
    ops_a.always_refactor = True
    ops_a.rebuild(kicked_start.active)
    full = propagate(sys, kicked_start, cfg, ops=ops_a)

    snaps = []
    ops_b = sys.reduced()
    ops_b.always_refactor = True
    ops_b.rebuild(kicked_start.active)
    propagate(sys, kicked_start, cfg, ops=ops_b, on_checkpoint=snaps.append)
    assert len(snaps) >= 2
    snap = snaps[0]

    ops_c = sys.reduced()
    ops_c.always_refactor = True
    ops_c.rebuild(snap["state"].active)
    resumed = propagate(sys, snap["state"], cfg, ops=ops_c, resume=snap)

    assert resumed.status == full.status
    np.testing.assert_array_equal(resumed.state.coeffs, full.state.coeffs)
    np.testing.assert_array_equal(resumed.state.active.flat, full.state.active.flat)
    # decision-for-decision identical tail of the trace
    tail = full.trace[snap["step"]:]
    assert len(resumed.trace) == len(tail)
    for a, b in zip(resumed.trace, tail):
        assert a["t"] == b["t"] and a["dt"] == b["dt"] and a["R"] == b["R"]
        assert a["norm"] == b["norm"]


def test_resume_size_mismatch_rejected(harmonic_system, well_ground):
    state0, _ = well_ground
    cfg = PropagateConfig(t0=0.0, t1=1.0, dt0=0.05, W=1e-7, checkpoint_every=5)
    snaps = []
    propagate(harmonic_system, state0, cfg, on_checkpoint=snaps.append)
    snap = dict(snaps[0])
    snap["below_count"] = snap["below_count"][:-1]
    ops = harmonic_system.reduced()
    ops.rebuild(snap["state"].active)
    with pytest.raises(ValueError):
        propagate(harmonic_system, snap["state"], cfg, ops=ops, resume=snap)


def test_on_step_sees_every_accepted_step(harmonic_system, well_ground):
    state0, _ = well_ground
    seen = []
    res = propagate(harmonic_system, state0,
                    PropagateConfig(t0=0.0, t1=0.5, dt0=0.05, W=1e-7),
                    on_step=lambda ops, st, row: seen.append((st.t, st.size)))
    assert len(seen) == res.stats["steps"]
    assert seen[-1][0] == pytest.approx(res.state.t)


def test_dt_grows_in_quiet_stretches(harmonic_system, well_ground):
    state0, _ = well_ground
    res = propagate(harmonic_system, state0,
                    PropagateConfig(t0=0.0, t1=5.0, dt0=1e-3, W=1e-7,
                                    dt_grow=2.0, quiet_steps=2,
                                    prune_batch_min=10**9))
    assert res.status == "completed"
    dts = [row["dt"] for row in res.trace]
    assert max(dts) > 2e-3          # growth happened
    # ... up to the stability cap, never unbounded doubling
    assert max(dts) < 1.0

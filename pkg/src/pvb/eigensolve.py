"""Adaptive eigensolver on the reduced von Neumann lattice.

The basis starts with the cells whose classical phase-space energy is
lowest, and grows by Chebyshev-radius-1 shells around every boundary cell
whose converged coefficient magnitude exceeds the working threshold W; cells
that fall to or below W are pruned in batches.  Convergence is declared when
no *expandable* boundary cell exceeds the threshold.  Cells pressed against
the lattice border (the momentum rows always, the position columns when the
box is treated as non-periodic) cannot be expanded past; if such cells still
carry weight above W the run converges with ``boundary_touch`` set and the
error estimate absorbs their weight.

The reported error estimate comes from second-order perturbation of the
Rayleigh quotient by the dropped skirt: each skirt cell contributes
|c_j|^2 * (2 E <g_j|g_j> - <g_j|H|g_j>)-type terms, so the estimate is
C * sum_skirt |c_j|^2 with C sampled from exact grid-space expectation
values over a few skirt cells.  With skirt amplitudes at the threshold this
reproduces the C * N_w * W^2 scaling bound.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

from .kernels import ReducedOperators
from .model import SystemOperators
from .reduced import ActiveSet, EmptyBasisError, ReducedState


@dataclass
class EigenConfig:
    W: float = 1e-4
    stop_threshold: float | None = None     # default: W
    expand_radius: int = 1
    max_iterations: int = 400
    max_cells: int = 300_000
    dense_cutoff: int = 900                 # pencil size where Lanczos takes over
    lanczos_tol: float = 1e-12
    drop_batch_min: int = 8                 # prune only in batches at least this big
    drop_batch_fraction: float = 0.01       # ... or this fraction of the basis
    wrap_x: bool = False                    # eigenstates: box treated as walls
    target: int = 0                         # 0 = ground state
    workers: int = 1
    error_samples: int = 24
    skirt_floor: float = 1e-14


@dataclass
class EigenResult:
    state: ReducedState
    energy: float
    error_estimate: float
    error_constant: float
    n_skirt: int
    boundary_touch: bool
    status: str
    iterations: int
    history: list = dfield(default_factory=list)
    counters: dict = dfield(default_factory=dict)

    @property
    def size(self) -> int:
        return self.state.size


def seed_cells(system: SystemOperators, rel_tol: float = 1e-9) -> np.ndarray:
    """Cells minimizing the classical energy on lattice centers (with ties)."""
    e = system.classical_cell_energy()
    emin = e.min()
    span = np.ptp(e) or 1.0
    mask = e <= emin + rel_tol * span
    return np.nonzero(mask.ravel())[0].astype(np.int64)


def _solve_pencil(ops: ReducedOperators, target: int, prev: np.ndarray | None,
                  prev_energy: float | None, cfg: EigenConfig):
    R = ops.size
    k = target + 1
    # the first solve of a run is always dense (the seed pencil is tiny);
    # the shift-invert target below needs a trustworthy previous energy or
    # it can lock onto the wrong branch of the spectrum
    if R <= max(cfg.dense_cutoff, k + 2) or prev_energy is None:
        w, v = sla.eigh(ops.H0, ops.S, subset_by_index=(0, min(k - 1, R - 1)))
        idx = min(target, w.size - 1)
        return float(w[idx]), np.ascontiguousarray(v[:, idx])
    sigma = prev_energy - 0.1 * (1.0 + abs(prev_energy))
    # the shifted pencil is a throwaway: accumulate it in a single buffer and
    # hand LAPACK the transposed view, which is Fortran-contiguous, so the
    # factorization recycles that buffer instead of copying it.  Solving the
    # untransposed system then needs trans=1.
    A = ops.S * (-sigma)
    A += ops.H0
    lu = sla.lu_factor(A.T, overwrite_a=True)
    opinv = LinearOperator((R, R), matvec=lambda b: sla.lu_solve(lu, b, trans=1),
                           dtype=complex)
    v0 = None
    if prev is not None:
        v0 = np.zeros(R, dtype=complex)
        v0[:prev.size] = prev
        if not np.linalg.norm(v0):
            v0 = None
    w, v = eigsh(ops.H0, k=k, M=ops.S, sigma=sigma, OPinv=opinv,
                 which="LM", v0=v0, tol=cfg.lanczos_tol)
    order = np.argsort(w)
    idx = order[min(target, w.size - 1)]
    return float(w[idx]), np.ascontiguousarray(v[:, idx])


def _exact_expectation(system: SystemOperators, code: np.ndarray) -> complex:
    """<g|H|g> for one lattice product Gaussian, evaluated on the full grid."""
    from .grid import apply_kinetic
    bases = system.bases
    shape = []
    for b in bases:
        shape += [b.lattice.n_x, b.lattice.n_p]
    coords = np.unravel_index(int(code), shape)
    cols = []
    for d, b in enumerate(bases):
        kd = coords[2 * d] * b.lattice.n_p + coords[2 * d + 1]
        cols.append(b.G[:, kd])
    masses = system.meta.get("masses", [1.0] * len(bases))
    if len(bases) == 1:
        g = cols[0]
        hg = apply_kinetic(bases[0].grid, g, masses[0])
        hg = hg + system.potential_on_grid() * g
        return complex(np.vdot(g, hg))
    g = np.outer(cols[0], cols[1])
    hg = apply_kinetic(bases[0].grid, g, masses[0], axis=0)
    hg = hg + apply_kinetic(bases[1].grid, g, masses[1], axis=1)
    hg = hg + system.potential_on_grid() * g
    return complex(np.vdot(g, hg))


def error_estimate(system: SystemOperators, state: ReducedState, energy: float,
                   wrap_x: tuple[bool, ...], samples: int = 24,
                   floor: float = 1e-14):
    """(estimate, n_skirt, C): second-order weight of the cut-off skirt.

    The skirt is every active cell at or below the threshold (above the
    numerical floor) plus any border cell stuck above it; C is the largest
    sampled |2 E <g|g> - <g|H|g>| over skirt cells.
    """
    c = state.coeffs
    amp = np.abs(c)
    skirt = (amp <= state.W) & (amp > floor)
    stuck = state.active.edge_mask(wrap_x) & (amp > state.W)
    sel = skirt | stuck
    n_skirt = int(skirt.sum())
    if not sel.any():
        return 0.0, 0, 0.0
    idx = np.nonzero(sel)[0]
    take = idx[np.argsort(-amp[idx])][:samples]
    C = 0.0
    for pos in take:
        gh = _exact_expectation(system, state.active.flat[pos])
        C = max(C, abs(2.0 * energy - gh))
    est = C * float(np.sum(amp[sel] ** 2))
    return float(est), n_skirt, float(C)


def eigensolve(system: SystemOperators, cfg: EigenConfig,
               seeds: np.ndarray | None = None,
               ops: ReducedOperators | None = None) -> EigenResult:
    thr = cfg.stop_threshold if cfg.stop_threshold is not None else cfg.W
    wrap = (cfg.wrap_x,) * system.ndim if isinstance(cfg.wrap_x, bool) else tuple(cfg.wrap_x)

    if seeds is None:
        seeds = seed_cells(system)
    if seeds.size == 0:
        raise EmptyBasisError("no seed cells")
    active = ActiveSet(system.bases, np.sort(np.asarray(seeds, dtype=np.int64)))
    if ops is None:
        ops = system.reduced(cfg.workers, track_gram=False, with_field=False)
    ops.rebuild(active)

    prev = None
    energy = None
    c = None
    history = []
    status = "max_iterations"
    boundary_touch = False
    it = 0

    for it in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        energy, c = _solve_pencil(ops, cfg.target, prev, energy, cfg)
        nrm = ops.norm(c)
        if nrm > 0:
            c = c / nrm
        active = ops.active
        amp = np.abs(c)
        boundary = active.boundary_mask(wrap)
        exceed = amp > thr
        grow_from = np.nonzero(boundary & exceed)[0]
        bmax = float(amp[boundary].max()) if boundary.any() else 0.0
        history.append({"iter": it, "R": len(active), "E": energy,
                        "boundary_max": bmax, "wall": time.perf_counter() - t0})

        if grow_from.size == 0:
            status = "converged"
            boundary_touch = bool((active.edge_mask(wrap) & exceed).any())
            break

        # prune cells that fell to or below the threshold, in batches
        droppable = np.nonzero(amp <= cfg.W)[0]
        if droppable.size >= max(cfg.drop_batch_min, cfg.drop_batch_fraction * len(active)) \
                and droppable.size < len(active):
            kept = ops.remove(droppable)
            c = c[kept]
            active = ops.active
            boundary = active.boundary_mask(wrap)
            exceed = np.abs(c) > thr
            grow_from = np.nonzero(boundary & exceed)[0]
            history[-1]["dropped"] = int(droppable.size)

        cand = active.expansion_candidates(cfg.expand_radius, wrap, around=grow_from)
        if cand.size == 0:
            status = "converged"
            boundary_touch = True
            break
        if len(active) + cand.size > cfg.max_cells:
            status = "cell_budget"
            break
        ops.expand(cand)
        history[-1]["added"] = int(cand.size)
        prev = c

    if c.size != len(ops.active):
        # stopped right after an expansion: the freshly added cells were
        # never solved for, so they carry zero weight in the final state
        c = np.concatenate([c, np.zeros(len(ops.active) - c.size, dtype=complex)])
    est, n_skirt, C = error_estimate(
        system, ReducedState(ops.active, c, cfg.W), energy, wrap,
        cfg.error_samples, cfg.skirt_floor)
    state = ReducedState(ops.active, c, cfg.W)
    return EigenResult(state, float(energy), est, C, n_skirt,
                       boundary_touch, status, it, history,
                       ops.counters.snapshot())

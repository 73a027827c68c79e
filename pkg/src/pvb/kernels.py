"""Matrix elements of operators between biorthogonal lattice functions.

Everything the reduced solvers need is a block of B~^dag O B~ for a handful
of one-dimensional operators O.  Two storage schemes cover them all:

* ``DenseKernel``   -- the full N x N matrix B^dag O B (kinetic, momentum).
* ``PhaseKernel``   -- for *multiplicative* O = diag(h).  The lattice
  translation/modulation symmetry of the periodized Gaussians collapses the
  N^2 elements to n_x * n_x * n_p numbers: with b'_nl the column b_nl with
  its center phase stripped,

      M[(n,a),(n',b)] = exp(i p_0 dx_lat (n-n') + i x_0 dp_lat (a-b))
                        * omega^floor((b-a)/n_p) * kappa[n, n', (b-a) mod n_p]
      kappa[n,n',d]   = b'_n0^dag diag(h e^{i d dp_lat x}) b'_n'0,
      omega           = exp(2 i K x_min)    (the Nyquist wrap factor).

  kappa itself is computed by folding the pointwise products into momentum
  residues and running one FFT, so building a kernel costs O(N n_x^2), not
  O(N^2).  Sum-of-products potentials store one PhaseKernel per factor.

Element gathers are chunked so scratch index arrays stay small, and every
assembled block is counted, which lets tests audit that incremental updates
touch only new rows and columns.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .lattice import VnBasis
from .reduced import ActiveSet, GramCholesky

_GATHER_CHUNK = 512


class PairTable:
    """Shared scratch for building PhaseKernels on one basis.

    Holds the origin-phase-stripped l=0 biorthogonal columns and their
    pointwise pair products, plus the residue-fold bookkeeping.
    """

    def __init__(self, basis: VnBasis):
        lat = basis.lattice
        self.basis = basis
        self.n_x, self.n_p = lat.n_x, lat.n_p
        cols = np.arange(lat.n_x) * lat.n_p
        phase = np.exp(1j * lat.p_centers[0] * lat.x_centers)
        self.B0 = basis.B[:, cols] * phase[None, :]
        # pair[j, a, b] = conj(B0[j, a]) * B0[j, b]
        self.pair = self.B0.conj()[:, :, None] * self.B0[:, None, :]
        g = basis.grid
        self.omega = np.exp(2j * g.k_max * g.x_min)
        self._dphase = np.exp(1j * lat.dp_lat * g.x_min * np.arange(lat.n_p))

    def kappa_of(self, h: np.ndarray) -> np.ndarray:
        """kappa array (n_x, n_x, n_p) for the multiplicative values ``h``."""
        N = self.basis.grid.npts
        weighted = self.pair * np.asarray(h, dtype=complex)[:, None, None]
        fold = weighted.reshape(N // self.n_p, self.n_p, self.n_x, self.n_x).sum(axis=0)
        kap = np.fft.ifft(fold, axis=0) * self.n_p
        kap *= self._dphase[:, None, None]
        return np.ascontiguousarray(np.moveaxis(kap, 0, -1))


@dataclass
class PhaseKernel:
    """Compressed element matrix of one multiplicative operator."""

    basis: VnBasis
    kappa: np.ndarray                      # (n_x, n_x, n_p)
    phase: np.ndarray = field(init=False)  # (2n_x-1, 2n_p-1) combined phase+twist

    def __post_init__(self):
        lat = self.basis.lattice
        dn = np.arange(-(lat.n_x - 1), lat.n_x)
        da = np.arange(-(lat.n_p - 1), lat.n_p)     # a - b = l_row - l_col
        ph = np.exp(1j * (lat.p_centers[0] * lat.dx_lat * dn[:, None]
                          + lat.x_centers[0] * lat.dp_lat * da[None, :]))
        # twist: stored kappa index is (b-a) mod n_p; for b-a < 0 one factor
        # of omega^-1 restores the true (non-cyclic) value
        g = self.basis.grid
        omega = np.exp(2j * g.k_max * g.x_min)
        ph[:, da > 0] *= np.conj(omega)
        self.phase = ph

    def gather(self, rows: np.ndarray, cols: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Block of elements for per-dim cell indices rows x cols."""
        lat = self.basis.lattice
        n_p = lat.n_p
        nr, lr = rows // n_p, rows % n_p
        nc, lc = cols // n_p, cols % n_p
        if out is None:
            out = np.empty((rows.size, cols.size), dtype=complex)
        for i0 in range(0, rows.size, _GATHER_CHUNK):
            sl = slice(i0, min(i0 + _GATHER_CHUNK, rows.size))
            dmod = (lc[None, :] - lr[sl, None]) % n_p
            blk = self.kappa[nr[sl, None], nc[None, :], dmod]
            blk *= self.phase[nr[sl, None] - nc[None, :] + lat.n_x - 1,
                              lr[sl, None] - lc[None, :] + n_p - 1]
            out[sl] = blk
        return out


@dataclass
class DenseKernel:
    """Full element matrix B^dag O B for one non-multiplicative operator."""

    basis: VnBasis
    matrix: np.ndarray

    def gather(self, rows: np.ndarray, cols: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        blk = self.matrix[rows[:, None], cols[None, :]]
        if out is None:
            return blk
        out[:] = blk
        return out


def multiplicative_kernel(table: PairTable, values: np.ndarray) -> PhaseKernel:
    return PhaseKernel(table.basis, table.kappa_of(values))


def dense_operator_kernel(basis: VnBasis, op_matrix: np.ndarray) -> DenseKernel:
    return DenseKernel(basis, basis.B.conj().T @ op_matrix @ basis.B)


# ---------------------------------------------------------------------------

@dataclass
class DimensionKernels:
    """All per-dimension kernels a Hamiltonian assembly needs."""

    basis: VnBasis
    gram: PhaseKernel          # h == 1
    kinetic: DenseKernel       # p^2 / 2m
    momentum: DenseKernel      # p
    static_v: PhaseKernel | None   # one-body potential (may be None)


@dataclass
class ProductPotential:
    """Sum-of-products two-body potential: V = sum_m coeff_m f_m(x_i) f_m(x_j).

    ``kernels[m][d]`` is the PhaseKernel of factor m on dimension d; factors
    may be shared between dimensions when the potential is exchange
    symmetric.
    """

    coeffs: np.ndarray
    kernels: list[tuple[PhaseKernel, ...]]
    meta: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return len(self.kernels)


class AssemblyCounters:
    def __init__(self):
        self.blocks = 0
        self.elements = 0            # (row, col) pairs assembled
        self.sop_term_elements = 0   # element * SOP-term products

    def snapshot(self) -> dict:
        return {"blocks": self.blocks, "elements": self.elements,
                "sop_term_elements": self.sop_term_elements}


# -- low-level block assembly -------------------------------------------------

def _mirror_upper(A: np.ndarray) -> np.ndarray:
    """Hermitian matrix from the strict upper triangle of ``A`` (real diag).

    Used instead of averaging with the adjoint so that incremental block
    growth (which mirrors the off-diagonal block by conjugation) and a
    from-scratch rebuild agree bit for bit.
    """
    out = np.triu(A, 1)
    out = out + out.conj().T
    np.fill_diagonal(out, np.diagonal(A).real)
    return out


def _block(dims: list[DimensionKernels], pair: ProductPotential | None,
           field_scale: float | None,
           row_cells: list[np.ndarray], col_cells: list[np.ndarray],
           counters: AssemblyCounters | None = None):
    """(S, H0, F) blocks between the given row/col cells.

    ``row_cells[d]`` / ``col_cells[d]`` hold per-dimension lattice indices.
    F (the field-coupling block, sum of per-dimension momenta) is only built
    when ``field_scale`` is not None.
    """
    D = len(dims)
    nr, nc = row_cells[0].size, col_cells[0].size
    grams = [dims[d].gram.gather(row_cells[d], col_cells[d]) for d in range(D)]

    S = grams[0].copy()
    for d in range(1, D):
        S *= grams[d]

    H = np.zeros((nr, nc), dtype=complex)
    F = np.zeros((nr, nc), dtype=complex) if field_scale is not None else None
    for d in range(D):
        rest = None
        for dd in range(D):
            if dd == d:
                continue
            rest = grams[dd] if rest is None else rest * grams[dd]
        one = dims[d].kinetic.gather(row_cells[d], col_cells[d])
        if dims[d].static_v is not None:
            one = one + dims[d].static_v.gather(row_cells[d], col_cells[d])
        H += one * rest if rest is not None else one
        if F is not None:
            fm = dims[d].momentum.gather(row_cells[d], col_cells[d])
            F += fm * rest if rest is not None else fm

    if pair is not None and D >= 2:
        tmp = np.empty((nr, nc), dtype=complex)
        for m in range(pair.rank):
            ks = pair.kernels[m]
            ks[0].gather(row_cells[0], col_cells[0], out=tmp)
            prod = tmp.copy()
            for d in range(1, D):
                prod *= ks[d].gather(row_cells[d], col_cells[d], out=tmp)
            H += pair.coeffs[m] * prod
        if counters is not None:
            counters.sop_term_elements += nr * nc * pair.rank

    if F is not None and field_scale != 1.0:
        F *= field_scale
    if counters is not None:
        counters.blocks += 1
        counters.elements += nr * nc
    return S, H, F


# -- worker-side plumbing for process pools -----------------------------------

_FORK_STATE: dict = {}


def _pool_init(payload):
    _FORK_STATE["payload"] = payload


def _pool_block(args):
    dims, pair, field_scale, row_cells, col_cells = _FORK_STATE["payload"]
    i0, i1 = args
    rc = [r[i0:i1] for r in row_cells]
    t0 = time.perf_counter()
    out = _block(dims, pair, field_scale, rc, col_cells)
    return i0, i1, out, time.perf_counter() - t0


class ReducedOperators:
    """Dense reduced matrices S~, H0~, F~ over an active set, kept in sync.

    Expansion appends rows/columns (computing only the new blocks, counted);
    removal slices and refactors the Gram Cholesky (when tracked, see
    ``track_gram``).  ``workers`` > 1 forks a process pool for large block
    assemblies; merges are ordered, so results do not depend on scheduling.
    """

    def __init__(self, dims: list[DimensionKernels], pair: ProductPotential | None = None,
                 field_scale: float | None = 1.0, workers: int = 1,
                 track_gram: bool = True):
        self.dims = dims
        self.pair = pair
        self.field_scale = field_scale
        self.workers = max(1, int(workers))
        #: keep a Cholesky factor of S~ in sync with every basis edit.  The
        #: propagator needs it each step; eigensolves only ever take S-norms,
        #: and skipping the factor saves an R^2 array and an O(R^3) refactor
        #: per edit on production-size pencils.
        self.track_gram = bool(track_gram)
        self.counters = AssemblyCounters()
        self.active: ActiveSet | None = None
        self.S = self.H0 = self.F = None
        self.chol: GramCholesky | None = None
        self.parallel_time = 0.0
        self.assembly_time = 0.0
        self.min_parallel_rows = 64
        #: refactor the Gram Cholesky from scratch after every basis edit.
        #: Incremental appends are mathematically equivalent but round
        #: differently, which matters when runs must be bit-reproducible
        #: across checkpoint/resume.
        self.always_refactor = False

    # -- helpers --------------------------------------------------------------
    def _cells(self, active: ActiveSet) -> list[np.ndarray]:
        return [active.dim_cells(d) for d in range(active.ndim)]

    def _assemble(self, row_cells, col_cells):
        t0 = time.perf_counter()
        nr = row_cells[0].size
        if self.workers > 1 and nr >= self.min_parallel_rows:
            out = self._assemble_parallel(row_cells, col_cells)
        else:
            out = _block(self.dims, self.pair, self.field_scale,
                         row_cells, col_cells, self.counters)
        self.assembly_time += time.perf_counter() - t0
        return out

    def _assemble_parallel(self, row_cells, col_cells):
        import multiprocessing as mp
        nr, nc = row_cells[0].size, col_cells[0].size
        S = np.empty((nr, nc), dtype=complex)
        H = np.empty((nr, nc), dtype=complex)
        F = np.empty((nr, nc), dtype=complex) if self.field_scale is not None else None
        chunk = max(16, nr // (4 * self.workers))
        spans = [(i, min(i + chunk, nr)) for i in range(0, nr, chunk)]
        payload = (self.dims, self.pair, self.field_scale, row_cells, col_cells)
        ctx = mp.get_context("fork")
        with ctx.Pool(self.workers, initializer=_pool_init, initargs=(payload,)) as pool:
            for i0, i1, (s, h, f), dt in pool.imap(_pool_block, spans):
                S[i0:i1], H[i0:i1] = s, h
                if F is not None:
                    F[i0:i1] = f
                self.parallel_time += dt
        self.counters.blocks += len(spans)
        self.counters.elements += nr * nc
        if self.pair is not None:
            self.counters.sop_term_elements += nr * nc * self.pair.rank
        return S, H, F

    # -- lifecycle -------------------------------------------------------------
    @property
    def size(self) -> int:
        return 0 if self.active is None else len(self.active)

    def rebuild(self, active: ActiveSet) -> None:
        cells = self._cells(active)
        S, H, F = self._assemble(cells, cells)
        self.active = active
        self.S = _mirror_upper(S)
        self.H0 = _mirror_upper(H)
        self.F = _mirror_upper(F) if F is not None else None
        self.chol = GramCholesky(self.S) if self.track_gram else None

    def expand(self, new_codes: np.ndarray) -> np.ndarray:
        """Append cells; returns insertion positions of the new cells."""
        assert self.active is not None
        new_codes = np.asarray(new_codes, dtype=np.int64)
        if new_codes.size == 0:
            return np.empty(0, dtype=np.int64)
        old = self.active
        grown = old.with_added(new_codes)
        dR = len(grown) - len(old)
        if dR == 0:
            self.active = grown
            return np.empty(0, dtype=np.int64)
        R = len(old)
        oc = self._cells(old)
        tail = grown.flat[R:]
        tc_coords = ActiveSet(grown.bases, tail)
        tcells = [tc_coords.dim_cells(d) for d in range(grown.ndim)]

        S12, H12, F12 = self._assemble(oc, tcells) if R else (
            np.zeros((0, dR), complex), np.zeros((0, dR), complex),
            np.zeros((0, dR), complex) if self.field_scale is not None else None)
        S22, H22, F22 = self._assemble(tcells, tcells)
        S22 = _mirror_upper(S22)
        H22 = _mirror_upper(H22)
        if F22 is not None:
            F22 = _mirror_upper(F22)

        def _grow(A, A12, A22):
            out = np.empty((R + dR, R + dR), dtype=complex)
            out[:R, :R] = A
            out[:R, R:] = A12
            out[R:, :R] = A12.conj().T
            out[R:, R:] = A22
            return out

        self.S = _grow(self.S, S12, S22)
        self.H0 = _grow(self.H0, H12, H22)
        if self.F is not None:
            self.F = _grow(self.F, F12, F22)
        self.active = grown
        if self.chol is None:
            pass
        elif self.always_refactor:
            self.chol = GramCholesky(self.S)
        else:
            try:
                self.chol.append(S12, S22)
            except np.linalg.LinAlgError:
                self.chol = GramCholesky(self.S)
        return np.arange(R, R + dR, dtype=np.int64)

    def remove(self, positions: np.ndarray) -> np.ndarray:
        """Drop cells at the given positions; returns surviving positions."""
        assert self.active is not None
        new_active, kept = self.active.with_removed(positions)
        self.active = new_active
        ix = np.ix_(kept, kept)
        self.S = self.S[ix]
        self.H0 = self.H0[ix]
        if self.F is not None:
            self.F = self.F[ix]
        self.chol = GramCholesky(self.S) if self.track_gram else None
        return kept

    # -- algebra ---------------------------------------------------------------
    def apply_h(self, c: np.ndarray, u: float = 0.0) -> np.ndarray:
        out = self.H0 @ c
        if u != 0.0:
            if self.F is None:
                raise RuntimeError("field requested but no momentum coupling was built")
            out += u * (self.F @ c)
        return out

    def apply_generator(self, c: np.ndarray, u: float = 0.0) -> np.ndarray:
        """S~^{-1} (H0~ + u F~) c, the right-hand side of the reduced TDSE."""
        if self.chol is None:
            raise RuntimeError("generator requested but the Gram factor is not tracked")
        return self.chol.solve(self.apply_h(c, u))

    def norm(self, c: np.ndarray) -> float:
        if self.chol is not None:
            return self.chol.norm(c)
        return float(np.sqrt(max(np.vdot(c, self.S @ c).real, 0.0)))

    def energy(self, c: np.ndarray, u: float = 0.0) -> float:
        num = np.vdot(c, self.apply_h(c, u)).real
        den = np.vdot(c, self.S @ c).real
        return num / den

    def parallel_fraction(self) -> float:
        if self.assembly_time <= 0:
            return 0.0
        return min(1.0, self.parallel_time / self.assembly_time)

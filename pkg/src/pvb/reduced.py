"""Reduced (adaptive) subsets of the von Neumann lattice.

A reduced basis is an ordered list of active lattice cells; per dimension d
a cell is (n_d, l_d), flattened to k_d = n_d * n_p + l_d, and cells of the
full product lattice get a single integer code by mixed-radix packing of the
per-dimension k_d.  The order of the list is insertion order: expansions
append, which lets Gram/Hamiltonian blocks and Cholesky factors grow in
place instead of being re-permuted.

Conventions used throughout:
  * the momentum axis never wraps -- a cell in the top or bottom momentum
    row is an "edge" cell and expansion past it is impossible;
  * the position axis may wrap (periodic box) or not, per dimension, chosen
    by the caller;
  * "boundary" cells are active cells with at least one *valid* neighbor
    (Chebyshev distance 1) missing from the active set.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import VnBasis


class EmptyBasisError(RuntimeError):
    """Raised when a reduction leaves no active cells."""


def _pack(coords: np.ndarray, shape: np.ndarray) -> np.ndarray:
    """Mixed-radix packing of coordinate rows (..., m) with radices ``shape``."""
    code = np.zeros(coords.shape[:-1], dtype=np.int64)
    for i in range(shape.size):
        code = code * shape[i] + coords[..., i]
    return code


def _unpack(code: np.ndarray, shape: np.ndarray) -> np.ndarray:
    out = np.empty(code.shape + (shape.size,), dtype=np.int64)
    rest = code.astype(np.int64, copy=True)
    for i in range(shape.size - 1, -1, -1):
        out[..., i] = rest % shape[i]
        rest //= shape[i]
    return out


@dataclass(frozen=True)
class ActiveSet:
    """Insertion-ordered set of active lattice cells over one or more dims."""

    bases: tuple[VnBasis, ...]
    flat: np.ndarray                     # (R,) int64 packed codes, insertion order

    _sorted: np.ndarray = field(init=False, repr=False, compare=False)
    _order: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=np.int64)
        if flat.ndim != 1:
            raise ValueError("active cell list must be 1-D")
        order = np.argsort(flat, kind="stable")
        srt = flat[order]
        if srt.size and (np.diff(srt) == 0).any():
            raise ValueError("duplicate active cells")
        full = int(np.prod([b.grid.npts for b in self.bases]))
        if srt.size and (srt[0] < 0 or srt[-1] >= full):
            raise ValueError("cell code out of range")
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "_sorted", srt)
        object.__setattr__(self, "_order", order)

    # -- shape helpers -------------------------------------------------------
    @property
    def ndim(self) -> int:
        return len(self.bases)

    def __len__(self) -> int:
        return self.flat.size

    @property
    def coord_shape(self) -> np.ndarray:
        """Radices (n_x0, n_p0, n_x1, n_p1, ...) of the packed code."""
        out = []
        for b in self.bases:
            out += [b.lattice.n_x, b.lattice.n_p]
        return np.asarray(out, dtype=np.int64)

    def coords(self) -> np.ndarray:
        """(R, 2*ndim) array of (n_0, l_0, n_1, l_1, ...)."""
        return _unpack(self.flat, self.coord_shape)

    def dim_cells(self, d: int) -> np.ndarray:
        """Per-dimension flat lattice index k_d = n_d*n_p + l_d, length R."""
        c = self.coords()
        npd = self.bases[d].lattice.n_p
        return c[:, 2 * d] * npd + c[:, 2 * d + 1]

    # -- membership ----------------------------------------------------------
    def contains(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self._sorted, codes)
        pos = np.clip(pos, 0, max(self._sorted.size - 1, 0))
        if self._sorted.size == 0:
            return np.zeros(codes.shape, dtype=bool)
        return self._sorted[pos] == codes

    def positions_of(self, codes: np.ndarray) -> np.ndarray:
        """Insertion-order positions of the given codes; -1 where absent."""
        codes = np.asarray(codes, dtype=np.int64)
        out = np.full(codes.shape, -1, dtype=np.int64)
        if self._sorted.size == 0:
            return out
        pos = np.clip(np.searchsorted(self._sorted, codes), 0, self._sorted.size - 1)
        hit = self._sorted[pos] == codes
        out[hit] = self._order[pos[hit]]
        return out

    # -- editing -------------------------------------------------------------
    def with_added(self, codes: np.ndarray) -> "ActiveSet":
        codes = np.unique(np.asarray(codes, dtype=np.int64))
        codes = codes[~self.contains(codes)]
        return ActiveSet(self.bases, np.concatenate([self.flat, codes]))

    def with_removed(self, positions: np.ndarray) -> tuple["ActiveSet", np.ndarray]:
        """Drop cells at the given insertion positions.

        Returns the new set and the surviving old positions (in their kept
        order), so coefficient vectors and matrix blocks can be sliced.
        """
        keep = np.ones(len(self), dtype=bool)
        keep[np.asarray(positions, dtype=np.int64)] = False
        kept = np.nonzero(keep)[0]
        return ActiveSet(self.bases, self.flat[kept]), kept

    # -- neighborhood --------------------------------------------------------
    def _neighbor_codes(self, source: np.ndarray, radius: int,
                        wrap_x: tuple[bool, ...]) -> np.ndarray:
        """All valid cells within Chebyshev ``radius`` of the source cells."""
        if source.size == 0:
            return np.empty(0, dtype=np.int64)
        shape = self.coord_shape
        m = shape.size
        grids = np.indices((2 * radius + 1,) * m).reshape(m, -1).T - radius
        grids = grids[(grids != 0).any(axis=1)]
        src = _unpack(np.asarray(source, dtype=np.int64), shape)   # (S, m)
        cand = src[:, None, :] + grids[None, :, :]                 # (S, O, m)
        valid = np.ones(cand.shape[:2], dtype=bool)
        for d in range(self.ndim):
            cx, cp = 2 * d, 2 * d + 1
            if wrap_x[d]:
                cand[..., cx] %= shape[cx]
            else:
                valid &= (cand[..., cx] >= 0) & (cand[..., cx] < shape[cx])
            valid &= (cand[..., cp] >= 0) & (cand[..., cp] < shape[cp])
        codes = _pack(np.clip(cand, 0, None), shape)[valid]
        return np.unique(codes)

    def expansion_candidates(self, radius: int, wrap_x: tuple[bool, ...],
                             around: np.ndarray | None = None) -> np.ndarray:
        """Inactive valid cells within ``radius`` of the chosen active cells.

        ``around`` gives insertion positions to expand from (default: all).
        """
        src = self.flat if around is None else self.flat[np.asarray(around, dtype=np.int64)]
        codes = self._neighbor_codes(src, radius, wrap_x)
        return codes[~self.contains(codes)]

    def boundary_mask(self, wrap_x: tuple[bool, ...]) -> np.ndarray:
        """True for active cells with a missing valid Chebyshev-1 neighbor."""
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        shape = self.coord_shape
        m = shape.size
        grids = np.indices((3,) * m).reshape(m, -1).T - 1
        grids = grids[(grids != 0).any(axis=1)]
        src = self.coords()
        cand = src[:, None, :] + grids[None, :, :]
        valid = np.ones(cand.shape[:2], dtype=bool)
        for d in range(self.ndim):
            cx, cp = 2 * d, 2 * d + 1
            if wrap_x[d]:
                cand[..., cx] %= shape[cx]
            else:
                valid &= (cand[..., cx] >= 0) & (cand[..., cx] < shape[cx])
            valid &= (cand[..., cp] >= 0) & (cand[..., cp] < shape[cp])
        codes = _pack(np.clip(cand, 0, None), shape)
        missing = ~self.contains(codes)
        return (missing & valid).any(axis=1)

    def edge_mask(self, wrap_x: tuple[bool, ...]) -> np.ndarray:
        """True for cells on a lattice border that expansion cannot cross."""
        c = self.coords()
        out = np.zeros(len(self), dtype=bool)
        for d in range(self.ndim):
            lat = self.bases[d].lattice
            out |= (c[:, 2 * d + 1] == 0) | (c[:, 2 * d + 1] == lat.n_p - 1)
            if not wrap_x[d]:
                out |= (c[:, 2 * d] == 0) | (c[:, 2 * d] == lat.n_x - 1)
        return out


@dataclass
class ReducedState:
    """Coefficients on an active set, in the biorthogonal representation."""

    active: ActiveSet
    coeffs: np.ndarray
    W: float
    t: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (len(self.active),):
            raise ValueError("coefficient vector does not match active set size")

    @property
    def size(self) -> int:
        return len(self.active)


# ---------------------------------------------------------------------------
# grid <-> reduced transfers (dimensions 1 and 2)

def full_coefficients(bases: tuple[VnBasis, ...], psi: np.ndarray) -> np.ndarray:
    """All N^D overlaps <g|psi> as a D-dim tensor indexed by per-dim k_d."""
    if len(bases) == 1:
        return bases[0].G.conj().T @ np.asarray(psi, dtype=complex).ravel()
    if len(bases) == 2:
        p = np.asarray(psi, dtype=complex).reshape(bases[0].grid.npts, bases[1].grid.npts)
        return bases[0].G.conj().T @ p @ bases[1].G.conj()
    raise NotImplementedError("grid transfers implemented for 1 and 2 dimensions")


def reduce_from_grid(bases: tuple[VnBasis, ...], psi: np.ndarray, W: float,
                     t: float = 0.0) -> ReducedState:
    """Threshold the full coefficient tensor: keep cells with |c| > W."""
    c = full_coefficients(bases, psi)
    # packed code ordering: per-dim k_d is (n_d, l_d) packed with radix n_p
    keep = np.nonzero(np.abs(c).ravel() > W)[0]
    if keep.size == 0:
        raise EmptyBasisError(f"no coefficient exceeds W={W}")
    shape = []
    for b in bases:
        shape += [b.lattice.n_x, b.lattice.n_p]
    # c is indexed by (k_0, k_1, ...) = ((n0, l0), (n1, l1), ...) and k-major
    # flattening equals the mixed-radix packing used by ActiveSet
    active = ActiveSet(tuple(bases), keep.astype(np.int64))
    return ReducedState(active, c.ravel()[keep], W, t)


def synthesize_grid(state: ReducedState) -> np.ndarray:
    """Dense grid samples of the state: psi = (prod_d B_d) c."""
    bases = state.active.bases
    if state.active.ndim == 1:
        c = np.zeros(bases[0].grid.npts, dtype=complex)
        c[state.active.dim_cells(0)] = state.coeffs
        return bases[0].B @ c
    if state.active.ndim == 2:
        n0, n1 = bases[0].grid.npts, bases[1].grid.npts
        c = np.zeros((n0, n1), dtype=complex)
        c[state.active.dim_cells(0), state.active.dim_cells(1)] = state.coeffs
        return bases[0].B @ c @ bases[1].B.T
    raise NotImplementedError("grid transfers implemented for 1 and 2 dimensions")


# ---------------------------------------------------------------------------
# Cholesky bookkeeping for the reduced Gram matrix

class GramCholesky:
    """Lower-triangular factor of the reduced Gram matrix, growable in place.

    Appending cells extends the factor with one block solve and one small
    factorization (O(R^2 dR)); removals force a fresh factorization, which
    callers batch for that reason.
    """

    def __init__(self, S: np.ndarray):
        self.L = np.linalg.cholesky(S)

    @property
    def size(self) -> int:
        return self.L.shape[0]

    def append(self, S12: np.ndarray, S22: np.ndarray) -> None:
        from scipy.linalg import solve_triangular, cholesky
        R, dR = S12.shape
        if R != self.size:
            raise ValueError("block row count does not match current factor")
        L21 = solve_triangular(self.L, S12, lower=True).conj().T      # (dR, R)
        schur = S22 - L21 @ L21.conj().T
        L22 = cholesky(schur, lower=True)
        new = np.zeros((R + dR, R + dR), dtype=complex)
        new[:R, :R] = self.L
        new[R:, :R] = L21
        new[R:, R:] = L22
        self.L = new

    def solve(self, b: np.ndarray) -> np.ndarray:
        from scipy.linalg import solve_triangular
        y = solve_triangular(self.L, b, lower=True)
        return solve_triangular(self.L.conj().T, y, lower=False)

    def norm(self, c: np.ndarray) -> float:
        """Gram norm ||psi|| = sqrt(c^dag S c) via the factor."""
        y = self.L.conj().T @ c
        return float(np.linalg.norm(y))

"""von Neumann lattice of phase-space Gaussians and its biorthogonal partner.

The N plane waves of a periodic grid are exchanged for N Gaussians sitting
on a rectangular phase-space lattice: n_x columns spaced dx_lat = L/n_x and
n_p momentum rows spaced dp_lat = 2K/n_p, one state per Planck cell
(dx_lat * dp_lat = h).  Each Gaussian is

    g_nl(x) = (2 pi sigma_x^2)^(-1/4) exp(-((x - x_n)/(2 sigma_x))^2
                                          + i p_l (x - x_n))

periodized over the box by summing a few box-shifted images; the grid
samples of these functions form the column matrix G.  The working basis is
the biorthogonal set B = (G^dag)^{-1}, so that coefficients of a state are
plain Gaussian overlaps, <g_nl|psi>, while synthesis runs through B.

Lattice registration matters: half-cell offsets place a lattice point on the
symmetry zero of the Gaussian's Zak transform and make G exactly singular
(the classic completeness defect of the critical von Neumann lattice).  The
default offset of (3-sqrt(5))/2 of a cell in both x and p is irrational, so
no lattice shape can resonate with the zero; measured condition numbers stay
below ~60 for every shape tried.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .grid import GridSpec

#: default lattice offset, in units of one lattice cell: 1/phi^2 = 2 - phi.
#: Irrational on purpose -- rational offsets p/q make G singular whenever q
#: divides both lattice dimensions (the Zak zero is sampled exactly).
GOLDEN_OFFSET = (3.0 - math.sqrt(5.0)) / 2.0

#: number of periodic images summed on each side when sampling a Gaussian
DEFAULT_IMAGES = 3


class IllConditionedLattice(RuntimeError):
    """Raised when G is numerically singular for the requested lattice."""


def lattice_shape(npts: int, alpha: float = 1.0) -> tuple[int, int]:
    """Split N grid points into n_x * n_p lattice sites with n_x ~ sqrt(alpha*N).

    Only exact factorizations are allowed (every plane wave must map to one
    lattice cell), so the divisor of N closest to sqrt(alpha*N) is used.
    """
    if alpha <= 0:
        raise ValueError("aspect ratio alpha must be positive")
    target = math.sqrt(alpha * npts)
    divisors = [d for d in range(1, npts + 1) if npts % d == 0]
    n_x = min(divisors, key=lambda d: (abs(d - target), d))
    return n_x, npts // n_x


@dataclass(frozen=True)
class VnLattice:
    """Geometry of the phase-space lattice attached to a grid."""

    grid: GridSpec
    n_x: int
    n_p: int
    sigma_x: float
    x_offset: float = GOLDEN_OFFSET   # in cells
    p_offset: float = GOLDEN_OFFSET

    x_centers: np.ndarray = field(init=False, repr=False, compare=False)
    p_centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_x * self.n_p != self.grid.npts:
            raise ValueError(
                f"lattice {self.n_x} x {self.n_p} does not tile {self.grid.npts} plane waves")
        xc = self.grid.x_min + (np.arange(self.n_x) + self.x_offset) * self.dx_lat
        pc = -self.grid.k_max + (np.arange(self.n_p) + self.p_offset) * self.dp_lat
        xc.setflags(write=False)
        pc.setflags(write=False)
        object.__setattr__(self, "x_centers", xc)
        object.__setattr__(self, "p_centers", pc)

    @property
    def dx_lat(self) -> float:
        return self.grid.length / self.n_x

    @property
    def dp_lat(self) -> float:
        return 2.0 * self.grid.k_max / self.n_p

    @property
    def cell_area(self) -> float:
        """Phase-space area per lattice cell; equals h = 2*pi by construction."""
        return self.dx_lat * self.dp_lat

    # --- flat indexing: cell (n, l) <-> k = n * n_p + l ---------------------
    def flat_index(self, n, l):
        return np.asarray(n) * self.n_p + np.asarray(l)

    def cell_coords(self, k):
        k = np.asarray(k)
        return k // self.n_p, k % self.n_p

    def cell_centers(self, k):
        """(x, p) centers for flat cell indices k."""
        n, l = self.cell_coords(k)
        return self.x_centers[n], self.p_centers[l]


def vn_lattice(grid: GridSpec, alpha: float = 1.0, sigma_x: float | None = None,
               x_offset: float = GOLDEN_OFFSET, p_offset: float = GOLDEN_OFFSET) -> VnLattice:
    n_x, n_p = lattice_shape(grid.npts, alpha)
    dxl = grid.length / n_x
    dpl = 2.0 * grid.k_max / n_p
    if sigma_x is None:
        # symmetric cell coverage: sigma_x/sigma_p = dx_lat/dp_lat
        sigma_x = math.sqrt(dxl / (2.0 * dpl))
    return VnLattice(grid, n_x, n_p, float(sigma_x), x_offset, p_offset)


def gaussian_columns(lat: VnLattice, images: int = DEFAULT_IMAGES) -> np.ndarray:
    """Grid samples of the periodized lattice Gaussians, one per column.

    Column k = n*n_p + l holds g_nl at the grid points.  Periodization keeps
    the lattice translation symmetry exact, which in turn makes every column
    an equal-norm copy of the corner one; a single scalar then normalizes
    all of them to unit discrete norm.
    """
    g = lat.grid
    x = g.x
    var4 = 4.0 * lat.sigma_x**2
    pref = (2.0 * np.pi * lat.sigma_x**2) ** -0.25
    # one periodized envelope+phase per (n, l), vectorized over l
    G = np.empty((g.npts, g.npts), dtype=complex)
    for n in range(lat.n_x):
        cols = np.zeros((g.npts, lat.n_p), dtype=complex)
        for w in range(-images, images + 1):
            u = x + w * g.length - lat.x_centers[n]
            env = pref * np.exp(-(u * u) / var4)
            cols += env[:, None] * np.exp(1j * np.outer(u, lat.p_centers))
        G[:, n * lat.n_p:(n + 1) * lat.n_p] = cols
    G /= np.linalg.norm(G[:, 0])
    return G


@dataclass
class VnBasis:
    """Gaussian frame G, biorthogonal exchange B = (G^dag)^{-1}, and Gram data.

    Coefficients of a state psi on the grid are c = G^dag psi; synthesis is
    psi = B c.  The Gram matrix of the biorthogonal set, S = B^dag B, feeds
    every reduced-space solve.
    """

    lattice: VnLattice
    G: np.ndarray
    B: np.ndarray
    S: np.ndarray
    cond_1norm: float

    @property
    def grid(self) -> GridSpec:
        return self.lattice.grid

    def to_coeffs(self, psi: np.ndarray) -> np.ndarray:
        return self.G.conj().T @ psi

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.B @ coeffs


def vn_basis(grid: GridSpec, alpha: float = 1.0, sigma_x: float | None = None,
             x_offset: float = GOLDEN_OFFSET, p_offset: float = GOLDEN_OFFSET,
             images: int = DEFAULT_IMAGES, cond_limit: float = 1e12) -> VnBasis:
    """Build the lattice, sample G, and invert for the biorthogonal columns.

    The inverse is LU-based with one refinement sweep on each of the two
    residuals I - G^dag B and I - B G^dag, which keeps both below ~1e-13
    for well-conditioned lattices.
    """
    lat = vn_lattice(grid, alpha, sigma_x, x_offset, p_offset)
    G = gaussian_columns(lat, images)
    Gh = G.conj().T
    lu = lu_factor(Gh)
    diag_u = np.abs(np.diag(lu[0]))
    if diag_u.min() == 0.0 or not np.isfinite(diag_u).all():
        raise IllConditionedLattice(
            f"singular Gaussian frame for lattice {lat.n_x} x {lat.n_p}: "
            "shift the lattice offsets away from the Zak zero")
    I = np.eye(grid.npts, dtype=complex)
    B = lu_solve(lu, I)
    B += lu_solve(lu, I - Gh @ B)
    B += (I - B @ Gh) @ B
    cond = np.linalg.norm(Gh, 1) * np.linalg.norm(B, 1)
    if cond > cond_limit:
        raise IllConditionedLattice(
            f"Gaussian frame condition estimate {cond:.2e} exceeds {cond_limit:.1e} "
            f"for lattice {lat.n_x} x {lat.n_p}")
    S = B.conj().T @ B
    return VnBasis(lat, G, B, S, float(cond))


def biorthogonality_residuals(basis: VnBasis) -> tuple[float, float]:
    """max|G^dag B - I| and max|B G^dag - I|; both should sit at roundoff."""
    I = np.eye(basis.grid.npts)
    r1 = np.abs(basis.G.conj().T @ basis.B - I).max()
    r2 = np.abs(basis.B @ basis.G.conj().T - I).max()
    return float(r1), float(r2)

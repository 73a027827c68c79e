"""Truncated plane-wave (Fourier pseudospectral) space on a periodic box.

A box of length L sampled at N points carries exactly N plane waves with
wavenumbers k_n = 2*pi*n/L.  For even N the retained set is
n = -N/2+1 ... N/2: the Nyquist wave is kept once, at +K = N*pi/L, so the
k-grid is deliberately asymmetric.  Grid points are x_j = x_min + j*L/N.
The phase-space area covered is (2K)*(L) = N*h with hbar = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Periodic coordinate grid and its plane-wave dual.

    Attributes
    ----------
    length : box size L
    npts : number of grid points N (= number of plane waves retained)
    x_min : left edge of the box; points are x_min + j*L/N, j = 0..N-1
    """

    length: float
    npts: int
    x_min: float

    # derived arrays, filled in __post_init__
    x: np.ndarray = field(init=False, repr=False, compare=False)
    k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.length > 0):
            raise ValueError(f"box length must be positive, got {self.length}")
        if self.npts < 2:
            raise ValueError(f"need at least 2 grid points, got {self.npts}")
        dx = self.length / self.npts
        x = self.x_min + dx * np.arange(self.npts)
        k = 2.0 * np.pi * np.fft.fftfreq(self.npts, d=dx)
        if self.npts % 2 == 0:
            k = k.copy()
            k[self.npts // 2] = abs(k[self.npts // 2])  # Nyquist kept at +K
        x.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", k)

    @property
    def dx(self) -> float:
        return self.length / self.npts

    @property
    def k_max(self) -> float:
        """Largest retained wavenumber K = N*pi/L."""
        return np.pi * self.npts / self.length

    @property
    def phase_space_area(self) -> float:
        """Area L * 2K of the covered phase-space rectangle (= N*h)."""
        return 2.0 * np.pi * self.npts

    def __eq__(self, other):
        return (isinstance(other, GridSpec)
                and self.length == other.length
                and self.npts == other.npts
                and self.x_min == other.x_min)

    def __hash__(self):
        return hash((self.length, self.npts, self.x_min))


def periodic_grid(length: float, npts: int, x_min: float | None = None) -> GridSpec:
    """Build a GridSpec; by default the box is centered on the origin."""
    if x_min is None:
        x_min = -0.5 * length
    return GridSpec(float(length), int(npts), float(x_min))


def grid_for_k_limit(length: float, k_limit: float, x_min: float | None = None) -> GridSpec:
    """Smallest even-N grid whose plane-wave set reaches at least ±k_limit."""
    if k_limit <= 0:
        raise ValueError("k_limit must be positive")
    half = int(np.ceil(k_limit * length / (2.0 * np.pi)))
    return periodic_grid(length, 2 * max(half, 1), x_min)


# ---------------------------------------------------------------------------
# spectral transforms.  ``to_spectral`` returns unitary-normalized plane-wave
# coefficients c_n (Parseval: sum |psi_j|^2 == sum |c_n|^2), in FFT order.

def to_spectral(psi: np.ndarray, axis: int = -1) -> np.ndarray:
    n = psi.shape[axis]
    return np.fft.fft(psi, axis=axis) / np.sqrt(n)


def from_spectral(c: np.ndarray, axis: int = -1) -> np.ndarray:
    n = c.shape[axis]
    return np.fft.ifft(c, axis=axis) * np.sqrt(n)


def apply_kinetic(grid: GridSpec, psi: np.ndarray, mass: float = 1.0, axis: int = -1) -> np.ndarray:
    """(p^2/2m) psi for one coordinate axis of a (possibly tensor) array."""
    shape = [1] * psi.ndim
    shape[axis] = grid.npts
    t = (0.5 / mass) * grid.k**2
    return np.fft.ifft(t.reshape(shape) * np.fft.fft(psi, axis=axis), axis=axis)


def kinetic_matrix(grid: GridSpec, mass: float = 1.0) -> np.ndarray:
    """Dense N x N matrix of p^2/(2m) in the grid-point representation."""
    F = np.fft.fft(np.eye(grid.npts), axis=0)
    t = (0.5 / mass) * grid.k**2
    return np.fft.ifft(t[:, None] * F, axis=0)


def momentum_matrix(grid: GridSpec) -> np.ndarray:
    """Dense N x N matrix of the momentum operator p = -i d/dx."""
    F = np.fft.fft(np.eye(grid.npts), axis=0)
    return np.fft.ifft(grid.k[:, None] * F, axis=0)


# ---------------------------------------------------------------------------
# pseudospectral cardinal functions.  The function attached to grid point x_j
# is the band-limited interpolant that is 1 at x_j and 0 at every other grid
# point:  u_j(x) = (1/N) sum_n exp(i k_n (x - x_j)).  It is complex off the
# grid for even N because of the unpaired Nyquist wave.  Its squared modulus
# integrates to dx over the box, so {u_j/sqrt(dx)} is an orthonormal set in
# the continuum sense.

def cardinal_values(grid: GridSpec, center: float, xs: np.ndarray) -> np.ndarray:
    """Evaluate the cardinal function centered at ``center`` at points xs."""
    xs = np.asarray(xs, dtype=float)
    u = xs[..., None] - center
    return np.exp(1j * u * grid.k).sum(axis=-1) / grid.npts


def band_limited_interpolate(grid: GridSpec, psi: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Evaluate the plane-wave interpolant of grid samples ``psi`` at xs."""
    c = np.fft.fft(np.asarray(psi)) / grid.npts
    u = np.asarray(xs, dtype=float)[..., None] - grid.x_min
    return np.exp(1j * u * grid.k) @ c


def refine(grid: GridSpec, factor: int) -> GridSpec:
    """A grid on the same box with ``factor`` times as many points."""
    return GridSpec(grid.length, grid.npts * int(factor), grid.x_min)

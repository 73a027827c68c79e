"""One-dimensional one- and two-electron models and their reduced operators.

The two-electron reference system is a 1-D helium atom in atomic units: both
electrons and the clamped nucleus interact through soft-Coulomb potentials
with a common softening length a0,

    H = sum_i [ p_i^2/2m + q Q / sqrt(x_i^2 + a0^2) ]
        + q^2 / sqrt((x1-x2)^2 + a0^2)
        - (q/m) u(t) (p1 + p2),

with electron charge q = -1 and nuclear charge Q = -2q.  The one-body parts
stay exact tensor factors; only the electron-electron term is expanded in a
sum of products so each term factorizes over dimensions.  For the symmetric
kernel an eigendecomposition does this optimally (Eckart-Young in the
Frobenius norm) and makes the two factors of each term identical, halving
kernel storage and keeping exchange symmetry exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, kinetic_matrix, momentum_matrix
from .lattice import VnBasis
from .kernels import (DimensionKernels, PairTable, ProductPotential,
                      ReducedOperators, dense_operator_kernel,
                      multiplicative_kernel)


@dataclass(frozen=True)
class He1dParams:
    """Soft-Coulomb helium parameters (atomic units)."""

    a0: float = 0.739707902
    q_e: float = -1.0
    m_e: float = 1.0
    nuclear_q: float | None = None   # default: -2 q_e

    @property
    def Q(self) -> float:
        return -2.0 * self.q_e if self.nuclear_q is None else self.nuclear_q

    def nuclear_potential(self, x: np.ndarray) -> np.ndarray:
        return self.q_e * self.Q / np.sqrt(x**2 + self.a0**2)

    def pair_potential(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """V_ee on the tensor grid: rows x1, columns x2."""
        d = np.asarray(x1)[:, None] - np.asarray(x2)[None, :]
        return self.q_e**2 / np.sqrt(d**2 + self.a0**2)

    @property
    def field_scale(self) -> float:
        """Prefactor of u(t)*(p1+p2) in the Hamiltonian: -q/m."""
        return -self.q_e / self.m_e


# ---------------------------------------------------------------------------
# driving pulses

@dataclass(frozen=True)
class NirPulse:
    """Few-cycle IR envelope pulse, compactly supported on [0, 4*period]."""

    amplitude: float = 0.6627
    period: float = 110.32

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= 4.0 * self.period)
        carrier = np.sin(2.0 * np.pi * t / self.period - np.pi)
        env = np.sin(np.pi * t / (4.0 * self.period)) ** 2
        return np.where(inside, self.amplitude * carrier * env, 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, 4.0 * self.period


@dataclass(frozen=True)
class XuvPulse:
    """Gaussian-envelope attosecond pulse centered at ``center``."""

    center: float
    amplitude: float = 0.00176
    period: float = 2.07
    sigma: float = 6.207
    scale: float = 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        carrier = np.sin(2.0 * np.pi * (t - self.center + 1.25 * self.period) / self.period)
        env = np.exp(-((t - self.center) ** 2) / (2.0 * self.sigma**2))
        return self.scale * self.amplitude * carrier * env

    @property
    def support(self) -> tuple[float, float]:
        return self.center - 8.0 * self.sigma, self.center + 8.0 * self.sigma


class Field:
    """Sum of pulses, with a quadrature rule for time integrals."""

    def __init__(self, pulses=()):
        self.pulses = tuple(pulses)
        periods = [p.period for p in self.pulses if getattr(p, "period", 0) > 0]
        self._min_period = min(periods) if periods else 1.0

    def __call__(self, t):
        if not self.pulses:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        out = self.pulses[0](t)
        for p in self.pulses[1:]:
            out = out + p(t)
        return out

    def integral(self, a: float, b: float) -> float:
        """integral_a^b u(t) dt by Gauss-Legendre, resolved per carrier cycle."""
        if not self.pulses or a == b:
            return 0.0
        n = int(min(96, 12 + 10 * abs(b - a) / self._min_period))
        nodes, weights = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        return float(0.5 * (b - a) * np.sum(weights * self(t)))

    @property
    def support(self) -> tuple[float, float]:
        if not self.pulses:
            return 0.0, 0.0
        lo = min(p.support[0] for p in self.pulses)
        hi = max(p.support[1] for p in self.pulses)
        return lo, hi


# ---------------------------------------------------------------------------
# sum-of-products expansion of a pair potential

@dataclass
class PairFactorization:
    coeffs: np.ndarray        # (m,) real, +-|weight|
    factors: np.ndarray       # (N, m) real factor values on the grid
    residual_max: float
    residual_fro: float
    spectrum: np.ndarray      # all |eigenvalue| magnitudes, descending
    symmetric: bool = True

    @property
    def rank(self) -> int:
        return self.coeffs.size

    def evaluate(self) -> np.ndarray:
        return (self.factors * self.coeffs) @ self.factors.T


class FactorizationError(RuntimeError):
    pass


def factorize_pair_potential(V: np.ndarray, tol: float | None = None,
                             max_rank: int | None = None) -> PairFactorization:
    """Expand a symmetric pair potential V(x1, x2) as sum_m c_m f_m f_m^T.

    Terms are eigenpairs ordered by |eigenvalue|; the retained rank is the
    smallest whose tail Frobenius norm is <= tol (which bounds the max-norm
    residual), then tightened downward against the actual max-norm residual.
    Exactly one of ``tol`` / ``max_rank`` may be left unset.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise FactorizationError("pair potential must be a square matrix")
    if not np.allclose(V, V.T, rtol=0, atol=1e-12 * max(1.0, np.abs(V).max())):
        raise FactorizationError("pair potential must be symmetric; use an SVD variant")
    if tol is None and max_rank is None:
        raise FactorizationError("set tol and/or max_rank")

    w, U = np.linalg.eigh(V)
    order = np.argsort(-np.abs(w), kind="stable")
    w, U = w[order], U[:, order]
    # deterministic sign: largest-magnitude entry of each vector positive
    piv = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[piv, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs[None, :]

    aw = np.abs(w)
    # tail[r] = ||V - V_r||_F with r terms kept = sqrt(sum_{m >= r} w_m^2)
    tail = np.sqrt(np.concatenate([np.cumsum((aw**2)[::-1])[::-1], [0.0]]))

    n = V.shape[0]
    cap = n if max_rank is None else min(max_rank, n)
    if tol is not None:
        r = int(np.searchsorted(-tail, -tol))   # first r with tail[r] <= tol
        r = max(1, min(r, cap))
    else:
        r = max(1, cap)

    resid = V - (U[:, :r] * w[:r]) @ U[:, :r].T
    rmax = np.abs(resid).max()
    if tol is not None:
        # walk the rank back down while the max-norm residual stays within tol
        while r > 1:
            cand = resid + w[r - 1] * np.outer(U[:, r - 1], U[:, r - 1])
            cm = np.abs(cand).max()
            if cm > tol:
                break
            resid, rmax, r = cand, cm, r - 1
        if rmax > tol and r >= cap and max_rank is not None:
            raise FactorizationError(
                f"max-norm residual {rmax:.3e} exceeds tol {tol:.3e} at rank cap {cap}")

    sq = np.sqrt(aw[:r])
    return PairFactorization(
        coeffs=np.sign(w[:r]) * 1.0,
        factors=U[:, :r] * sq[None, :],
        residual_max=float(rmax),
        residual_fro=float(np.linalg.norm(resid)),
        spectrum=aw,
        symmetric=True,
    )


# ---------------------------------------------------------------------------
# kernel bundles

def one_body_kernels(basis: VnBasis, v_values: np.ndarray | None,
                     mass: float = 1.0, table: PairTable | None = None) -> DimensionKernels:
    """Per-dimension kernels for p^2/2m + v(x), plus Gram and momentum."""
    g = basis.grid
    table = table or PairTable(basis)
    gram = multiplicative_kernel(table, np.ones(g.npts))
    kin = dense_operator_kernel(basis, kinetic_matrix(g, mass))
    mom = dense_operator_kernel(basis, momentum_matrix(g))
    vker = None if v_values is None else multiplicative_kernel(table, np.asarray(v_values, float))
    return DimensionKernels(basis, gram, kin, mom, vker)


@dataclass
class SystemOperators:
    """Everything needed to assemble reduced matrices for one model."""

    bases: tuple[VnBasis, ...]
    dims: list[DimensionKernels]
    pair: ProductPotential | None
    field: Field
    field_scale: float
    pair_info: PairFactorization | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ndim(self) -> int:
        return len(self.bases)

    def reduced(self, workers: int = 1, track_gram: bool = True,
                with_field: bool = True) -> ReducedOperators:
        # with_field=False skips the dipole block F~ entirely -- a full R^2
        # array that field-free solves would never touch.
        return ReducedOperators(self.dims, self.pair,
                                field_scale=self.field_scale if with_field else None,
                                workers=workers, track_gram=track_gram)

    def potential_on_grid(self) -> np.ndarray:
        """Exact total potential sampled on the tensor grid (oracle-grade)."""
        vs = [self.meta.get("v_values", [None] * self.ndim)[d] for d in range(self.ndim)]
        if self.ndim == 1:
            return np.zeros(self.bases[0].grid.npts) if vs[0] is None else np.asarray(vs[0])
        out = np.zeros((self.bases[0].grid.npts, self.bases[1].grid.npts))
        if vs[0] is not None:
            out += np.asarray(vs[0])[:, None]
        if vs[1] is not None:
            out += np.asarray(vs[1])[None, :]
        if "pair_exact" in self.meta:
            out = out + self.meta["pair_exact"]
        return out

    def classical_cell_energy(self) -> np.ndarray:
        """Classical energy at every lattice cell center (for seeding).

        Indexed like the packed cell code: (n_0, l_0, n_1, l_1, ...).
        """
        vs = self.meta.get("v_values", [None] * self.ndim)
        masses = self.meta.get("masses", [1.0] * self.ndim)
        parts = []
        for d, b in enumerate(self.bases):
            lat = b.lattice
            vx = np.zeros(lat.n_x)
            if vs[d] is not None:
                vx = np.interp(lat.x_centers, b.grid.x, np.asarray(vs[d]))
            e = vx[:, None] + (lat.p_centers**2 / (2.0 * masses[d]))[None, :]
            parts.append(e)
        if self.ndim == 1:
            return parts[0]
        e = parts[0][:, :, None, None] + parts[1][None, None, :, :]
        if "pair_on_centers" in self.meta:
            e = e + self.meta["pair_on_centers"][:, None, :, None]
        return e


def build_one_electron(basis: VnBasis, v_values: np.ndarray, mass: float = 1.0,
                       field: Field | None = None, field_scale: float = 1.0) -> SystemOperators:
    dims = [one_body_kernels(basis, v_values, mass)]
    return SystemOperators((basis,), dims, None, field or Field(),
                           field_scale, None,
                           meta={"v_values": [np.asarray(v_values, float)],
                                 "masses": [mass]})


def build_helium(bases: tuple[VnBasis, VnBasis], params: He1dParams = He1dParams(),
                 sop_tol: float = 1e-5, sop_max_rank: int | None = None,
                 field: Field | None = None,
                 cache_dir: str | None = None) -> SystemOperators:
    """Two-electron soft-Coulomb system with factorized repulsion.

    Both dimensions must share one grid/basis for the exchange-symmetric
    factor sharing; the factor kernels are built once and reused on both.
    """
    b1, b2 = bases
    same = b1 is b2 or (b1.grid == b2.grid and b1.lattice.n_x == b2.lattice.n_x)
    if not same:
        raise ValueError("two-electron build expects identical grids for both electrons")

    table = PairTable(b1)
    vnuc = params.nuclear_potential(b1.grid.x)
    d1 = one_body_kernels(b1, vnuc, params.m_e, table)
    dims = [d1, d1 if b2 is b1 else DimensionKernels(
        b2, d1.gram, d1.kinetic, d1.momentum, d1.static_v)]

    vee = params.pair_potential(b1.grid.x, b2.grid.x)
    if cache_dir is not None:
        from .io import cached_factorization
        fact = cached_factorization(vee, sop_tol, sop_max_rank, cache_dir)
    else:
        fact = factorize_pair_potential(vee, tol=sop_tol, max_rank=sop_max_rank)
    kers = []
    for m in range(fact.rank):
        km = multiplicative_kernel(table, fact.factors[:, m])
        kers.append((km, km))
    pair = ProductPotential(fact.coeffs.astype(float), kers,
                            meta={"residual_max": fact.residual_max,
                                  "residual_fro": fact.residual_fro})

    lat = b1.lattice
    pair_on_centers = params.pair_potential(lat.x_centers, lat.x_centers)
    return SystemOperators(
        (b1, b2), dims, pair, field or Field(), params.field_scale, fact,
        meta={"v_values": [vnuc, vnuc], "masses": [params.m_e, params.m_e],
              "pair_exact": vee, "pair_on_centers": pair_on_centers,
              "params": params})

"""Dense Fourier-grid reference implementation ("oracle").

Everything here works on the full tensor-product grid with FFT-applied
kinetic operators and exactly evaluated (never factorized) potentials, and
deliberately shares no machinery with the lattice engine beyond the GridSpec
geometry.  It exists to validate the reduced-basis results:

* ``ground_state``      -- Lanczos (or explicit dense) lowest eigenpairs;
* ``propagate_split4``  -- 4th-order (Yoshida) split-operator propagation
  whose kinetic+field sub-flow is applied *exactly* in k-space, including
  the time integral of the pulse, so the only error is the splitting one;
* ``dense_matrix`` / ``expm_propagate`` -- explicit Hamiltonian matrices and
  near-machine-precision stepping for small problems.

The wavenumber sets here are rebuilt locally with the same asymmetric
(+Nyquist) convention the grids advertise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, expm_multiply

from .grid import GridSpec


def _wavenumbers(g: GridSpec) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(g.npts, d=g.dx)
    if g.npts % 2 == 0:
        k = k.copy()
        k[g.npts // 2] = abs(k[g.npts // 2])
    return k


def _zero_field(t):
    return 0.0


class _NoField:
    def __call__(self, t):
        return 0.0

    def integral(self, a, b):
        return 0.0


@dataclass
class DenseModel:
    """Full-grid Hamiltonian H = sum_d p_d^2/2m_d + V(x) + s*u(t)*sum_d p_d."""

    grids: tuple[GridSpec, ...]
    v_diag: np.ndarray
    masses: tuple[float, ...] = ()
    pulse: object = field(default_factory=_NoField)
    field_scale: float = 1.0

    def __post_init__(self):
        if not self.masses:
            self.masses = (1.0,) * len(self.grids)
        shape = tuple(g.npts for g in self.grids)
        self.v_diag = np.asarray(self.v_diag, dtype=float).reshape(shape)
        self._k = [_wavenumbers(g) for g in self.grids]
        t = np.zeros(shape)
        ks = np.zeros(shape)
        for d, g in enumerate(self.grids):
            sh = [1] * len(self.grids)
            sh[d] = g.npts
            t = t + (0.5 / self.masses[d]) * self._k[d].reshape(sh) ** 2
            ks = ks + self._k[d].reshape(sh)
        self._tk = t          # kinetic phase table
        self._ksum = ks       # sum of wavenumbers (field coupling)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.npts for g in self.grids)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    # -- application ----------------------------------------------------------
    def apply(self, psi: np.ndarray, u: float = 0.0) -> np.ndarray:
        p = np.asarray(psi, dtype=complex).reshape(self.shape)
        pk = np.fft.fftn(p)
        mult = self._tk + (self.field_scale * u) * self._ksum if u else self._tk
        out = np.fft.ifftn(mult * pk)
        out += self.v_diag * p
        return out.reshape(np.shape(psi))

    def linear_operator(self, u: float = 0.0) -> LinearOperator:
        n = self.size
        return LinearOperator((n, n), matvec=lambda v: self.apply(v.reshape(self.shape), u).ravel(),
                              dtype=complex)

    def energy(self, psi: np.ndarray, u: float = 0.0) -> float:
        p = np.asarray(psi, dtype=complex).ravel()
        return float(np.vdot(p, self.apply(psi, u).ravel()).real / np.vdot(p, p).real)

    def residual(self, psi: np.ndarray, E: float) -> float:
        p = np.asarray(psi, dtype=complex).ravel()
        r = self.apply(psi).ravel() - E * p
        return float(np.linalg.norm(r) / np.linalg.norm(p))

    # -- eigenstates ------------------------------------------------------------
    def ground_state(self, k: int = 1, dense_limit: int = 2048,
                     tol: float = 0.0, maxiter: int = 40000):
        """Lowest ``k`` eigenpairs; returns (energies, states as columns)."""
        n = self.size
        if n <= dense_limit:
            import scipy.linalg as sla
            w, v = sla.eigh(self.dense_matrix())
            return w[:k], v[:, :k]
        xs = np.zeros(self.shape)
        for d, g in enumerate(self.grids):
            sh = [1] * len(self.grids)
            sh[d] = g.npts
            xs = xs + (g.x.reshape(sh)) ** 2
        v0 = np.exp(-xs).ravel().astype(complex)
        v0 += 1e-3 * np.cos(np.arange(n))          # deterministic symmetry breaker
        w, v = eigsh(self.linear_operator(), k=k, which="SA", v0=v0,
                     tol=tol, maxiter=maxiter)
        return w, v

    # -- explicit matrices -------------------------------------------------------
    def dense_matrix(self, u: float = 0.0, limit: int = 4096) -> np.ndarray:
        if self.size > limit:
            raise ValueError(f"dense matrix of dimension {self.size} exceeds limit {limit}")
        mats_t, mats_p = [], []
        for d, g in enumerate(self.grids):
            F = np.fft.fft(np.eye(g.npts), axis=0)
            t = (0.5 / self.masses[d]) * self._k[d] ** 2
            mats_t.append(np.fft.ifft(t[:, None] * F, axis=0))
            mats_p.append(np.fft.ifft(self._k[d][:, None] * F, axis=0))
        if len(self.grids) == 1:
            H = mats_t[0].copy()
            if u:
                H += (self.field_scale * u) * mats_p[0]
        else:
            eyes = [np.eye(g.npts) for g in self.grids]
            H = np.kron(mats_t[0], eyes[1]) + np.kron(eyes[0], mats_t[1])
            if u:
                H += (self.field_scale * u) * (np.kron(mats_p[0], eyes[1])
                                               + np.kron(eyes[0], mats_p[1]))
        H[np.diag_indices_from(H)] += self.v_diag.ravel()
        return H

    def field_matrix(self, limit: int = 4096) -> np.ndarray:
        """The momentum-sum coupling matrix multiplying u(t)."""
        if self.size > limit:
            raise ValueError("field matrix too large")
        mats_p = []
        for d, g in enumerate(self.grids):
            F = np.fft.fft(np.eye(g.npts), axis=0)
            mats_p.append(np.fft.ifft(self._k[d][:, None] * F, axis=0))
        if len(self.grids) == 1:
            return self.field_scale * mats_p[0]
        eyes = [np.eye(g.npts) for g in self.grids]
        return self.field_scale * (np.kron(mats_p[0], eyes[1]) + np.kron(eyes[0], mats_p[1]))

    # -- propagation ---------------------------------------------------------------
    def propagate_split4(self, psi0: np.ndarray, t0: float, t1: float, dt: float,
                         record=None):
        """Yoshida 4th-order split-operator propagation on the dense grid.

        The kinetic+field half is applied exactly in k-space over each of the
        three inner windows, including the exact time integral of u(t); the
        splitting commutators are the only time-step error.
        """
        w1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
        w0 = 1.0 - 2.0 * w1
        psi = np.asarray(psi0, dtype=complex).reshape(self.shape).copy()
        nsteps = int(round((t1 - t0) / dt))
        if abs(t0 + nsteps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
            nsteps += 1
        dt = (t1 - t0) / nsteps if nsteps else dt

        vh = {}
        for c in (0.5 * w1, 0.5 * (w1 + w0)):
            vh[c] = np.exp(-1j * c * dt * self.v_diag)
        tk = {w: np.exp(-1j * w * dt * self._tk) for w in (w1, w0)}

        def kick(psi_k, w, ta):
            tb = ta + w * dt
            a = self.pulse.integral(ta, tb)
            ph = tk[w]
            if a != 0.0:
                ph = ph * np.exp(-1j * self.field_scale * a * self._ksum)
            return psi_k * ph, tb

        t = t0
        for s in range(nsteps):
            psi *= vh[0.5 * w1]
            pk = np.fft.fftn(psi)
            pk, tau = kick(pk, w1, t)
            psi = np.fft.ifftn(pk)
            psi *= vh[0.5 * (w1 + w0)]
            pk = np.fft.fftn(psi)
            pk, tau = kick(pk, w0, tau)
            psi = np.fft.ifftn(pk)
            psi *= vh[0.5 * (w1 + w0)]
            pk = np.fft.fftn(psi)
            pk, tau = kick(pk, w1, tau)
            psi = np.fft.ifftn(pk)
            psi *= vh[0.5 * w1]
            t = t0 + (s + 1) * dt
            if record is not None:
                record(t, psi)
        return psi

    def expm_propagate(self, psi0: np.ndarray, t0: float, t1: float, nsteps: int):
        """Matrix-exponential stepping with the field frozen at midpoints.

        Builds the explicit Hamiltonian once and exponentiates with
        ``expm_multiply``; accuracy is limited only by the midpoint rule.
        """
        H0 = self.dense_matrix()
        Fm = self.field_matrix()
        psi = np.asarray(psi0, dtype=complex).ravel().copy()
        dt = (t1 - t0) / nsteps
        for s in range(nsteps):
            tm = t0 + (s + 0.5) * dt
            u = float(self.pulse(tm))
            A = H0 + u * Fm if u else H0
            psi = expm_multiply((-1j * dt) * A, psi)
        return psi


# ---------------------------------------------------------------------------
# model builders (independent potential evaluation)

def dense_one_electron(grid: GridSpec, v_values: np.ndarray, mass: float = 1.0,
                       pulse=None, field_scale: float = 1.0) -> DenseModel:
    return DenseModel((grid,), np.asarray(v_values, dtype=float), (mass,),
                      pulse or _NoField(), field_scale)


def dense_helium(grid: GridSpec, a0: float = 0.739707902, q_e: float = -1.0,
                 m_e: float = 1.0, nuclear_q: float | None = None,
                 pulse=None) -> DenseModel:
    """Two-electron soft-Coulomb system on the full tensor grid."""
    Q = -2.0 * q_e if nuclear_q is None else nuclear_q
    x = grid.x
    vn = q_e * Q / np.sqrt(x**2 + a0**2)
    vee = q_e**2 / np.sqrt((x[:, None] - x[None, :]) ** 2 + a0**2)
    V = vn[:, None] + vn[None, :] + vee
    return DenseModel((grid, grid), V, (m_e, m_e), pulse or _NoField(),
                      field_scale=-q_e / m_e)

"""On-disk formats: binary state container, CSV tables, gnuplot matrices.

Binary container ("PVBC"), all little-endian, version 1:

    offset  field
    0       magic  b"PVBC"
    4       u8     version (1)
    5       u8     kind    (1 = reduced state, 2 = factorization cache)
    6       u16    flags   (reserved, 0)
    8       u32    ndim
    then per dimension (ndim times):
            u64 npts, f64 length, f64 x_min,
            u64 n_x, u64 n_p, f64 sigma_x, f64 x_offset, f64 p_offset
    then    f64 W, f64 t, f64 energy (nan when absent), u64 R
    payload int64[R] packed cell codes, complex128[R] coefficients
    tail    u32 crc32 of the payload bytes

Cell codes use the mixed-radix packing of ActiveSet; geometry read back
from the header is checked against the caller's bases before a state is
reconstituted, so stale checkpoints fail loudly instead of silently
misindexing.
"""
from __future__ import annotations

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .lattice import VnBasis, vn_basis
from .grid import GridSpec
from .reduced import ActiveSet, ReducedState

MAGIC = b"PVBC"
VERSION = 1
KIND_STATE = 1
KIND_FACTORIZATION = 2

_DIM_HDR = "<QddQQddd"          # npts, length, x_min, n_x, n_p, sigma_x, x_off, p_off
_TOP_HDR = "<4sBBHI"            # magic, version, kind, flags, ndim
_STATE_HDR = "<dddQ"            # W, t, energy, R


class ContainerError(RuntimeError):
    pass


def _dim_header(b: VnBasis) -> bytes:
    lat = b.lattice
    g = b.grid
    return struct.pack(_DIM_HDR, g.npts, g.length, g.x_min,
                       lat.n_x, lat.n_p, lat.sigma_x, lat.x_offset, lat.p_offset)


def write_state(path, state: ReducedState, energy: float | None = None) -> None:
    path = Path(path)
    blob = bytearray()
    blob += struct.pack(_TOP_HDR, MAGIC, VERSION, KIND_STATE, 0, state.active.ndim)
    for b in state.active.bases:
        blob += _dim_header(b)
    e = np.nan if energy is None else float(energy)
    blob += struct.pack(_STATE_HDR, state.W, state.t, e, state.size)
    payload = state.active.flat.astype("<i8").tobytes() \
        + np.ascontiguousarray(state.coeffs, dtype="<c16").tobytes()
    blob += payload
    blob += struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(blob))
    tmp.replace(path)


def read_state(path, bases: tuple[VnBasis, ...] | None = None):
    """Load a state container.

    With ``bases`` given, geometry is verified and a ReducedState tied to
    those bases is returned along with the stored energy; otherwise a raw
    dict (header fields + arrays) comes back.
    """
    raw = Path(path).read_bytes()
    if len(raw) < struct.calcsize(_TOP_HDR):
        raise ContainerError("file too short for a PVBC container")
    magic, ver, kind, _flags, ndim = struct.unpack_from(_TOP_HDR, raw, 0)
    if magic != MAGIC:
        raise ContainerError("not a PVBC container (bad magic)")
    if ver != VERSION:
        raise ContainerError(f"unsupported container version {ver}")
    if kind != KIND_STATE:
        raise ContainerError(f"expected a state container, found kind={kind}")
    off = struct.calcsize(_TOP_HDR)
    dims = []
    for _ in range(ndim):
        dims.append(struct.unpack_from(_DIM_HDR, raw, off))
        off += struct.calcsize(_DIM_HDR)
    W, t, energy, R = struct.unpack_from(_STATE_HDR, raw, off)
    off += struct.calcsize(_STATE_HDR)
    nbytes = R * 8 + R * 16
    payload = raw[off:off + nbytes]
    if len(payload) != nbytes:
        raise ContainerError("truncated payload")
    (crc,) = struct.unpack_from("<I", raw, off + nbytes)
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise ContainerError("payload checksum mismatch")
    codes = np.frombuffer(payload[:R * 8], dtype="<i8").astype(np.int64)
    coeffs = np.frombuffer(payload[R * 8:], dtype="<c16").astype(complex)
    header = {"ndim": ndim, "dims": dims, "W": W, "t": t,
              "energy": None if np.isnan(energy) else energy}
    if bases is None:
        return {"header": header, "codes": codes, "coeffs": coeffs}
    if len(bases) != ndim:
        raise ContainerError(f"container has {ndim} dimensions, caller expects {len(bases)}")
    for d, b in enumerate(bases):
        got = dims[d]
        want = struct.unpack(_DIM_HDR, _dim_header(b))
        if not all(np.isclose(a, w, rtol=0, atol=1e-12) if isinstance(w, float) else a == w
                   for a, w in zip(got, want)):
            raise ContainerError(f"dimension {d} geometry mismatch: {got} vs {want}")
    state = ReducedState(ActiveSet(tuple(bases), codes), coeffs, W, t)
    return state, header["energy"]


def bases_from_header(header: dict) -> tuple[VnBasis, ...]:
    """Rebuild the lattice bases recorded in a container header."""
    out = []
    for npts, length, x_min, n_x, n_p, sigma_x, x_off, p_off in header["dims"]:
        g = GridSpec(length, int(npts), x_min)
        b = vn_basis(g, alpha=(n_x**2) / npts, sigma_x=sigma_x,
                     x_offset=x_off, p_offset=p_off)
        if b.lattice.n_x != n_x or b.lattice.n_p != n_p:
            raise ContainerError("could not reproduce the stored lattice shape")
        out.append(b)
    return tuple(out)


# ---------------------------------------------------------------------------
# factorization cache

def _potential_key(V: np.ndarray, tol, max_rank) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(V).tobytes())
    h.update(repr((V.shape, None if tol is None else float(tol), max_rank)).encode())
    return h.hexdigest()[:24]


def cached_factorization(V: np.ndarray, tol, max_rank, cache_dir):
    """Disk-cached sum-of-products expansion keyed by the potential bytes."""
    from .model import PairFactorization, factorize_pair_potential
    if cache_dir is None:
        return factorize_pair_potential(V, tol, max_rank)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = _potential_key(V, tol, max_rank)
    f = cache_dir / f"sop-{key}.npz"
    if f.exists():
        z = np.load(f)
        return PairFactorization(z["coeffs"], z["factors"], float(z["residual_max"]),
                                 float(z["residual_fro"]), z["spectrum"], True)
    fact = factorize_pair_potential(V, tol, max_rank)
    np.savez(f, coeffs=fact.coeffs, factors=fact.factors,
             residual_max=fact.residual_max, residual_fro=fact.residual_fro,
             spectrum=fact.spectrum)
    return fact


# ---------------------------------------------------------------------------
# CSV / gnuplot

def trace_to_csv(trace: list, path) -> None:
    cols = ["step", "t", "dt", "R", "boundary_max", "norm", "energy",
            "added", "removed", "edge", "wall"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in trace:
            fh.write(",".join(_fmt(row.get(c)) for c in cols) + "\n")


def history_to_csv(history: list, path) -> None:
    cols = ["iter", "R", "E", "boundary_max", "added", "dropped", "wall"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in history:
            fh.write(",".join(_fmt(row.get(c)) for c in cols) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def plane_to_csv(plane, path) -> None:
    """Long-format CSV of a PlaneMap: one (a, b, value) row per lattice node."""
    a, b = plane.coords
    with open(path, "w") as fh:
        fh.write(f"# axes: {plane.axes[0]},{plane.axes[1]}\n")
        for k, v in sorted(plane.meta.items()):
            fh.write(f"# {k}: {v}\n")
        fh.write(f"{plane.axes[0]},{plane.axes[1]},value\n")
        for i in range(a.size):
            for j in range(b.size):
                fh.write(f"{a[i]:.12g},{b[j]:.12g},{plane.values[i, j]:.12g}\n")


def csv_to_gnuplot_matrix(csv_path, out_path) -> None:
    """Rewrite a long-format plane CSV as a blank-line-separated xyz matrix."""
    rows = []
    with open(csv_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                continue
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError:
                continue   # header line
    rows.sort()
    with open(out_path, "w") as fh:
        last_a = None
        for a, b, v in rows:
            if last_a is not None and a != last_a:
                fh.write("\n")
            fh.write(f"{a:.12g} {b:.12g} {v:.12g}\n")
            last_a = a


def write_report(path, payload: dict) -> None:
    def _default(o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return str(o)
    Path(path).write_text(json.dumps(payload, indent=2, default=_default) + "\n")

#!/usr/bin/env python3
"""Phase-space and coordinate-plane views of a stored state.

Reads a .pvbc container and writes the standard set of projections:
(x1,x2), (p1,p2) raw, and (p1,p2) with the bound part removed.  Each plane
goes out as a long CSV plus a gnuplot-ready matrix; with matplotlib
available, PNGs are rendered too (log color scale).
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from pvb.analysis import any_bound_region, filter_state, project
from pvb.io import bases_from_header, csv_to_gnuplot_matrix, plane_to_csv, read_state


def _emit(plane, stem: Path, png: bool):
    plane_to_csv(plane, stem.with_suffix(".csv"))
    csv_to_gnuplot_matrix(stem.with_suffix(".csv"), stem.with_suffix(".matrix.txt"))
    print(f"  {stem.with_suffix('.csv').name}  (peak {plane.peak():.4g})")
    if not png:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    a, b = plane.coords
    vals = plane.values.T
    floor = max(plane.peak() * 1e-6, 1e-300)
    fig, ax = plt.subplots(figsize=(5, 4.2))
    m = ax.pcolormesh(a, b, np.log10(np.maximum(vals, floor)), shading="nearest")
    ax.set_xlabel(plane.axes[0])
    ax.set_ylabel(plane.axes[1])
    fig.colorbar(m, label="log10 amplitude")
    fig.tight_layout()
    fig.savefig(stem.with_suffix(".png"), dpi=150)
    plt.close(fig)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("state", help=".pvbc container")
    ap.add_argument("--x-r", type=float, default=30.0,
                    help="core radius separating bound from ionized")
    ap.add_argument("--outdir", default=None)
    ap.add_argument("--png", action="store_true")
    args = ap.parse_args()

    raw = read_state(args.state)
    bases = bases_from_header(raw["header"])
    state, energy = read_state(args.state, bases)
    outdir = Path(args.outdir) if args.outdir else Path(args.state).parent
    outdir.mkdir(parents=True, exist_ok=True)
    print(f"{args.state}: {state.size} cells, t = {state.t:g}"
          + (f", E = {energy:.8f}" if energy is not None else ""))

    if state.active.ndim == 1:
        _emit(project(state, ("x", "p"), dims=(0, 0)), outdir / "plane_xp", args.png)
        return 0

    _emit(project(state, ("x", "x")), outdir / "plane_xx", args.png)
    _emit(project(state, ("p", "p")), outdir / "plane_pp", args.png)
    free = filter_state(state, any_bound_region(args.x_r))
    if free.size:
        plane = project(free, ("p", "p"))
        plane.meta["x_r"] = args.x_r
        _emit(plane, outdir / "plane_pp_ionized", args.png)
    else:
        print(f"  no amplitude beyond |x| >= {args.x_r:g}; skipping filtered map")
    return 0


if __name__ == "__main__":
    sys.exit(main())

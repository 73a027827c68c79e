#!/usr/bin/env python3
"""Ground-state accuracy versus the amplitude cutoff W.

Sweeps W over a log grid, records the converged energy, basis size and the
intrinsic error estimate, and fits the two scaling exponents:

* |E - E_ref| ~ W^a   (expected a ~ 3/2)
* N_w ~ W^b           (expected b ~ -1/2, N_w = skirt cell count)

Writes a CSV and prints the fitted slopes.  The reference energy is the run
at the tightest W unless --eref is given.
"""
import argparse
import csv
import sys
import time

import numpy as np

from pvb.eigensolve import EigenConfig, eigensolve
from pvb.grid import periodic_grid
from pvb.lattice import vn_basis
from pvb.model import He1dParams, build_helium


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--length", type=float, default=200.0)
    ap.add_argument("--npts", type=int, default=1000)
    ap.add_argument("--ws", type=float, nargs="+",
                    default=[1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
    ap.add_argument("--wref", type=float, default=None,
                    help="extra tight run used as energy reference")
    ap.add_argument("--eref", type=float, default=None)
    ap.add_argument("--out", default="groundstate_sweep.csv")
    args = ap.parse_args()

    g = periodic_grid(args.length, args.npts)
    b = vn_basis(g)
    ws = sorted(args.ws, reverse=True)
    sop_tol = 0.1 * min(ws + ([args.wref] if args.wref else []))
    system = build_helium((b, b), He1dParams(), sop_tol=sop_tol)

    rows = []
    for w in ws + ([args.wref] if args.wref else []):
        t0 = time.perf_counter()
        res = eigensolve(system, EigenConfig(W=w))
        rows.append({"W": w, "E": res.energy, "R": res.state.size,
                     "N_w": res.n_skirt, "estimate": res.error_estimate,
                     "boundary_touch": res.boundary_touch,
                     "wall": time.perf_counter() - t0})
        print(f"W={w:8.1e}  E={res.energy:+.10f}  R={res.state.size:6d}  "
              f"N_w={res.n_skirt:6d}  est={res.error_estimate:.2e}  "
              f"[{rows[-1]['wall']:.1f}s]")

    e_ref = args.eref if args.eref is not None else rows[-1]["E"]
    fit_rows = [r for r in rows[:len(ws)] if abs(r["E"] - e_ref) > 0]
    lw = np.log([r["W"] for r in fit_rows])
    le = np.log([abs(r["E"] - e_ref) for r in fit_rows])
    ln = np.log([max(r["N_w"], 1) for r in fit_rows])
    a = np.polyfit(lw, le, 1)[0]
    bslope = np.polyfit(lw, ln, 1)[0]
    print(f"\nreference E = {e_ref:.10f}")
    print(f"|E - E_ref| ~ W^{a:.3f}   (expect ~1.5)")
    print(f"N_w ~ W^{bslope:.3f}   (expect ~-0.5)")

    with open(args.out, "w", newline="") as fh:
        wcsv = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wcsv.writeheader()
        wcsv.writerows(rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

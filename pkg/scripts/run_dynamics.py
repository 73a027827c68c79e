#!/usr/bin/env python3
"""Strong-field double-ionization run on the scaled-down box.

Drives the full pipeline behind the "he1d-paper-dynamics-scaled" preset:
ground state, NIR + two boosted attosecond pulses, propagation to t_final,
then the filtered momentum map.  All artifacts land in the run directory;
pass --until to stop earlier (e.g. between the two bursts).
"""
import argparse
import sys

from pvb import cli
from pvb.config import preset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--run-name", default=None)
    ap.add_argument("--until", type=float, default=None,
                    help="override t_final (a.u.)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--W", type=float, default=None, help="amplitude cutoff")
    args = ap.parse_args()

    base = preset("he1d-paper-dynamics-scaled")
    argv = ["--preset", "he1d-paper-dynamics-scaled",
            "--out", args.out, "--threads", str(args.threads)]
    if args.run_name:
        argv += ["--run-name", args.run_name]
    if args.until is not None:
        argv += ["--set", f"propagate.t1={args.until}"]
    if args.W is not None:
        argv += ["--set", f"propagate.W={args.W}"]

    rc = cli.main(argv)
    if rc != 0:
        return rc

    run_name = args.run_name or base.run_name
    state = f"{args.out}/{run_name}/state.pvbc"
    print("\nmomentum map of the double-ionized part:")
    return cli.main(["--mode", "analyze", "--in", state,
                     "--out", args.out, "--run-name", run_name + "-pp",
                     "--set", "analyze.filter=double",
                     "--set", "analyze.axes=pp"])


if __name__ == "__main__":
    sys.exit(main())

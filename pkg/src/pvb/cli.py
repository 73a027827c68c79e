"""Command-line front end.

One executable, mode-switched::

    pvb --preset he1d-paper-groundstate --out runs
    pvb --mode propagate --config run.yaml --threads 4
    pvb --mode analyze --in runs/dyn/state.pvbc --out runs
    pvb --mode to-matrix --in runs/ana/plane_pp.csv

Exit codes
----------
0   success (an eigensolve that stops on a phase-space boundary touch is a
    success: the accuracy estimate and the flag land in the report)
1   runtime failure (cell budget exhausted, dt underflow, factorization
    could not reach the requested tolerance)
2   invalid configuration, unknown preset, or unreadable/corrupt input file
3   the reduced basis became empty
4   propagation aborted on a momentum-edge collision

Every run directory is self-describing: it receives the fully-resolved
``config.yaml``, a ``report.json`` with package/library versions and the
RNG seed, plus the binary state containers and CSV traces.

BLAS pools are pinned to one thread per process before numpy is first
imported; parallelism is delegated to the element-assembly worker pool
(``--threads``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import config as cfgmod

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")

_MODES = ["eigen", "propagate", "analyze", "oracle-compare", "bench", "to-matrix"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pvb",
        description="sparse phase-space quantum dynamics (eigenstates, "
                    "strong-field propagation, projections)")
    ap.add_argument("--config", metavar="YAML", help="run configuration file")
    ap.add_argument("--preset", metavar="NAME",
                    help="named configuration: " + ", ".join(sorted(cfgmod.PRESETS)))
    ap.add_argument("--mode", choices=_MODES, help="override the configured mode")
    ap.add_argument("--threads", type=int, metavar="N",
                    help="element-assembly worker processes")
    ap.add_argument("--strict", action="store_true",
                    help="bit-reproducible mode (stable factorizations, "
                         "wall-clock columns dropped from traces)")
    ap.add_argument("--resume", action="store_true",
                    help="continue a propagation from its checkpoint")
    ap.add_argument("--out", metavar="DIR", help="output root (default $PVB_OUTPUT_ROOT or ./runs)")
    ap.add_argument("--run-name", metavar="NAME", help="run directory name")
    ap.add_argument("--in", dest="input", metavar="FILE",
                    help="input container/CSV for analyze and to-matrix")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="dotted config override, repeatable")
    return ap


def _resolve_config(args) -> cfgmod.RunConfig:
    if args.config and args.preset:
        raise cfgmod.ConfigError(["give either --config or --preset, not both"])
    if args.config:
        cfg = cfgmod.load_config(args.config)
    elif args.preset:
        cfg = cfgmod.preset(args.preset)
    else:
        cfg = cfgmod.RunConfig()
    if args.mode:
        cfg.mode = args.mode
    if args.out:
        cfg.outdir = args.out
    if args.run_name:
        cfg.run_name = args.run_name
    if args.resume:
        cfg.resume = True

    # a resumed run re-reads the directory's own resolved config so that the
    # physics cannot drift; execution knobs may still be overridden
    if cfg.resume and cfg.mode == "propagate":
        saved = cfg.output_dir() / "config.yaml"
        if saved.exists():
            keep = {"outdir": cfg.outdir, "run_name": cfg.run_name}
            cfg = cfgmod.load_config(saved)
            cfg.outdir, cfg.run_name = keep["outdir"], keep["run_name"]
            cfg.resume = True

    if args.threads:
        cfg.threads = args.threads
    if args.strict:
        cfg.strict = True
    if args.input:
        cfg.analyze.input = args.input
    if args.overrides:
        cfg = cfgmod.apply_overrides(cfg, args.overrides)
    return cfg


# ---------------------------------------------------------------------------
# shared builders (numpy-heavy imports stay inside functions)

def _build_system(cfg: cfgmod.RunConfig):
    import numpy as np

    from .grid import periodic_grid
    from .lattice import vn_basis, GOLDEN_OFFSET
    from .model import (He1dParams, NirPulse, XuvPulse, Field,
                        build_helium, build_one_electron)

    g = periodic_grid(cfg.grid.length, cfg.grid.npts, cfg.grid.x_min)
    b = vn_basis(g, alpha=cfg.basis.alpha, sigma_x=cfg.basis.sigma_x,
                 x_offset=GOLDEN_OFFSET if cfg.basis.x_offset is None else cfg.basis.x_offset,
                 p_offset=GOLDEN_OFFSET if cfg.basis.p_offset is None else cfg.basis.p_offset,
                 images=cfg.basis.images)

    pulses = []
    if cfg.pulses.nir_enabled:
        pulses.append(NirPulse(cfg.pulses.nir_amplitude, cfg.pulses.nir_period))
    for x in cfg.pulses.xuv:
        pulses.append(XuvPulse(x.center, x.amplitude, x.period, x.sigma, x.scale))
    field = Field(pulses)

    w_active = cfg.propagate.W if cfg.mode == "propagate" else cfg.eigen.W
    sop_tol = cfg.model.sop_tol if cfg.model.sop_tol is not None else 0.1 * w_active

    m = cfg.model
    if m.kind == "he1d":
        params = He1dParams(m.a0, m.q_e, m.m_e, m.nuclear_q)
        return build_helium((b, b), params, sop_tol=sop_tol,
                            sop_max_rank=m.sop_max_rank, field=field,
                            cache_dir=cfg.cache_dir)
    if m.kind == "soft_atom_1e":
        params = He1dParams(m.a0, m.q_e, m.m_e, m.nuclear_q)
        sysop = build_one_electron(b, params.nuclear_potential(g.x), params.m_e,
                                   field, params.field_scale)
        return sysop
    # harmonic: analytically known spectrum, used for shakedown runs
    v = 0.5 * cfg.model.m_e * (cfg.model.omega * g.x) ** 2
    return build_one_electron(b, v, cfg.model.m_e, field, 1.0)


def _versions() -> dict:
    import numpy, scipy
    from . import __version__
    return {"pvb": __version__, "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3]))}


def _prepare_outdir(cfg) -> Path:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    import dataclasses
    import yaml
    (out / "config.yaml").write_text(
        yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=False))
    return out


def _strip_wall(rows: list) -> list:
    for r in rows:
        r.pop("wall", None)
    return rows


# ---------------------------------------------------------------------------
# modes

def _cmd_eigen(cfg) -> int:
    from .eigensolve import EigenConfig, eigensolve
    from .io import write_state, history_to_csv, write_report

    out = _prepare_outdir(cfg)
    system = _build_system(cfg)
    e = cfg.eigen
    ecfg = EigenConfig(W=e.W, stop_threshold=e.stop_threshold, target=e.target,
                       wrap_x=e.wrap_x, max_iterations=e.max_iterations,
                       max_cells=e.max_cells, dense_cutoff=e.dense_cutoff,
                       expand_radius=e.expand_radius, workers=cfg.threads)
    t0 = time.perf_counter()
    res = eigensolve(system, ecfg)
    wall = time.perf_counter() - t0

    write_state(out / "state.pvbc", res.state, res.energy)
    history_to_csv(res.history, out / "history.csv")
    report = {
        "mode": "eigen", "status": res.status, "energy": res.energy,
        "accuracy_estimate": res.error_estimate,
        "error_constant": res.error_constant, "skirt_cells": res.n_skirt,
        "boundary_touch": res.boundary_touch, "iterations": res.iterations,
        "basis_size": res.state.size, "W": e.W, "wall_seconds": wall,
        "sop": system.pair_info and {
            "rank": system.pair_info.rank,
            "residual_max": system.pair_info.residual_max},
        "versions": _versions(), "seeds": {"power_iteration": 12345},
        "strict": cfg.strict,
    }
    write_report(out / "report.json", report)

    print(f"E = {res.energy:.12f}")
    flag = "  [boundary touch: state reached the phase-space edge]" \
        if res.boundary_touch else ""
    print(f"intrinsic accuracy estimate = {res.error_estimate:.3e}{flag}")
    print(f"basis size R = {res.state.size}   iterations = {res.iterations}"
          f"   status = {res.status}")
    print(f"artifacts in {out}")
    return 0 if res.status == "converged" else 1


def _checkpoint_paths(out: Path):
    return out / "checkpoint.pvbc", out / "checkpoint-controller.npz", \
        out / "checkpoint-trace.json"


def _cmd_propagate(cfg) -> int:
    import numpy as np

    from .eigensolve import EigenConfig, eigensolve
    from .io import write_state, read_state, trace_to_csv, write_report
    from .propagate import PropagateConfig, propagate
    from .reduced import ReducedState

    out = _prepare_outdir(cfg)
    system = _build_system(cfg)
    bases = system.bases
    s = cfg.propagate
    pcfg = PropagateConfig(
        t0=s.t0, t1=s.t1, dt0=s.dt0, W=s.W, taylor_order=s.taylor_order,
        norm_tol=s.norm_tol, growth_threshold=s.growth_threshold,
        expand_radius=s.expand_radius, remove_patience=s.remove_patience,
        quiet_steps=s.quiet_steps, dt_grow=s.dt_grow, dt_max=s.dt_max,
        dt_min=s.dt_min, wrap_x=s.wrap_x, max_cells=s.max_cells,
        edge_action=s.edge_action, checkpoint_every=s.checkpoint_every,
        workers=cfg.threads)

    ck_state, ck_ctl, ck_trace = _checkpoint_paths(out)
    resume = None
    prior_rows: list = []
    if cfg.resume:
        if not ck_state.exists():
            print(f"resume requested but {ck_state} does not exist", file=sys.stderr)
            return 2
        state0, _ = read_state(ck_state, bases)   # validates geometry
        if state0.W != s.W:
            print(f"resume refused: checkpoint was written at W={state0.W:g}, "
                  f"config asks for W={s.W:g}", file=sys.stderr)
            return 2
        with np.load(ck_ctl) as z:
            resume = {k: z[k] for k in z.files}
        if ck_trace.exists():
            prior_rows = json.loads(ck_trace.read_text())
        eigen_report = None
    else:
        e = cfg.eigen
        ecfg = EigenConfig(W=e.W, stop_threshold=e.stop_threshold,
                           target=e.target, wrap_x=e.wrap_x,
                           max_iterations=e.max_iterations, max_cells=e.max_cells,
                           dense_cutoff=e.dense_cutoff,
                           expand_radius=e.expand_radius, workers=cfg.threads)
        eres = eigensolve(system, ecfg)
        print(f"initial state: E = {eres.energy:.10f}  "
              f"(accuracy estimate {eres.error_estimate:.2e}, R = {eres.state.size})")
        state0 = ReducedState(eres.state.active, eres.state.coeffs, s.W, s.t0)
        write_state(out / "initial.pvbc", state0, eres.energy)
        eigen_report = {"energy": eres.energy,
                        "accuracy_estimate": eres.error_estimate,
                        "boundary_touch": eres.boundary_touch}

    ops = system.reduced(cfg.threads)
    ops.always_refactor = cfg.strict
    ops.rebuild(state0.active)

    live_rows: list = []

    def on_step(_ops, _st, row):
        live_rows.append(row)

    def on_checkpoint(snap):
        write_state(ck_state, snap["state"])
        tmp = ck_ctl.with_suffix(".tmp.npz")
        np.savez(tmp, rho=snap["rho"], dt=snap["dt"], norm_ref=snap["norm_ref"],
                 below_count=snap["below_count"], bmax_prev=snap["bmax_prev"],
                 quiet=snap["quiet"], step=snap["step"], rho_vec=snap["rho_vec"])
        tmp.replace(ck_ctl)
        tmpt = ck_trace.with_suffix(".tmp")
        tmpt.write_text(json.dumps(prior_rows + live_rows))
        tmpt.replace(ck_trace)

    result = propagate(system, state0, pcfg, ops=ops,
                       on_step=on_step, resume=resume,
                       on_checkpoint=on_checkpoint if s.checkpoint_every else None)

    rows = prior_rows + result.trace
    if cfg.strict:
        rows = _strip_wall([dict(r) for r in rows])
    trace_to_csv(rows, out / "trace.csv")
    write_state(out / "state.pvbc", result.state)

    report = {
        "mode": "propagate", "status": result.status,
        "t_final": result.state.t, "steps": result.stats.get("steps"),
        "R_final": result.state.size, "R_max": result.max_size,
        "W": s.W, "stats": result.stats,
        "parallel_fraction": result.stats.get("parallel_fraction"),
        "initial_state": eigen_report if not cfg.resume else "resumed",
        "versions": _versions(), "seeds": {"power_iteration": 12345},
        "strict": cfg.strict,
    }
    write_report(out / "report.json", report)

    print(f"status = {result.status}   t = {result.state.t:.4f}   "
          f"R = {result.state.size} (max {result.max_size})")
    print(f"artifacts in {out}")
    if result.status == "completed":
        return 0
    if result.status == "edge_collision":
        print("propagation stopped: amplitude above threshold on the momentum "
              "edge (increase the grid or the box)", file=sys.stderr)
        return 4
    return 1


def _cmd_analyze(cfg) -> int:
    from .analysis import (bound_region, any_bound_region, filter_state,
                           project)
    from .io import (read_state, bases_from_header, plane_to_csv,
                     csv_to_gnuplot_matrix, write_report)

    src = cfg.analyze.input
    if not src:
        print("analyze needs --in STATE.pvbc (or analyze.input in the config)",
              file=sys.stderr)
        return 2
    out = _prepare_outdir(cfg)
    raw = read_state(src)
    bases = bases_from_header(raw["header"])
    state, energy = read_state(src, bases)

    a = cfg.analyze
    region = {"double": any_bound_region(a.x_r),
              "any-bound": any_bound_region(a.x_r),
              "bound": bound_region(a.x_r),
              "none": None}[a.filter]
    kept = filter_state(state, region) if region is not None else state

    ndim = state.active.ndim
    dims = (0, 1) if ndim >= 2 else (0, 0)
    plane = project(kept, (a.axes[0], a.axes[1]), dims=dims, mode=a.mode)
    tag = f"{a.axes}" + ("" if region is None else "_filtered")
    csv_path = out / f"plane_{tag}.csv"
    plane_to_csv(plane, csv_path)
    csv_to_gnuplot_matrix(csv_path, out / f"plane_{tag}.matrix.txt")

    report = {
        "mode": "analyze", "input": str(src), "t": state.t, "energy": energy,
        "filter": a.filter, "x_r": a.x_r, "axes": a.axes,
        "cells_in": state.size, "cells_kept": kept.size,
        "peak_value": plane.peak(), "versions": _versions(),
    }
    write_report(out / "report.json", report)
    print(f"kept {kept.size}/{state.size} cells; peak {plane.peak():.6g}")
    print(f"artifacts in {out}")
    return 0


def _cmd_oracle_compare(cfg) -> int:
    import numpy as np

    from .eigensolve import EigenConfig, eigensolve
    from .io import write_report
    from .oracle import dense_helium, dense_one_electron
    from .reduced import synthesize_grid

    out = _prepare_outdir(cfg)
    system = _build_system(cfg)
    npts = cfg.grid.npts
    total = npts ** len(system.bases)
    if total > 65536:
        print(f"oracle-compare needs a small grid (N^D = {total} is too large)",
              file=sys.stderr)
        return 2

    if cfg.model.kind == "he1d":
        m = cfg.model
        oracle = dense_helium(system.bases[0].grid, m.a0, m.q_e, m.m_e,
                              m.nuclear_q, pulse=system.field)
    else:
        oracle = dense_one_electron(system.bases[0].grid,
                                    system.meta["v_values"][0],
                                    mass=system.meta["masses"][0],
                                    pulse=system.field,
                                    field_scale=system.field_scale)

    ws, vs = oracle.ground_state()
    e_oracle, psi = float(ws[0]), vs[:, 0]
    ecfg = EigenConfig(W=cfg.eigen.W, workers=cfg.threads,
                       dense_cutoff=cfg.eigen.dense_cutoff)
    res = eigensolve(system, ecfg)
    on_grid = synthesize_grid(res.state)
    ov = np.vdot(on_grid, psi)
    overlap = abs(ov) / (np.linalg.norm(on_grid) * np.linalg.norm(psi))

    report = {
        "mode": "oracle-compare", "E_reduced": res.energy, "E_oracle": e_oracle,
        "delta_E": abs(res.energy - e_oracle),
        "accuracy_estimate": res.error_estimate,
        "ground_state_overlap": overlap,
        "W": cfg.eigen.W, "basis_size": res.state.size,
        "boundary_touch": res.boundary_touch,
        "versions": _versions(),
    }
    write_report(out / "report.json", report)
    print(f"E_reduced = {res.energy:.12f}")
    print(f"E_oracle  = {e_oracle:.12f}   |delta| = {report['delta_E']:.3e}")
    print(f"ground-state overlap = {overlap:.12f}")
    print(f"artifacts in {out}")
    return 0


def _cmd_bench(cfg) -> int:
    import numpy as np

    from .eigensolve import EigenConfig, eigensolve
    from .io import write_report
    from .propagate import taylor_step

    out = _prepare_outdir(cfg)
    sizes = sorted({max(32, cfg.grid.npts // 4), max(48, cfg.grid.npts // 2),
                    cfg.grid.npts})
    points = []
    for npts in sizes:
        sub = cfgmod.config_copy(cfg)
        sub.grid.npts = npts
        system = _build_system(sub)
        res = eigensolve(system, EigenConfig(W=cfg.eigen.W, workers=cfg.threads))
        ops = system.reduced(cfg.threads)
        ops.rebuild(res.state.active)
        c = res.state.coeffs.astype(complex)
        taylor_step(ops, c, 1e-3, 0.0, cfg.propagate.taylor_order)   # warm up
        reps = max(3, int(2e7 / max(1, res.state.size) ** 2))
        t0 = time.perf_counter()
        for _ in range(reps):
            taylor_step(ops, c, 1e-3, 0.0, cfg.propagate.taylor_order)
        per_step = (time.perf_counter() - t0) / reps
        points.append({"npts": npts, "R": res.state.size, "seconds": per_step})
        print(f"N={npts:5d}  R={res.state.size:6d}  step={per_step * 1e3:.3f} ms")

    R = np.array([p["R"] for p in points], float)
    tsec = np.array([p["seconds"] for p in points])
    coef = float((tsec * R**2).sum() / (R**4).sum())
    rel = np.abs(tsec - coef * R**2) / tsec
    report = {"mode": "bench", "points": points, "fit_c": coef,
              "fit_rel_residuals": rel.tolist(),
              "quadratic_within": float(rel.max()),
              "threads": cfg.threads, "versions": _versions()}
    write_report(out / "report.json", report)
    print(f"per-step cost ~= {coef:.3e} * R^2  "
          f"(max relative deviation {rel.max() * 100:.1f}%)")
    print(f"artifacts in {out}")
    return 0


def _cmd_to_matrix(cfg) -> int:
    from .io import csv_to_gnuplot_matrix

    src = cfg.analyze.input
    if not src:
        print("to-matrix needs --in PLANE.csv", file=sys.stderr)
        return 2
    src = Path(src)
    if not src.exists():
        print(f"no such file: {src}", file=sys.stderr)
        return 2
    dest = src.with_suffix(".matrix.txt")
    csv_to_gnuplot_matrix(src, dest)
    print(f"wrote {dest}")
    return 0


_DISPATCH = {
    "eigen": _cmd_eigen,
    "propagate": _cmd_propagate,
    "analyze": _cmd_analyze,
    "oracle-compare": _cmd_oracle_compare,
    "bench": _cmd_bench,
    "to-matrix": _cmd_to_matrix,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # one BLAS thread per process; concurrency goes through the fork pool
    for var in _THREAD_VARS:
        os.environ.setdefault(var, "1")

    try:
        cfg = _resolve_config(args)
    except cfgmod.ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    from .io import ContainerError
    from .model import FactorizationError
    from .reduced import EmptyBasisError

    try:
        return _DISPATCH[cfg.mode](cfg)
    except cfgmod.ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ContainerError as exc:
        print(f"bad container: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except EmptyBasisError as exc:
        print(f"reduced basis became empty: {exc}", file=sys.stderr)
        return 3
    except FactorizationError as exc:
        print(f"potential factorization failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

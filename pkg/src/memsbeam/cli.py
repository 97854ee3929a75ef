"""Command-line front end: simulate, oracle, sweep, validate.

Outputs are plot-ready CSV plus JSON snapshots and a run manifest; all
floating point is serialized with 17 significant digits so snapshots
round-trip losslessly.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from memsbeam import __version__
from memsbeam.beam import BeamState, mechanical_energy
from memsbeam.config import ConfigError, read_config_file, validate_config, with_numerical
from memsbeam.diagnostics import (CheckReport, check_energy_ledger, check_multiplier,
                                  convergence_study, flat_plate_oracle, h2_norm_bound)
from memsbeam.electrostatics import directional_derivative_check, force
from memsbeam.scheme import StepError, initial_state, make_context, run
from memsbeam.transmission import build_mesh, solve_potential

TRACE_COLUMNS = ["t", "E_m", "E_e", "E_total", "dissipation_step", "dissipation_cum",
                 "min_gap", "coincidence_count", "multiplier_mass", "fp_iters"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _dump_json(payload, path: str) -> None:
    text = json.dumps(payload, indent=1, default=_json_default)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _load_config(path: str):
    raw = read_config_file(path)
    return validate_config(raw)


def write_trace_csv(trace, ctx, path: str) -> None:
    phys = ctx.cfg.physical
    eps = ctx.cfg.numerical.eps_gap
    w = ctx.grid.quad_weights
    rows = []
    u0 = BeamState(ctx.grid, trace.states[0])
    em0 = mechanical_energy(u0, phys)
    rows.append([0.0, em0, trace.energy0 - em0, trace.energy0, 0.0, 0.0,
                 float(np.min(trace.states[0] + phys.H)),
                 int(np.count_nonzero(trace.states[0] + phys.H < eps)), 0.0, 0])
    for n, s in enumerate(trace.steps, start=1):
        u = s.state.values
        rows.append([
            trace.times[n], s.energy_mechanical, s.energy_electrostatic, s.energy_total,
            s.dissipation, trace.cumulative_dissipation[n],
            float(np.min(u + phys.H)),
            int(np.count_nonzero(u + phys.H < eps)),
            float(np.dot(w, -s.multiplier)),
            s.fp_iters,
        ])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_snapshots(trace, ctx, outdir: str, every: int) -> list[str]:
    files = []
    xs = ctx.grid.nodes.tolist()
    for n, s in enumerate(trace.steps, start=1):
        if every <= 0 or (n % every != 0 and n != len(trace.steps)):
            continue
        name = f"snapshot_{n:06d}.json"
        payload = {
            "t": float(trace.times[n]),
            "x": [float(f"{v:.17g}") for v in xs],
            "u": [float(f"{v:.17g}") for v in s.state.values],
            "zeta": [float(f"{v:.17g}") for v in s.multiplier],
        }
        _dump_json(payload, os.path.join(outdir, name))
        files.append(name)
    return files


def _run_checks(trace, ctx) -> list[CheckReport]:
    reports = check_energy_ledger(trace, ctx)
    K = h2_norm_bound(trace, ctx.grid)
    for n, s in enumerate(trace.steps, start=1):
        if np.any(np.abs(s.multiplier) > ctx.cfg.numerical.tol_as):
            for rep in check_multiplier(s, ctx, K):
                reports.append(CheckReport(rep.name, rep.passed, rep.value, rep.bound,
                                           rep.tolerance, context=f"step {n}"))
    return reports


def cmd_simulate(args) -> int:
    try:
        cfg = _load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    started = time.time()
    ctx = make_context(cfg)
    if not args.quiet:
        print(f"delta0 = {ctx.constants.delta0:.6g} (c1 = {ctx.constants.c1:.6g})")
        if cfg.numerical.delta > ctx.constants.delta0:
            print(f"warning: delta = {cfg.numerical.delta} exceeds delta0")

    u0 = initial_state(ctx)
    files = []
    status = 0
    try:
        trace = run(u0, cfg.numerical.delta, cfg.numerical.t_end, ctx)
    except StepError as err:
        trace = getattr(err, "partial_trace", None)
        print(f"step failure: {err}", file=sys.stderr)
        status = 1
    reports = _run_checks(trace, ctx) if trace is not None and trace.steps else []

    if trace is not None:
        write_trace_csv(trace, ctx, os.path.join(args.out, "trace.csv"))
        files.append("trace.csv")
        files += write_snapshots(trace, ctx, args.out, args.snapshot_every)

    summary = [{"name": r.name, "passed": r.passed, "value": r.value,
                "bound": r.bound, "tolerance": r.tolerance, "context": r.context}
               for r in reports]
    _dump_json(summary, os.path.join(args.out, "diagnostics.json"))
    files.append("diagnostics.json")

    touchdown_step = None
    if trace is not None:
        eps = cfg.numerical.eps_gap
        for n, s in enumerate(trace.steps, start=1):
            if np.any(s.state.values + cfg.physical.H < eps):
                touchdown_step = n
                break

    manifest = {
        "version": __version__,
        "config": {k: getattr(sec, f) for sec, names in (
            (cfg.physical, ("L", "H", "d", "beta", "tau", "a", "V")),
            (cfg.numerical, ("n_x", "n_z_layer", "n_eta_gap", "eps_gap", "tol_fp",
                             "tol_as", "max_fp", "max_as", "delta", "t_end")),
        ) for k, f in ((name, name) for name in names)},
        "delta0": ctx.constants.delta0,
        "c1": ctx.constants.c1,
        "started": started,
        "finished": time.time(),
        "files": files + ["manifest.json"],
        "touchdown_step": touchdown_step,
        "checks_passed": all(r.passed for r in reports),
        "aborted": trace.aborted if trace is not None else True,
    }
    _dump_json(manifest, os.path.join(args.out, "manifest.json"))

    if not args.quiet:
        for r in reports:
            print(r.line())
    if status == 0 and reports and not all(r.passed for r in reports):
        status = 1
    return status


def cmd_oracle(args) -> int:
    try:
        cfg = _load_config(args.config)
        ctx = make_context(cfg)
    except (ConfigError, OSError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    phys, num = cfg.physical, cfg.numerical
    reports: list[CheckReport] = []

    if ctx.perm is not None:
        for w in (0.0, -phys.H / 2.0):
            oracle = flat_plate_oracle(phys, ctx.perm, w)
            grid = ctx.grid
            state = BeamState(grid, np.full(grid.n_x + 1, w))
            mesh = build_mesh(state, phys, num)
            sol = solve_potential(mesh, ctx.perm, ctx.bdata, state, tol=num.tol_as)
            X, Z = np.meshgrid(grid.nodes[1:-1], mesh.z_layer, indexing="ij")
            err_psi = float(np.max(np.abs(sol.psi1[1:-1] - oracle["psi"](X, Z))))
            fp = force(sol, state, ctx.perm, mesh)
            err_g = float(np.max(np.abs(fp.values[1:-1] - oracle["force"](grid.nodes[1:-1]))))
            reports.append(CheckReport.of(f"flat-plate potential (w={w})", err_psi, 0.0, 1e-8))
            reports.append(CheckReport.of(f"flat-plate force (w={w})", err_g, 0.0, 1e-8))

        # directional derivative of the electrostatic energy
        grid = ctx.grid
        u = BeamState.zero(grid)
        wdir = BeamState.bump(grid, -phys.H / 40.0)
        table = directional_derivative_check(u, wdir, [1e-3], phys, num, ctx.perm, ctx.bdata)
        # coarse meshes cannot resolve the trace quadrature: relaxed schedule
        tol = 1e-2 if num.n_x >= 32 else 5e-2
        reports.append(CheckReport.of("directional derivative (s=1e-3)",
                                      table[0]["rel_error"], 0.0, tol))

    study = convergence_study(phys, perm=None, levels=3, n0=args.mms_n0)
    worst_order = min(study["mms_orders"][-2:])
    reports.append(CheckReport.of("transmission MMS order (>= 1.9)",
                                  -worst_order, -1.9, 0.0,
                                  context=f"orders {['%.3f' % o for o in study['mms_orders']]}"))

    for r in reports:
        print(r.line())
    return 0 if all(r.passed for r in reports) else 1


def cmd_sweep(args) -> int:
    try:
        cfg = _load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if not args.values:
        print("empty value list", file=sys.stderr)
        return 2
    if args.param not in ("V", "delta", "n_x"):
        print(f"unsupported sweep parameter {args.param!r}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    rows = []
    any_failed = False
    for raw_val in args.values:
        val = float(raw_val) if args.param != "n_x" else int(raw_val)
        if args.param == "V":
            from dataclasses import replace
            cfg_i = validate_config(cfg)  # idempotent copy
            cfg_i = replace(cfg_i, physical=replace(cfg.physical, V=float(val)))
        elif args.param == "delta":
            cfg_i = with_numerical(cfg, delta=float(val))
        else:
            cfg_i = with_numerical(cfg, n_x=int(val))
        ctx = make_context(cfg_i)
        u0 = initial_state(ctx)
        row = {"value": val, "failed": False}
        try:
            trace = run(u0, cfg_i.numerical.delta, cfg_i.numerical.t_end, ctx,
                        record_states=False)
            final = trace.steps[-1]
            w = ctx.grid.quad_weights
            row.update({
                "final_energy": final.energy_total,
                "min_gap": float(np.min(final.state.values + cfg_i.physical.H)),
                "touchdown": bool(np.any(final.state.values + cfg_i.physical.H
                                         < cfg_i.numerical.eps_gap)),
                "multiplier_mass": float(np.dot(w, -final.multiplier)),
            })
        except StepError as err:
            row.update({"failed": True, "final_energy": math.nan, "min_gap": math.nan,
                        "touchdown": False, "multiplier_mass": math.nan})
            any_failed = True
            print(f"run {args.param}={val} failed: {err}", file=sys.stderr)
        rows.append(row)

    path = os.path.join(args.out, "sweep.csv")
    cols = ["value", "final_energy", "min_gap", "touchdown", "multiplier_mass", "failed"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
    if not args.quiet:
        print(f"wrote {path}")
    return 1 if any_failed else 0


def cmd_validate(args) -> int:
    try:
        cfg = _load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    print("config valid")
    if cfg.defaulted and not args.quiet:
        print("defaulted keys: " + ", ".join(cfg.defaulted))
    for w in cfg.warnings:
        print(f"warning: {w}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="memsbeam",
                                     description="Electrostatic beam obstacle-flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to flat key=value config file")
        p.add_argument("--quiet", action="store_true")

    p_sim = sub.add_parser("simulate", help="run the time-implicit scheme")
    common(p_sim)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--snapshot-every", type=int, default=0, metavar="N")
    p_sim.set_defaults(func=cmd_simulate)

    p_or = sub.add_parser("oracle", help="run the analytic oracle suite")
    common(p_or)
    p_or.add_argument("--mms-n0", type=int, default=12, help=argparse.SUPPRESS)
    p_or.set_defaults(func=cmd_oracle)

    p_sw = sub.add_parser("sweep", help="independent runs over one parameter")
    common(p_sw)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--param", required=True, choices=["V", "delta", "n_x"])
    p_sw.add_argument("--values", nargs="*", default=[])
    p_sw.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="validate a config file")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

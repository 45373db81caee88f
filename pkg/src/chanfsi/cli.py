"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 configuration error, 3 solver failure,
4 inadmissible deformation or non-converging iteration (reports are still
written).
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, output
from .config import ModelConfig, apply_overrides, format_config, load_config
from .coupling import CoupledModel, IterationReport, global_iterate
from .errors import AdmissibilityError, ChanFsiError, ConfigError, SolverError
from .operators import Grid2D

log = logging.getLogger("chanfsi")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_ADMISSIBILITY = 0, 1, 2, 3, 4

VERIFY_KINDS = analysis.IDENTITY_KINDS + ("div_h", "def_tensor", "korn", "equicontinuity", "all")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chanfsi", description="Channel flow with a compliant wall: coupled "
                                            "solves, global iteration and verification.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    common = _Parser(add_help=False)
    common.add_argument("-c", "--config", type=Path, help="configuration file")
    common.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("-o", "--out", type=Path, help="output directory (default: out_dir)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", parents=[common], help="one coupled solve on the reference wall")
    r.add_argument("--vtk", action="store_true", help="write VTK snapshots")

    sub.add_parser("iterate", parents=[common], help="global fixed-point iteration")

    c = sub.add_parser("compare", parents=[common], help="paired continuous-dependence run")
    c.add_argument("--kind", choices=("pressure", "deformation", "none"), default="pressure")
    c.add_argument("--amplitude", type=float, default=1e-2)
    c.add_argument("--which", choices=("q_in", "q_out", "q_w"), default="q_in")
    c.add_argument("--swap", action="store_true", help="exchange the two solutions")

    v = sub.add_parser("verify", parents=[common], help="identity, consistency, Korn and "
                                                        "equicontinuity checks")
    v.add_argument("--kind", choices=VERIFY_KINDS, default="all")
    v.add_argument("--count", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep", parents=[common], help="grid of kappa / eps / T runs")
    s.add_argument("--kappa", type=_float_list)
    s.add_argument("--eps", type=_float_list)
    s.add_argument("--T", dest="T", type=_float_list)
    s.add_argument("--mode", choices=("run", "iterate"), default="run")
    s.add_argument("--threads", type=int, help="worker count (default: FSI_THREADS or 2)")
    return p


def _load(args) -> ModelConfig:
    cfg = load_config(args.config) if args.config else ModelConfig()
    if args.set:
        cfg = apply_overrides(cfg, args.set, args.config.parent if args.config else None)
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.out_dir)


def _save_config(cfg, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(format_config(cfg))


def _summary_line(traj):
    d = traj.diagnostics
    return (f"max |div_h u| = {np.max(d['div_h_norm']):.3e}, "
            f"max |u2 - sigma| = {np.max(d['wall_mismatch_norm']):.3e}, "
            f"max |eta| = {np.max(np.abs(traj.eta)):.3e}")


def cmd_run(args, cfg) -> int:
    out = _out_dir(args, cfg)
    _save_config(cfg, out)
    model = CoupledModel(cfg)
    try:
        traj = model.evaluate(model.zero_wall())
    except AdmissibilityError as exc:
        output.write_json(exc.report, out / "admissibility.json")
        raise
    output.write_outputs(traj, None, out, model.grid, vtk=args.vtk or cfg.vtk,
                         vtk_every=cfg.vtk_every)
    print(f"run: {_summary_line(traj)}")
    return EXIT_OK


def _write_iteration(report, traj, out, model, cfg):
    output.write_iteration_report(report, out / "iterations.csv")
    output.write_json(report, out / "iterations.json")
    if traj is not None:
        output.write_outputs(traj, None, out, model.grid, vtk=cfg.vtk, vtk_every=cfg.vtk_every)


def cmd_iterate(args, cfg) -> int:
    out = _out_dir(args, cfg)
    _save_config(cfg, out)
    model = CoupledModel(cfg)
    try:
        traj, report = global_iterate(cfg, model=model)
    except AdmissibilityError as exc:
        rep = exc.report if isinstance(exc.report, IterationReport) else IterationReport(
            status="inadmissible", message=str(exc))
        _write_iteration(rep, None, out, model, cfg)
        raise
    _write_iteration(report, traj, out, model, cfg)
    print(f"iterate: {report.status} after {report.iterations} iterations, "
          f"max q = {report.max_factor:.3e}")
    if not report.converged:
        log.error("%s", report.message)
        return EXIT_ADMISSIBILITY
    return EXIT_OK


def cmd_compare(args, cfg) -> int:
    out = _out_dir(args, cfg)
    _save_config(cfg, out)
    rep = analysis.dependence_experiment(cfg, args.kind, args.amplitude, which=args.which,
                                         swap=args.swap)
    output.write_dependence(rep, out / "dependence.csv")
    output.write_json({k: v for k, v in rep.terms.items()}, out / "dependence_terms.json")
    print(f"compare: final lhs = {rep.lhs[-1]:.3e}, rhs = {rep.rhs[-1]:.3e}, "
          f"max ratio = {rep.max_ratio:.3e}, c_Ko = {rep.c_korn:.4f}")
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    out = _out_dir(args, cfg)
    kinds = VERIFY_KINDS[:-1] if args.kind == "all" else (args.kind,)
    ident = [analysis.verify_identity(k, args.count, args.seed)
             for k in kinds if k in analysis.IDENTITY_KINDS]
    if ident:
        output.write_identity(ident, out / "identity.csv")
        for r in ident:
            print(f"verify {r.kind}: max residual {r.max_residual:.3e}, "
                  f"mean {r.mean_residual:.3e}")
    cons = [analysis.consistency_study(k) for k in kinds if k in ("div_h", "def_tensor")]
    if cons:
        output.write_consistency(cons, out / "consistency.csv")
        for r in cons:
            print(f"verify {r.kind}: order {r.order:.3f}")
    if "korn" in kinds:
        g = Grid2D(cfg.L, min(cfg.N1, 24), min(cfg.N2, 24))
        radius = cfg.R0.build(cfg.L)
        c = analysis.korn_constant((radius.value(g.y1), radius.d1(g.y1)), g)
        output.write_csv(out / "korn.csv", {"N1": [g.N1], "N2": [g.N2], "c_korn": [c]})
        print(f"verify korn: c_Ko = {c:.6f}")
    if "equicontinuity" in kinds:
        model = CoupledModel(cfg)
        traj = model.evaluate(model.zero_wall())
        m = cfg.n_steps
        # beyond T/2 the integration window shrinks faster than the increments grow
        taus = cfg.dt * np.unique(np.linspace(0, m // 2, min(m // 2 + 1, 8)).astype(int))
        prof = analysis.equicontinuity_profile(traj, taus, model.grid)
        output.write_equicontinuity(prof, out / "equicontinuity.csv")
        print(f"verify equicontinuity: c = {prof.c:.4e}, max value/tau = {prof.max_slope:.4e}")
    return EXIT_OK


def _sweep_one(job):
    idx, cfg, mode, out = job
    run_dir = out / f"run_{idx:03d}"
    _save_config(cfg, run_dir)
    model = CoupledModel(cfg)
    row = {"run": idx, "kappa": cfg.kappa, "eps": cfg.eps, "T": cfg.T, "status": 0}
    try:
        if mode == "iterate":
            traj, rep = global_iterate(cfg, model=model)
            output.write_iteration_report(rep, run_dir / "iterations.csv")
            output.write_json(rep, run_dir / "iterations.json")
            row["status"] = 0 if rep.converged else EXIT_ADMISSIBILITY
            row["max_q"] = rep.max_factor
        else:
            traj = model.evaluate(model.zero_wall())
        output.write_timeseries(traj, run_dir / "timeseries.csv")
        d = traj.diagnostics
        row["max_div_h"] = float(np.max(d["div_h_norm"]))
        row["max_mismatch"] = float(np.max(d["wall_mismatch_norm"]))
    except AdmissibilityError as exc:
        output.write_json(exc.report, run_dir / "report.json")
        row["status"] = EXIT_ADMISSIBILITY
    except SolverError as exc:
        log.error("run %d: %s", idx, exc)
        row["status"] = EXIT_SOLVER
    return row


def cmd_sweep(args, cfg) -> int:
    out = _out_dir(args, cfg)
    # without an explicit list, kappa follows 1/eps when the config derived it
    derived = math.isclose(cfg.kappa, 1.0 / cfg.eps)
    kappas = args.kappa or [None if derived else cfg.kappa]
    epss = args.eps or [cfg.eps]
    Ts = args.T or [cfg.T]
    jobs = []
    for i, (eps, kappa, T) in enumerate(itertools.product(epss, kappas, Ts)):
        jobs.append((i, cfg.replace(eps=eps, kappa=kappa, T=T), args.mode, out))
    threads = args.threads or int(os.environ.get("FSI_THREADS", "2") or 2)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        rows = list(ex.map(_sweep_one, jobs))
    keys = ("run", "kappa", "eps", "T", "status", "max_div_h", "max_mismatch", "max_q")
    cols = {k: [r.get(k, float("nan")) for r in rows] for k in keys}
    output.write_csv(out / "sweep.csv", cols)
    worst = max(r["status"] for r in rows)
    print(f"sweep: {len(rows)} runs, worst exit status {worst}")
    return worst


COMMANDS = {"run": cmd_run, "iterate": cmd_iterate, "compare": cmd_compare,
            "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AdmissibilityError as exc:
        print(f"admissibility error: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except (ChanFsiError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

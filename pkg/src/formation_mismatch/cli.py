"""Command-line front end: ``rigidity``, ``simulate`` and ``sweep``.

Exit codes: 0 success, 1 domain failure (not rigid, integration failure or
undetermined outcome), 2 I/O or schema error.  Set ``FORMATION_MISMATCH_LOG``
to a logging level name (``DEBUG``, ``INFO``...) for diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import AnalysisSettings, write_orbit_residuals_csv
from .dynamics import IntegrationError
from .pipeline import run_scenario, sample_ball, sweep
from .rigidity import independent_edge_pair, rigidity_test, unaligned_test
from .scenario_io import ScenarioFileError, load_scenario

log = logging.getLogger("formation_mismatch")

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


def _dump(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _seed(args, sf) -> int:
    if args.seed is not None:
        return args.seed
    return sf.seed if sf.seed is not None else 0


def cmd_rigidity(args) -> int:
    sf = load_scenario(args.scenario)
    seed = _seed(args, sf)
    x = sf.build(np.random.default_rng(seed)).initial_state
    g = sf.graph
    rep = rigidity_test(g, x)
    out = rep.to_dict()
    out["kept_edges"] = [k + 1 for k in rep.kept_edges]
    try:
        unaligned, quad = unaligned_test(x)
    except ValueError:
        unaligned, quad = False, None
    out["unaligned"] = unaligned
    out["aligned_points"] = None if quad is None else [i + 1 for i in quad]
    pair = independent_edge_pair(g, x)
    out["independent_edge_pair"] = None if pair is None else [p + 1 for p in pair]
    out["seed"] = seed
    sys.stdout.write(_dump(out))
    return EXIT_OK if rep.is_infinitesimally_rigid else EXIT_DOMAIN


def _summary(rep) -> str:
    parts = [rep.kind]
    if rep.kind == "orbit":
        parts.append(f"omega={rep.omega:.6g} sigma={rep.sigma:+d}")
    elif rep.kind == "drift":
        parts.append(f"speed={np.linalg.norm(rep.drift_velocity):.6g}")
    if rep.convergence_rate is not None:
        parts.append(f"rate={rep.convergence_rate:.4g}")
    return " ".join(parts)


def cmd_simulate(args) -> int:
    sf = load_scenario(args.scenario)
    seed = _seed(args, sf)
    s = sf.build(np.random.default_rng(seed))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = out_dir / sf.outputs.get("trajectory", "trajectory.csv")
    report_path = out_dir / sf.outputs.get("report", "report.json")
    try:
        tr, rep = run_scenario(s, AnalysisSettings())
    except IntegrationError as exc:
        exc.record.to_csv(traj_path)
        _dump({"seed": seed, "status": exc.record.status, "message": str(exc),
               "last_time": float(exc.record.times[-1]),
               "last_state": exc.record.states[-1].tolist()}, report_path)
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    tr.to_csv(traj_path)
    doc = rep.to_dict()
    doc["seed"] = seed
    doc["mismatch"] = [float(v) for v in s.mismatch]
    doc["stride"] = float(tr.times[1] - tr.times[0]) if len(tr) > 1 else None
    _dump(doc, report_path)
    if rep.kind == "orbit":
        write_orbit_residuals_csv(out_dir / "orbit_residuals.csv", tr, rep)
    if not args.no_figures:
        from .plotting import write_report_figures

        write_report_figures(tr, rep, out_dir)
    print(_summary(rep))
    return EXIT_DOMAIN if rep.kind == "undetermined" else EXIT_OK


def cmd_sweep(args) -> int:
    sf = load_scenario(args.scenario)
    seed = _seed(args, sf)
    rng = np.random.default_rng(seed)
    base = sf.build(rng)
    mus = sample_ball(rng, args.count, sf.graph.m, args.norm)
    table = sweep(base, mus, AnalysisSettings(), workers=args.workers)
    table.update(seed=seed, norm=args.norm)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump(table, out_dir / "sweep.json")
    print(" ".join(f"{k}={v}" for k, v in table["counts"].items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="formation-mismatch",
                                description="Rigidity checks, simulation and outcome sweeps for mismatched formations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rigidity", parents=[common], help="rigidity report for the initial formation")
    r.set_defaults(func=cmd_rigidity)

    s = sub.add_parser("simulate", parents=[common], help="integrate and classify one scenario")
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--no-figures", action="store_true", help="skip the PNG report figures")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", parents=[common], help="classify random mismatches from a ball")
    w.add_argument("--out", default=".", help="output directory")
    w.add_argument("--count", type=int, required=True)
    w.add_argument("--norm", type=float, required=True, help="radius of the mismatch ball")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    level = os.environ.get("FORMATION_MISMATCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

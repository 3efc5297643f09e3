#!/usr/bin/env python3
"""
VITRE Pipeline Runner
Runs simulated visuo-tactile reconstruction sessions and the reports around them.

Usage:
    python run_pipeline.py run --config data/configs/sphere.cfg [--snapshots DIR] [--scores DIR] [--attractors-out FILE]
    python run_pipeline.py run --config data/configs/sphere.cfg --attractors-in FILE   # resume from saved attractors
    python run_pipeline.py compare --config data/configs/sugar_box.cfg --seeds 0,1,2 --out table.csv [--plot fig.png]
    python run_pipeline.py compare --config data/configs/sphere.cfg --modes literal,complement
    python run_pipeline.py export --session data/output/vitre_session.db --iteration 10 --ply out.ply [--csv field.csv]
    python run_pipeline.py validate --session data/output/vitre_session.db
    python run_pipeline.py shapes --out data/output/shapes

Output:
    data/output/vitre_session.db   - SQLite session log (every record, estimate and attractor)
    data/output/metrics.csv        - per-iteration metrics of the last `run`
    data/output/comparison*.csv    - strategy comparison table and mean chamfer curves

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.geometry.mesh import TriangleMesh
from src.geometry.mesh_io import save_obj, save_ply, write_field_csv
from src.geometry.shapes import SHAPE_CATALOG, make_shape
from src.sensing.attractors import write_attractors
from src.simulate.compare import compare_modes, compare_strategies, plot_curves
from src.simulate.session import replay_session, run_session, write_metrics_csv
from src.utils.common import DEFAULT_LOG_PATH, OUTPUT_DIR, get_db_connection, latest_session_id, load_snapshot, open_existing_log
from src.utils.config import SessionConfig, load_config
from src.utils.errors import ConfigurationError, EXIT_OK, VitreError, exit_code_for
from src.utils.validate import run_validation


def banner(title: str) -> None:
    print("=" * 60)
    print(f"VITRE: {title}")
    print("=" * 60)


def _load(args) -> SessionConfig:
    cfg = load_config(args.config) if args.config else SessionConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "strategy", None):
        cfg = cfg.with_strategy(args.strategy)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    banner("reconstruction session")
    start = time.time()

    print("\n[1/3] Running session")
    print("-" * 40)
    conn = get_db_connection(args.log)
    try:
        kwargs = dict(conn=conn, snapshot_dir=args.snapshots, scores_dir=args.scores, verbose=True)
        if args.attractors_in:
            result = replay_session(cfg, args.attractors_in, **kwargs)
        else:
            result = run_session(cfg, **kwargs)
    finally:
        conn.close()

    print("\n[2/3] Writing metrics")
    print("-" * 40)
    write_metrics_csv(args.out, result.records)
    print(f"  Output: {args.out}")
    if args.attractors_out:
        n = write_attractors(args.attractors_out, result.attractors)
        print(f"  Attractors: {args.attractors_out} ({n} points)")

    print("\n[3/3] Summary")
    print("-" * 40)
    final = result.records[-1]
    print(f"  Session {result.session_id} logged to {args.log}")
    print(f"  Chamfer: {result.records[0].chamfer_mm:.3f} mm (prior) -> {final.chamfer_mm:.3f} mm")
    print(f"  Contact failures: {final.cumulative_failures} of {final.iteration} attempts")
    if result.terminated_early:
        print("  Stopped early: no exploration candidate left")

    print(f"\n{'=' * 60}")
    print(f"SESSION COMPLETE ({time.time() - start:.0f}s total)")
    print(f"{'=' * 60}")
    return EXIT_OK


def _parse_seeds(text: str):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigurationError(f"--seeds must be comma-separated integers, got {text!r}") from e
    if not seeds:
        raise ConfigurationError("--seeds is empty")
    return seeds


def cmd_compare(args) -> int:
    cfg = _load(args)
    seeds = _parse_seeds(args.seeds)
    banner("strategy comparison")
    start = time.time()

    modes = [m.strip() for m in args.modes.split(",") if m.strip()] if args.modes else None

    print(f"\n[1/2] Running {len(seeds)} paired seeds on {cfg.truth_source}")
    print("-" * 40)
    if modes:
        result = compare_modes(cfg, seeds, modes, verbose=True)
    else:
        result = compare_strategies(cfg, seeds, verbose=True)

    print("\n[2/2] Writing tables")
    print("-" * 40)
    parent = os.path.dirname(args.out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    result.summary.to_csv(args.out, index=False)
    stem = os.path.splitext(args.out)[0]
    result.curves.to_csv(f"{stem}_curves.csv", float_format="%.6f")
    result.runs.to_csv(f"{stem}_runs.csv", index=False)
    print(f"  Output: {args.out}, {stem}_curves.csv, {stem}_runs.csv")
    if args.plot:
        plot_curves(result.curves, args.plot, title=cfg.truth_source)
        print(f"  Plot: {args.plot}")

    keys = ["mode", "strategy"] if "mode" in result.summary.columns else ["strategy"]
    print("\n  " + " / ".join(keys).ljust(20) + "  chamfer (mm)      failures          attempts")
    for key, rows in result.summary.groupby(keys, sort=False):
        rows = rows.set_index("metric")
        label = " / ".join(key) if isinstance(key, tuple) else key
        print(f"  {label:<20}  {rows.loc['chamfer_mm', 'formatted']:<16}  "
              f"{rows.loc['failures', 'formatted']:<16}  {rows.loc['attempts', 'formatted']}")

    print(f"\n{'=' * 60}")
    print(f"COMPARISON COMPLETE ({time.time() - start:.0f}s total)")
    print(f"{'=' * 60}")
    return EXIT_OK


def cmd_export(args) -> int:
    conn = open_existing_log(args.session)
    try:
        session_id = args.session_id if args.session_id is not None else latest_session_id(conn)
        vertices, faces, uncertainty = load_snapshot(conn, session_id, args.iteration)
    finally:
        conn.close()
    mesh = TriangleMesh(vertices, faces)
    save_ply(args.ply, mesh, uncertainty)
    print(f"Session {session_id}, iteration {args.iteration}: {mesh.vertex_count} vertices -> {args.ply}")
    if args.csv:
        write_field_csv(args.csv, mesh, uncertainty)
        print(f"Uncertainty field -> {args.csv}")
    return EXIT_OK


def cmd_validate(args) -> int:
    problems = run_validation(args.session, args.session_id)
    return 1 if problems else EXIT_OK


def cmd_shapes(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for name, spec in sorted(SHAPE_CATALOG.items()):
        mesh = make_shape(name, args.subdivisions)
        path = os.path.join(args.out, f"{name}.obj")
        save_obj(path, mesh)
        print(f"  {name:<12} {spec.dimensions:<22} {mesh.vertex_count} vertices -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="VITRE Pipeline Runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one reconstruction session")
    run.add_argument("--config", help="session config file (defaults if omitted)")
    run.add_argument("--snapshots", help="directory for iter_XXX.ply snapshots")
    run.add_argument("--scores", help="directory for per-iteration candidate score tables")
    run.add_argument("--out", default=os.path.join(OUTPUT_DIR, "metrics.csv"))
    run.add_argument("--log", default=DEFAULT_LOG_PATH, help="SQLite session log")
    run.add_argument("--attractors-out", help="write the final attractor set here")
    run.add_argument("--attractors-in", help="start from this attractor set instead of the visual prior")
    run.add_argument("--seed", type=int)
    run.add_argument("--strategy", choices=["ours", "min_u"])
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="paired ours vs min_u sessions over seeds")
    compare.add_argument("--config")
    compare.add_argument("--seeds", default="0,1,2")
    compare.add_argument("--out", default=os.path.join(OUTPUT_DIR, "comparison.csv"))
    compare.add_argument("--plot", help="PNG of mean chamfer over iterations")
    compare.add_argument("--modes", help="comma-separated propagation modes to compare, e.g. literal,complement")
    compare.set_defaults(func=cmd_compare)

    export = sub.add_parser("export", help="rebuild a PLY snapshot from the session log")
    export.add_argument("--session", default=DEFAULT_LOG_PATH, help="session log path")
    export.add_argument("--session-id", type=int, help="defaults to the latest session")
    export.add_argument("--iteration", type=int, required=True)
    export.add_argument("--ply", required=True)
    export.add_argument("--csv", help="also write the per-vertex uncertainty CSV")
    export.set_defaults(func=cmd_export)

    validate = sub.add_parser("validate", help="integrity report over a session log")
    validate.add_argument("--session", default=DEFAULT_LOG_PATH)
    validate.add_argument("--session-id", type=int)
    validate.set_defaults(func=cmd_validate)

    shapes = sub.add_parser("shapes", help="write the procedural truth catalog as OBJ")
    shapes.add_argument("--out", default=os.path.join(OUTPUT_DIR, "shapes"))
    shapes.add_argument("--subdivisions", type=int, default=4)
    shapes.set_defaults(func=cmd_shapes)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VitreError, OSError) as e:
        print(f"\nERROR: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())

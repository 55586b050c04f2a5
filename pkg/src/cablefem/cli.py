"""Command line interface: run, bench, validate, mesh-info, serve.

Exit codes: 0 success, 1 validation failure, 2 IO/schema errors,
3 solver failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import CableFemError, EngineError, MeshError, NonConvergenceError, ScenarioError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_SOLVER = 3

BACKEND_ALIASES = {"qp": "accelerated_qp", "pgs": "pgs_baseline",
                   "accelerated_qp": "accelerated_qp",
                   "pgs_baseline": "pgs_baseline",
                   "oracle": "active_set_oracle"}


def default_threads():
    try:
        return max(1, int(os.environ.get("CABLEFEM_THREADS", "1")))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cablefem",
        description="Quasi-static multi-contact FEM for cable-driven continuum robots")
    parser.add_argument("--version", action="version", version=f"cablefem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario and write a trajectory CSV")
    run_p.add_argument("scenario", type=Path)
    run_p.add_argument("-o", "--output", type=Path, required=True)
    run_p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path scenario override")
    run_p.add_argument("--backend", choices=sorted(BACKEND_ALIASES))
    run_p.add_argument("--threads", type=int, default=default_threads())
    run_p.add_argument("--timings", choices=["none", "wall"], default="none",
                       help="'wall' records wall-clock solve times in the CSV "
                            "(breaks byte-reproducibility)")

    bench_p = sub.add_parser("bench", help="run the solver scaling benchmark")
    bench_p.add_argument("config", type=Path)
    bench_p.add_argument("-o", "--output", type=Path, required=True,
                         help="output JSON path (a flat CSV lands next to it)")
    bench_p.add_argument("--threads", type=int, default=default_threads())
    bench_p.add_argument("--format", choices=["csv", "json"], default="json")

    val_p = sub.add_parser("validate", help="run the release-gate validation suites")
    val_p.add_argument("--seed", type=int, default=0)

    mesh_p = sub.add_parser("mesh-info", help="report mesh stats and consistency")
    mesh_p.add_argument("mesh", type=Path)
    mesh_p.add_argument("--format", choices=["csv", "json", "text"], default="text")

    serve_p = sub.add_parser("serve", help="serve the live steering endpoint")
    serve_p.add_argument("scenario", type=Path)
    serve_p.add_argument("--port", type=int, default=8700)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--override", action="append", default=[],
                         metavar="KEY=VALUE")
    serve_p.add_argument("--ui", type=Path, default=None,
                         help="directory of steering UI static files to serve over HTTP")
    return parser


def cmd_run(args):
    from .engine import run_scenario
    from .scenario import load_scenario, write_trajectory_csv

    overrides = list(args.override)
    if args.backend:
        overrides.append(f"solver.backend={BACKEND_ALIASES[args.backend]}")
    try:
        scenario = load_scenario(args.scenario, overrides=overrides)
    except (ScenarioError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        records = run_scenario(scenario)
    except (EngineError, NonConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    write_trajectory_csv(args.output, scenario, records, overrides=overrides,
                         threads=args.threads,
                         include_timings=args.timings == "wall")
    total_ms = sum(r.total_ms for r in records)
    print(f"wrote {args.output} ({len(records)} frames, "
          f"{total_ms:.1f} ms simulated compute)")
    return EXIT_OK


def cmd_bench(args):
    from .bench import BenchmarkConfig, run_benchmark, write_benchmark_outputs
    from .errors import DomainError

    try:
        raw = json.loads(args.config.read_text())
        config = BenchmarkConfig(**raw)
    except (OSError, json.JSONDecodeError, TypeError, DomainError) as exc:
        print(f"error: bad benchmark config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        result = run_benchmark(config, progress=lambda row: print(
            f"  {row['backend']:15s} M={row['nodes']:4d} "
            f"n_c={row['target_contacts']:3d} -> {row['mean_ms']:8.2f} ms"
            + ("  [FLAGGED]" if row["flagged"] else "")))
    except (EngineError, NonConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    result["environment"]["threads"] = args.threads
    csv_path = write_benchmark_outputs(result, args.output)
    print(f"wrote {args.output} and {csv_path}")
    return EXIT_OK


def cmd_validate(args):
    from .validate import run_validation

    ok, _ = run_validation(seed=args.seed)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_mesh_info(args):
    from .mesh import load_mesh, mesh_info

    try:
        mesh = load_mesh(args.mesh)
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    info = mesh_info(mesh)
    if args.format == "json":
        print(json.dumps(info, indent=2))
    elif args.format == "csv":
        print(",".join(info.keys()))
        print(",".join(str(v) for v in info.values()))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return EXIT_OK


def cmd_serve(args):
    from .scenario import load_scenario
    from .service import run_service

    try:
        scenario = load_scenario(args.scenario, overrides=list(args.override))
    except (ScenarioError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"serving {scenario.name} on ws://{args.host}:{args.port}/sim "
          f"(health: http://{args.host}:{args.port}/health)")
    if args.ui is not None:
        print(f"steering UI at http://{args.host}:{args.port}/ from {args.ui}")
    try:
        run_service(scenario, host=args.host, port=args.port, ui_dir=args.ui)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "bench": cmd_bench,
        "validate": cmd_validate,
        "mesh-info": cmd_mesh_info,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except CableFemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Reproduce the solver-scaling experiment: frame time vs contact count.

Runs the constriction-scene sweep over node counts and contact targets for
both backends and prints growth factors per node count, writing the full
table to bench_scaling.json / .csv. Equivalent to
`cablefem bench bench/default.json -o bench_scaling.json` plus a trend
summary.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cablefem.bench import BenchmarkConfig, run_benchmark, write_benchmark_outputs


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("-o", "--output", type=Path, default=Path("bench_scaling.json"))
    parser.add_argument("--nodes", type=int, nargs="+", default=[100, 200, 300, 400])
    parser.add_argument("--contacts", type=int, nargs="+", default=[5, 15, 30, 50])
    parser.add_argument("--repetitions", type=int, default=10)
    parser.add_argument("--warmup", type=int, default=8)
    args = parser.parse_args()

    config = BenchmarkConfig(node_counts=args.nodes, contact_targets=args.contacts,
                             repetitions=args.repetitions, warmup_frames=args.warmup)
    result = run_benchmark(config, progress=lambda row: print(
        f"  {row['backend']:15s} M={row['nodes']:4d} n_c={row['target_contacts']:3d} "
        f"-> {row['mean_ms']:8.2f} ms/frame ({row['iters']:.0f} iters)"
        + ("  [FLAGGED]" if row["flagged"] else "")))
    csv_path = write_benchmark_outputs(result, args.output)

    print("\nframe-time growth from fewest to most contacts:")
    for backend in config.backends:
        for nodes in config.node_counts:
            sel = [r for r in result["rows"]
                   if r["backend"] == backend and r["nodes"] == nodes]
            lo = min(sel, key=lambda r: r["target_contacts"])
            hi = max(sel, key=lambda r: r["target_contacts"])
            growth = hi["mean_ms"] / lo["mean_ms"]
            print(f"  {backend:15s} M={nodes:4d}: "
                  f"{lo['mean_ms']:8.2f} -> {hi['mean_ms']:8.2f} ms  ({growth:.2f}x)")
    print(f"\nwrote {args.output} and {csv_path}")


if __name__ == "__main__":
    main()

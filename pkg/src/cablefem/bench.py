"""Solver scaling benchmark: frame time vs contact count per backend.

The synthetic constriction scene is a straight robot clamped at the base and
hovering a fraction of the contact margin above a floor strip; a downward
load on the first `target` free nodes presses exactly that many nodes into
contact, so the active contact count is calibrated by construction. Rows
whose achieved count misses the target by more than 20% are flagged.
"""

import hashlib
import json
import platform
import statistics
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .beam import MaterialParams, straight_model
from .constraints import FixedNodeSpec
from .engine import Engine, StepInputs
from .errors import DomainError
from .mesh import make_rectangle
from .scenario import MATERIAL_PRESETS
from .solver import SolverSettings


@dataclass
class BenchmarkConfig:
    node_counts: list = field(default_factory=lambda: [100, 200, 300, 400])
    contact_targets: list = field(default_factory=lambda: [5, 15, 30, 50])
    backends: list = field(default_factory=lambda: ["accelerated_qp", "pgs_baseline"])
    repetitions: int = 5
    warmup_frames: int = 3
    margin: float = 1e-4
    load_per_node: float = 0.02  # N pressing the targeted nodes down
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 1:
            raise DomainError("repetitions must be >= 1")
        if self.warmup_frames < 0:
            raise DomainError("warmup_frames must be >= 0")
        for backend in self.backends:
            if backend not in ("accelerated_qp", "pgs_baseline", "active_set_oracle"):
                raise DomainError(f"unknown backend {backend!r}")


def build_constriction_engine(node_count, target_contacts, backend, config):
    """Engine + load vector giving ~target_contacts active contacts."""
    if target_contacts > node_count - 1:
        raise DomainError("cannot target more contacts than free nodes")
    material = MaterialParams(**MATERIAL_PRESETS["a"])
    length = 0.47 * node_count / 100.0  # keep element length constant across M
    model = straight_model(node_count, length, material)
    clearance = 0.4 * config.margin
    # floor strip only under the loaded nodes, so detected == active == target
    l0 = model.element_rest_length
    loaded = np.arange(1, target_contacts + 1)
    x_lo = loaded[0] * l0 - 0.49 * l0
    x_hi = loaded[-1] * l0 + 0.49 * l0
    floor = make_rectangle(((x_lo + x_hi) / 2.0, 0.0, -clearance),
                           x_hi - x_lo, 1.0, normal_axis="z")
    settings = SolverSettings(backend=backend, **config.solver)
    engine = Engine(model, mesh=floor, fixed_specs=[FixedNodeSpec(0)],
                    settings=settings, margin=config.margin)
    load = np.zeros(model.dof_count)
    load.reshape(-1, 6)[loaded, 2] = -config.load_per_node
    return engine, load


def run_cell(node_count, target_contacts, backend, config):
    """One benchmark cell: warmup then timed frames; returns a result row."""
    engine, load = build_constriction_engine(node_count, target_contacts,
                                             backend, config)
    x = engine.initial_configuration()
    inputs = StepInputs(applied_force=load)
    records = []
    total = config.warmup_frames + config.repetitions
    for k in range(total):
        x, rec = engine.step(x, inputs, t=0.0, frame_index=k)
        if k >= config.warmup_frames:
            records.append(rec)

    achieved = statistics.mean(r.n_c for r in records)
    flagged = abs(achieved - target_contacts) > 0.2 * target_contacts
    frame_times = [r.total_ms for r in records]
    solve_times = [r.solve_ms for r in records]
    return {
        "backend": backend,
        "nodes": node_count,
        "dof": 6 * node_count,
        "target_contacts": target_contacts,
        "achieved_contacts": achieved,
        "flagged": flagged,
        "mean_ms": statistics.mean(frame_times),
        "p50_ms": statistics.median(frame_times),
        "solve_mean_ms": statistics.mean(solve_times),
        "solve_p50_ms": statistics.median(solve_times),
        "iters": statistics.mean(r.iterations for r in records),
        "stiffness_mean_ms": statistics.mean(r.timings_ms["stiffness"] for r in records),
        "detection_mean_ms": statistics.mean(r.timings_ms["detection"] for r in records),
        "assembly_mean_ms": statistics.mean(r.timings_ms["assembly"] for r in records),
        "max_penetration": max(r.max_penetration for r in records),
    }


def run_benchmark(config, progress=None):
    """Full sweep; returns {'environment': ..., 'rows': [...]}."""
    rows = []
    for backend in config.backends:
        for nodes in config.node_counts:
            for target in config.contact_targets:
                row = run_cell(nodes, target, backend, config)
                rows.append(row)
                if progress:
                    progress(row)
    raw = asdict(config)
    return {
        "environment": environment_metadata(),
        "config": raw,
        "config_hash": hashlib.sha256(
            json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16],
        "rows": rows,
    }


def environment_metadata(threads=1):
    return {
        "cablefem_version": __version__,
        "cpu": platform.processor() or platform.machine(),
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "threads": threads,
    }


def write_benchmark_outputs(result, json_path, csv_path=None):
    """JSON report plus a flat CSV ready for time-vs-contacts plots."""
    json_path = Path(json_path)
    json_path.write_text(json.dumps(result, indent=2) + "\n")
    if csv_path is None:
        csv_path = json_path.with_suffix(".csv")
    cols = ["backend", "nodes", "dof", "target_contacts", "achieved_contacts",
            "mean_ms", "p50_ms", "solve_mean_ms", "solve_p50_ms", "iters",
            "flagged"]
    lines = [",".join(cols)]
    for row in result["rows"]:
        lines.append(",".join(str(row[c]) for c in cols))
    Path(csv_path).write_text("\n".join(lines) + "\n")
    return Path(csv_path)

"""Scenario files: schema, material presets, timelines, trajectory output.

A scenario is a JSON document describing the robot, its environment mesh,
fixed/insertion schedules, cable tension timelines, solver settings, and the
frame clock. Timelines are piecewise-linear [time_s, value] sample lists with
strictly increasing times; values clamp outside the sampled range.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from .beam import MaterialParams, straight_model
from .constraints import FixedNodeSpec, default_cables
from .engine import Engine, StepInputs
from .errors import ScenarioError
from .mesh import load_mesh, make_tube, orient_normals
from .solver import SolverSettings

# Material presets a-d: experimental settings of the physical robots/tubes
MATERIAL_PRESETS = {
    "a": dict(young_modulus=510e6, cross_section_area=5.551e-6,
              bending_inertia=5.041e-12),
    "b": dict(young_modulus=307e6, cross_section_area=9.03e-6,
              bending_inertia=19.233e-12),
    "c": dict(young_modulus=510e6, cross_section_area=5.551e-6,
              bending_inertia=5.041e-12),
    "d": dict(young_modulus=510e6, cross_section_area=5.551e-6,
              bending_inertia=5.041e-12),
}

_SCHEMA = {
    "name": str,
    "robot": {
        "node_count": int,
        "length": float,
        "material": None,  # preset name or dict
        "base": list,
        "axis": list,
        "cable_radius": float,
        "poisson_ratio": float,
        "torsion_constant": float,
    },
    "mesh": {
        "path": str,
        "tube": dict,
    },
    "margin": float,
    "fixed_nodes": list,
    "insertion_rate": list,  # timeline m/s
    "tensions": dict,  # cable index -> timeline N
    "uniform_load": list,
    "solver": {f.name: None for f in dc_fields(SolverSettings)},
    "frame_period": float,
    "duration": float,
}


@dataclass
class Timeline:
    """Piecewise-linear samples (times strictly increasing); clamped ends."""

    samples: np.ndarray  # (k, 2)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)
        times = self.samples[:, 0]
        if len(times) == 0:
            raise ScenarioError("timeline needs at least one sample")
        if np.any(np.diff(times) <= 0.0):
            raise ScenarioError("timeline sample times must be strictly increasing")

    def value(self, t):
        return float(np.interp(t, self.samples[:, 0], self.samples[:, 1]))


@dataclass
class Scenario:
    name: str
    robot_config: dict
    mesh_config: dict
    margin: float
    fixed_nodes: list
    insertion_rate: Timeline
    tensions: dict  # cable index (int) -> Timeline
    uniform_load: np.ndarray
    solver: SolverSettings
    frame_period: float
    duration: float
    raw: dict = field(default_factory=dict, repr=False)
    base_dir: Path = field(default=Path("."), repr=False)

    def build_model(self):
        cfg = self.robot_config
        mat_cfg = cfg.get("material", "a")
        if isinstance(mat_cfg, str):
            if mat_cfg not in MATERIAL_PRESETS:
                raise ScenarioError(f"unknown material preset {mat_cfg!r}; "
                                    f"presets are {sorted(MATERIAL_PRESETS)}")
            mat_kwargs = dict(MATERIAL_PRESETS[mat_cfg])
        else:
            mat_kwargs = dict(mat_cfg)
        for opt in ("poisson_ratio", "torsion_constant"):
            if cfg.get(opt) is not None:
                mat_kwargs[opt] = cfg[opt]
        material = MaterialParams(**mat_kwargs)
        return straight_model(
            int(cfg["node_count"]), float(cfg["length"]), material,
            base=cfg.get("base", (0.0, 0.0, 0.0)),
            axis=cfg.get("axis", (1.0, 0.0, 0.0)))

    def build_mesh(self, model):
        if not self.mesh_config:
            return None
        if "path" in self.mesh_config:
            path = Path(self.mesh_config["path"])
            if not path.is_absolute():
                path = self.base_dir / path
            mesh = load_mesh(path)
        elif "tube" in self.mesh_config:
            cfg = self.mesh_config["tube"]
            mesh = make_tube(cfg["path_points"], cfg["radii"],
                             segments=int(cfg.get("segments", 16)))
        else:
            raise ScenarioError("mesh config needs 'path' or 'tube'")
        orient_normals(mesh, model.rest_positions)
        return mesh

    def build_engine(self):
        model = self.build_model()
        mesh = self.build_mesh(model)
        specs = [FixedNodeSpec(int(item["node"]),
                               tuple(item.get("dofs", (0, 1, 2, 3, 4, 5))))
                 for item in self.fixed_nodes]
        cables = default_cables(radius=float(self.robot_config.get("cable_radius", 0.004)))
        return Engine(model, mesh=mesh, cables=cables, fixed_specs=specs,
                      settings=self.solver, margin=self.margin,
                      uniform_load=self.uniform_load)

    def inputs_at(self, t):
        tensions = np.array([
            max(self.tensions[j].value(t), 0.0) if j in self.tensions else 0.0
            for j in (1, 2, 3)])
        rate = self.insertion_rate.value(t)
        return StepInputs(tensions=tensions,
                          insertion_increment=rate * self.frame_period)

    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def apply_overrides(raw, overrides):
    """Apply dotted-path key=value overrides; unknown keys are hard errors."""
    for text in overrides:
        if "=" not in text:
            raise ScenarioError(f"override {text!r} is not of the form key=value")
        key, _, value = text.partition("=")
        path = key.strip().split(".")
        _check_schema_path(path)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"override path {key!r} crosses a non-object")
        node[path[-1]] = parsed
    return raw


def _check_schema_path(path):
    node = _SCHEMA
    for i, part in enumerate(path):
        if not isinstance(node, dict) or part not in node:
            known = sorted(node) if isinstance(node, dict) else []
            raise ScenarioError(
                f"unknown scenario key {'.'.join(path)!r} at {part!r}"
                + (f"; known keys here: {known}" if known else ""))
        node = node[part]


def parse_scenario(raw, base_dir=Path(".")):
    try:
        robot = dict(raw["robot"])
        frame_period = float(raw.get("frame_period", 1.0 / 30.0))
        duration = float(raw.get("duration", 0.0))
    except KeyError as exc:
        raise ScenarioError(f"scenario missing required key: {exc}") from exc
    if frame_period <= 0.0:
        raise ScenarioError("frame_period must be positive")
    if duration < 0.0:
        raise ScenarioError("duration must be >= 0")

    solver_cfg = dict(raw.get("solver", {}))
    try:
        solver = SolverSettings(**solver_cfg)
    except TypeError as exc:
        raise ScenarioError(f"bad solver settings: {exc}") from exc

    tensions = {}
    for key, samples in dict(raw.get("tensions", {})).items():
        j = int(key)
        if j not in (1, 2, 3):
            raise ScenarioError(f"cable index {j} out of range 1..3")
        tensions[j] = Timeline(samples)

    insertion = Timeline(raw.get("insertion_rate", [[0.0, 0.0]]))
    fixed = list(raw.get("fixed_nodes", [{"node": 0}]))
    uniform = raw.get("uniform_load")
    return Scenario(
        name=str(raw.get("name", "scenario")),
        robot_config=robot,
        mesh_config=dict(raw.get("mesh") or {}),
        margin=float(raw.get("margin", 1e-4)),
        fixed_nodes=fixed,
        insertion_rate=insertion,
        tensions=tensions,
        uniform_load=None if uniform is None else np.asarray(uniform, dtype=float),
        solver=solver,
        frame_period=frame_period,
        duration=duration,
        raw=raw,
        base_dir=Path(base_dir),
    )


def load_scenario(path, overrides=()):
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
    raw = apply_overrides(raw, overrides)
    return parse_scenario(raw, base_dir=path.parent)


def write_trajectory_csv(path, scenario, records, overrides=(), threads=1,
                         include_timings=False):
    """Trajectory CSV: one row per frame plus a reproducibility header.

    Timing columns are zeroed by default so two identical runs produce
    byte-identical files; pass include_timings=True for wall-clock numbers.
    """
    from . import __version__

    node_count = int(scenario.robot_config["node_count"])
    cols = ["t"]
    for n in range(node_count):
        cols += [f"node{n}_x", f"node{n}_y", f"node{n}_z"]
    cols += ["n_c", "tip_x", "tip_y", "tip_z", "solve_ms", "iters"]

    lines = [
        f"# cablefem {__version__} trajectory",
        f"# scenario: {scenario.name}",
        f"# config_hash: {scenario.config_hash()}",
        f"# threads: {threads}",
        f"# solver: {scenario.solver}",
        f"# overrides: {' '.join(overrides) if overrides else '(none)'}",
        f"# timings: {'wall-clock' if include_timings else 'zeroed for reproducibility'}",
        ",".join(cols),
    ]
    for rec in records:
        pos = rec.coords.reshape(-1, 6)[:, :3].ravel()
        solve_ms = rec.solve_ms if include_timings else 0.0
        row = [repr(float(rec.t))]
        row += [repr(float(v)) for v in pos]
        row += [str(rec.n_c)]
        row += [repr(float(v)) for v in rec.tip_position]
        row += [repr(float(solve_ms)), str(rec.iterations)]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")

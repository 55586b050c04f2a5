"""Per-frame stepping pipeline and scenario execution.

Each frame performs exactly one linearization (no inner Newton loop):
update the corotational tangent and internal force at the previous state,
detect contacts, assemble constraint blocks and the actuation wrench, solve
the QP/complementarity problem with the configured backend, cap the step
norm, then advance translations additively and rotations multiplicatively.

A static validation mode repeats frames under constant inputs until the
increment norm vanishes, which is how the analytic beam benchmarks are
checked.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .beam import (
    Configuration,
    assemble_tangent_stiffness,
    element_frame,
    internal_force,
)
from .constraints import actuation_force, assemble_fixed_constraints
from .contact import assemble_contact_constraints, detect_contacts, empty_contact_constraints
from .errors import EngineError, NonConvergenceError
from .mesh import AabbTree
from .so3 import compose_rotvec
from .solver import (
    SolverSettings,
    StepProblem,
    check_complementarity,
    contact_forces,
    limit_step,
    solve_step,
)


@dataclass
class StepInputs:
    """Per-frame control inputs."""

    tensions: np.ndarray = None  # N per cable; None = no cables pulled
    insertion_increment: float = 0.0  # m along the rest axis at the base node
    applied_force: np.ndarray = None  # extra nodal load (6M,), e.g. test tip loads

    def scaled(self, factor):
        return replace(self, insertion_increment=self.insertion_increment * factor)


@dataclass
class FrameRecord:
    """Everything measured in one frame."""

    t: float
    frame_index: int
    coords: np.ndarray  # x_t after the step
    n_c: int
    contact_force_vectors: np.ndarray  # (n_c, 3) world forces on the robot
    contact_points: list
    tip_position: np.ndarray
    dx_norm: float
    iterations: int
    converged: bool
    retried: bool
    actuation_scale: float
    max_penetration: float
    complementarity_ok: bool
    complementarity_worst: float
    residual_norm: float  # quasi-static equilibrium residual after the step
    timings_ms: dict
    factorization_count: int = 1

    @property
    def solve_ms(self):
        return self.timings_ms["solve"]

    @property
    def total_ms(self):
        return self.timings_ms["total"]


class Engine:
    """Single-writer stepping loop over one robot/mesh/constraint setup."""

    def __init__(self, model, mesh=None, cables=(), fixed_specs=(),
                 settings=None, margin=1e-4, uniform_load=None):
        self.model = model
        self.mesh = mesh
        self.cables = list(cables)
        self.fixed_specs = list(fixed_specs)
        self.settings = settings if settings is not None else SolverSettings()
        self.margin = float(margin)
        self.uniform_load = None if uniform_load is None else np.asarray(uniform_load, dtype=float)
        self._tree = AabbTree(mesh) if mesh is not None else None
        rest = model.rest_positions
        axis = rest[1] - rest[0]
        self.insertion_axis = axis / np.linalg.norm(axis)
        # cross-frame solver state: multiplier warm starts + rho scaling
        self._warm_multipliers = {}
        self._warm_fixed = None
        self._rho = self.settings.rho

    def initial_configuration(self):
        return Configuration(self.model.rest_configuration.copy(), timestep_index=0)

    def _external_force(self, x, inputs):
        n = self.model.dof_count
        f_a = np.zeros(n)
        if self.cables and inputs.tensions is not None:
            t_m = element_frame(x, self.model, self.model.element_count).rotation
            f_a += actuation_force(self.cables, inputs.tensions, t_m,
                                   self.model.node_count)
        if inputs.applied_force is not None:
            f_a += inputs.applied_force
        if self.uniform_load is not None:
            load = np.zeros(n)
            load.reshape(-1, 6)[:, :3] = self.uniform_load
            f_a += load
        return f_a

    def _fixed_system(self, inputs, scale=1.0):
        a_fn, b_fn = assemble_fixed_constraints(self.fixed_specs,
                                                self.model.node_count)
        if inputs.insertion_increment:
            inc = self.insertion_axis * inputs.insertion_increment
            csr = a_fn.tocsr()
            for row in range(csr.shape[0]):
                col = csr.indices[csr.indptr[row]]
                node, dof = divmod(int(col), 6)
                if node == 0 and dof < 3:
                    b_fn[row] += inc[dof]
        return a_fn, b_fn * scale

    def step(self, x, inputs, t=0.0, frame_index=0):
        """Advance one frame; returns (new configuration, FrameRecord)."""
        timings = {}
        t_total = time.perf_counter()

        t0 = time.perf_counter()
        stiffness = assemble_tangent_stiffness(x, self.model)
        f_int = internal_force(x, self.model)
        timings["stiffness"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        if self.mesh is not None:
            contacts = detect_contacts(
                x, self.model, self.mesh, self.margin,
                query_radius=self.margin + self.settings.beta0, tree=self._tree)
        else:
            contacts = []
        timings["detection"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        contact_sys = assemble_contact_constraints(contacts, x, self.model) \
            if contacts else empty_contact_constraints(self.model.dof_count)
        a_fn, b_fn = self._fixed_system(inputs)
        f_a = self._external_force(x, inputs)
        problem = StepProblem(k_matrix=stiffness.matrix, f_int=f_int, f_a=f_a,
                              contact=contact_sys, a_fn=a_fn, b_fn=b_fn)
        timings["assembly"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        y0 = self._warm_start_vector(contacts)
        y_fn0 = self._warm_fixed
        retried = False
        try:
            result = solve_step(problem, self.settings, y0=y0, y_fn0=y_fn0,
                                rho=self._rho)
        except NonConvergenceError as first:
            retried = True
            # retry with halved prescribed increments; adopt the failed
            # attempt's rho estimate so the rescaled solve can converge
            if self.settings.adaptive_rho and first.result is not None \
                    and first.result.rho_estimate is not None:
                self._rho = first.result.rho_estimate
            a_fn2, b_fn2 = self._fixed_system(inputs.scaled(0.5))
            problem = StepProblem(k_matrix=stiffness.matrix, f_int=f_int, f_a=f_a,
                                  contact=contact_sys, a_fn=a_fn2, b_fn=b_fn2)
            try:
                result = solve_step(problem, self.settings, y0=y0, y_fn0=y_fn0,
                                    rho=self._rho)
            except NonConvergenceError as exc:
                raise EngineError(
                    f"frame {frame_index}: solver failed twice "
                    f"(residuals {exc.result.primal_residual:.2e}/"
                    f"{exc.result.dual_residual:.2e})") from exc
        timings["solve"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        report = check_complementarity(problem, result, tol=1e-6)
        limited, actuation_scale = limit_step(result, f_a, f_int,
                                              self.settings.beta0)
        x_new = advance_configuration(x, limited.dx)
        self._update_solver_state(contacts, result)

        per_contact, f_c = contact_forces(limited, contact_sys)
        residual = np.linalg.norm(
            internal_force(x_new, self.model)
            + contact_sys.a_c.T @ limited.y_c
            + a_fn.T @ limited.y_fn
            - f_a)
        # penetration bookkeeping without a second detection pass: the frame's
        # start state was fully scanned (gaps above), and the end state is
        # checked against every active contact plane; a surface entered fresh
        # during this frame is caught by the next frame's scan
        pen_start = max(0.0, -min((c.gap for c in contacts), default=0.0))
        pen_planes = 0.0
        if contact_sys.count:
            end_gaps = contact_sys.b_c - contact_sys.a_c @ limited.dx
            pen_planes = max(0.0, float(-end_gaps.min()))
        max_pen = max(pen_start, pen_planes)
        timings["update"] = (time.perf_counter() - t0) * 1e3
        timings["total"] = (time.perf_counter() - t_total) * 1e3

        record = FrameRecord(
            t=t,
            frame_index=frame_index,
            coords=x_new.coords.copy(),
            n_c=len(contacts),
            contact_force_vectors=per_contact,
            contact_points=contacts,
            tip_position=x_new.positions()[-1].copy(),
            dx_norm=float(np.linalg.norm(limited.dx)),
            iterations=result.iterations,
            converged=result.converged,
            retried=retried,
            actuation_scale=actuation_scale,
            max_penetration=max_pen,
            complementarity_ok=report.ok,
            complementarity_worst=max(report.gap_violation,
                                      report.multiplier_violation,
                                      report.product_violation,
                                      report.equality_violation),
            residual_norm=float(residual),
            timings_ms=timings,
            factorization_count=result.factorization_count,
        )
        return x_new, record

    def _warm_start_vector(self, contacts):
        if not contacts or self.settings.backend == "active_set_oracle":
            return None
        return np.array([self._warm_multipliers.get(contact_node(c), 0.0)
                         for c in contacts])

    def _update_solver_state(self, contacts, result):
        self._warm_multipliers = {
            contact_node(c): float(y) for c, y in zip(contacts, result.y_c)}
        self._warm_fixed = result.y_fn.copy()
        est = result.rho_estimate
        if (self.settings.adaptive_rho and est is not None
                and (est > 5.0 * self._rho or est < self._rho / 5.0)):
            self._rho = est

    def _max_penetration(self, x):
        if self.mesh is None:
            return 0.0
        post = detect_contacts(x, self.model, self.mesh, self.margin,
                               query_radius=self.margin + self.settings.beta0,
                               tree=self._tree)
        if not post:
            return 0.0
        return max(0.0, -min(c.gap for c in post))

    def run_static(self, inputs, x0=None, tol=1e-9, max_frames=5000):
        """Iterate frames under constant inputs until |dx| <= tol.

        Returns (configuration, records, equilibrium residual norm). The
        residual uses the last frame's multipliers against the applied load,
        i.e. the quasi-static force balance.
        """
        x = self.initial_configuration() if x0 is None else x0
        records = []
        for k in range(max_frames):
            x, rec = self.step(x, inputs, t=0.0, frame_index=k)
            records.append(rec)
            if rec.dx_norm <= tol:
                return x, records, rec.residual_norm
        raise EngineError(
            f"static mode did not reach |dx| <= {tol} in {max_frames} frames "
            f"(last |dx| = {records[-1].dx_norm:.3e})")


def contact_node(contact):
    """0-based node index a node-based contact point belongs to."""
    return contact.element_index - 1 if contact.xi == 0.0 else contact.element_index


def advance_configuration(x, dx):
    """x_t = x_{t-1} (+) dx: translations add, rotations compose multiplicatively."""
    coords = x.coords.reshape(-1, 6).copy()
    delta = np.asarray(dx, dtype=float).reshape(-1, 6)
    coords[:, :3] += delta[:, :3]
    coords[:, 3:] = compose_rotvec(delta[:, 3:], coords[:, 3:])
    return Configuration(coords.ravel(), timestep_index=x.timestep_index + 1)


def run_scenario(scenario):
    """Execute a scenario: one initial record plus one per frame period.

    Returns the list of FrameRecords. Deterministic for fixed settings: the
    whole pipeline is sequential with fixed-order reductions.
    """
    engine = scenario.build_engine()
    x = engine.initial_configuration()
    records = [_initial_record(engine, x)]
    n_frames = int(round(scenario.duration / scenario.frame_period)) \
        if scenario.duration > 0 else 0
    for k in range(1, n_frames + 1):
        t = k * scenario.frame_period
        inputs = scenario.inputs_at(t)
        x, rec = engine.step(x, inputs, t=t, frame_index=k)
        records.append(rec)
    return records


def _initial_record(engine, x):
    contacts = []
    if engine.mesh is not None:
        contacts = detect_contacts(
            x, engine.model, engine.mesh, engine.margin,
            query_radius=engine.margin + engine.settings.beta0,
            tree=engine._tree)
    return FrameRecord(
        t=0.0, frame_index=0, coords=x.coords.copy(), n_c=len(contacts),
        contact_force_vectors=np.zeros((len(contacts), 3)),
        contact_points=contacts,
        tip_position=x.positions()[-1].copy(),
        dx_norm=0.0, iterations=0, converged=True, retried=False,
        actuation_scale=1.0,
        max_penetration=max(0.0, -min((c.gap for c in contacts), default=0.0)),
        complementarity_ok=True, complementarity_worst=0.0,
        residual_norm=0.0,
        timings_ms={"stiffness": 0.0, "detection": 0.0, "assembly": 0.0,
                    "solve": 0.0, "update": 0.0, "total": 0.0},
    )

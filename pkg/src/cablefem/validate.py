"""Release-gate validation suites behind the `validate` CLI subcommand.

Each suite returns (name, tolerance, measured, passed); `run_validation`
prints one line per suite and reports overall success. Suites cover the
analytic beam benchmark, tangent-vs-force consistency, cross-solver
agreement, the Signorini/penetration contract on a contact scene, tangent
symmetry (with a fault-injection hook for testing the gate itself), and
step-limit invariance of converged statics.
"""

import numpy as np

from .beam import (
    Configuration,
    MaterialParams,
    assemble_tangent_stiffness,
    internal_force,
    straight_model,
)
from .constraints import FixedNodeSpec
from .engine import Engine, StepInputs
from .mesh import make_rectangle
from .scenario import MATERIAL_PRESETS
from .solver import (
    SolverSettings,
    build_qp,
    solve_active_set,
    solve_pgs,
    solve_qp,
)

CANTILEVER_LENGTH = 0.07
TIP_LOAD = 0.01


def _cantilever_engine(beta0=0.005, nodes=21):
    material = MaterialParams(**MATERIAL_PRESETS["a"])
    model = straight_model(nodes, CANTILEVER_LENGTH, material)
    return Engine(model, fixed_specs=[FixedNodeSpec(0)],
                  settings=SolverSettings(beta0=beta0))


def _tip_load_vector(model, load):
    f = np.zeros(model.dof_count)
    f[-4] = load  # +z translation of the last node
    return f


def suite_analytic_beam():
    """Static tip deflection against FL^3/(3EI), tolerance 2%."""
    engine = _cantilever_engine()
    f = _tip_load_vector(engine.model, TIP_LOAD)
    x, _, _ = engine.run_static(StepInputs(applied_force=f), tol=1e-9)
    material = engine.model.material
    analytic = TIP_LOAD * CANTILEVER_LENGTH**3 / (
        3.0 * material.young_modulus * material.bending_inertia)
    measured = abs(x.positions()[-1][2] - analytic) / analytic
    return ("analytic-beam", 0.02, measured, measured <= 0.02)


def suite_gradient_consistency(seed=0, configs=20, fault=None):
    """Tangent vs finite differences of the internal force, tolerance 1e-3."""
    material = MaterialParams(**MATERIAL_PRESETS["a"])
    model = straight_model(8, 7 * 0.01, material)
    rng = np.random.default_rng(seed)
    l0 = model.element_rest_length
    eps = 1e-6 * l0
    worst = 0.0
    for _ in range(configs):
        # small-deformation: noise scales with the element length so the
        # neglected frame-variation terms stay higher order
        coords = model.rest_configuration.copy().reshape(-1, 6)
        coords[:, :3] += 1e-4 * l0 * rng.standard_normal(coords[:, :3].shape)
        coords[:, 3:] += 1e-4 * rng.standard_normal(coords[:, 3:].shape)
        coords = coords.ravel()
        x = Configuration(coords)
        k = assemble_tangent_stiffness(x, model).matrix
        if fault is not None:
            k = fault(k)
        d = rng.standard_normal(model.dof_count)
        d /= np.linalg.norm(d)
        fd = (internal_force(Configuration(coords + eps * d), model)
              - internal_force(x, model)) / eps
        kd = k @ d
        worst = max(worst, float(np.linalg.norm(fd - kd) / np.linalg.norm(kd)))
    return ("gradient-consistency", 1e-3, worst, worst <= 1e-3)


def _random_step_problem(rng):
    import scipy.sparse as sp

    from .contact import ContactConstraints, empty_contact_constraints
    from .solver import StepProblem

    n = int(rng.integers(6, 31))
    q = rng.standard_normal((n, n))
    h = q @ q.T + n * np.eye(n)
    g = rng.standard_normal(n)
    n_c = int(rng.integers(0, 6))
    if n_c:
        contact = ContactConstraints(
            a_c=sp.csr_matrix(rng.standard_normal((n_c, n))),
            b_c=rng.standard_normal(n_c) * 0.1, contacts=[])
    else:
        contact = empty_contact_constraints(n)
    n_f = int(rng.integers(0, 3))
    if n_f:
        a_fn = np.zeros((n_f, n))
        a_fn[np.arange(n_f), rng.choice(n, n_f, replace=False)] = 1.0
        b_fn = rng.standard_normal(n_f) * 0.05
    else:
        a_fn, b_fn = np.zeros((0, n)), np.zeros(0)
    return StepProblem(k_matrix=sp.csr_matrix(h), f_int=g, f_a=np.zeros(n),
                       contact=contact, a_fn=sp.csr_matrix(a_fn), b_fn=b_fn)


def suite_oracle_equivalence(seed=0, instances=50):
    rng = np.random.default_rng(seed)
    settings = SolverSettings()
    worst = 0.0
    for _ in range(instances):
        problem = _random_step_problem(rng)
        qp = build_qp(problem)
        oracle = solve_active_set(qp)
        r_qp = solve_qp(qp, settings)
        r_pgs = solve_pgs(problem, settings)
        for r in (r_qp, r_pgs):
            worst = max(worst, float(np.abs(r.dx - oracle.dx).max()))
            if qp.n_contacts:
                worst = max(worst, float(np.abs(r.y_c - oracle.y_c).max()) * 0.1)
    return ("oracle-equivalence", 1e-5, worst, worst <= 1e-5)


def _contact_scene_records(frames=30):
    material = MaterialParams(**MATERIAL_PRESETS["a"])
    model = straight_model(21, CANTILEVER_LENGTH, material)
    floor = make_rectangle((CANTILEVER_LENGTH / 2, 0.0, -5e-5), 1.0, 1.0)
    engine = Engine(model, mesh=floor, fixed_specs=[FixedNodeSpec(0)],
                    settings=SolverSettings(), margin=1e-4,
                    uniform_load=[0.0, 0.0, -0.005])
    x = engine.initial_configuration()
    records = []
    for k in range(frames):
        x, rec = engine.step(x, StepInputs(), frame_index=k)
        records.append(rec)
    return records


def suite_complementarity(records=None):
    """Signorini violations over a contact scene, tolerance 1e-6 (scaled)."""
    records = _contact_scene_records() if records is None else records
    worst = max(r.complementarity_worst for r in records)
    return ("signorini-complementarity", 1e-6, worst, worst <= 1e-6)


def suite_penetration(records=None):
    """Maximum penetration depth over a contact scene, tolerance 1e-4 m."""
    records = _contact_scene_records() if records is None else records
    worst = max(r.max_penetration for r in records)
    return ("max-penetration", 1e-4, worst, worst <= 1e-4)


def suite_symmetry(fault=None):
    """Relative asymmetry of the assembled tangent, tolerance 1e-10."""
    material = MaterialParams(**MATERIAL_PRESETS["a"])
    model = straight_model(9, 0.08, material)
    rng = np.random.default_rng(3)
    coords = model.rest_configuration.copy()
    coords += 1e-4 * rng.standard_normal(model.dof_count)
    k = assemble_tangent_stiffness(Configuration(coords), model).matrix
    if fault is not None:
        k = fault(k)
    diff = k - k.T
    num = np.sqrt(diff.multiply(diff).sum())
    den = np.sqrt(k.multiply(k).sum())
    measured = float(num / den)
    return ("tangent-symmetry", 1e-10, measured, measured <= 1e-10)


def suite_step_limit_equivalence():
    """Converged statics identical for beta0 in {0.002, 0.02} within 1e-6 m."""
    tips = []
    for beta0 in (0.002, 0.02):
        engine = _cantilever_engine(beta0=beta0, nodes=11)
        f = _tip_load_vector(engine.model, 0.05)
        x, _, _ = engine.run_static(StepInputs(applied_force=f), tol=1e-10)
        tips.append(x.positions()[-1])
    measured = float(np.linalg.norm(tips[0] - tips[1]))
    return ("step-limit-equivalence", 1e-6, measured, measured <= 1e-6)


def run_validation(seed=0, fault_asymmetry=None, stream=None):
    """Run all suites; returns (all_passed, rows). Prints a pass/fail table."""
    import sys

    out = stream if stream is not None else sys.stdout
    fault = None
    if fault_asymmetry:
        def fault(k):
            k = k.tolil(copy=True)
            k[0, 1] += fault_asymmetry
            return k.tocsr()

    contact_records = _contact_scene_records()
    rows = [
        suite_analytic_beam(),
        suite_gradient_consistency(seed=seed),
        suite_oracle_equivalence(seed=seed),
        suite_complementarity(contact_records),
        suite_penetration(contact_records),
        suite_symmetry(fault=fault),
        suite_step_limit_equivalence(),
    ]
    print(f"{'suite':32s} {'tolerance':>12s} {'measured':>14s} {'result':>8s}",
          file=out)
    for name, tol, measured, passed in rows:
        status = "PASS" if passed else "FAIL"
        print(f"{name:32s} {tol:12.2e} {measured:14.3e} {status:>8s}", file=out)
    all_passed = all(r[3] for r in rows)
    print(f"overall: {'PASS' if all_passed else 'FAIL'}", file=out)
    return all_passed, rows

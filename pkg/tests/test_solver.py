"""QP/PGS/active-set backends, complementarity checks, step limiting."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from cablefem.contact import ContactConstraints, ContactPoint, empty_contact_constraints
from cablefem.errors import DomainError, InfeasibleError, NonConvergenceError
from cablefem.solver import (
    SolveResult,
    SolverSettings,
    StepProblem,
    build_qp,
    check_complementarity,
    contact_forces,
    dump_problem,
    limit_step,
    load_problem,
    solve_active_set,
    solve_pgs,
    solve_qp,
    solve_step,
)


def make_problem(h, g, a_c=None, b_c=None, a_fn=None, b_fn=None, f_a=None):
    n = len(g)
    if a_c is not None:
        cc = ContactConstraints(a_c=sp.csr_matrix(np.atleast_2d(a_c)),
                                b_c=np.atleast_1d(np.asarray(b_c, dtype=float)),
                                contacts=[])
    else:
        cc = empty_contact_constraints(n)
    afn = sp.csr_matrix(np.atleast_2d(a_fn)) if a_fn is not None else sp.csr_matrix((0, n))
    bfn = np.atleast_1d(np.asarray(b_fn, dtype=float)) if b_fn is not None else np.zeros(0)
    return StepProblem(
        k_matrix=sp.csr_matrix(np.atleast_2d(h)),
        f_int=np.asarray(g, dtype=float),
        f_a=np.zeros(n) if f_a is None else np.asarray(f_a, dtype=float),
        contact=cc, a_fn=afn, b_fn=bfn)


def random_instance(rng, n_c=None, n_f=None, selector_eq=None):
    n = int(rng.integers(6, 31))
    q = rng.standard_normal((n, n))
    h = q @ q.T + n * np.eye(n)
    g = rng.standard_normal(n)
    n_c = int(rng.integers(0, 6)) if n_c is None else n_c
    n_f = int(rng.integers(0, 3)) if n_f is None else n_f
    a_c = rng.standard_normal((n_c, n)) if n_c else None
    b_c = rng.standard_normal(n_c) * 0.1 if n_c else None
    a_fn = b_fn = None
    if n_f:
        use_selector = rng.random() < 0.5 if selector_eq is None else selector_eq
        if use_selector:
            a_fn = np.zeros((n_f, n))
            a_fn[np.arange(n_f), rng.choice(n, n_f, replace=False)] = 1.0
        else:
            a_fn = rng.standard_normal((n_f, n))
        b_fn = rng.standard_normal(n_f) * 0.05
    return make_problem(h, g, a_c=a_c, b_c=b_c, a_fn=a_fn, b_fn=b_fn)


DEFAULTS = SolverSettings()


class TestBuildQp:
    def test_rest_state_gives_zero_gradient(self):
        p = make_problem(np.eye(4) * 3.0, np.zeros(4))
        qp = build_qp(p)
        assert np.array_equal(qp.g, np.zeros(4))
        assert solve_qp(qp, DEFAULTS).dx == pytest.approx(np.zeros(4))

    def test_one_dof_objective(self):
        p = make_problem([[2.0]], [0.0], f_a=[1.0])
        qp = build_qp(p)
        x = np.array([0.7])
        # objective x^2 - x
        assert 0.5 * x @ (qp.h @ x) + qp.g @ x == pytest.approx(0.7**2 - 0.7)

    def test_empty_blocks_reduce_to_linear_solve(self):
        p = make_problem(np.diag([2.0, 4.0]), [1.0, -2.0])
        qp = build_qp(p)
        assert qp.n_contacts == 0 and qp.n_fixed == 0
        r = solve_qp(qp, DEFAULTS)
        assert r.iterations == 0
        assert np.allclose(r.dx, [-0.5, 0.5], atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DomainError):
            make_problem(np.eye(3), np.zeros(2))


class TestHandDerivedInstances:
    """1-DOF problems with KKT points worked out by hand."""

    def test_active_constraint_qp(self):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[0.2])
        r = solve_qp(build_qp(p), DEFAULTS)
        assert r.dx[0] == pytest.approx(0.2, abs=1e-8)
        assert r.y_c[0] == pytest.approx(0.6, abs=1e-8)  # 2x - 1 + y = 0

    def test_inactive_constraint_qp(self):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[10.0])
        r = solve_qp(build_qp(p), DEFAULTS)
        assert r.dx[0] == pytest.approx(0.5, abs=1e-8)
        assert r.y_c[0] == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize("b,x_exp,y_exp", [(0.2, 0.2, 0.6), (10.0, 0.5, 0.0)])
    def test_pgs_matches_hand_solution(self, b, x_exp, y_exp):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[b])
        r = solve_pgs(p, DEFAULTS)
        assert r.dx[0] == pytest.approx(x_exp, abs=1e-6)
        assert r.y_c[0] == pytest.approx(y_exp, abs=1e-6)

    def test_oracle_matches_hand_solution(self):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[0.2])
        r = solve_active_set(build_qp(p))
        assert r.dx[0] == pytest.approx(0.2, abs=1e-12)
        assert r.y_c[0] == pytest.approx(0.6, abs=1e-12)

    def test_equality_only_direct(self):
        p = make_problem([[2.0]], [-1.0], a_fn=[[1.0]], b_fn=[0.1])
        r = solve_qp(build_qp(p), DEFAULTS)
        assert r.iterations == 0
        assert r.dx[0] == pytest.approx(0.1, abs=1e-12)
        assert r.y_fn[0] == pytest.approx(0.8, abs=1e-9)  # 2x - 1 + y = 0


class TestPgsBaseline:
    def test_zero_contacts_single_linear_solve(self):
        rng = np.random.default_rng(3)
        q = rng.standard_normal((8, 8))
        h = q @ q.T + 8 * np.eye(8)
        g = rng.standard_normal(8)
        p = make_problem(h, g)
        r = solve_pgs(p, DEFAULTS)
        assert r.iterations == 0
        assert np.allclose(r.dx, np.linalg.solve(h, -g), atol=1e-10)

    def test_selector_equality_elimination(self):
        p = make_problem(np.diag([3.0, 5.0]), [1.0, 1.0],
                         a_fn=[[1.0, 0.0]], b_fn=[0.25])
        r = solve_pgs(p, DEFAULTS)
        assert r.dx[0] == pytest.approx(0.25, abs=1e-12)
        assert r.dx[1] == pytest.approx(-0.2, abs=1e-12)
        # reaction balances 3*0.25 + 1
        assert r.y_fn[0] == pytest.approx(-(3.0 * 0.25 + 1.0), abs=1e-9)

    def test_agrees_with_qp_on_random_instances(self):
        rng = np.random.default_rng(77)
        for _ in range(40):
            p = random_instance(rng)
            rq = solve_qp(build_qp(p), DEFAULTS)
            rp = solve_pgs(p, DEFAULTS)
            assert np.abs(rq.dx - rp.dx).max() <= 1e-5

    def test_nonconvergence_carries_residual(self):
        # coupled contacts cannot be finished in a single sweep
        p = make_problem(np.diag([2.0, 2.0]), [-1.0, -1.0],
                         a_c=[[1.0, 0.9], [0.9, 1.0]], b_c=[0.01, 0.01])
        tight = SolverSettings(max_iterations=1, pgs_min_sweep_factor=1, pgs_tol=1e-14)
        with pytest.raises(NonConvergenceError) as err:
            solve_pgs(p, tight)
        assert err.value.result is not None
        assert np.isfinite(err.value.result.primal_residual)


class TestCrossBackendEquivalence:
    def test_random_instances_vs_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            p = random_instance(rng)
            qp = build_qp(p)
            ra = solve_active_set(qp)
            rq = solve_qp(qp, DEFAULTS)
            rp = solve_pgs(p, DEFAULTS)
            for r in (rq, rp):
                assert np.abs(r.dx - ra.dx).max() <= 1e-5
                if qp.n_contacts:
                    assert np.abs(r.y_c - ra.y_c).max() <= 1e-4
                if qp.n_fixed:
                    assert np.abs(r.y_fn - ra.y_fn).max() <= 1e-4

    def test_ten_dof_three_contacts_vs_oracle(self):
        rng = np.random.default_rng(19)
        q = rng.standard_normal((10, 10))
        h = q @ q.T + 10 * np.eye(10)
        p = make_problem(h, rng.standard_normal(10),
                         a_c=rng.standard_normal((3, 10)),
                         b_c=rng.standard_normal(3) * 0.1)
        qp = build_qp(p)
        ra = solve_active_set(qp)
        rq = solve_qp(qp, DEFAULTS)
        assert np.abs(rq.dx - ra.dx).max() <= 1e-6
        assert np.abs(rq.y_c - ra.y_c).max() <= 1e-6


class TestSolverContracts:
    def test_single_factorization_regardless_of_iterations(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            p = random_instance(rng, n_c=4)
            r = solve_qp(build_qp(p), DEFAULTS)
            assert r.factorization_count == 1

    def test_multipliers_nonnegative(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            p = random_instance(rng)
            r = solve_qp(build_qp(p), DEFAULTS)
            if r.y_c.size:
                assert r.y_c.min() >= -1e-8

    def test_energy_decrease_unconstrained(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            p = random_instance(rng, n_c=0, n_f=0)
            qp = build_qp(p)
            r = solve_qp(qp, DEFAULTS)
            assert r.objective(qp) <= 0.0 + 1e-12

    def test_infeasible_raises_with_certificate(self):
        p = make_problem([[2.0]], [0.0], a_c=[[1.0]], b_c=[0.5],
                         a_fn=[[1.0]], b_fn=[1.0])
        with pytest.raises(InfeasibleError) as err:
            solve_qp(build_qp(p), DEFAULTS)
        assert err.value.certificate is not None

    def test_nonconvergence_error_carries_residuals(self):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[0.2])
        with pytest.raises(NonConvergenceError) as err:
            solve_qp(build_qp(p), SolverSettings(max_iterations=2, polish=False))
        r = err.value.result
        assert r is not None and np.isfinite(r.primal_residual)

    def test_warm_start_contact_multipliers(self):
        rng = np.random.default_rng(37)
        p = random_instance(rng, n_c=4, n_f=0)
        qp = build_qp(p)
        cold = solve_qp(qp, DEFAULTS)
        warm = solve_qp(qp, DEFAULTS, y0=np.concatenate([np.zeros(0), cold.y_c]))
        assert np.abs(warm.dx - cold.dx).max() <= 1e-6
        assert warm.iterations <= cold.iterations

    def test_settings_validation(self):
        with pytest.raises(DomainError):
            SolverSettings(alpha=2.5)
        with pytest.raises(DomainError):
            SolverSettings(beta0=0.0)
        with pytest.raises(DomainError):
            SolverSettings(backend="lemke")

    def test_dispatch_by_backend(self):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[0.2])
        for backend in ("accelerated_qp", "pgs_baseline", "active_set_oracle"):
            r = solve_step(p, SolverSettings(backend=backend))
            assert r.dx[0] == pytest.approx(0.2, abs=1e-6)
            assert r.backend == backend


class TestComplementarityReport:
    def one_contact_result(self, y, dx):
        p = make_problem([[2.0]], [-1.0], a_c=[[1.0]], b_c=[0.2])
        r = SolveResult(dx=np.array([dx]), y_c=np.array([y]), y_fn=np.zeros(0),
                        primal_residual=0.0, dual_residual=0.0, iterations=1,
                        solve_time=0.0)
        return p, r

    def test_active_contact_zero_product(self):
        p, r = self.one_contact_result(y=0.6, dx=0.2)
        rep = check_complementarity(p, r, tol=1e-6)
        assert rep.ok and rep.product_violation <= 1e-12

    def test_inactive_contact_zero_product(self):
        p, r = self.one_contact_result(y=0.0, dx=0.1)
        rep = check_complementarity(p, r, tol=1e-6)
        assert rep.ok

    def test_negative_multiplier_flagged(self):
        p, r = self.one_contact_result(y=-0.5, dx=0.2)
        rep = check_complementarity(p, r, tol=1e-6)
        assert not rep.ok
        assert ("negative_multiplier", 0.5) in rep.flagged()

    def test_gap_violation_flagged(self):
        p, r = self.one_contact_result(y=0.0, dx=0.3)
        rep = check_complementarity(p, r, tol=1e-6)
        assert not rep.ok
        assert rep.gap_violation == pytest.approx(0.1)

    def test_solver_results_pass(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            p = random_instance(rng)
            r = solve_qp(build_qp(p), DEFAULTS)
            rep = check_complementarity(p, r, tol=1e-6)
            assert rep.ok, rep.flagged()


class TestLimitStep:
    def base_result(self, dx):
        return SolveResult(dx=np.asarray(dx, dtype=float),
                           y_c=np.array([2.0]), y_fn=np.array([-1.0]),
                           primal_residual=0.0, dual_residual=0.0,
                           iterations=5, solve_time=0.0)

    def test_halves_everything_above_limit(self):
        r = self.base_result([0.02, 0.0])
        limited, scale = limit_step(r, np.zeros(2), np.zeros(2), beta0=0.01)
        assert scale == pytest.approx(0.5)
        assert np.allclose(limited.dx, [0.01, 0.0])
        assert limited.y_c[0] == pytest.approx(1.0)
        assert limited.y_fn[0] == pytest.approx(-0.5)

    def test_below_threshold_unchanged(self):
        r = self.base_result([0.005, 0.0])
        limited, scale = limit_step(r, np.zeros(2), np.zeros(2), beta0=0.01)
        assert scale == 1.0
        assert limited is r

    def test_zero_step_guard(self):
        r = self.base_result([0.0, 0.0])
        limited, scale = limit_step(r, np.zeros(2), np.zeros(2), beta0=0.01)
        assert scale == 1.0 and limited is r


class TestContactForces:
    def contact_set(self, normals):
        pts = [ContactPoint(i, 1, 0.0, np.asarray(n, dtype=float), np.zeros(3), 0, 0.0)
               for i, n in enumerate(normals)]
        rows, cols, data = [], [], []
        for i, c in enumerate(pts):
            rows += [i] * 3
            cols += [0, 1, 2]
            data += c.normal.tolist()
        a_c = sp.csr_matrix((data, (rows, cols)), shape=(len(pts), 12))
        return ContactConstraints(a_c=a_c, b_c=np.zeros(len(pts)), contacts=pts)

    def test_single_contact_force(self):
        cc = self.contact_set([[0.0, 0.0, 1.0]])
        r = SolveResult(dx=np.zeros(12), y_c=np.array([2.0]), y_fn=np.zeros(0),
                        primal_residual=0, dual_residual=0, iterations=0, solve_time=0)
        per, f_c = contact_forces(r, cc)
        assert np.allclose(per[0], [0.0, 0.0, -2.0])
        assert np.allclose(f_c[:3], [0.0, 0.0, -2.0])

    def test_zero_multipliers_zero_force(self):
        cc = self.contact_set([[0.0, 0.0, 1.0]])
        r = SolveResult(dx=np.zeros(12), y_c=np.array([0.0]), y_fn=np.zeros(0),
                        primal_residual=0, dual_residual=0, iterations=0, solve_time=0)
        per, f_c = contact_forces(r, cc)
        assert np.allclose(per, 0.0) and np.allclose(f_c, 0.0)

    def test_opposing_normals_cancel(self):
        cc = self.contact_set([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        r = SolveResult(dx=np.zeros(12), y_c=np.array([3.0, 3.0]), y_fn=np.zeros(0),
                        primal_residual=0, dual_residual=0, iterations=0, solve_time=0)
        _, f_c = contact_forces(r, cc)
        assert np.allclose(f_c, 0.0)


class TestProblemDump:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(43)
        p = random_instance(rng, n_c=3, n_f=2)
        qp = build_qp(p)
        path = tmp_path / "dump.json"
        dump_problem(qp, DEFAULTS, path)
        qp2, settings2 = load_problem(path)
        assert np.array_equal(qp.h.toarray(), qp2.h.toarray())
        assert np.array_equal(qp.g, qp2.g)
        assert np.array_equal(qp.a_c.toarray(), qp2.a_c.toarray())
        assert np.array_equal(qp.b_c, qp2.b_c)
        assert np.array_equal(qp.a_fn.toarray(), qp2.a_fn.toarray())
        assert np.array_equal(qp.b_fn, qp2.b_fn)
        assert settings2 == DEFAULTS

    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                              width=64), min_size=2, max_size=6))
    @hyp_settings(max_examples=50, deadline=None)
    def test_float_payload_round_trips_bit_exact(self, values):
        import tempfile

        n = len(values)
        p = make_problem(np.eye(n), values)
        qp = build_qp(p)
        with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as fh:
            path = fh.name
        dump_problem(qp, DEFAULTS, path)
        qp2, _ = load_problem(path)
        assert np.array_equal(qp.g, qp2.g)

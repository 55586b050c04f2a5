"""Per-step QP / complementarity solvers and postprocessing.

The frame problem
    min 0.5 dx^T K dx + (F_int - F_a)^T dx
    s.t. A_c dx <= b_c   (contacts, multipliers y_c >= 0)
         A_fn dx = b_fn  (fixed nodes, multipliers y_fn free)
is solved by one of three backends:

* accelerated_qp: operator-splitting ADMM on the interval form
  l <= A dx <= u (equalities are zero-width intervals). The quasi-definite
  matrix [[H + sigma I, A^T], [A, -rho^-1 I]] is factored once per solve and
  reused by every iteration, so growing the constraint count barely moves the
  per-iteration cost. Ruiz equilibration and an active-set polish step give
  near-direct accuracy.
* pgs_baseline: projected Gauss-Seidel sweeps on the contact-space Delassus
  operator W = A K^-1 A^T after eliminating selector equality rows. Sweep
  cost scales with the square of the constraint count; this is the reference
  point the accelerated path is compared against.
* active_set_oracle: exhaustive active-set enumeration, exact on small
  instances; used as ground truth in tests.
"""

import json
import time
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .contact import ContactConstraints
from .errors import DomainError, InfeasibleError, NonConvergenceError

BACKENDS = ("accelerated_qp", "pgs_baseline", "active_set_oracle")

_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_EQUALITY_FACTOR = 1e3
_INF = 1e30


@dataclass
class SolverSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iterations: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    beta0: float = 0.005  # m, step limit
    backend: str = "accelerated_qp"
    check_interval: int = 25  # residual / adaptive-rho cadence
    adaptive_rho: bool = True
    scaling_iterations: int = 10
    polish: bool = True
    pgs_tol: float = 1e-6
    pgs_min_sweep_factor: int = 10

    def __post_init__(self):
        if self.eps_abs <= 0.0 or self.eps_rel <= 0.0 or self.pgs_tol <= 0.0:
            raise DomainError("tolerances must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise DomainError("alpha must lie in (0, 2)")
        if self.beta0 <= 0.0:
            raise DomainError("beta0 must be positive")
        if self.backend not in BACKENDS:
            raise DomainError(f"unknown backend {self.backend!r}; want one of {BACKENDS}")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")


@dataclass
class StepProblem:
    """All data of one frame's linearized contact problem."""

    k_matrix: sp.csr_matrix  # 6M x 6M tangent stiffness at x_{t-1}
    f_int: np.ndarray  # internal force at x_{t-1}
    f_a: np.ndarray  # actuation wrench
    contact: ContactConstraints
    a_fn: sp.csr_matrix
    b_fn: np.ndarray

    def __post_init__(self):
        n = self.k_matrix.shape[0]
        if self.k_matrix.shape != (n, n):
            raise DomainError("K must be square")
        for name, vec in (("f_int", self.f_int), ("f_a", self.f_a)):
            if np.shape(vec) != (n,):
                raise DomainError(f"{name} must have length {n}")
        if self.contact.a_c.shape[1] != n or self.a_fn.shape[1] != n:
            raise DomainError("constraint column count must match K")
        if self.contact.a_c.shape[0] != len(self.contact.b_c):
            raise DomainError("contact rows and b_c disagree")
        if self.a_fn.shape[0] != len(self.b_fn):
            raise DomainError("fixed rows and b_fn disagree")

    @property
    def dim(self):
        return self.k_matrix.shape[0]


@dataclass
class QPData:
    """Explicit QP form of a StepProblem (Hessian, gradient, constraint blocks)."""

    h: sp.csc_matrix
    g: np.ndarray
    a_c: sp.csr_matrix
    b_c: np.ndarray
    a_fn: sp.csr_matrix
    b_fn: np.ndarray

    @property
    def dim(self):
        return self.h.shape[0]

    @property
    def n_contacts(self):
        return self.a_c.shape[0]

    @property
    def n_fixed(self):
        return self.a_fn.shape[0]


@dataclass
class SolveResult:
    dx: np.ndarray
    y_c: np.ndarray
    y_fn: np.ndarray
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time: float
    converged: bool = True
    factorization_count: int = 1
    polish_applied: bool = False
    backend: str = "accelerated_qp"
    rho_estimate: float = None  # suggested rho for the next solve (adaptive rescaling)

    def objective(self, qp):
        return 0.5 * float(self.dx @ (qp.h @ self.dx)) + float(qp.g @ self.dx)


def build_qp(problem):
    """QP data per the per-step linearization: H = K, g = F_int - F_a."""
    return QPData(
        h=sp.csc_matrix(problem.k_matrix),
        g=np.asarray(problem.f_int, dtype=float) - np.asarray(problem.f_a, dtype=float),
        a_c=problem.contact.a_c.tocsr(),
        b_c=np.asarray(problem.contact.b_c, dtype=float),
        a_fn=problem.a_fn.tocsr(),
        b_fn=np.asarray(problem.b_fn, dtype=float),
    )


def _stacked_constraints(qp):
    """Interval form l <= A dx <= u with equality rows first."""
    a = sp.vstack([qp.a_fn, qp.a_c], format="csr") if qp.n_fixed + qp.n_contacts \
        else sp.csr_matrix((0, qp.dim))
    lower = np.concatenate([qp.b_fn, np.full(qp.n_contacts, -_INF)])
    upper = np.concatenate([qp.b_fn, qp.b_c])
    return a, lower, upper


def _norm_inf(v):
    return float(np.abs(v).max()) if np.size(v) else 0.0


def _ruiz_equilibrate(h, a, g, iterations):
    """Modified Ruiz scaling of [[H, A^T], [A, 0]] plus cost normalization.

    Operates in place on triplet data (one allocation up front) and returns
    scaled (h, a, g), the diagonal vectors d (primal), e (dual) and the cost
    factor c so that unscaling is x = d xbar, y = e ybar / c.
    """
    n = h.shape[0]
    m = a.shape[0]
    h_coo = sp.coo_matrix(h)
    a_coo = sp.coo_matrix(a)
    hr, hc, hd = h_coo.row, h_coo.col, h_coo.data.copy()
    ar, ac, ad = a_coo.row, a_coo.col, a_coo.data.copy()
    g = g.copy()
    d = np.ones(n)
    e = np.ones(m)
    c = 1.0
    col_h = np.empty(n)
    col_a = np.empty(m)
    for _ in range(iterations):
        col_h.fill(0.0)
        np.maximum.at(col_h, hc, np.abs(hd))
        if m:
            np.maximum.at(col_h, ac, np.abs(ad))
            col_a.fill(0.0)
            np.maximum.at(col_a, ar, np.abs(ad))
        dd = 1.0 / np.sqrt(np.where(col_h > 1e-12, col_h, 1.0))
        ee = 1.0 / np.sqrt(np.where(col_a > 1e-12, col_a, 1.0)) if m else col_a
        hd *= dd[hr] * dd[hc]
        if m:
            ad *= ee[ar] * dd[ac]
        g *= dd
        d *= dd
        e *= ee if m else 1.0
        # cost normalization
        col_h.fill(0.0)
        np.maximum.at(col_h, hc, np.abs(hd))
        gamma = 1.0 / max(col_h.mean() if n else 0.0, _norm_inf(g), 1e-12)
        hd *= gamma
        g *= gamma
        c *= gamma
    h_s = sp.csc_matrix((hd, (hr, hc)), shape=(n, n))
    a_s = sp.csr_matrix((ad, (ar, ac)), shape=(m, n))
    return h_s, a_s, g, d, e, c


def _col_inf_norms(mat):
    mat = sp.csc_matrix(mat)
    out = np.zeros(mat.shape[1])
    if mat.nnz:
        absd = np.abs(mat.data)
        nonempty = np.flatnonzero(np.diff(mat.indptr))
        out[nonempty] = np.maximum.reduceat(absd, mat.indptr[nonempty])
    return out


def _row_inf_norms(mat):
    return _col_inf_norms(sp.csc_matrix(mat.T))


class _KktSolver:
    """Cached LU of the quasi-definite matrix [[H + sigma I, A^T], [A, -1/rho I]]."""

    def __init__(self, h, a, sigma, rho_vec):
        n = h.shape[0]
        m = a.shape[0]
        if m:
            kkt = sp.bmat([
                [h + sigma * sp.eye(n), a.T],
                [a, -sp.diags(1.0 / rho_vec)],
            ], format="csc")
        else:
            kkt = (h + sigma * sp.eye(n)).tocsc()
        self.lu = spla.splu(kkt)
        self.n = n
        self.m = m

    def solve(self, rhs):
        return self.lu.solve(rhs)


def solve_qp(qp, settings, x0=None, y0=None, rho=None, raise_on_failure=True):
    """ADMM solve of the step QP with a cached quasi-definite factorization.

    Multipliers of the inequality block populate y_c (>= 0 at convergence),
    equality multipliers populate y_fn (sign-free). The KKT matrix is factored
    exactly once per solve and reused by every iteration
    (`factorization_count` asserts this); the residual-balance rho estimate
    computed at each check interval is reported on the result so the caller
    can rescale the next solve.
    """
    t_start = time.perf_counter()
    n = qp.dim
    a, lower, upper = _stacked_constraints(qp)
    m = a.shape[0]
    n_eq = qp.n_fixed

    if qp.n_contacts == 0:
        return _solve_equality_direct(qp, settings, t_start)

    h_s, a_s, g_s, d, e, c = _ruiz_equilibrate(
        qp.h, a, qp.g, settings.scaling_iterations)
    l_s = np.where(np.isfinite(lower), e * lower, lower)
    u_s = np.where(np.isfinite(upper), e * upper, upper)

    rho_bar = float(np.clip(settings.rho if rho is None else rho,
                            _RHO_MIN, _RHO_MAX))
    is_eq = np.arange(m) < n_eq

    def rho_vector(base):
        rv = np.full(m, base)
        rv[is_eq] = np.clip(base * _RHO_EQUALITY_FACTOR, _RHO_MIN, _RHO_MAX)
        return rv

    rho_vec = rho_vector(rho_bar)
    kkt = _KktSolver(h_s, a_s, settings.sigma, rho_vec)
    factorizations = 1

    x = np.zeros(n) if x0 is None else (np.asarray(x0, dtype=float) / d)
    y = np.zeros(m) if y0 is None else (c * np.asarray(y0, dtype=float) / e)
    z = np.clip(a_s @ x, l_s, u_s)

    alpha = settings.alpha
    sigma = settings.sigma
    pri_res = dua_res = np.inf
    status_infeasible = None
    rho_estimate = rho_bar
    iterations = 0

    for k in range(1, settings.max_iterations + 1):
        iterations = k
        rhs = np.concatenate([sigma * x - g_s, z - y / rho_vec])
        sol = kkt.solve(rhs)
        x_tilde = sol[:n]
        z_tilde = z + (sol[n:] - y) / rho_vec

        x_prev, y_prev = x, y
        x = alpha * x_tilde + (1.0 - alpha) * x_prev
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * z
        z_new = np.clip(z_relaxed + y / rho_vec, l_s, u_s)
        y = y + rho_vec * (z_relaxed - z_new)
        z = z_new

        # warm-started solves often land within a handful of iterations, so
        # check densely at first, then at the regular cadence
        if k <= 8 or k % settings.check_interval == 0 or k == settings.max_iterations:
            xu = d * x
            yu = e * y / c
            zu = z / e if m else z
            pri_vec = a @ xu - zu
            dua_vec = qp.h @ xu + qp.g + (a.T @ yu if m else 0.0)
            pri_res = _norm_inf(pri_vec)
            dua_res = _norm_inf(dua_vec)
            pri_scale = max(_norm_inf(a @ xu), _norm_inf(zu))
            dua_scale = max(_norm_inf(qp.h @ xu), _norm_inf(a.T @ yu) if m else 0.0,
                            _norm_inf(qp.g))
            eps_pri = settings.eps_abs + settings.eps_rel * pri_scale
            eps_dua = settings.eps_abs + settings.eps_rel * dua_scale
            if pri_res <= eps_pri and dua_res <= eps_dua:
                break

            if k % settings.check_interval == 0:
                status_infeasible = _infeasibility_certificate(
                    qp, a, lower, upper, d, e, c, x - x_prev, y - y_prev, settings)
                if status_infeasible is not None:
                    break

                # rescaling estimate from the residual balance at the FIRST
                # regular checkpoint (later checkpoints just echo the imposed
                # rho); applied by the caller to the NEXT solve so the cached
                # factorization stays valid
                if k == settings.check_interval:
                    ratio = (pri_res / max(pri_scale, 1e-12)) / \
                            max(dua_res / max(dua_scale, 1e-12), 1e-12)
                    rho_estimate = float(np.clip(rho_bar * np.sqrt(ratio),
                                                 _RHO_MIN, _RHO_MAX))

    if status_infeasible is not None:
        raise InfeasibleError("constraints are primal infeasible",
                              certificate=status_infeasible)

    dx = d * x
    y_full = e * y / c
    z_u = z / e if m else z
    pri_res = _norm_inf(a @ dx - z_u)
    dua_res = _norm_inf(qp.h @ dx + qp.g + a.T @ y_full)
    eps_pri = settings.eps_abs + settings.eps_rel * max(
        _norm_inf(a @ dx), _norm_inf(z_u))
    eps_dua = settings.eps_abs + settings.eps_rel * max(
        _norm_inf(qp.h @ dx), _norm_inf(a.T @ y_full), _norm_inf(qp.g))
    result = SolveResult(
        dx=dx,
        y_c=np.maximum(y_full[n_eq:], 0.0),
        y_fn=y_full[:n_eq],
        primal_residual=pri_res,
        dual_residual=dua_res,
        iterations=iterations,
        solve_time=0.0,
        converged=bool(pri_res <= eps_pri and dua_res <= eps_dua),
        factorization_count=factorizations,
        backend="accelerated_qp",
        # only report an estimate when this solve genuinely struggled, so
        # healthy warm-started frames never perturb the scaling
        rho_estimate=(rho_estimate if settings.adaptive_rho
                      and iterations >= 3 * settings.check_interval else None),
    )

    if settings.polish and result.converged:
        _polish(qp, a, lower, upper, result, settings)

    result.solve_time = time.perf_counter() - t_start
    if not result.converged and raise_on_failure:
        raise NonConvergenceError(
            f"ADMM did not converge in {settings.max_iterations} iterations "
            f"(primal {result.primal_residual:.3e}, dual {result.dual_residual:.3e})",
            result=result)
    return result


def _solve_equality_direct(qp, settings, t_start):
    """No inequalities: one exact KKT solve (with iterative refinement)."""
    n = qp.dim
    m = qp.n_fixed
    if m == 0:
        lu = spla.splu(sp.csc_matrix(qp.h))
        dx = lu.solve(-qp.g)
        y_fn = np.zeros(0)
    else:
        kkt_exact = sp.bmat([[qp.h, qp.a_fn.T], [qp.a_fn, None]], format="csc")
        reg = sp.bmat([
            [qp.h + settings.sigma * sp.eye(n), qp.a_fn.T],
            [qp.a_fn, -settings.sigma * sp.eye(m)],
        ], format="csc")
        lu = spla.splu(reg)
        rhs = np.concatenate([-qp.g, qp.b_fn])
        sol = lu.solve(rhs)
        for _ in range(3):  # refine against the unregularized KKT
            resid = rhs - kkt_exact @ sol
            sol = sol + lu.solve(resid)
        dx, y_fn = sol[:n], sol[n:]

    pri = _norm_inf(qp.a_fn @ dx - qp.b_fn) if m else 0.0
    dua = _norm_inf(qp.h @ dx + qp.g + (qp.a_fn.T @ y_fn if m else 0.0))
    scale = max(1.0, _norm_inf(qp.b_fn) if m else 0.0)
    if pri > max(settings.eps_abs, 1e-8 * scale):
        raise InfeasibleError(
            f"equality constraints inconsistent (residual {pri:.3e})",
            certificate=qp.a_fn @ dx - qp.b_fn if m else None)
    return SolveResult(
        dx=dx, y_c=np.zeros(0), y_fn=y_fn,
        primal_residual=pri, dual_residual=dua,
        iterations=0, solve_time=time.perf_counter() - t_start,
        converged=True, factorization_count=1, backend="accelerated_qp")


def _infeasibility_certificate(qp, a, lower, upper, d, e, c, delta_x, delta_y,
                               settings):
    """OSQP-style primal infeasibility test on the dual increment."""
    m = a.shape[0]
    if m == 0:
        return None
    dy = e * delta_y / c
    norm_dy = _norm_inf(dy)
    eps = max(settings.eps_abs, 1e-10)
    if norm_dy <= eps:
        return None
    dy = dy / norm_dy
    fin_u = np.isfinite(upper)
    fin_l = np.isfinite(lower)
    if _norm_inf(np.maximum(dy, 0.0)[~fin_u]) > eps:
        return None
    if _norm_inf(np.minimum(dy, 0.0)[~fin_l]) > eps:
        return None
    support = float(upper[fin_u] @ np.maximum(dy[fin_u], 0.0)
                    + lower[fin_l] @ np.minimum(dy[fin_l], 0.0))
    if support < -eps and _norm_inf(a.T @ dy) <= eps:
        return dy
    return None


def _polish(qp, a, lower, upper, result, settings):
    """Active-set refinement: re-solve the reduced exact KKT, pruning rows
    with negative multipliers and admitting violated ones, and keep the
    refined point if it improves both residuals."""
    m = a.shape[0]
    n = qp.dim
    n_eq = qp.n_fixed
    slack = upper - a @ result.dx
    tol_act = max(10 * settings.eps_abs, 1e-12)
    active = np.zeros(m, dtype=bool)
    active[:n_eq] = True
    active[n_eq:] = (result.y_c > tol_act) | (slack[n_eq:] < tol_act)

    best = None
    for _ in range(6):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        point = _solve_active_subset(qp, a, upper, idx, n, m)
        if point is None:
            return
        dx_p, y_p = point
        y_contacts = y_p[n_eq:]
        neg = (y_contacts < -1e-11) & active[n_eq:]
        violated = (a[n_eq:] @ dx_p - upper[n_eq:] > tol_act) & ~active[n_eq:] \
            if m > n_eq else np.zeros(0, dtype=bool)
        if not neg.any() and not violated.any():
            best = (dx_p, y_p)
            break
        active[n_eq:][neg] = False
        active[n_eq:][violated] = True
    if best is None:
        return

    dx_p, y_p = best
    feas = a @ dx_p - upper
    pri_p = max(_norm_inf(np.maximum(feas, 0.0)),
                _norm_inf((a[:n_eq] @ dx_p - upper[:n_eq])) if n_eq else 0.0)
    dua_p = _norm_inf(qp.h @ dx_p + qp.g + a.T @ y_p)
    if not np.all(np.isfinite(dx_p)):
        return
    if pri_p <= max(result.primal_residual, settings.eps_abs) and \
            dua_p <= max(result.dual_residual, settings.eps_abs):
        result.dx = dx_p
        result.y_fn = y_p[:n_eq]
        result.y_c = np.maximum(y_p[n_eq:], 0.0)
        result.primal_residual = pri_p
        result.dual_residual = dua_p
        result.polish_applied = True


def _solve_active_subset(qp, a, upper, idx, n, m):
    a_act = a[idx].tocsr()
    b_act = upper[idx]
    delta = 1e-9
    reg = sp.bmat([
        [qp.h + delta * sp.eye(n), a_act.T],
        [a_act, -delta * sp.eye(idx.size)],
    ], format="csc")
    try:
        lu = spla.splu(reg)
    except RuntimeError:
        return None
    rhs = np.concatenate([-qp.g, b_act])
    sol = lu.solve(rhs)
    # one refinement round against the exact (unregularized) KKT, with the
    # residual computed blockwise so the exact matrix is never assembled
    dx_p = sol[:n]
    mult = sol[n:]
    resid = np.concatenate([
        -qp.g - qp.h @ dx_p - a_act.T @ mult,
        b_act - a_act @ dx_p,
    ])
    sol = sol + lu.solve(resid)
    if not np.all(np.isfinite(sol)):
        return None
    dx_p = sol[:n]
    y_p = np.zeros(m)
    y_p[idx] = sol[n:]
    return dx_p, y_p


def solve_pgs(problem, settings, y0=None, raise_on_failure=True):
    """Projected Gauss-Seidel baseline on the contact-space Delassus operator.

    Selector equality rows (plain fixed DOFs) are eliminated exactly; the
    remaining rows sweep over W = A K^-1 A^T with contact multipliers clamped
    to >= 0 and any general equality rows left unclamped. Sweeps stop once
    the violation residual falls below `pgs_tol` relative to the start
    residual (with at least `pgs_min_sweep_factor * n_c` sweeps); y0
    warm-starts the contact multipliers.
    """
    t_start = time.perf_counter()
    qp = build_qp(problem)
    n = qp.dim
    g = qp.g

    sel_rows, sel_dofs, sel_vals, gen_rows = _split_selector_rows(qp.a_fn, qp.b_fn)
    free = np.setdiff1d(np.arange(n), sel_dofs)
    fixed_dx = np.zeros(n)
    if sel_dofs.size:
        fixed_dx[sel_dofs] = sel_vals

    k_csc = sp.csc_matrix(qp.h)
    k_ff = k_csc[free][:, free]
    lu = spla.splu(k_ff)
    rhs_free = -(g[free] + (k_csc[free][:, sel_dofs] @ sel_vals if sel_dofs.size else 0.0))
    dx_free = lu.solve(rhs_free)

    a_rem = sp.vstack([qp.a_fn[gen_rows], qp.a_c], format="csr") \
        if (len(gen_rows) + qp.n_contacts) else sp.csr_matrix((0, n))
    b_rem = np.concatenate([qp.b_fn[gen_rows], qp.b_c])
    n_rem = a_rem.shape[0]
    n_gen = len(gen_rows)
    is_contact = np.arange(n_rem) >= n_gen

    sweeps = 0
    if n_rem:
        a_rf = a_rem[:, free].toarray()
        b_adj = b_rem - (a_rem[:, sel_dofs] @ sel_vals if sel_dofs.size else 0.0)
        w = a_rf @ lu.solve(a_rf.T)
        q0 = a_rf @ dx_free - b_adj
        diag = np.diag(w).copy()
        dead = diag <= 1e-30
        diag[dead] = 1.0

        y = np.zeros(n_rem)
        if y0 is not None and len(y0) == qp.n_contacts:
            y[n_gen:] = np.maximum(np.asarray(y0, dtype=float), 0.0)
        n_c = int(is_contact.sum())
        min_sweeps = settings.pgs_min_sweep_factor * max(n_c, 1)
        max_sweeps = max(settings.max_iterations, 250 * max(n_c, 1), min_sweeps)

        def residual(y_vec):
            s = q0 - w @ y_vec
            res = _norm_inf(s[:n_gen]) if n_gen else 0.0
            if n_c:
                y_scale = max(1.0, _norm_inf(y_vec[n_gen:]))
                res = max(res,
                          float(np.maximum(s[n_gen:], 0.0).max()),
                          _norm_inf(y_vec[n_gen:] * s[n_gen:]) / y_scale)
            return res

        # scale by the free-solution violation: intrinsic to the problem,
        # independent of the warm start
        target = settings.pgs_tol * max(_norm_inf(q0), 1e-12)
        converged = residual(y) <= target
        for sweep in range(1, max_sweeps + 1):
            for i in range(n_rem):
                if dead[i]:
                    continue
                s_i = q0[i] - w[i] @ y
                y_i = y[i] + s_i / diag[i]
                if is_contact[i] and y_i < 0.0:
                    y_i = 0.0
                y[i] = y_i
            sweeps = sweep
            if sweep >= min_sweeps and residual(y) <= target:
                converged = True
                break
        dx_free = dx_free - lu.solve(a_rf.T @ y)
    else:
        y = np.zeros(0)
        converged = True

    dx = fixed_dx.copy()
    dx[free] = dx_free

    y_c = np.maximum(y[n_gen:], 0.0) if n_rem else np.zeros(0)
    y_fn = np.zeros(qp.n_fixed)
    if n_gen:
        y_fn[gen_rows] = y[:n_gen]
    if sel_rows.size:
        # reactions at eliminated DOFs from the equilibrium residual
        resid = -(qp.h @ dx + g + (qp.a_c.T @ y_c if qp.n_contacts else 0.0))
        if n_gen:
            resid -= qp.a_fn[gen_rows].T @ y[:n_gen]
        y_fn[sel_rows] = resid[sel_dofs]

    pri = 0.0
    if qp.n_contacts:
        pri = float(np.maximum(qp.a_c @ dx - qp.b_c, 0.0).max())
    if qp.n_fixed:
        pri = max(pri, _norm_inf(qp.a_fn @ dx - qp.b_fn))
    dua = _norm_inf(qp.h @ dx + g + qp.a_c.T @ y_c + qp.a_fn.T @ y_fn)

    result = SolveResult(
        dx=dx, y_c=y_c, y_fn=y_fn,
        primal_residual=pri, dual_residual=dua,
        iterations=sweeps, solve_time=time.perf_counter() - t_start,
        converged=converged, factorization_count=1, backend="pgs_baseline")
    if not converged and raise_on_failure:
        raise NonConvergenceError(
            f"PGS did not converge within {sweeps} sweeps "
            f"(primal residual {pri:.3e})", result=result)
    return result


def _split_selector_rows(a_fn, b_fn):
    """Partition equality rows into plain DOF selectors and general rows."""
    sel_rows, sel_dofs, sel_vals, gen_rows = [], [], [], []
    csr = a_fn.tocsr()
    seen_dofs = set()
    for i in range(csr.shape[0]):
        lo, hi = csr.indptr[i], csr.indptr[i + 1]
        cols = csr.indices[lo:hi]
        vals = csr.data[lo:hi]
        nz = np.flatnonzero(vals)
        if nz.size == 1 and vals[nz[0]] == 1.0 and cols[nz[0]] not in seen_dofs:
            sel_rows.append(i)
            sel_dofs.append(int(cols[nz[0]]))
            sel_vals.append(float(b_fn[i]))
            seen_dofs.add(cols[nz[0]])
        else:
            gen_rows.append(i)
    return (np.asarray(sel_rows, dtype=int), np.asarray(sel_dofs, dtype=int),
            np.asarray(sel_vals, dtype=float), gen_rows)


def solve_active_set(qp, settings=None, tol=1e-9):
    """Exhaustive active-set enumeration; exact ground truth on small instances.

    Tries every subset of contact rows as the active set, solves the
    equality-constrained KKT system, and returns the first subset whose
    multipliers and slacks satisfy the KKT sign conditions.
    """
    n = qp.dim
    h = qp.h.toarray()
    a_fn = qp.a_fn.toarray()
    a_c = qp.a_c.toarray()
    n_f, n_c = a_fn.shape[0], a_c.shape[0]
    if n_c > 16:
        raise DomainError("active-set oracle limited to <= 16 contacts")
    t_start = time.perf_counter()

    for mask in range(2 ** n_c):
        act = [i for i in range(n_c) if mask >> i & 1]
        a_act = np.vstack([a_fn] + [a_c[i] for i in act]) if (n_f + len(act)) \
            else np.zeros((0, n))
        b_act = np.concatenate([qp.b_fn, qp.b_c[act]])
        k = a_act.shape[0]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = h
        kkt[:n, n:] = a_act.T
        kkt[n:, :n] = a_act
        rhs = np.concatenate([-qp.g, b_act])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        dx = sol[:n]
        mult = sol[n:]
        y_c = np.zeros(n_c)
        y_c[act] = mult[n_f:]
        if y_c.min(initial=0.0) < -tol:
            continue
        if n_c and np.max(a_c @ dx - qp.b_c) > tol:
            continue
        return SolveResult(
            dx=dx, y_c=np.maximum(y_c, 0.0), y_fn=mult[:n_f],
            primal_residual=float(np.max(np.abs(a_act @ dx - b_act), initial=0.0)),
            dual_residual=_norm_inf(h @ dx + qp.g + a_c.T @ y_c + a_fn.T @ mult[:n_f]),
            iterations=mask + 1, solve_time=time.perf_counter() - t_start,
            converged=True, factorization_count=mask + 1,
            backend="active_set_oracle")
    raise InfeasibleError("no active set satisfies the KKT conditions")


def solve_step(problem, settings, y0=None, y_fn0=None, rho=None,
               raise_on_failure=True):
    """Dispatch one frame solve to the configured backend.

    y0 / y_fn0 warm-start the contact and fixed-row multipliers of the
    accelerated path (ignored when the row counts changed); rho overrides
    settings.rho so the engine can apply the adaptive rescaling estimates
    frame to frame.
    """
    if settings.backend == "pgs_baseline":
        return solve_pgs(problem, settings, y0=y0,
                         raise_on_failure=raise_on_failure)
    qp = build_qp(problem)
    if settings.backend == "active_set_oracle":
        return solve_active_set(qp, settings)
    fixed_part = np.zeros(qp.n_fixed)
    if y_fn0 is not None and len(y_fn0) == qp.n_fixed:
        fixed_part = np.asarray(y_fn0, dtype=float)
    y_stack = None
    if y0 is not None and len(y0) == qp.n_contacts:
        y_stack = np.concatenate([fixed_part, y0])
    elif y_fn0 is not None and qp.n_contacts == 0:
        y_stack = fixed_part
    return solve_qp(qp, settings, y0=y_stack, rho=rho,
                    raise_on_failure=raise_on_failure)


@dataclass
class ComplementarityReport:
    """Per-constraint Signorini / equality violation summary.

    Products are scaled by max(1, |y_c|_inf, |A dx|_inf) so the tolerance is
    meaningful across load levels.
    """

    multiplier_violation: float
    gap_violation: float
    product_violation: float
    equality_violation: float
    scale: float
    per_contact_product: np.ndarray
    per_contact_gap: np.ndarray
    tol: float

    @property
    def ok(self):
        return (self.multiplier_violation <= self.tol
                and self.gap_violation <= self.tol
                and self.product_violation <= self.tol * self.scale
                and self.equality_violation <= self.tol)

    def flagged(self):
        out = []
        if self.multiplier_violation > self.tol:
            out.append(("negative_multiplier", self.multiplier_violation))
        if self.gap_violation > self.tol:
            out.append(("gap_violation", self.gap_violation))
        if self.product_violation > self.tol * self.scale:
            out.append(("complementarity_product", self.product_violation))
        if self.equality_violation > self.tol:
            out.append(("equality_violation", self.equality_violation))
        return out


def check_complementarity(problem, result, tol=1e-6):
    """Verify the Signorini conditions and fixed-node equalities on a result."""
    a_c, b_c = problem.contact.a_c, problem.contact.b_c
    a_fn, b_fn = problem.a_fn, problem.b_fn
    n_contacts, n_fixed = a_c.shape[0], a_fn.shape[0]
    v_c = a_c @ result.dx - b_c if n_contacts else np.zeros(0)
    v_fn = a_fn @ result.dx - b_fn if n_fixed else np.zeros(0)
    y_c = result.y_c
    scale = max(1.0, _norm_inf(y_c), _norm_inf(a_c @ result.dx) if n_contacts else 0.0)
    products = np.abs(y_c * v_c) if n_contacts else np.zeros(0)
    return ComplementarityReport(
        multiplier_violation=float(max(0.0, -(y_c.min() if y_c.size else 0.0))),
        gap_violation=float(np.maximum(v_c, 0.0).max()) if v_c.size else 0.0,
        product_violation=float(products.max()) if products.size else 0.0,
        equality_violation=_norm_inf(v_fn),
        scale=scale,
        per_contact_product=products,
        per_contact_gap=v_c,
        tol=tol,
    )


def limit_step(result, f_a, f_int, beta0):
    """Cap |dx| at beta0, scaling multipliers alike; report the load fraction.

    Returns (possibly rescaled result, effective actuation interpolation
    factor): the equilibrium actually solved used
    F_a_eff = F_int + factor * (F_a - F_int), so a factor < 1 leaves load for
    the following frames to re-apply.
    """
    if beta0 <= 0.0:
        raise DomainError("beta0 must be positive")
    norm = float(np.linalg.norm(result.dx))
    if norm <= beta0 or norm == 0.0:
        return result, 1.0
    factor = beta0 / norm
    scaled = replace(
        result,
        dx=result.dx * factor,
        y_c=result.y_c * factor,
        y_fn=result.y_fn * factor,
    )
    return scaled, factor


def contact_forces(result, contact):
    """World-frame contact forces: per contact -y_i n_i, global F_c = -A_c^T y_c."""
    if contact.count == 0:
        return np.zeros((0, 3)), np.zeros(contact.a_c.shape[1])
    normals = np.vstack([c.normal for c in contact.contacts])
    per_contact = -result.y_c[:, None] * normals
    f_c = -(contact.a_c.T @ result.y_c)
    return per_contact, f_c


def _sparse_to_triplets(mat):
    coo = sp.coo_matrix(mat)
    return {
        "shape": list(coo.shape),
        "rows": coo.row.tolist(),
        "cols": coo.col.tolist(),
        "vals": coo.data.tolist(),
    }


def _triplets_to_csr(obj):
    return sp.csr_matrix(
        (obj["vals"], (obj["rows"], obj["cols"])), shape=tuple(obj["shape"]))


def dump_problem(qp, settings, path):
    """Write a self-contained debug dump; floats round-trip exactly."""
    payload = {
        "format": "cablefem-step-problem",
        "v": 1,
        "h": _sparse_to_triplets(qp.h),
        "g": qp.g.tolist(),
        "a_c": _sparse_to_triplets(qp.a_c),
        "b_c": qp.b_c.tolist(),
        "a_fn": _sparse_to_triplets(qp.a_fn),
        "b_fn": qp.b_fn.tolist(),
        "settings": asdict(settings),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_problem(path):
    """Read a dump written by dump_problem; returns (QPData, SolverSettings)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "cablefem-step-problem":
        raise DomainError(f"not a problem dump: {path}")
    qp = QPData(
        h=sp.csc_matrix(_triplets_to_csr(payload["h"])),
        g=np.asarray(payload["g"], dtype=float),
        a_c=_triplets_to_csr(payload["a_c"]),
        b_c=np.asarray(payload["b_c"], dtype=float),
        a_fn=_triplets_to_csr(payload["a_fn"]),
        b_fn=np.asarray(payload["b_fn"], dtype=float),
    )
    return qp, SolverSettings(**payload["settings"])

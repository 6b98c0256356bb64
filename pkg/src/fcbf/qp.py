"""Dense convex QP solver: minimize 0.5 z'Hz + f'z subject to affine
inequality rows and per-variable box bounds.

Primal active-set method sized for the control loop (a handful of variables,
around ten rows). A regularized least-squares phase 1 produces a feasible
start when needed; every optimal solution carries an exact KKT certificate.
Warm starting is caller-owned: pass the previous solution's point and active
set back in.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .constraints import GE, ConstraintRow

MAX_ITER_DEFAULT = 200
COND_LIMIT = 1e12
INFEAS_TOL = 1e-7        # total normalized violation above which phase 1 gives up
FEAS_START_TOL = 1e-9    # violation below which a point counts as feasible
STATIONARITY_TOL = 1e-8
PRIMAL_TOL = 1e-8
COMPLEMENTARITY_TOL = 1e-8
MULTIPLIER_TOL = -1e-10


class BadProblem(ValueError):
    """Malformed QP: asymmetric or indefinite cost, or inverted bounds."""


class MissingPrevInput(ValueError):
    """Smoothness-penalized cost requested without the previous input."""


class QpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class QpProblem:
    """Dense QP data. lb/ub entries may be -inf/+inf."""

    H: np.ndarray
    f: np.ndarray
    rows: list[ConstraintRow] = field(default_factory=list)
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = self.f.shape[0]
        if self.lb is None:
            self.lb = np.full(n, -np.inf)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)

    @property
    def n(self) -> int:
        return self.f.shape[0]

    def validate(self) -> None:
        n = self.n
        if self.H.shape != (n, n):
            raise BadProblem(f"H shape {self.H.shape} does not match f length {n}")
        scale = max(1.0, float(np.abs(self.H).max()))
        if float(np.abs(self.H - self.H.T).max()) > 1e-12 * scale:
            raise BadProblem("H is not symmetric")
        eigmin = float(np.linalg.eigvalsh(0.5 * (self.H + self.H.T)).min())
        if eigmin < -1e-10 * scale:
            raise BadProblem(f"H is not positive semidefinite (min eig {eigmin:g})")
        if np.any(self.lb > self.ub):
            raise BadProblem("lb exceeds ub")
        for r in self.rows:
            if r.coeffs.shape != (n,):
                raise BadProblem(f"row length {r.coeffs.shape} does not match n={n}")
            if not np.all(np.isfinite(r.coeffs)) or not np.isfinite(r.rhs):
                raise BadProblem("row contains non-finite entries")

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    status: QpStatus
    active_set: tuple = ()
    kkt_residuals: tuple = (np.nan, np.nan, np.nan)
    solve_time: float = 0.0
    multipliers: np.ndarray | None = None
    infeasible_rows: tuple = ()
    iterations: int = 0
    diagnostics: str = ""


def _internal_rows(problem: QpProblem):
    """Normalize everything to unit-norm GE rows A z >= b.

    Order: user rows (as given), then finite lower bounds, then finite upper
    bounds. Returns (A, b, norms, trivially_infeasible_index or None).
    """
    n = problem.n
    coeffs, rhs = [], []
    for r in problem.rows:
        a = r.coeffs if r.sense == GE else -r.coeffs
        b = r.rhs if r.sense == GE else -r.rhs
        coeffs.append(np.asarray(a, dtype=float))
        rhs.append(float(b))
    for j in range(n):
        if np.isfinite(problem.lb[j]):
            e = np.zeros(n)
            e[j] = 1.0
            coeffs.append(e)
            rhs.append(float(problem.lb[j]))
    for j in range(n):
        if np.isfinite(problem.ub[j]):
            e = np.zeros(n)
            e[j] = -1.0
            coeffs.append(e)
            rhs.append(float(-problem.ub[j]))
    if not coeffs:
        return np.zeros((0, n)), np.zeros(0), np.zeros(0), None
    A = np.array(coeffs)
    b = np.array(rhs)
    norms = np.linalg.norm(A, axis=1)
    bad = None
    for i, nm in enumerate(norms):
        if nm < 1e-300:
            if b[i] > 1e-12:
                bad = i
            norms[i] = 1.0
    A = A / norms[:, None]
    b = b / norms
    return A, b, norms, bad


def _solve_kkt(H, f, A_w, b_w):
    """Solve the equality-constrained subproblem with one refinement pass.

    minimize 0.5 z'Hz + f'z  s.t.  A_w z = b_w:

    [H  A_w'] [z ]   [-f ]
    [A_w  0 ] [mu] = [b_w]

    The GE-row multipliers (stationarity H z + f = A' lam, lam >= 0) are
    lam = -mu. Returns (z, lam, condition_number).
    """
    n = H.shape[0]
    k = A_w.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = H
    if k:
        kkt[:n, n:] = A_w.T
        kkt[n:, :n] = A_w
    rhs = np.concatenate([-f, b_w])
    # symmetric equilibration so cost/row scale mismatches do not masquerade
    # as genuine ill-conditioning
    s = np.ones(n + k)
    for _ in range(2):
        norms = np.max(np.abs(kkt * s[None, :] * s[:, None]), axis=1)
        norms[norms == 0.0] = 1.0
        s /= np.sqrt(norms)
    kkt_eq = kkt * s[None, :] * s[:, None]
    rhs_eq = rhs * s
    cond = float(np.linalg.cond(kkt_eq))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        sol, *_ = np.linalg.lstsq(kkt_eq, rhs_eq, rcond=None)
        sol *= s
        return sol[:n], -sol[n:], cond
    sol = np.linalg.solve(kkt_eq, rhs_eq)
    sol += np.linalg.solve(kkt_eq, rhs_eq - kkt_eq @ sol)
    sol *= s
    return sol[:n], -sol[n:], cond


def _active_set_core(H, f, A, b, x0, w0, max_iter):
    """Primal active-set iteration from a feasible x0.

    Returns (x, working_set, multipliers_on_working_set, status, iters, diag).
    """
    n = len(f)
    m = len(b)
    x = x0.astype(float).copy()
    work: list[int] = []
    for i in w0:
        if i < 0 or i >= m:
            continue
        if abs(A[i] @ x - b[i]) > 1e-7:
            continue
        cand = work + [i]
        if np.linalg.matrix_rank(A[cand], tol=1e-10) == len(cand) and len(cand) <= n:
            work = cand
    diag = ""
    for it in range(1, max_iter + 1):
        A_w = A[work] if work else np.zeros((0, n))
        b_w = b[work] if work else np.zeros(0)
        z_eq, lam, cond = _solve_kkt(H, f, A_w, b_w)
        if cond > COND_LIMIT:
            diag = f"KKT condition number {cond:.3g} exceeds {COND_LIMIT:g}"
            return x, work, lam, QpStatus.ITERATION_LIMIT, it, diag
        p = z_eq - x
        if np.max(np.abs(p), initial=0.0) <= 1e-11 * (1.0 + np.max(np.abs(x))):
            if len(work) == 0 or float(np.min(lam)) >= MULTIPLIER_TOL:
                return z_eq, work, lam, QpStatus.OPTIMAL, it, diag
            worst = int(np.argmin(lam))
            del work[worst]
            continue
        # ratio test: residuals are affine along the step, so only rows
        # violated at the subproblem target can block
        alpha = 1.0
        blocker = -1
        for i in range(m):
            if i in work:
                continue
            r_target = float(A[i] @ z_eq - b[i])
            if r_target >= -1e-13:
                continue
            r_here = max(float(A[i] @ x - b[i]), 0.0)
            a_i = r_here / (r_here - r_target)
            if a_i < alpha - 1e-15:
                alpha = a_i
                blocker = i
            elif blocker >= 0 and abs(a_i - alpha) <= 1e-15 and i < blocker:
                blocker = i
        x = x + alpha * p
        if blocker >= 0 and alpha < 1.0:
            cand = work + [blocker]
            if np.linalg.matrix_rank(A[cand], tol=1e-10) == len(cand):
                work = cand
            else:
                # a dependent blocker shifted off the working-set face: the
                # equality subproblem cannot express it, so report honestly
                diag = f"dependent blocking row {blocker}"
                return x, work, lam, QpStatus.ITERATION_LIMIT, it, diag
    return x, work, np.zeros(len(work)), QpStatus.ITERATION_LIMIT, max_iter, "iteration cap"


def _phase1(A, b, lb, ub, x_init, max_iter):
    """Feasibility search: repeatedly minimize the squared row violations.

    minimize 0.5 eps ||x - xc||^2 + 0.5 ||s||^2
    s.t.     A x + s >= b,  s >= 0,  lb <= x <= ub

    recentering xc at each outer solution. Returns (x, total_violation).
    """
    n = A.shape[1]
    m = A.shape[0]
    eps = 1e-8
    xc = x_init.copy()

    def total_violation(x):
        if m == 0:
            return 0.0
        return float(np.sum(np.maximum(0.0, b - A @ x)))

    best_x = xc.copy()
    best_v = total_violation(xc)
    for _ in range(20):
        if best_v <= FEAS_START_TOL:
            return best_x, best_v
        prev_v = best_v
        H1 = np.diag(np.concatenate([np.full(n, eps), np.ones(m)]))
        f1 = np.concatenate([-eps * xc, np.zeros(m)])
        rows = [np.concatenate([A[i], np.eye(m)[i]]) for i in range(m)]
        rows += [np.concatenate([np.zeros(n), np.eye(m)[i]]) for i in range(m)]
        rhs = np.concatenate([b, np.zeros(m)])
        for j in range(n):
            if np.isfinite(lb[j]):
                e = np.zeros(n + m)
                e[j] = 1.0
                rows.append(e)
                rhs = np.append(rhs, lb[j])
            if np.isfinite(ub[j]):
                e = np.zeros(n + m)
                e[j] = -1.0
                rows.append(e)
                rhs = np.append(rhs, -ub[j])
        A1 = np.array(rows)
        s0 = np.maximum(0.0, b - A @ xc)
        w0_start = np.concatenate([xc, s0])
        x1, _, _, status, _, _ = _active_set_core(H1, f1, A1, rhs, w0_start, [], max_iter)
        x_new = x1[:n]
        v_new = total_violation(x_new)
        if v_new < best_v:
            best_x, best_v = x_new.copy(), v_new
        if v_new > 0.9 * prev_v and v_new > FEAS_START_TOL:
            break
        xc = x_new
    return best_x, best_v


def solve(
    problem: QpProblem,
    warm_start=None,
    start_point=None,
    max_iter: int = MAX_ITER_DEFAULT,
) -> QpSolution:
    """Solve the QP. Returns OPTIMAL with a KKT certificate, INFEASIBLE with
    the violated rows as evidence, or ITERATION_LIMIT with diagnostics.

    warm_start: active-set indices from a previous, structurally identical
    solve. start_point: candidate initial point (previous solution).
    """
    t0 = time.perf_counter()
    problem.validate()
    n = problem.n
    A, b, norms, bad = _internal_rows(problem)
    if bad is not None:
        return QpSolution(
            z=np.zeros(n),
            status=QpStatus.INFEASIBLE,
            infeasible_rows=(bad,),
            solve_time=time.perf_counter() - t0,
            diagnostics="zero-coefficient row with positive rhs",
        )

    def violation(x):
        if len(b) == 0:
            return 0.0
        return float(np.max(np.maximum(0.0, b - A @ x), initial=0.0))

    candidates = []
    if start_point is not None:
        candidates.append(np.clip(np.asarray(start_point, dtype=float), problem.lb, problem.ub))
    candidates.append(np.clip(np.zeros(n), problem.lb, problem.ub))
    x0 = None
    for cand in candidates:
        if violation(cand) <= FEAS_START_TOL:
            x0 = cand
            break
    if x0 is None:
        x_init = candidates[-1]
        x0, total_v = _phase1(A, b, problem.lb, problem.ub, x_init, max_iter)
        if total_v > INFEAS_TOL:
            viol = np.maximum(0.0, b - A @ x0)
            evidence = tuple(int(i) for i in np.nonzero(viol > 1e-12)[0])
            return QpSolution(
                z=x0,
                status=QpStatus.INFEASIBLE,
                infeasible_rows=evidence,
                solve_time=time.perf_counter() - t0,
                diagnostics=f"phase-1 stalled at total violation {total_v:.3g}",
            )

    w0 = list(warm_start) if warm_start else []
    x, work, lam_w, status, iters, diag = _active_set_core(
        problem.H, problem.f, A, b, x0, w0, max_iter
    )
    multipliers = np.zeros(len(b))
    for idx, lam in zip(work, lam_w):
        multipliers[idx] = lam / norms[idx]
    resid = kkt_check(problem, x, multipliers)
    # certification thresholds scale with the gradient/multiplier magnitudes;
    # on unit-scale problems they reduce to the absolute tolerances
    grad_scale = max(1.0, float(np.max(np.abs(problem.H @ x + problem.f), initial=0.0)))
    lam_scale = max(1.0, float(np.max(np.abs(multipliers), initial=0.0)))
    if status == QpStatus.OPTIMAL and (
        resid[0] > STATIONARITY_TOL * grad_scale
        or resid[1] > PRIMAL_TOL
        or resid[2] > COMPLEMENTARITY_TOL * lam_scale
    ):
        status = QpStatus.ITERATION_LIMIT
        diag = f"KKT residuals {resid} exceed tolerances"
    return QpSolution(
        z=x,
        status=status,
        active_set=tuple(sorted(work)),
        kkt_residuals=resid,
        solve_time=time.perf_counter() - t0,
        multipliers=multipliers,
        iterations=iters,
        diagnostics=diag,
    )


def kkt_check(problem: QpProblem, z, multipliers) -> tuple:
    """KKT residual triple at (z, multipliers) over the normalized GE rows.

    Returns (stationarity, primal, complementarity):
        stationarity     = ||H z + f - A' lam||_inf
        primal           = max violation over rows and box bounds
        complementarity  = max |lam_i * slack_i|
    Multipliers are indexed like the solver's internal row order: user rows,
    then finite lower bounds, then finite upper bounds.
    """
    z = np.asarray(z, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    A, b, norms, _ = _internal_rows(problem)
    A_orig = A * norms[:, None]
    b_orig = b * norms
    if len(b_orig) != len(lam):
        raise ValueError(f"expected {len(b_orig)} multipliers, got {len(lam)}")
    grad = problem.H @ z + problem.f
    if len(b_orig):
        grad = grad - A_orig.T @ lam
        slack = A_orig @ z - b_orig
        primal = float(np.max(np.maximum(0.0, -slack), initial=0.0))
        comp = float(np.max(np.abs(lam * slack), initial=0.0))
    else:
        primal = 0.0
        comp = 0.0
    return (float(np.max(np.abs(grad), initial=0.0)), primal, comp)


def build_cost(
    controller_kind: str,
    Q: float,
    smoothness_weight: float = 0.0,
    prev_u=None,
) -> tuple:
    """Quadratic cost (H, f) over z = [nu1, nu2, delta] or [u1, u2, delta].

    All controllers: ||decision||^2 + Q delta^2, i.e. H = 2 diag(1, 1, Q).
    The smoothness-penalized variant adds w (u - prev_u)^2 per channel:
    H gains 2w on each input diagonal, f gains -2w prev_u.
    """
    if Q <= 0:
        raise BadProblem(f"Q must be positive, got {Q}")
    if smoothness_weight < 0:
        raise BadProblem(f"smoothness_weight must be nonnegative, got {smoothness_weight}")
    H = 2.0 * np.diag([1.0, 1.0, float(Q)])
    f = np.zeros(3)
    if controller_kind == "sp-hocbf" and smoothness_weight > 0.0:
        if prev_u is None:
            raise MissingPrevInput("smoothness penalty needs the previous input")
        w = float(smoothness_weight)
        H[0, 0] += 2.0 * w
        H[1, 1] += 2.0 * w
        f[0] = -2.0 * w * float(prev_u[0])
        f[1] = -2.0 * w * float(prev_u[1])
    elif smoothness_weight > 0.0 and controller_kind != "sp-hocbf":
        raise BadProblem(
            f"smoothness_weight > 0 is only meaningful for sp-hocbf, got {controller_kind}"
        )
    return H, f

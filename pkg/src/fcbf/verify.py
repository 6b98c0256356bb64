"""Independent oracles and post-hoc analyzers.

Certifies every hand-derived derivative in the constraint rows against a
5-point central finite difference of the exact integrated flow, estimates
empirical input-rate (Lipschitz) behavior from run logs, and compares
controllers on safety margin, goal distance, smoothness, and solve time.

All sampled checks use fixed seeds, recorded in the reports for replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constraints as con
from . import model
from .sim import Controller, ScenarioConfig, TrajectoryLog, integrate

FD_THRESHOLD = 1e-5
ABS_SCALE_FLOOR = 1e-8   # below this magnitude the error check turns absolute
DEFAULT_SEED = 20250808


@dataclass
class DerivCheckReport:
    operation: str
    max_rel_err: float
    worst_sample: dict
    n_samples: int
    seed: int
    threshold: float = FD_THRESHOLD

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.threshold

    def format(self) -> str:
        tag = "pass" if self.passed else "FAIL"
        return (f"  {tag} {self.operation}: max rel err {self.max_rel_err:.3e} "
                f"over {self.n_samples} samples (seed {self.seed})")


@dataclass
class SafetyReport:
    min_b: float
    min_psi1: float
    first_violation_time: float | None


@dataclass
class SmoothnessReport:
    """Per-channel input-rate statistics of one run log."""

    max_rate: tuple
    total_variation: tuple
    lipschitz_estimate: tuple
    bound_trace: np.ndarray | None = None   # filtered runs: per-step rate bound

    @property
    def bound_max(self) -> tuple | None:
        if self.bound_trace is None or len(self.bound_trace) == 0:
            return None
        return tuple(float(v) for v in self.bound_trace.max(axis=0))


def fd5(fn, x0: float, h: float) -> float:
    """5-point central difference d fn / dx at x0."""
    return (-fn(x0 + 2 * h) + 8 * fn(x0 + h) - 8 * fn(x0 - h) + fn(x0 - 2 * h)) / (12 * h)


def _fd_step(at: float) -> float:
    """Step for differencing in the variable with current value `at`."""
    return 1e-5 * max(1.0, abs(at))


def _rel_err(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < ABS_SCALE_FLOOR:
        return abs(analytic - numeric)
    return abs(analytic - numeric) / scale


def fd_check_row(operation, analytic_fn, scalar_fn, flow_fn, sampler,
                 n_samples: int, seed: int, threshold: float = FD_THRESHOLD) -> DerivCheckReport:
    """Compare an analytic time derivative against a finite difference along
    the flow, over sampled scenarios.

    analytic_fn(sample) -> claimed d/dt of the scalar at the sample point
    scalar_fn(point)    -> the scalar being differentiated
    flow_fn(sample, s)  -> point advanced a (signed) time s along the flow
    sampler(rng)        -> one sample
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    worst = {"err": -1.0}
    for idx in range(n_samples):
        sample = sampler(rng)
        claimed = analytic_fn(sample)
        h = _fd_step(0.0)
        numeric = fd5(lambda s: scalar_fn(flow_fn(sample, s)), 0.0, h)
        err = _rel_err(claimed, numeric)
        if err > worst["err"]:
            worst = {"err": err, "index": idx, "analytic": claimed, "numeric": numeric,
                     "sample": sample}
    return DerivCheckReport(
        operation=operation,
        max_rel_err=worst["err"],
        worst_sample={k: v for k, v in worst.items() if k != "err"},
        n_samples=n_samples,
        seed=seed,
        threshold=threshold,
    )


def _sample_scenario(rng, config: ScenarioConfig):
    """Random safe state, in-bound filter state, and bounded command sample."""
    par = config.unicycle
    u_min, u_max = config.input_bounds.as_arrays()
    while True:
        r = rng.uniform(par.obstacle_r + 0.5, par.obstacle_r + 6.0)
        ang = rng.uniform(-math.pi, math.pi)
        x = par.obstacle_x + r * math.cos(ang)
        y = par.obstacle_y + r * math.sin(ang)
        if math.hypot(x - par.goal_x, y - par.goal_y) > 0.5:
            break
    state = model.SystemState(x, y, rng.uniform(-math.pi, math.pi), rng.uniform(-3.0, 5.0))
    frac = rng.uniform(0.05, 0.95, size=2)
    uf = model.FilteredInput(*(u_min + frac * (u_max - u_min)))
    nu = model.AuxInput(*(uf.as_array() + rng.uniform(-1.0, 1.0, size=2)
                          * 0.1 * (u_max - u_min)))
    u = np.array([rng.uniform(u_min[0], u_max[0]), rng.uniform(u_min[1], u_max[1])])
    return state, uf, nu, u


def _augmented_flow(config: ScenarioConfig):
    mass = config.unicycle.mass_M
    tau = config.filter.tau

    def flow(sample, s):
        state, uf, nu, _ = sample
        y0 = np.concatenate([state.as_array(), uf.as_array()])
        if s == 0.0:
            return y0
        nu_arr = nu.as_array()
        if s > 0:
            return integrate(lambda t, y: model.augmented_rhs(y, nu_arr, mass, tau), y0, 0.0, s)
        return integrate(lambda t, y: -model.augmented_rhs(y, nu_arr, mass, tau), y0, 0.0, -s)

    return flow


def _vehicle_flow(config: ScenarioConfig):
    mass = config.unicycle.mass_M

    def flow(sample, s):
        state, _, _, u = sample
        y0 = state.as_array()
        if s == 0.0:
            return y0
        if s > 0:
            return integrate(lambda t, y: model.unicycle_rhs(y, u, mass), y0, 0.0, s)
        return integrate(lambda t, y: -model.unicycle_rhs(y, u, mass), y0, 0.0, -s)

    return flow


def check_psi0_dot(config: ScenarioConfig, n_samples: int = 500,
                   seed: int = DEFAULT_SEED) -> DerivCheckReport:
    """psi0_dot closed form vs the flow derivative of psi0."""
    g = config.gains
    par = config.unicycle

    def analytic(sample):
        return con.eval_psi_chain(sample[0], None, par, g.k1, g.k2).psi0_dot

    def scalar(point):
        dx = point[0] - par.obstacle_x
        dy = point[1] - par.obstacle_y
        return dx * dx + dy * dy - par.obstacle_r**2

    return fd_check_row("psi0_dot", analytic, scalar, _vehicle_flow(config),
                        lambda rng: _sample_scenario(rng, config), n_samples, seed)


def check_fcbf_row(config: ScenarioConfig, n_samples: int = 500,
                   seed: int = DEFAULT_SEED + 1) -> DerivCheckReport:
    """fcbf_row's implied d/dt psi2 vs the augmented-flow derivative of psi2."""
    g = config.gains
    par = config.unicycle

    def analytic(sample):
        state, uf, nu, _ = sample
        row = con.fcbf_row(state, uf, par, config.filter, g.k1, g.k2, g.k3)
        psi2 = con.eval_psi_chain(state, None, par, g.k1, g.k2).psi2_at(uf.uf1, uf.uf2)
        z = np.array([nu.nu1, nu.nu2, 0.0])
        return row.value_at(z) - g.k3.gain * psi2

    def scalar(point):
        st = model.SystemState.from_array(point[:4])
        chain = con.eval_psi_chain(st, None, par, g.k1, g.k2)
        return chain.psi2_at(point[4], point[5])

    return fd_check_row("fcbf_row", analytic, scalar, _augmented_flow(config),
                        lambda rng: _sample_scenario(rng, config), n_samples, seed)


def check_clf_row_fcbf(config: ScenarioConfig, n_samples: int = 500,
                       seed: int = DEFAULT_SEED + 2) -> DerivCheckReport:
    """clf_row_fcbf's implied Vdot vs the augmented-flow derivative of V."""
    g = config.gains
    par = config.unicycle

    def analytic(sample):
        state, uf, nu, _ = sample
        row = con.clf_row_fcbf(state, uf, par, config.filter, g.c3)
        sgm = con.clf_surface(state, uf, par)
        # row: coeffs.[nu1,nu2,delta] <= rhs encodes Vdot + c3 V - delta <= 0
        z = np.array([nu.nu1, nu.nu2, 0.0])
        return row.value_at(z) - g.c3.gain * sgm * sgm

    def scalar(point):
        st = model.SystemState.from_array(point[:4])
        uf = model.FilteredInput(point[4], point[5])
        return con.clf_surface(st, uf, par) ** 2

    return fd_check_row("clf_row_fcbf", analytic, scalar, _augmented_flow(config),
                        lambda rng: _sample_scenario(rng, config), n_samples, seed)


def check_clf_row_hocbf(config: ScenarioConfig, n_samples: int = 500,
                        seed: int = DEFAULT_SEED + 3) -> DerivCheckReport:
    """clf_row_hocbf's implied Vdot vs the vehicle-flow derivative of V."""
    g = config.gains
    par = config.unicycle

    def analytic(sample):
        state, _, _, u = sample
        row = con.clf_row_hocbf(state, par, g.c3)
        dth = state.theta - con.goal_heading(state, par)
        z = np.array([u[0], u[1], 0.0])
        return row.value_at(z) - g.c3.gain * dth * dth

    def scalar(point):
        st = model.SystemState.from_array(point)
        return (st.theta - con.goal_heading(st, par)) ** 2

    return fd_check_row("clf_row_hocbf", analytic, scalar, _vehicle_flow(config),
                        lambda rng: _sample_scenario(rng, config), n_samples, seed)


def deriv_check_suite(config: ScenarioConfig, n_samples: int = 500,
                      seed: int = DEFAULT_SEED) -> list:
    """The four-derivative certification suite at a shared base seed."""
    return [
        check_psi0_dot(config, n_samples, seed),
        check_fcbf_row(config, n_samples, seed + 1),
        check_clf_row_fcbf(config, n_samples, seed + 2),
        check_clf_row_hocbf(config, n_samples, seed + 3),
    ]


def lipschitz_estimate(log: TrajectoryLog) -> SmoothnessReport:
    """Empirical per-channel input-rate statistics of a run log.

    For filtered runs also traces the pointwise rate bound
    max(alpha (uf - u_min), alpha (u_max - uf)) at each step start.
    """
    seq = log.input_sequence()
    dt = log.config.dt
    if len(seq) < 2:
        zeros = (0.0, 0.0)
        return SmoothnessReport(zeros, zeros, zeros, None)
    diffs = np.abs(np.diff(seq, axis=0))
    max_rate = tuple(float(v) for v in (diffs / dt).max(axis=0))
    tv = tuple(float(v) for v in diffs.sum(axis=0))
    bound_trace = None
    if log.config.controller is Controller.FCBF:
        alpha = log.config.gains.alpha.gain
        u_min, u_max = log.config.input_bounds.as_arrays()
        starts = seq[:-1]
        bound_trace = np.maximum(alpha * (starts - u_min), alpha * (u_max - starts))
    return SmoothnessReport(max_rate, tv, max_rate, bound_trace)


def safety_report(log: TrajectoryLog, params: model.UnicycleParams | None = None) -> SafetyReport:
    """Trajectory minima of b and psi1 with the first violation time, if any.

    Per-sample evaluation, recomputed from the logged states.
    """
    par = params if params is not None else log.config.unicycle
    k1 = log.config.gains.k1
    k2 = log.config.gains.k2
    min_b = math.inf
    min_psi1 = math.inf
    first_violation = None
    for rec in log.records:
        chain = con.eval_psi_chain(rec.state, None, par, k1, k2)
        min_b = min(min_b, chain.psi0)
        min_psi1 = min(min_psi1, chain.psi1)
        if first_violation is None and chain.psi0 < 0:
            first_violation = rec.t
    return SafetyReport(min_b, min_psi1, first_violation)


@dataclass
class ComparisonRow:
    label: str
    status: str
    n_steps: int
    min_b: float
    goal_distance: float
    max_du1_dt: float
    max_du2_dt: float
    mean_solve_time: float


@dataclass
class ComparisonTable:
    rows: list = field(default_factory=list)

    HEADER = ("label", "status", "steps", "min_b", "goal_dist",
              "max|du1|/dt", "max|du2|/dt", "mean_qp_time_s")

    def format(self) -> str:
        widths = [max(len(h), 12) for h in self.HEADER]
        out = ["  ".join(h.ljust(w) for h, w in zip(self.HEADER, widths))]
        for r in self.rows:
            cells = [r.label, r.status, str(r.n_steps), f"{r.min_b:.6g}",
                     f"{r.goal_distance:.6g}", f"{r.max_du1_dt:.6g}",
                     f"{r.max_du2_dt:.6g}", f"{r.mean_solve_time:.3g}"]
            out.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        return "\n".join(out)


def compare_controllers(logs: dict) -> ComparisonTable:
    """Side-by-side run metrics, one row per labelled log (insertion order)."""
    if len(logs) < 2:
        raise ValueError("comparison needs at least 2 logs")
    table = ComparisonTable()
    for label, log in logs.items():
        s = log.summary
        table.rows.append(ComparisonRow(
            label=label, status=s.status, n_steps=s.n_steps, min_b=s.min_b,
            goal_distance=s.terminal_goal_distance,
            max_du1_dt=s.max_du_dt[0], max_du2_dt=s.max_du_dt[1],
            mean_solve_time=s.mean_solve_time,
        ))
    return table

"""Closed-loop runner: assemble the controller QP each control period, solve,
hold the command over the interval, integrate the dynamics, and log.

The filtered controller solves for the filter command nu and integrates the
6-state augmented system; the direct benchmark controllers solve for u and
integrate the 4-state vehicle. On QP infeasibility the run stops and records
the status; no fallback input is substituted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import constraints as con
from . import model, qp

logger = logging.getLogger("fcbf.sim")


class StepSizeUnderflow(RuntimeError):
    """Adaptive integrator step shrank below 1e-12 s."""


class ConfigError(ValueError):
    """Scenario configuration failed validation."""


class Controller(Enum):
    FCBF = "fcbf"
    HOCBF = "hocbf"
    SP_HOCBF = "sp-hocbf"


@dataclass(frozen=True)
class GainSet:
    """Class-kappa gains for the barrier chains plus the tracking rate c3.

    alpha is the shared gain of all four input-bound rows.
    """

    k1: con.ClassKLinear
    k2: con.ClassKLinear
    k3: con.ClassKLinear
    alpha: con.ClassKLinear
    c3: con.ClassKLinear

    @staticmethod
    def from_values(k1: float, k2: float, k3: float, alpha: float, c3: float) -> "GainSet":
        K = con.ClassKLinear
        return GainSet(K(k1), K(k2), K(k3), K(alpha), K(c3))

    def validate(self) -> None:
        for name in ("k1", "k2", "k3", "alpha", "c3"):
            try:
                getattr(self, name).validate(strict=True)
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from exc


@dataclass(frozen=True)
class QpWeights:
    Q: float = 1e5
    smoothness_weight: float = 0.0

    def validate(self) -> None:
        if not self.Q > 0:
            raise ConfigError(f"Q must be positive, got {self.Q}")
        if self.smoothness_weight < 0:
            raise ConfigError(
                f"smoothness_weight must be nonnegative, got {self.smoothness_weight}"
            )


@dataclass(frozen=True)
class InputBounds:
    """Componentwise box for the (filtered) input; finite by assumption."""

    u_min: tuple
    u_max: tuple

    def validate(self) -> None:
        lo = np.asarray(self.u_min, dtype=float)
        hi = np.asarray(self.u_max, dtype=float)
        if lo.shape != (2,) or hi.shape != (2,):
            raise ConfigError("input bounds must have two channels")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("input bounds must be finite")
        if np.any(lo >= hi):
            raise ConfigError(f"u_min must be below u_max, got {lo} vs {hi}")

    def as_arrays(self) -> tuple:
        return np.asarray(self.u_min, dtype=float), np.asarray(self.u_max, dtype=float)


@dataclass(frozen=True)
class ScenarioConfig:
    dt: float
    horizon_T: float
    initial_state: model.SystemState
    initial_uf: model.FilteredInput
    controller: Controller
    gains: GainSet
    qp: QpWeights
    filter: model.FilterParams
    unicycle: model.UnicycleParams
    input_bounds: InputBounds

    def validate(self) -> None:
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.horizon_T < self.dt:
            raise ConfigError(f"horizon_T must be at least dt, got {self.horizon_T}")
        if not self.initial_state.is_finite():
            raise ConfigError("initial state must be finite")
        self.gains.validate()
        self.qp.validate()
        if self.qp.smoothness_weight > 0 and self.controller is not Controller.SP_HOCBF:
            raise ConfigError("smoothness_weight > 0 requires the sp-hocbf controller")
        try:
            self.filter.validate()
            self.unicycle.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.input_bounds.validate()

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon_T / self.dt - 1e-9))

    def with_controller(self, controller: Controller) -> "ScenarioConfig":
        w = 0.1 if controller is Controller.SP_HOCBF else 0.0
        return replace(self, controller=controller, qp=replace(self.qp, smoothness_weight=w))


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


def integrate(deriv_fn, initial, t0: float, t1: float, rtol: float = 1e-8,
              atol: float = 1e-10) -> np.ndarray:
    """Adaptive Dormand-Prince 4(5) integration of dy/dt = deriv_fn(t, y).

    Returns y(t1). Raises StepSizeUnderflow when the accepted step would drop
    below 1e-12 s.
    """
    if not t1 > t0:
        raise ValueError(f"t1 must exceed t0, got [{t0}, {t1}]")
    y = np.asarray(initial, dtype=float).copy()
    t = t0
    span = t1 - t0
    h = span * 0.01
    k = np.zeros((7, y.shape[0]))
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        if h < 1e-12:
            raise StepSizeUnderflow(f"step size {h:g} underflowed at t={t:g}")
        k[0] = deriv_fn(t, y)
        for i in range(1, 7):
            yi = y + h * (_DP_A[i] @ k[:i])
            k[i] = deriv_fn(t + _DP_C[i] * h, yi)
        y_new = y + h * (_DP_B5 @ k)
        err_vec = h * (_DP_ERR @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            h *= 0.2
        elif err <= 1.0:
            t += h
            y = y_new
            grow = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= grow
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return y


@dataclass
class StepRecord:
    """One control period (or the terminal sample) of a run."""

    t: float
    state: model.SystemState
    u: tuple | None = None          # direct controllers: applied input
    uf: tuple | None = None         # filtered controller: filter state at t
    nu: tuple | None = None
    delta: float | None = None
    b: float = float("nan")
    psi1: float = float("nan")
    psi2: float | None = None
    qp_status: str | None = None
    active_set: tuple = ()
    solve_time: float | None = None

    def applied_input(self) -> tuple | None:
        return self.uf if self.uf is not None else self.u


@dataclass
class RunSummary:
    status: str = "completed"
    n_steps: int = 0
    min_b: float = float("nan")
    max_du_dt: tuple = (0.0, 0.0)
    terminal_goal_distance: float = float("nan")
    cost_proxy: float = 0.0
    mean_solve_time: float = 0.0
    startup_ok: bool = True


@dataclass
class TrajectoryLog:
    config: ScenarioConfig
    records: list = field(default_factory=list)
    summary: RunSummary = field(default_factory=RunSummary)
    startup: con.StartupReport | None = None

    def input_sequence(self) -> np.ndarray:
        """Applied-input samples (filtered state for fcbf, u otherwise)."""
        seq = [r.applied_input() for r in self.records if r.applied_input() is not None]
        return np.array(seq, dtype=float) if seq else np.zeros((0, 2))

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


def _chain_at(state, uf, config):
    g = config.gains
    chain = con.eval_psi_chain(state, None, config.unicycle, g.k1, g.k2)
    psi2 = chain.psi2_at(uf[0], uf[1]) if uf is not None else None
    return chain, psi2


def step_fcbf(state: model.SystemState, uf: model.FilteredInput, config: ScenarioConfig,
              warm=None, start_point=None):
    """One filtered-controller period: build rows, solve for (nu, delta), hold
    nu and integrate the augmented system over dt.

    Returns (new_state, new_uf, record, solution).
    """
    g = config.gains
    rows = [con.fcbf_row(state, uf, config.unicycle, config.filter, g.k1, g.k2, g.k3)]
    rows += con.input_bound_rows(uf, config.filter, config.input_bounds.as_arrays(),
                                 g.alpha, g.alpha)
    rows.append(con.clf_row_fcbf(state, uf, config.unicycle, config.filter, g.c3))
    H, f = qp.build_cost(Controller.FCBF.value, config.qp.Q)
    problem = qp.QpProblem(H, f, rows)
    sol = qp.solve(problem, warm_start=warm, start_point=start_point)
    chain, psi2 = _chain_at(state, uf.as_array(), config)
    rec = StepRecord(
        t=float("nan"), state=state, uf=(uf.uf1, uf.uf2),
        b=chain.psi0, psi1=chain.psi1, psi2=psi2,
        qp_status=sol.status.value, active_set=sol.active_set, solve_time=sol.solve_time,
    )
    if sol.status is not qp.QpStatus.OPTIMAL:
        return state, uf, rec, sol
    nu = np.array(sol.z[:2])
    rec.nu = (float(nu[0]), float(nu[1]))
    rec.delta = float(sol.z[2])
    y0 = np.concatenate([state.as_array(), uf.as_array()])
    mass, tau = config.unicycle.mass_M, config.filter.tau
    y1 = integrate(lambda t, y: model.augmented_rhs(y, nu, mass, tau), y0, 0.0, config.dt)
    return model.SystemState.from_array(y1[:4]), model.FilteredInput.from_array(y1[4:]), rec, sol


def step_hocbf(state: model.SystemState, config: ScenarioConfig, prev_u=None,
               warm=None, start_point=None):
    """One direct-controller period (plain or smoothness-penalized).

    Returns (new_state, record, solution).
    """
    g = config.gains
    rows = [con.hocbf_row(state, config.unicycle, g.k1, g.k2),
            con.clf_row_hocbf(state, config.unicycle, g.c3)]
    H, f = qp.build_cost(config.controller.value, config.qp.Q,
                         config.qp.smoothness_weight, prev_u)
    u_min, u_max = config.input_bounds.as_arrays()
    lb = np.array([u_min[0], u_min[1], -np.inf])
    ub = np.array([u_max[0], u_max[1], np.inf])
    problem = qp.QpProblem(H, f, rows, lb, ub)
    sol = qp.solve(problem, warm_start=warm, start_point=start_point)
    chain, _ = _chain_at(state, None, config)
    rec = StepRecord(
        t=float("nan"), state=state,
        b=chain.psi0, psi1=chain.psi1,
        qp_status=sol.status.value, active_set=sol.active_set, solve_time=sol.solve_time,
    )
    if sol.status is not qp.QpStatus.OPTIMAL:
        return state, rec, sol
    u = np.array(sol.z[:2])
    rec.u = (float(u[0]), float(u[1]))
    rec.delta = float(sol.z[2])
    rec.psi2 = chain.psi2_at(u[0], u[1])
    mass = config.unicycle.mass_M
    y1 = integrate(lambda t, y: model.unicycle_rhs(y, u, mass),
                   state.as_array(), 0.0, config.dt)
    return model.SystemState.from_array(y1), rec, sol


def run(config: ScenarioConfig) -> TrajectoryLog:
    """Execute the closed loop for ceil(T/dt) periods or until infeasibility.

    The startup set-membership report is logged; a failing report warns and
    the run proceeds.
    """
    config.validate()
    g = config.gains
    log = TrajectoryLog(config=config)
    log.startup = con.startup_check(
        config.initial_state, config.initial_uf, config.unicycle,
        g.k1, g.k2, config.input_bounds.as_arrays(),
    )
    log.summary.startup_ok = log.startup.all_ok
    if not log.startup.all_ok:
        logger.warning("startup set membership failed:\n%s", log.startup.format())

    state = config.initial_state
    uf = config.initial_uf
    prev_u = (0.0, 0.0)
    warm = None
    start_point = None
    fcbf = config.controller is Controller.FCBF
    status = "completed"
    cost = 0.0
    solve_times = []
    steps_done = 0
    for k in range(config.n_steps):
        if fcbf:
            state_next, uf_next, rec, sol = step_fcbf(state, uf, config, warm, start_point)
        else:
            state_next, rec, sol = step_hocbf(state, config, prev_u, warm, start_point)
            uf_next = uf
        rec.t = k * config.dt
        log.records.append(rec)
        solve_times.append(sol.solve_time)
        if sol.status is not qp.QpStatus.OPTIMAL:
            # the failed step's record is the truncated log's last row
            status = sol.status.value
            logger.warning("QP %s at t=%.3f s (step %d): %s",
                           sol.status.value, rec.t, k, sol.diagnostics)
            break
        warm = sol.active_set
        start_point = sol.z
        decision = rec.nu if fcbf else rec.u
        cost += (decision[0] ** 2 + decision[1] ** 2 + config.qp.Q * rec.delta ** 2) * config.dt
        if not fcbf:
            prev_u = rec.u
        state, uf = state_next, uf_next
        steps_done += 1

    if status == "completed":
        chain, psi2 = _chain_at(state, uf.as_array() if fcbf else None, config)
        log.records.append(StepRecord(
            t=config.n_steps * config.dt, state=state,
            uf=(uf.uf1, uf.uf2) if fcbf else None,
            b=chain.psi0, psi1=chain.psi1, psi2=psi2 if fcbf else None,
        ))

    summary = log.summary
    summary.status = status
    summary.n_steps = steps_done
    summary.min_b = min(r.b for r in log.records)
    seq = log.input_sequence()
    if len(seq) >= 2:
        rates = np.abs(np.diff(seq, axis=0)) / config.dt
        summary.max_du_dt = (float(rates[:, 0].max()), float(rates[:, 1].max()))
    summary.terminal_goal_distance = math.hypot(
        log.records[-1].state.x - config.unicycle.goal_x,
        log.records[-1].state.y - config.unicycle.goal_y,
    )
    summary.cost_proxy = cost
    summary.mean_solve_time = float(np.mean(solve_times)) if solve_times else 0.0
    return log

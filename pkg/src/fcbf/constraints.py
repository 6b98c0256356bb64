"""Affine inequality rows for the per-step safety QP.

Builds, from closed forms:

* the second-order barrier chain psi0 -> psi1 -> psi2 for a circular
  obstacle under the full unicycle dynamics,
* the filtered-barrier row in the filter command nu (time derivative of
  psi2 taken along the augmented vehicle+filter flow),
* the per-channel rate/bound rows that keep the filtered input inside its
  box and rate-limited, and
* the relaxed tracking (Lyapunov) rows for both controller families.

Decision-vector layouts are fixed:
    filtered controller      z = [nu1, nu2, delta]
    direct(-penalty) variant z = [u1, u2, delta]
with delta a free relaxation variable (penalized in the cost, not sign
constrained).

Every derivative used here is an exact hand derivation; the verify module
certifies each one against finite differences of the integrated flow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import FilteredInput, FilterParams, SystemState, UnicycleParams

logger = logging.getLogger("fcbf.constraints")

GE = "GE"
LE = "LE"


class GoalSingularity(ValueError):
    """Goal heading undefined: state is (numerically) on top of the goal point."""


@dataclass(frozen=True)
class ClassKLinear:
    """Linear class-kappa function alpha(s) = gain * s, gain >= 0 [1/s].

    A strict class-kappa function needs gain > 0; configuration validation
    rejects gain == 0.
    """

    gain: float

    def validate(self, strict: bool = True) -> None:
        if self.gain < 0 or (strict and self.gain == 0):
            want = "positive" if strict else "nonnegative"
            raise ValueError(f"class-kappa gain must be {want}, got {self.gain}")

    def __call__(self, s: float) -> float:
        return self.gain * s


@dataclass
class ConstraintRow:
    """One affine inequality over the QP decision vector.

    sense GE means coeffs @ z >= rhs; sense LE means coeffs @ z <= rhs.
    """

    coeffs: np.ndarray
    rhs: float
    sense: str = GE
    label: str = ""

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.sense not in (GE, LE):
            raise ValueError(f"sense must be GE or LE, got {self.sense!r}")

    def value_at(self, z) -> float:
        """coeffs @ z - rhs (the signed affine expression, before the sense)."""
        return float(self.coeffs @ np.asarray(z, dtype=float) - self.rhs)

    def residual(self, z) -> float:
        """Feasibility margin at z: >= 0 iff the row is satisfied."""
        val = self.value_at(z)
        return val if self.sense == GE else -val


@dataclass(frozen=True)
class PsiChainValues:
    """Barrier chain at one state, with psi2 split into its affine pieces.

    psi2(x, u) = psi2_const + psi2_coeff_u1 * u1 + psi2_coeff_u2 * u2.
    The decomposition does not depend on the input.
    """

    psi0: float
    psi0_dot: float
    psi1: float
    psi2_const: float
    psi2_coeff_u1: float
    psi2_coeff_u2: float

    def psi2_at(self, u1: float, u2: float) -> float:
        return self.psi2_const + self.psi2_coeff_u1 * u1 + self.psi2_coeff_u2 * u2


def eval_psi_chain(
    state: SystemState,
    uf: FilteredInput | None,
    params: UnicycleParams,
    k1: ClassKLinear,
    k2: ClassKLinear,
) -> PsiChainValues:
    """Evaluate the obstacle barrier chain at a state.

    psi0      = (x-xo)^2 + (y-yo)^2 - ro^2
    psi0_dot  = 2 v ((x-xo) cos(theta) + (y-yo) sin(theta))
    psi1      = psi0_dot + k1 psi0
    psi2(x,u) = 2 v^2 + (k1+k2) psi0_dot + k1 k2 psi0
                + 2 v ((y-yo) cos - (x-xo) sin) u1
                + (2/M) ((x-xo) cos + (y-yo) sin) u2

    The uf argument is accepted for interface symmetry; the decomposition is
    input independent.
    """
    del uf
    c, s = math.cos(state.theta), math.sin(state.theta)
    dx = state.x - params.obstacle_x
    dy = state.y - params.obstacle_y
    v = state.v
    psi0 = dx * dx + dy * dy - params.obstacle_r**2
    psi0_dot = 2.0 * v * (dx * c + dy * s)
    psi1 = psi0_dot + k1.gain * psi0
    psi2_const = 2.0 * v * v + (k1.gain + k2.gain) * psi0_dot + k1.gain * k2.gain * psi0
    coeff_u1 = 2.0 * v * (dy * c - dx * s)
    coeff_u2 = (2.0 / params.mass_M) * (dx * c + dy * s)
    return PsiChainValues(psi0, psi0_dot, psi1, psi2_const, coeff_u1, coeff_u2)


def psi2_gradient(
    state: SystemState,
    uf: FilteredInput,
    params: UnicycleParams,
    k1: ClassKLinear,
    k2: ClassKLinear,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of psi2(x, uf) w.r.t. the vehicle state and w.r.t. uf.

    Returns (grad_x: 4-vector over (x, y, theta, v), grad_uf: 2-vector).
    """
    c, s = math.cos(state.theta), math.sin(state.theta)
    dx = state.x - params.obstacle_x
    dy = state.y - params.obstacle_y
    v = state.v
    M = params.mass_M
    ks = k1.gain + k2.gain
    kp = k1.gain * k2.gain
    u1, u2 = uf.uf1, uf.uf2

    radial = dx * c + dy * s          # projection of offset on heading
    tangent = dy * c - dx * s         # projection of offset on left normal

    grad_x = np.array(
        [
            ks * 2.0 * v * c + kp * 2.0 * dx + u1 * (-2.0 * v * s) + u2 * (2.0 * c / M),
            ks * 2.0 * v * s + kp * 2.0 * dy + u1 * (2.0 * v * c) + u2 * (2.0 * s / M),
            ks * 2.0 * v * tangent + u1 * (-2.0 * v * radial) + u2 * (2.0 / M) * tangent,
            4.0 * v + ks * 2.0 * radial + u1 * 2.0 * tangent,
        ]
    )
    grad_uf = np.array([2.0 * v * tangent, (2.0 / M) * radial])
    return grad_x, grad_uf


def hocbf_row(
    state: SystemState,
    params: UnicycleParams,
    k1: ClassKLinear,
    k2: ClassKLinear,
) -> ConstraintRow:
    """Obstacle row for the direct controller: psi2(x, u) >= 0 over [u1, u2, delta]."""
    chain = eval_psi_chain(state, None, params, k1, k2)
    coeffs = np.array([chain.psi2_coeff_u1, chain.psi2_coeff_u2, 0.0])
    return ConstraintRow(coeffs, -chain.psi2_const, GE, label="hocbf")


def fcbf_row(
    state: SystemState,
    uf: FilteredInput,
    params: UnicycleParams,
    fp: FilterParams,
    k1: ClassKLinear,
    k2: ClassKLinear,
    k3: ClassKLinear,
) -> ConstraintRow:
    """Filtered barrier row over [nu1, nu2, delta].

    Encodes d/dt psi2 + k3 psi2 >= 0 with the time derivative taken along the
    augmented flow:

        d/dt psi2 = grad_x psi2 . xdot(state, uf) + grad_uf psi2 . (nu - uf)/tau

    so the nu_i coefficient is (d psi2 / d uf_i) / tau.
    """
    fp.require_first_order()
    chain = eval_psi_chain(state, uf, params, k1, k2)
    grad_x, grad_uf = psi2_gradient(state, uf, params, k1, k2)
    xdot = np.array(
        [
            state.v * math.cos(state.theta),
            state.v * math.sin(state.theta),
            uf.uf1,
            uf.uf2 / params.mass_M,
        ]
    )
    psi2 = chain.psi2_at(uf.uf1, uf.uf2)
    drift = float(grad_x @ xdot) - float(grad_uf @ uf.as_array()) / fp.tau
    coeffs = np.array([grad_uf[0] / fp.tau, grad_uf[1] / fp.tau, 0.0])
    if float(np.hypot(coeffs[0], coeffs[1])) < 1e-10:
        logger.info(
            "fcbf row has near-zero command coefficients at state %s (boundary "
            "regularity assumption close to violated)", state
        )
    return ConstraintRow(coeffs, -(drift + k3.gain * psi2), GE, label="fcbf")


def input_bound_rows(
    uf: FilteredInput,
    fp: FilterParams,
    bounds: tuple,
    kmin: ClassKLinear,
    kmax: ClassKLinear,
) -> list[ConstraintRow]:
    """Rate/bound rows over [nu1, nu2, delta], two per channel.

    bounds is (u_min, u_max), each a 2-sequence. For channel i:

        (nu_i - uf_i)/tau + kmin (uf_i - u_min_i) >= 0
       -(nu_i - uf_i)/tau + kmax (u_max_i - uf_i) >= 0

    Together they keep uf inside its box and cap |duf_i/dt| by
    max(kmin (uf_i - u_min_i), kmax (u_max_i - uf_i)).
    Order: [min ch1, max ch1, min ch2, max ch2].
    """
    fp.require_first_order()
    u_min, u_max = (np.asarray(b, dtype=float) for b in bounds)
    uf_arr = uf.as_array()
    if np.any(uf_arr < u_min - 1e-12) or np.any(uf_arr > u_max + 1e-12):
        logger.warning("filtered input %s outside bounds [%s, %s]", uf_arr, u_min, u_max)
    rows = []
    for i in range(2):
        e = np.zeros(3)
        e[i] = 1.0 / fp.tau
        rows.append(
            ConstraintRow(
                e.copy(),
                uf_arr[i] / fp.tau - kmin.gain * (uf_arr[i] - u_min[i]),
                GE,
                label=f"bound_min_{i + 1}",
            )
        )
        rows.append(
            ConstraintRow(
                -e,
                -uf_arr[i] / fp.tau - kmax.gain * (u_max[i] - uf_arr[i]),
                GE,
                label=f"bound_max_{i + 1}",
            )
        )
    return rows


def goal_heading(state: SystemState, params: UnicycleParams) -> float:
    """Bearing from the vehicle to the goal, via two-argument arctangent."""
    gx = params.goal_x - state.x
    gy = params.goal_y - state.y
    if gx * gx + gy * gy < 1e-9:
        raise GoalSingularity(
            f"goal heading undefined: state ({state.x}, {state.y}) is on the goal point"
        )
    return math.atan2(gy, gx)


def goal_heading_rate(state: SystemState, params: UnicycleParams) -> float:
    """Time derivative of the goal bearing under the vehicle's own motion."""
    gx = params.goal_x - state.x
    gy = params.goal_y - state.y
    d2 = gx * gx + gy * gy
    if d2 < 1e-9:
        raise GoalSingularity(
            f"goal heading undefined: state ({state.x}, {state.y}) is on the goal point"
        )
    return state.v * (gy * math.cos(state.theta) - gx * math.sin(state.theta)) / d2


def clf_surface(state: SystemState, uf: FilteredInput, params: UnicycleParams) -> float:
    """Sliding surface s = 10 (theta - theta_d) + uf1 + uf2; V = s^2."""
    return 10.0 * (state.theta - goal_heading(state, params)) + uf.uf1 + uf.uf2


def clf_row_fcbf(
    state: SystemState,
    uf: FilteredInput,
    params: UnicycleParams,
    fp: FilterParams,
    c3: ClassKLinear,
) -> ConstraintRow:
    """Relaxed tracking row over [nu1, nu2, delta]: Vdot + c3 V <= delta.

    With s = 10 (theta - theta_d) + uf1 + uf2:
        V    = s^2
        Vdot = 2 s [10 (uf1 - theta_d_dot) + (nu1 - uf1)/tau + (nu2 - uf2)/tau]
    """
    fp.require_first_order()
    sgm = clf_surface(state, uf, params)
    thd_dot = goal_heading_rate(state, params)
    vdot_const = 2.0 * sgm * (10.0 * (uf.uf1 - thd_dot) - (uf.uf1 + uf.uf2) / fp.tau)
    coeffs = np.array([2.0 * sgm / fp.tau, 2.0 * sgm / fp.tau, -1.0])
    return ConstraintRow(coeffs, -(vdot_const + c3.gain * sgm * sgm), LE, label="clf")


def clf_row_hocbf(
    state: SystemState,
    params: UnicycleParams,
    c3: ClassKLinear,
) -> ConstraintRow:
    """Relaxed tracking row over [u1, u2, delta] for V = (theta - theta_d)^2:

        2 (theta - theta_d)(u1 - theta_d_dot) + c3 (theta - theta_d)^2 <= delta.
    """
    dth = state.theta - goal_heading(state, params)
    thd_dot = goal_heading_rate(state, params)
    coeffs = np.array([2.0 * dth, 0.0, -1.0])
    return ConstraintRow(coeffs, 2.0 * dth * thd_dot - c3.gain * dth * dth, LE, label="clf")


@dataclass
class StartupEntry:
    name: str
    value: float
    ok: bool


@dataclass
class StartupReport:
    """Initial set-membership report: which barrier sets contain the start."""

    entries: list[StartupEntry] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def format(self) -> str:
        lines = []
        for e in self.entries:
            lines.append(f"  {'ok ' if e.ok else 'FAIL'} {e.name} = {e.value:.6g}")
        return "\n".join(lines)


def startup_check(
    state0: SystemState,
    uf0: FilteredInput,
    params: UnicycleParams,
    k1: ClassKLinear,
    k2: ClassKLinear,
    bounds: tuple,
) -> StartupReport:
    """Evaluate the initial set memberships required by the invariance results.

    Reports psi0, psi1, psi2(x0, uf0), and the per-channel bound margins
    uf_i - u_min_i and u_max_i - uf_i. Reporting only; the caller decides
    whether to proceed.
    """
    chain = eval_psi_chain(state0, uf0, params, k1, k2)
    psi2 = chain.psi2_at(uf0.uf1, uf0.uf2)
    report = StartupReport()
    report.entries.append(StartupEntry("psi0(x0)", chain.psi0, chain.psi0 >= 0))
    report.entries.append(StartupEntry("psi1(x0)", chain.psi1, chain.psi1 >= 0))
    report.entries.append(StartupEntry("psi2(x0, uf0)", psi2, psi2 >= 0))
    u_min, u_max = (np.asarray(b, dtype=float) for b in bounds)
    uf_arr = uf0.as_array()
    for i in range(2):
        lo = uf_arr[i] - u_min[i]
        hi = u_max[i] - uf_arr[i]
        report.entries.append(StartupEntry(f"uf{i + 1} - u{i + 1}_min", lo, lo >= 0))
        report.entries.append(StartupEntry(f"u{i + 1}_max - uf{i + 1}", hi, hi >= 0))
    return report

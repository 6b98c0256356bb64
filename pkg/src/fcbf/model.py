"""Unicycle dynamics, the first-order input regularization filter, and the
augmented (vehicle + filter) system.

State conventions:
    vehicle state  (x, y, theta, v)       -- planar position [m], heading [rad],
                                             linear speed [m/s]
    filtered input (uf1, uf2)             -- angular velocity [rad/s], driving
                                             force [N]; evolves as filter state
    filter command (nu1, nu2)             -- raw QP decision feeding the filter

All quantities SI. Heading is NOT wrapped: theta evolves continuously so that
barrier-chain values stay smooth along trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnsupportedFilterOrder(ValueError):
    """Raised when a filter relative degree other than 1 is exercised."""


@dataclass(frozen=True)
class SystemState:
    """Unicycle state: position east/north [m], heading [rad], speed [m/s]."""

    x: float
    y: float
    theta: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v], dtype=float)

    @staticmethod
    def from_array(arr) -> "SystemState":
        x, y, theta, v = (float(a) for a in arr)
        return SystemState(x, y, theta, v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


@dataclass(frozen=True)
class FilteredInput:
    """Filtered (applied) input: angular velocity [rad/s] and force [N]."""

    uf1: float
    uf2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.uf1, self.uf2], dtype=float)

    @staticmethod
    def from_array(arr) -> "FilteredInput":
        a, b = (float(v) for v in arr)
        return FilteredInput(a, b)


@dataclass(frozen=True)
class AuxInput:
    """Filter command (nu1, nu2); unconstrained by design."""

    nu1: float
    nu2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.nu1, self.nu2], dtype=float)

    @staticmethod
    def from_array(arr) -> "AuxInput":
        a, b = (float(v) for v in arr)
        return AuxInput(a, b)


@dataclass(frozen=True)
class UnicycleParams:
    """Vehicle mass, circular obstacle, and goal description.

    mass_M [kg], obstacle center/radius [m], goal point [m], goal tolerance [m].
    """

    mass_M: float = 1650.0
    obstacle_x: float = 0.0
    obstacle_y: float = 0.0
    obstacle_r: float = 1.0
    goal_x: float = 1.5
    goal_y: float = 0.0
    goal_tol_rd: float = 0.1

    def validate(self) -> None:
        if not self.mass_M > 0:
            raise ValueError(f"mass_M must be positive, got {self.mass_M}")
        if not self.obstacle_r > 0:
            raise ValueError(f"obstacle_r must be positive, got {self.obstacle_r}")
        if not self.goal_tol_rd > 0:
            raise ValueError(f"goal_tol_rd must be positive, got {self.goal_tol_rd}")


@dataclass(frozen=True)
class FilterParams:
    """First-order low-pass filter: time constant tau [s], relative degree order_ma.

    Only order_ma = 1 is exercised end to end; higher orders are carried in the
    data model but rejected when used.
    """

    tau: float = 2e-3
    order_ma: int = 1

    def validate(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.order_ma < 1:
            raise ValueError(f"order_ma must be >= 1, got {self.order_ma}")

    def require_first_order(self) -> None:
        if self.order_ma != 1:
            raise UnsupportedFilterOrder(
                f"only a first-order filter chain is implemented (order_ma=1), "
                f"got order_ma={self.order_ma}"
            )


def unicycle_rhs(y: np.ndarray, u: np.ndarray, mass: float) -> np.ndarray:
    """Array-level vehicle vector field: y = (x, y, theta, v), u = (u1, u2)."""
    return np.array(
        [y[3] * np.cos(y[2]), y[3] * np.sin(y[2]), u[0], u[1] / mass]
    )


def filter_rhs(uf: np.ndarray, nu: np.ndarray, tau: float) -> np.ndarray:
    """Array-level filter vector field: duf/dt = (nu - uf) / tau."""
    return (nu - uf) / tau


def augmented_rhs(y6: np.ndarray, nu: np.ndarray, mass: float, tau: float) -> np.ndarray:
    """Array-level 6-state field: vehicle driven by uf = y6[4:], filter by nu."""
    out = np.empty(6)
    out[:4] = unicycle_rhs(y6[:4], y6[4:], mass)
    out[4:] = filter_rhs(y6[4:], nu, tau)
    return out


def unicycle_deriv(state: SystemState, inp: FilteredInput, params: UnicycleParams) -> np.ndarray:
    """Time derivative of the vehicle state under input (u1, u2).

    Returns (v cos(theta), v sin(theta), u1, u2 / M).
    """
    return unicycle_rhs(state.as_array(), inp.as_array(), params.mass_M)


def filter_deriv(uf: FilteredInput, nu: AuxInput, fp: FilterParams) -> np.ndarray:
    """Time derivative of the filtered input: (nu - uf) / tau componentwise."""
    fp.require_first_order()
    return filter_rhs(uf.as_array(), nu.as_array(), fp.tau)


def augmented_deriv(
    state: SystemState,
    uf: FilteredInput,
    nu: AuxInput,
    params: UnicycleParams,
    fp: FilterParams,
) -> np.ndarray:
    """Time derivative of the 6-dim augmented state (vehicle + filter).

    The vehicle sees uf as its input; the filter is commanded by nu.
    """
    fp.require_first_order()
    y6 = np.concatenate([state.as_array(), uf.as_array()])
    return augmented_rhs(y6, nu.as_array(), params.mass_M, fp.tau)

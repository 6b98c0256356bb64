import math

import pytest

from fcbf.model import FilteredInput, FilterParams, SystemState, UnicycleParams
from fcbf.sim import Controller, GainSet, InputBounds, QpWeights, ScenarioConfig

MASS = 1650.0
BOUNDS = InputBounds((-5.0, -5.0 * MASS), (5.0, 5.0 * MASS))


def make_config(controller=Controller.FCBF, k1=10.0, k2=10.0, k3=1.0, alpha=1.0,
                c3=10.0, tau=2e-3, theta0=math.pi / 12, v0=2.0, dt=0.1, T=5.0,
                Q=1e5, smoothness=None) -> ScenarioConfig:
    if smoothness is None:
        smoothness = 0.1 if controller is Controller.SP_HOCBF else 0.0
    return ScenarioConfig(
        dt=dt, horizon_T=T,
        initial_state=SystemState(-3.0, 0.0, theta0, v0),
        initial_uf=FilteredInput(0.0, 0.0),
        controller=controller,
        gains=GainSet.from_values(k1, k2, k3, alpha, c3),
        qp=QpWeights(Q, smoothness),
        filter=FilterParams(tau, 1),
        unicycle=UnicycleParams(),
        input_bounds=BOUNDS,
    )


@pytest.fixture
def paper_fcbf():
    """Exact published scenario for the filtered controller."""
    return make_config(Controller.FCBF)


@pytest.fixture
def paper_hocbf():
    return make_config(Controller.HOCBF)


@pytest.fixture
def paper_sp_hocbf():
    return make_config(Controller.SP_HOCBF)


@pytest.fixture
def smooth_fcbf():
    """Gentler-gain scenario on which the filtered controller completes."""
    return make_config(Controller.FCBF, k1=4.0, k2=4.0, k3=2.0, alpha=5.0)


@pytest.fixture
def smooth_hocbf():
    return make_config(Controller.HOCBF, k1=4.0, k2=4.0)


@pytest.fixture
def smooth_sp_hocbf():
    return make_config(Controller.SP_HOCBF, k1=4.0, k2=4.0)

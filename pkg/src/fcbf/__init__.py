"""Safety-filter control library: filtered control barrier functions on top of
high-order barrier chains, a dense active-set QP solver, a closed-loop
unicycle simulation harness, and finite-difference verification oracles.
"""

from .constraints import (
    ClassKLinear,
    ConstraintRow,
    GoalSingularity,
    PsiChainValues,
    clf_row_fcbf,
    clf_row_hocbf,
    eval_psi_chain,
    fcbf_row,
    hocbf_row,
    input_bound_rows,
    startup_check,
)
from .model import (
    AuxInput,
    FilteredInput,
    FilterParams,
    SystemState,
    UnicycleParams,
    UnsupportedFilterOrder,
    augmented_deriv,
    filter_deriv,
    unicycle_deriv,
)
from .qp import BadProblem, MissingPrevInput, QpProblem, QpSolution, QpStatus, build_cost, kkt_check, solve
from .sim import (
    ConfigError,
    Controller,
    GainSet,
    InputBounds,
    QpWeights,
    ScenarioConfig,
    StepSizeUnderflow,
    TrajectoryLog,
    integrate,
    run,
    step_fcbf,
    step_hocbf,
)
from .verify import (
    DerivCheckReport,
    SmoothnessReport,
    compare_controllers,
    deriv_check_suite,
    fd_check_row,
    lipschitz_estimate,
    safety_report,
)

__version__ = "0.1.0"

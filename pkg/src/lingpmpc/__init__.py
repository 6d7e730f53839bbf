"""GP tracking MPC through linearized-GP sequential convex programming.

The pipeline: an SE-kernel GP learned from input/output data
(:mod:`lingpmpc.gp`), its local value-and-gradient posterior
(:mod:`lingpmpc.lingp`), autoregressive mean rollouts
(:mod:`lingpmpc.dynamics`), a dense conic interior-point solver
(:mod:`lingpmpc.conic`), the trust-region SCP controller
(:mod:`lingpmpc.scp`), and a closed-loop benchmark harness with CLI
(:mod:`lingpmpc.bench`, :mod:`lingpmpc.cli`).
"""

from .bench import BenchResult, ClosedLoopLog, benchmark, oracle_solve, run_closed_loop
from .conic import ConicProgram, ConicSolution, SocConstraint, SolverSettings, solve
from .dynamics import ArSpec, ArState, Rollout, delta_state, gp_input, rollout_mean
from .exceptions import (
    FactorizationError,
    FitError,
    InputContractError,
    NumericalConsistencyError,
    SubproblemError,
)
from .gp import (
    FitConfig,
    GpModel,
    fit,
    gp_predict,
    load_model,
    load_training_data,
    log_marginal_likelihood,
    save_model,
    save_training_data,
)
from .kernels import KernelHyper, se_kernel, se_kernel_derivatives
from .lingp import LinGp, lingp_build, lingp_eval
from .plant import PlantState, generate_training_data, make_reference, plant_step
from .scp import (
    ScpConfig,
    ScpReport,
    TrackingMpcSpec,
    build_subproblem,
    penalty_cost,
    scp_solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]

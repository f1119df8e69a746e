"""Multi-task adaptive LQR with a shared learned representation.

A fleet of linear systems whose dynamics share a low-dimensional basis
is controlled by certainty equivalence over doubling epochs; the basis
is learned jointly by federated preconditioned gradient rounds, and the
cumulative regret against each agent's optimal controller is tracked.
"""

from ._kernels import NUMBA_ACTIVE, backend_name
from .errors import (
    ConfigError,
    ConvergenceError,
    DataBudgetError,
    DegenerateFactorizationError,
    DimensionError,
    ExcitationError,
    ExperimentError,
    FleetConstructionError,
    FleetLqrError,
    InstabilityError,
    LedgerOrderError,
    NonStabilizableError,
    NumericBlowupError,
    SetupError,
    ToleranceError,
)
from .fleet import (
    CartpoleParams,
    Fleet,
    SharedBasis,
    build_cartpole_fleet,
    build_synthetic_fleet,
    excitation_level,
    extract_shared_basis,
    linearize_cartpole,
    load_fleet_text,
    save_fleet_text,
)
from .harness import (
    ExperimentConfig,
    RegretCurve,
    fit_growth_exponent,
    parse_config,
    read_regret_csv,
    run_experiment,
    time_grid,
    write_regret_csv,
)
from .lqrcore import (
    CostParams,
    StateSpace,
    avg_cost,
    ce_suboptimality_bound,
    dare_solve,
    dlyap_solve,
    lqr_gain,
    spectral_radius,
)
from .matkit import (
    orthonormal_complement,
    perturbed_basis,
    random_basis_at_distance,
    pinv,
    subspace_distance,
    thin_qr,
    vec,
    vec_inv,
)
from .mtlearn import (
    CovStats,
    DfwReport,
    dfw_gradient,
    dfw_gradient_raw,
    dfw_round,
    dfw_run,
    full_ls,
    ls_weights,
    theory_step_size,
)
from .orchestrator import (
    EpochDiagnostics,
    EpochSchedule,
    ExplorationSchedule,
    run_multitask,
    run_singletask_baseline,
    sigma_schedule,
)
from .simkit import (
    AbortState,
    GaussianNoise,
    RegretLedger,
    Trajectory,
    ZeroNoise,
    accumulate_cost,
    record_regret,
    record_regret_block,
    rollout,
    stage_costs,
)

__version__ = "0.1.0"

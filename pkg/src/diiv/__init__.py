"""Difference-in-instrumental-variables (DIIV) estimation toolkit."""

from .errors import (
    DiivError,
    FrameImbalance,
    MissingCell,
    NonBinary,
    OrderingViolation,
    RankDeficient,
    RelevanceViolated,
    SchemaError,
    WeakContrast,
    ZeroDenominator,
)
from .estimand import (
    DiivResult,
    DirectedDesign,
    EdgeContrast,
    align_instrument,
    aligned_cell_means,
    diiv_estimate,
    diiv_from_cells,
    diiv_ratio,
    edge_contrasts,
    flip_instrument,
    lambda_weight,
    pool_and_flip,
    pooled_iv,
)
from .microsim import (
    PRESETS,
    AnalyticShares,
    EnvironmentConfig,
    MonteCarloSummary,
    ResponseSpec,
    TypeProfile,
    analytic_shares,
    overidentified_iv,
    run_monte_carlo,
    simulate_trial,
)
from .table import ObservationTable
from .twostage import (
    DerivedRegressors,
    DesignMatrix,
    TwoStageReport,
    composite_xor_instrument,
    derived_regressors,
    iv_fit,
    ols_fit,
    two_stage_joint,
    two_stage_parallel,
)

__version__ = "0.1.0"

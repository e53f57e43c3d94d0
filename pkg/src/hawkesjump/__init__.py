"""Bivariate-Hawkes clustered-jump asset-price model: simulation, estimation,
measure change with jump risk premia, transform pricing, implied-vol
calibration, and goodness-of-fit analytics."""

from ._version import __version__
from .analytics import (
    QqData,
    QqSide,
    RegressionReport,
    cost_of_carry,
    default_hac_lag,
    first_difference,
    hac_regression,
    ks_critical_value,
    ks_statistic,
    time_change_residuals,
)
from .calibrate import (
    CalibConfig,
    CalibrationResult,
    Quote,
    QuoteSlice,
    StageOne,
    calibrate,
    objective,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateSample,
    DomainError,
    EmptySide,
    ExplosionGuard,
    InfeasibleRegion,
    NonConvergence,
    NumericDomain,
    NumericError,
    OutOfBounds,
    QuadratureFailure,
    RankDeficient,
    SingularMatrix,
    StepFailure,
    StripViolation,
)
from .estimate import (
    DAYS_PER_YEAR,
    MleResult,
    OptimizerConfig,
    PotResult,
    ReturnSeries,
    ThresholdGrid,
    estimate_eta,
    filter_intensities,
    fit_mle,
    partial_loglik,
    pot_filter,
)
from .measure import QParams, RiskPremiumParams, jump_risk_premia, to_q_params
from .model import (
    NEGATIVE,
    POSITIVE,
    IntensityDynamics,
    IntensityState,
    JumpLaw,
    ModelParams,
    compensator,
    laplace,
)
from .pricing import (
    CALL,
    PUT,
    IvPoint,
    OptionSpec,
    QuadratureConfig,
    bs_price_vega,
    implied_vol,
    iv_surface,
    mgf,
    price_option,
)
from .simulate import (
    EventSeries,
    JumpEvent,
    SimPath,
    simulate_events,
    simulate_path,
    simulate_paths,
    simulate_terminal,
)

__all__ = [name for name in dir() if not name.startswith("_")]

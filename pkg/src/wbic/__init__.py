"""Model evidence by WBIC and power posteriors."""
from .core import (
    METHODS,
    BracketingError,
    ChainConfig,
    DevianceTrace,
    DomainError,
    EvidenceEstimate,
    TemperatureSchedule,
    TemperedModel,
    batch_means_se,
    chain_seed,
    expected_log_deviance,
    power_schedule,
    uniform_schedule,
    variance_log_deviance,
    wbic_temperature,
)
from .estimators import (
    IdealizedComparison,
    PPRunResult,
    SamplerError,
    idealized_comparison_normal,
    optimal_temperature_from_run,
    optimal_temperature_search,
    pp_corrected,
    pp_standard,
    run_power_posterior,
    wbic_estimate,
)
from .normal import (
    NormalModel,
    NormalModelSpec,
    log_evidence_normal,
    optimal_temperature_normal,
)
from .regression import LinRegModel, LinRegModelSpec, exact_log_evidence_linreg
from .logistic import LogisticModel, LogisticModelSpec
from .mixture import MixtureModel, MixtureSpec

__version__ = "0.1.0"

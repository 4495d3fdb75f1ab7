"""Sample-size and decision-threshold selection for Bayesian designs built on
generalized posteriors, with two-size logit-linear extrapolation of operating
characteristics."""

__version__ = "0.1.0"

from .core import (
    Hypothesis,
    RuleAtom,
    SimulationSettings,
    StoppingPolicy,
    StreamRole,
    Thresholds,
    TrialSchedule,
    clamped_logit,
    expit,
    stream_for,
)
from .engine import (
    SummaryMatrix,
    TuningSpec,
    estimate_summary_distribution,
    evaluate_stopping,
    operating_characteristic,
    tune_thresholds,
)
from .extrapolation import (
    DesignRecommendation,
    LogitExtrapolator,
    choose_second_size,
    find_min_n,
    fit_extrapolator,
    predict_matrix,
)
from .scenarios import get_scenario, registry

__all__ = [
    "__version__",
    "Hypothesis",
    "TrialSchedule",
    "Thresholds",
    "RuleAtom",
    "StoppingPolicy",
    "SimulationSettings",
    "StreamRole",
    "clamped_logit",
    "expit",
    "stream_for",
    "SummaryMatrix",
    "TuningSpec",
    "estimate_summary_distribution",
    "evaluate_stopping",
    "operating_characteristic",
    "tune_thresholds",
    "LogitExtrapolator",
    "DesignRecommendation",
    "fit_extrapolator",
    "predict_matrix",
    "find_min_n",
    "choose_second_size",
    "get_scenario",
    "registry",
]

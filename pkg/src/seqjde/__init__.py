"""Sequential joint detection and estimation toolkit.

Builds, runs, and evaluates sequential policies that decide among multiple
hypotheses and estimate a parameter of the accepted one, stopping as early
as the tolerated detection and estimation errors allow.
"""

from .design import (DesignConfig, DesignReport, DesignState, design,
                     default_initial_coefficients, estimate_gradient, qn_step)
from .model import (EvidenceError, PosteriorSummary, ScenarioModel,
                    hypothesis_posteriors, prior_summary, summarize)
from .montecarlo import (PerformanceEstimate, SimulationConfig, derive_seed,
                         derive_seeds, evaluate, evaluate_objective,
                         objective_values, trace_paths)
from .msprt import (MsprtThresholds, TwoStepPolicy, msprt_step, run_two_step,
                    thresholds_from_levels)
from .policy import (AoPolicy, CostCoefficients, Trajectory, ao_should_stop,
                     cost_g, decide, decision_cost, normalized_cost_limit,
                     run_policy)
from .qam import QamConfig, QamModel, ResidualStat, square_constellation
from .shift_in_mean import (MeanStat, QuadratureError, QuadratureSpec,
                            ShiftInMeanModel, SiMConfig)

__version__ = "0.1.0"

__all__ = [
    "AoPolicy", "CostCoefficients", "DesignConfig", "DesignReport",
    "DesignState", "EvidenceError", "MeanStat", "MsprtThresholds",
    "PerformanceEstimate", "PosteriorSummary", "QamConfig", "QamModel",
    "QuadratureError", "QuadratureSpec", "ResidualStat", "ScenarioModel",
    "ShiftInMeanModel", "SiMConfig", "SimulationConfig", "Trajectory",
    "TwoStepPolicy", "ao_should_stop", "cost_g", "decide", "decision_cost",
    "default_initial_coefficients", "derive_seed", "derive_seeds", "design",
    "estimate_gradient", "evaluate", "evaluate_objective",
    "hypothesis_posteriors", "msprt_step", "normalized_cost_limit",
    "objective_values", "prior_summary", "qn_step", "run_policy",
    "run_two_step", "square_constellation", "summarize", "thresholds_from_levels",
    "trace_paths",
]

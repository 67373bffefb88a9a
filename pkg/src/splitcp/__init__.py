"""Split conformal prediction with exact coverage analytics.

Calibrate a threshold from per-class probability scores, emit prediction
sets with the standard marginal guarantee, and quantify what that
guarantee means for a single calibration set: the exact conditional
coverage law, its shortfall probabilities, the (epsilon, delta)
conditional-validity bound, minimal calibration-size planning, and a
seeded Monte Carlo harness that reproduces the coverage-spread
histograms.
"""

from .core import (
    COVER_ALL,
    PROB_SUM_TOL,
    SCORE_FUNCTIONS,
    CalibratedPredictor,
    ConformityScore,
    CoverageReport,
    LabelSpace,
    PredictionSet,
    ProbabilityRecord,
    calibrate,
    calibration_rank,
    evaluate_coverage,
    predict_set,
    score_record,
)
from .errors import ConfigurationError, FormatVersionError, InputError, ParseError
from .fileio import (
    FORMAT_VERSION,
    parse_predictor,
    parse_probability_file,
    render_json,
    render_probability_file,
    serialize_predictor,
    write_report,
)
from .guarantees import (
    CoverageLaw,
    GuaranteeQuery,
    PlanResult,
    PlanSpec,
    coverage_law,
    marginal_coverage_exact,
    plan_min_m,
    shortfall_probability,
    vovk_delta,
)
from .simulation import (
    SAMPLING_MODES,
    WITH_REPLACEMENT,
    WITHOUT_REPLACEMENT,
    EmpiricalPoolSource,
    Histogram,
    SimulationConfig,
    SimulationReport,
    SyntheticUniformSource,
    TrialResult,
    build_histogram,
    derive_trial_seed,
    run_simulation,
    synthetic_uniform_draw,
    trial_generator,
)

__version__ = "0.1.0"

__all__ = [
    "COVER_ALL",
    "PROB_SUM_TOL",
    "SCORE_FUNCTIONS",
    "FORMAT_VERSION",
    "SAMPLING_MODES",
    "WITH_REPLACEMENT",
    "WITHOUT_REPLACEMENT",
    "CalibratedPredictor",
    "ConfigurationError",
    "ConformityScore",
    "CoverageLaw",
    "CoverageReport",
    "EmpiricalPoolSource",
    "FormatVersionError",
    "GuaranteeQuery",
    "Histogram",
    "InputError",
    "LabelSpace",
    "ParseError",
    "PlanResult",
    "PlanSpec",
    "PredictionSet",
    "ProbabilityRecord",
    "SimulationConfig",
    "SimulationReport",
    "SyntheticUniformSource",
    "TrialResult",
    "build_histogram",
    "calibrate",
    "calibration_rank",
    "coverage_law",
    "derive_trial_seed",
    "evaluate_coverage",
    "marginal_coverage_exact",
    "parse_predictor",
    "parse_probability_file",
    "plan_min_m",
    "predict_set",
    "render_json",
    "render_probability_file",
    "run_simulation",
    "score_record",
    "serialize_predictor",
    "shortfall_probability",
    "synthetic_uniform_draw",
    "trial_generator",
    "vovk_delta",
    "write_report",
]

"""Survival modeling over dense covariate sequences.

Proportional-hazards risk scores (linear, MLP, LSTM) trained by partial
likelihood, with baseline-hazard recovery, concordance and time-dependent
AUC evaluation, cross-validation, and a small binary cohort format. See
README.md for the workflow and docs/formats.md for file layouts.
"""

from .baseline import (
    BaselineHazard,
    KaplanMeierCurve,
    breslow_baseline,
    censoring_curve,
    kaplan_meier,
    predict_survival,
    write_survival_curve,
)
from .core import (
    Cohort,
    CovariateSequence,
    Subject,
    SurvivalCurve,
    TimeGrid,
    discrete_hazard,
    survival_from_hazard,
    validate_cohort,
)
from .data_io import (
    CohortManifest,
    GroundTruth,
    SyntheticSpec,
    assemble_sequence,
    assemble_sequences,
    load_cohort,
    read_covariate_matrix,
    read_ground_truth,
    read_manifest,
    read_outcomes,
    save_cohort,
    synthesize_cohort,
    time_to_event,
    times_from_dates,
    write_covariate_matrix,
    write_ground_truth,
    write_manifest,
    write_outcomes,
)
from .errors import DataError, HazardError, NumericError
from .likelihood import (
    RiskSetIndex,
    build_risk_sets,
    neg_avg_partial_log_likelihood,
    partial_likelihood_gradient,
    risk_set_index,
)
from .metrics import (
    MetricReport,
    RiskScoreSet,
    aggregate_folds,
    cumulative_dynamic_auc,
    harrell_c_index,
    read_metric_reports,
    single_value_report,
    truncated_c_index,
    write_metric_reports,
)
from .models import (
    LinearRiskModel,
    LSTMRiskModel,
    MLPRiskModel,
    apply_dropout,
    build_model,
    load_model,
    risk_forward,
    risk_gradients,
    risk_scores,
    save_model,
)
from .training import (
    METRIC_NAMES,
    AdamState,
    CVResult,
    GridCell,
    ModelSpec,
    TrainConfig,
    TrainHistory,
    TrainingDiverged,
    adam_step,
    cross_validate,
    evaluate_scores,
    grid_search,
    stratified_folds,
    stratified_split,
    train,
    write_history,
    write_leaderboard,
)

__version__ = "0.1.0"

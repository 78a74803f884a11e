"""oodkit: zero-shot out-of-distribution detection over embedding bundles."""

__version__ = "0.1.0"

from .bundle import (
    BundleManifest,
    ConceptBank,
    EmbeddingMatrix,
    LoadedBundle,
    l2_normalize_rows,
    load_bundle,
    load_concept_bank,
    read_matrix,
    write_bundle,
    write_matrix,
)
from .metrics import EvalReport, Threshold, auroc, calibrate_threshold, detect, fpr_at_tpr, id_accuracy
from .scoring import (
    SCORE_METHODS,
    MahalanobisModel,
    ScoreVector,
    SimilarityMatrix,
    candidate_label_scores,
    cosine_similarities,
    energy_scores,
    ensemble_concept_banks,
    entropy_scores,
    filter_candidate_labels,
    fit_mahalanobis,
    mahalanobis_scores,
    max_cosine_scores,
    mcm_scores,
    msp_scores,
    predict_classes,
    scaled_diff_scores,
    variance_scores,
)
from .simulator import (
    SyntheticTask,
    SyntheticTaskConfig,
    make_synthetic_task,
    sample_concentrated,
    sample_uniform_sphere,
    uniformity_report,
    write_task,
)
from .theory import (
    BoundConstants,
    SoftmaxBoundReport,
    SweepEntry,
    estimate_gap_bound,
    estimate_runner_up,
    temperature_bound,
    temperature_sweep,
    verify_softmax_bound,
)

__all__ = [
    "__version__",
    "BundleManifest",
    "ConceptBank",
    "EmbeddingMatrix",
    "LoadedBundle",
    "l2_normalize_rows",
    "load_bundle",
    "load_concept_bank",
    "read_matrix",
    "write_bundle",
    "write_matrix",
    "EvalReport",
    "Threshold",
    "auroc",
    "calibrate_threshold",
    "detect",
    "fpr_at_tpr",
    "id_accuracy",
    "SCORE_METHODS",
    "MahalanobisModel",
    "ScoreVector",
    "SimilarityMatrix",
    "candidate_label_scores",
    "cosine_similarities",
    "energy_scores",
    "ensemble_concept_banks",
    "entropy_scores",
    "filter_candidate_labels",
    "fit_mahalanobis",
    "mahalanobis_scores",
    "max_cosine_scores",
    "mcm_scores",
    "msp_scores",
    "predict_classes",
    "scaled_diff_scores",
    "variance_scores",
    "SyntheticTask",
    "SyntheticTaskConfig",
    "make_synthetic_task",
    "sample_concentrated",
    "sample_uniform_sphere",
    "uniformity_report",
    "write_task",
    "BoundConstants",
    "SoftmaxBoundReport",
    "SweepEntry",
    "estimate_gap_bound",
    "estimate_runner_up",
    "temperature_bound",
    "temperature_sweep",
    "verify_softmax_bound",
]

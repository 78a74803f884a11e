"""Detection metrics: threshold calibration, FPR at fixed TPR, AUROC.

Conventions: scores are oriented higher = more in-distribution, a sample is
detected "in" when its score is >= the threshold, and reported rates are
fractions in [0, 1]. Percent formatting rounds half to even.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .scoring import ScoreVector


@dataclass
class Threshold:
    """A calibrated decision threshold.

    ``achieved_tpr`` is the ID acceptance rate at ``value`` on the
    calibration set itself; it is always >= ``target_tpr``.
    """

    value: float
    target_tpr: float
    method: str
    achieved_tpr: float

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "target_tpr": self.target_tpr,
            "method": self.method,
            "achieved_tpr": self.achieved_tpr,
        }


@dataclass
class EvalReport:
    """One full detection evaluation, serializable to JSON."""

    method: str
    params: dict
    threshold: Threshold
    fpr_at_tpr: float
    auroc: float
    n_id: int
    n_ood: int
    id_accuracy: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "threshold": self.threshold.to_json_dict(),
            "fpr_at_tpr": self.fpr_at_tpr,
            "auroc": self.auroc,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "id_accuracy": self.id_accuracy,
        }


def _score_values(scores) -> np.ndarray:
    values = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("scores must be 1-D")
    if values.size == 0:
        raise ValueError("scores must be non-empty")
    if not np.isfinite(values).all():
        raise ValueError("scores contain NaN or Inf")
    return values


def calibrate_threshold(id_scores, target_tpr: float = 0.95) -> Threshold:
    """Pick the threshold admitting at least ``target_tpr`` of the ID scores.

    The threshold is the order statistic sorted(scores)[floor((1 - tpr) * N)]
    so exactly the bottom floor((1 - tpr) * N) scores fall below it. The
    achieved TPR can exceed the target under ties but never undershoots it.
    """
    values = _score_values(id_scores)
    if not 0.0 < target_tpr <= 1.0:
        raise ValueError(f"target_tpr must be in (0, 1], got {target_tpr}")
    n = values.size
    index = int(np.floor((1.0 - target_tpr) * n))
    index = min(max(index, 0), n - 1)
    ordered = np.sort(values)
    value = float(ordered[index])
    achieved = float(np.mean(values >= value))
    method = id_scores.method if isinstance(id_scores, ScoreVector) else "unspecified"
    return Threshold(value=value, target_tpr=float(target_tpr), method=method, achieved_tpr=achieved)


def detect(scores, threshold: Threshold) -> np.ndarray:
    """Label each score "in" (score >= threshold) or "out"."""
    values = _score_values(scores)
    return np.where(values >= threshold.value, "in", "out")


def fpr_at_tpr(id_scores, ood_scores, target_tpr: float = 0.95) -> float:
    """Fraction of OOD scores accepted at the threshold calibrated on ID."""
    threshold = calibrate_threshold(id_scores, target_tpr)
    ood = _score_values(ood_scores)
    return float(np.mean(ood >= threshold.value))


def auroc(id_scores, ood_scores) -> float:
    """Probability a random ID score ranks above a random OOD score.

    Rank-sum (Mann-Whitney) form with average ranks, so exact ties
    contribute 1/2. Equivalent to the area under the ROC curve.
    """
    id_vals = _score_values(id_scores)
    ood_vals = _score_values(ood_scores)
    n_id, n_ood = id_vals.size, ood_vals.size
    ranks = rankdata(np.concatenate([id_vals, ood_vals]))
    u_stat = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u_stat / (n_id * n_ood))


def id_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Exact-match fraction of predicted class indices."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"shape mismatch: predictions {predictions.shape} vs labels {labels.shape}")
    if predictions.size == 0:
        raise ValueError("cannot compute accuracy on empty arrays")
    return float(np.mean(predictions == labels))


def format_percent(fraction: float) -> str:
    """Render a fraction as a percentage with two decimals, half to even."""
    return f"{fraction * 100.0:.2f}"

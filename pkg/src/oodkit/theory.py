"""Analytic guarantee for softmax scoring versus the raw-similarity baseline.

The guarantee: once the temperature exceeds a closed-form bound computed
from calibration constants, thresholding the softmax score produces a false
positive rate no worse than thresholding the raw maximum similarity. This
module estimates the constants from data, evaluates the bound, and checks
both the premise and the conclusion empirically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import auroc, calibrate_threshold, fpr_at_tpr
from .scoring import SimilarityMatrix, max_cosine_scores, mcm_scores

_DEGENERATE_TOL = 1e-12


@dataclass
class BoundConstants:
    """Inputs to the temperature bound.

    ``softmax_threshold`` is the calibrated threshold on softmax scores,
    ``raw_threshold`` the one on raw max similarities, ``gap_bound`` an
    upper bound on the mean shortfall of non-top similarities below the
    runner-up, and ``runner_up_similarity`` the typical second-largest
    similarity of an OOD row. The last two describe OOD rows because the
    guarantee transfers a softmax detection of an OOD sample into a
    raw-similarity detection of that same sample.
    """

    n_classes: int
    softmax_threshold: float
    raw_threshold: float
    gap_bound: float
    runner_up_similarity: float
    temperature: float = 1.0
    bound: float | None = None

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.gap_bound < 0:
            raise ValueError(f"gap_bound must be >= 0, got {self.gap_bound}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    def to_json_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "softmax_threshold": self.softmax_threshold,
            "raw_threshold": self.raw_threshold,
            "gap_bound": self.gap_bound,
            "runner_up_similarity": self.runner_up_similarity,
            "temperature": self.temperature,
            "bound": self.bound,
        }


@dataclass
class SoftmaxBoundReport:
    """Bound evaluation plus the empirical FPR comparison it predicts."""

    constants: BoundConstants
    target_tpr: float
    fpr_softmax: float
    fpr_raw: float
    bound_satisfied: bool
    conclusion_holds: bool
    degenerate_calibration: bool
    runner_up_min: float
    runner_up_max: float
    n_id: int
    n_ood: int

    def to_json_dict(self) -> dict:
        return {
            "constants": self.constants.to_json_dict(),
            "target_tpr": self.target_tpr,
            "fpr_softmax": self.fpr_softmax,
            "fpr_raw": self.fpr_raw,
            "bound_satisfied": self.bound_satisfied,
            "conclusion_holds": self.conclusion_holds,
            "degenerate_calibration": self.degenerate_calibration,
            "runner_up_min": self.runner_up_min,
            "runner_up_max": self.runner_up_max,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }


@dataclass
class SweepEntry:
    method: str
    tau: float | None
    fpr: float
    auroc: float

    def to_json_dict(self) -> dict:
        return {"method": self.method, "tau": self.tau, "fpr": self.fpr, "auroc": self.auroc}


def _top_two(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    part = np.partition(values, -2, axis=1)
    return part[:, -1], part[:, -2]


def estimate_gap_bound(ood_sims: SimilarityMatrix, margin: float = 1e-9) -> float:
    """Estimate the per-row gap constant from OOD similarities.

    For each row the gap is the mean of (runner_up - s_i) over the non-top
    entries, which is always >= 0. Returns the max over rows plus a small
    margin so the estimate is a strict upper bound on the observed gaps.
    """
    s = np.asarray(ood_sims.values, dtype=np.float64)
    n_classes = s.shape[1]
    if n_classes < 2:
        raise ValueError("gap estimation needs at least 2 concepts")
    top1, top2 = _top_two(s)
    # mean over the K-1 non-top entries of (top2 - s_i), vectorized:
    gaps = ((n_classes - 1) * top2 - (s.sum(axis=1) - top1)) / (n_classes - 1)
    return float(gaps.max()) + margin


def estimate_runner_up(sims: SimilarityMatrix) -> tuple[float, float, float]:
    """Mean, min, and max of the per-row second-largest similarity."""
    s = np.asarray(sims.values, dtype=np.float64)
    if s.shape[1] < 2:
        raise ValueError("runner-up estimation needs at least 2 concepts")
    _, top2 = _top_two(s)
    return float(top2.mean()), float(top2.min()), float(top2.max())


def temperature_bound(constants: BoundConstants) -> float:
    """Closed-form temperature above which the FPR guarantee applies.

        bound = softmax_threshold * (K - 1)
                * (raw_threshold + gap_bound - runner_up_similarity)
                / (K * softmax_threshold - 1)

    Requires softmax_threshold > 1/K; at or below that the denominator is
    non-positive and the bound is undefined. The numerator may be negative,
    in which case every positive temperature satisfies the bound.
    """
    k = constants.n_classes
    lam = constants.softmax_threshold
    denom = k * lam - 1.0
    if denom <= 0.0:
        raise ValueError(
            f"softmax threshold {lam} must exceed 1/K = {1.0 / k}; bound undefined"
        )
    numer = lam * (k - 1) * (constants.raw_threshold + constants.gap_bound - constants.runner_up_similarity)
    return float(numer / denom)


def verify_softmax_bound(
    id_sims: SimilarityMatrix,
    ood_sims: SimilarityMatrix,
    tau: float = 1.0,
    target_tpr: float = 0.95,
) -> SoftmaxBoundReport:
    """Estimate all constants from data and check premise and conclusion.

    Thresholds for both scores are calibrated on the ID split at
    ``target_tpr``; the gap and runner-up constants both come from the OOD
    split (the mean per-row second-best OOD similarity for the latter).
    Calibration is degenerate when the softmax threshold collapses to 1/K
    (constant score rows); the report flags that instead of dividing by
    zero, with an infinite bound that no finite temperature satisfies.
    """
    if id_sims.n_concepts != ood_sims.n_concepts:
        raise ValueError(
            f"ID and OOD similarity matrices disagree on concept count: "
            f"{id_sims.n_concepts} vs {ood_sims.n_concepts}"
        )
    n_classes = id_sims.n_concepts

    id_soft = mcm_scores(id_sims, tau=tau)
    ood_soft = mcm_scores(ood_sims, tau=tau)
    id_raw = max_cosine_scores(id_sims)
    ood_raw = max_cosine_scores(ood_sims)

    soft_thr = calibrate_threshold(id_soft, target_tpr)
    raw_thr = calibrate_threshold(id_raw, target_tpr)
    gap = estimate_gap_bound(ood_sims)
    run_mean, run_min, run_max = estimate_runner_up(ood_sims)

    constants = BoundConstants(
        n_classes=n_classes,
        softmax_threshold=soft_thr.value,
        raw_threshold=raw_thr.value,
        gap_bound=gap,
        runner_up_similarity=run_mean,
        temperature=float(tau),
    )
    degenerate = soft_thr.value <= 1.0 / n_classes + _DEGENERATE_TOL
    if degenerate:
        constants.bound = float("inf")
    else:
        constants.bound = temperature_bound(constants)

    fpr_soft = float(np.mean(ood_soft.values >= soft_thr.value))
    fpr_raw = float(np.mean(ood_raw.values >= raw_thr.value))

    return SoftmaxBoundReport(
        constants=constants,
        target_tpr=float(target_tpr),
        fpr_softmax=fpr_soft,
        fpr_raw=fpr_raw,
        bound_satisfied=bool(tau > constants.bound),
        conclusion_holds=bool(fpr_soft <= fpr_raw),
        degenerate_calibration=bool(degenerate),
        runner_up_min=run_min,
        runner_up_max=run_max,
        n_id=id_sims.n_rows,
        n_ood=ood_sims.n_rows,
    )


def temperature_sweep(
    id_sims: SimilarityMatrix,
    ood_sims: SimilarityMatrix,
    taus: list[float],
    target_tpr: float = 0.95,
) -> list[SweepEntry]:
    """FPR and AUROC of the softmax score over a temperature grid.

    Appends one row for the raw max-similarity baseline (tau = None) so
    sweep outputs are self-contained comparisons.
    """
    if not taus:
        raise ValueError("need at least one temperature")
    entries: list[SweepEntry] = []
    for tau in taus:
        id_soft = mcm_scores(id_sims, tau=tau)
        ood_soft = mcm_scores(ood_sims, tau=tau)
        entries.append(
            SweepEntry(
                method="mcm",
                tau=float(tau),
                fpr=fpr_at_tpr(id_soft, ood_soft, target_tpr),
                auroc=auroc(id_soft, ood_soft),
            )
        )
    id_raw = max_cosine_scores(id_sims)
    ood_raw = max_cosine_scores(ood_sims)
    entries.append(
        SweepEntry(
            method="max_cosine",
            tau=None,
            fpr=fpr_at_tpr(id_raw, ood_raw, target_tpr),
            auroc=auroc(id_raw, ood_raw),
        )
    )
    return entries

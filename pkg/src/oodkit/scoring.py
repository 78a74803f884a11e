"""Score families for zero-shot out-of-distribution detection.

Every scorer maps an N-row input to one float per row, oriented so that
HIGHER means MORE in-distribution. The registry in ``SCORE_METHODS`` fixes
the public method identifiers used in serialized score files and the CLI.

Scorers over cosine similarities (`mcm`, `max_cosine`, `entropy`,
`variance`, `scaled_diff`, `candidate_label`) expect an N x K
:class:`SimilarityMatrix`; `msp` and `energy` accept any real logit matrix;
`mahalanobis` works on raw (unnormalized) feature rows via a fitted
:class:`MahalanobisModel`.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp, softmax

from .bundle import ConceptBank, EmbeddingMatrix, l2_normalize_rows
from .errors import DimensionMismatchError, OodkitError

SCORE_METHODS = (
    "mcm",
    "max_cosine",
    "entropy",
    "variance",
    "scaled_diff",
    "msp",
    "energy",
    "mahalanobis",
    "candidate_label",
)

_SIM_RANGE_TOL = 1e-6


@dataclass
class SimilarityMatrix:
    """N x K cosine similarities, float64, entries in [-1, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"similarity matrix must be 2-D, got {self.values.ndim}-D")
        if not np.isfinite(self.values).all():
            raise ValueError("similarity matrix contains NaN or Inf")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < -1.0 - _SIM_RANGE_TOL or hi > 1.0 + _SIM_RANGE_TOL:
            raise ValueError(f"cosine similarities must lie in [-1, 1]; found range [{lo}, {hi}]")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_concepts(self) -> int:
        return self.values.shape[1]


@dataclass
class ScoreVector:
    """Per-row detection scores for one method, with the params that made them."""

    method: str
    values: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method not in SCORE_METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {SCORE_METHODS}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("scores must be a 1-D vector")
        if not np.isfinite(self.values).all():
            raise ValueError("scores contain NaN or Inf")

    def to_csv(self, path: str | Path) -> None:
        """Write ``index,score`` rows with full float precision."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "score"])
            for i, v in enumerate(self.values):
                writer.writerow([i, repr(float(v))])

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "scores": [float(v) for v in self.values],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ScoreVector":
        return cls(method=data["method"], values=np.asarray(data["scores"]), params=dict(data.get("params", {})))


@dataclass
class MahalanobisModel:
    """Per-class means plus a shared precision matrix."""

    means: np.ndarray
    precision: np.ndarray
    ridge: float

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64)
        self.precision = np.asarray(self.precision, dtype=np.float64)
        if self.means.ndim != 2:
            raise ValueError("means must be K x d")
        d = self.means.shape[1]
        if self.precision.shape != (d, d):
            raise ValueError(f"precision must be {d} x {d}, got {self.precision.shape}")
        asym = float(np.abs(self.precision - self.precision.T).max())
        if asym > 1e-8:
            raise ValueError(f"precision must be symmetric; max asymmetry {asym}")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise ValueError(f"temperature must be a positive finite number, got {tau}")
    return tau


def _as_rows(data) -> np.ndarray:
    if isinstance(data, SimilarityMatrix):
        return data.values
    if isinstance(data, EmbeddingMatrix):
        return np.asarray(data.values, dtype=np.float64)
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {arr.ndim}-D")
    return arr


def cosine_similarities(images, concepts) -> SimilarityMatrix:
    """Cosine similarity of every image row against every concept row.

    Inputs not flagged as normalized are L2-normalized internally; plain
    arrays are always normalized. Accumulates in float64 and clips the
    ~1e-15 rounding excursions back into [-1, 1].
    """
    img = _coerce_normalized(images)
    con = _coerce_normalized(concepts)
    if img.shape[1] != con.shape[1]:
        raise DimensionMismatchError(
            f"image dim {img.shape[1]} != concept dim {con.shape[1]}"
        )
    sims = np.clip(img @ con.T, -1.0, 1.0)
    return SimilarityMatrix(values=sims)


def _coerce_normalized(data) -> np.ndarray:
    if isinstance(data, ConceptBank):
        data = data.matrix
    if isinstance(data, EmbeddingMatrix):
        if data.normalized:
            return np.asarray(data.values, dtype=np.float64)
        return np.asarray(l2_normalize_rows(data).values, dtype=np.float64)
    return np.asarray(l2_normalize_rows(np.asarray(data)).values, dtype=np.float64)


def mcm_scores(sims: SimilarityMatrix, tau: float = 1.0) -> ScoreVector:
    """Maximum softmax probability over temperature-scaled similarities.

    Per row: max_i exp(s_i / tau) / sum_j exp(s_j / tau). Lies in [1/K, 1];
    equals exactly 1/K on constant rows and 1.0 when K == 1.
    """
    tau = _check_tau(tau)
    s = _as_rows(sims)
    probs = softmax(s / tau, axis=1)
    return ScoreVector(method="mcm", values=probs.max(axis=1), params={"tau": tau})


def max_cosine_scores(sims: SimilarityMatrix) -> ScoreVector:
    """Largest raw similarity per row; the softmax-free baseline."""
    s = _as_rows(sims)
    return ScoreVector(method="max_cosine", values=s.max(axis=1), params={})


def entropy_scores(sims: SimilarityMatrix, tau: float = 1.0) -> ScoreVector:
    """Negative Shannon entropy of the softmax distribution (natural log).

    Computed as sum_i p_i * z_i - logsumexp(z) with z = s / tau, which avoids
    materializing log(p) for near-zero probabilities. Always <= 0, with 0
    only in the one-column case.
    """
    tau = _check_tau(tau)
    z = _as_rows(sims) / tau
    probs = softmax(z, axis=1)
    values = np.einsum("ij,ij->i", probs, z) - logsumexp(z, axis=1)
    return ScoreVector(method="entropy", values=values, params={"tau": tau})


def variance_scores(sims: SimilarityMatrix) -> ScoreVector:
    """Population variance of each similarity row (divisor K, not K-1)."""
    s = _as_rows(sims)
    if s.shape[1] < 2:
        raise ValueError("variance score needs at least 2 concepts per row")
    return ScoreVector(method="variance", values=s.var(axis=1), params={})


def scaled_diff_scores(sims: SimilarityMatrix) -> ScoreVector:
    """exp(top1 - top2) of each row; 1.0 exactly on tied leaders."""
    s = _as_rows(sims)
    if s.shape[1] < 2:
        raise ValueError("scaled-diff score needs at least 2 concepts per row")
    part = np.partition(s, -2, axis=1)
    return ScoreVector(method="scaled_diff", values=np.exp(part[:, -1] - part[:, -2]), params={})


def msp_scores(logits) -> ScoreVector:
    """Maximum softmax probability over arbitrary real logits."""
    z = _as_rows(logits)
    return ScoreVector(method="msp", values=softmax(z, axis=1).max(axis=1), params={})


def energy_scores(logits, tau: float = 1.0) -> ScoreVector:
    """tau * logsumexp(logits / tau); overflow-safe via max subtraction."""
    tau = _check_tau(tau)
    z = _as_rows(logits)
    return ScoreVector(method="energy", values=tau * logsumexp(z / tau, axis=1), params={"tau": tau})


def candidate_label_scores(sims: SimilarityMatrix, n_id: int, tau: float = 1.0) -> ScoreVector:
    """In-distribution probability mass when candidate columns are appended.

    ``sims`` holds similarities against the ID concept rows first, then any
    number of candidate (suspected OOD) concept rows. The score is the
    summed softmax mass of the first ``n_id`` columns. With zero candidate
    columns the mass is exactly 1.0 for every row, so that case short
    circuits to ones rather than summing rounding error.
    """
    tau = _check_tau(tau)
    s = _as_rows(sims)
    total = s.shape[1]
    if not 1 <= n_id <= total:
        raise ValueError(f"n_id must be in [1, {total}], got {n_id}")
    params = {"tau": tau, "n_id": int(n_id), "n_candidates": int(total - n_id)}
    if n_id == total:
        return ScoreVector(method="candidate_label", values=np.ones(s.shape[0]), params=params)
    probs = softmax(s / tau, axis=1)
    return ScoreVector(method="candidate_label", values=probs[:, :n_id].sum(axis=1), params=params)


def predict_classes(sims: SimilarityMatrix) -> np.ndarray:
    """Argmax class index per row; ties resolve to the lowest index."""
    return np.argmax(_as_rows(sims), axis=1).astype(np.int64)


def fit_mahalanobis(
    features: EmbeddingMatrix | np.ndarray,
    labels: np.ndarray,
    ridge: float | None = None,
) -> MahalanobisModel:
    """Fit class means and a pooled tied covariance on labeled features.

    Covariance is the population estimate (divisor N) of the class-centered
    rows, pooled over all classes. ``ridge`` defaults to
    1e-6 * trace(cov) / d; it is added to the diagonal before the Cholesky
    factorization, and factorization failure after that is an error rather
    than something to hide silently.
    """
    X = _as_rows(features) if not isinstance(features, np.ndarray) else np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be 2-D")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != X.shape[0]:
        raise ValueError(f"labels shape {labels.shape} does not match {X.shape[0]} feature rows")
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    n, d = X.shape
    n_classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"no samples for class indices {empty[:8].tolist()}")
    if n <= d:
        warnings.warn(
            f"fitting covariance with {n} samples in {d} dimensions; "
            "estimates are rank-deficient, rely on the ridge",
            RuntimeWarning,
            stacklevel=2,
        )
    means = np.zeros((n_classes, d))
    np.add.at(means, labels, X)
    means /= counts[:, None]
    centered = X - means[labels]
    cov = centered.T @ centered / n
    if ridge is None:
        ridge = 1e-6 * float(np.trace(cov)) / d
    ridge = float(ridge)
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    try:
        factor = cho_factor(cov + ridge * np.eye(d), lower=True)
    except LinAlgError as exc:
        raise OodkitError(
            f"pooled covariance is not positive definite even with ridge={ridge}; "
            "pass a larger explicit ridge"
        ) from exc
    precision = cho_solve(factor, np.eye(d))
    precision = (precision + precision.T) / 2.0
    return MahalanobisModel(means=means, precision=precision, ridge=ridge)


def mahalanobis_scores(model: MahalanobisModel, features: EmbeddingMatrix | np.ndarray) -> ScoreVector:
    """Negative squared Mahalanobis distance to the closest class mean."""
    X = _as_rows(features) if not isinstance(features, np.ndarray) else np.asarray(features, dtype=np.float64)
    if X.shape[1] != model.means.shape[1]:
        raise DimensionMismatchError(
            f"feature dim {X.shape[1]} != model dim {model.means.shape[1]}"
        )
    best = np.full(X.shape[0], -np.inf)
    for k in range(model.n_classes):
        diff = X - model.means[k]
        dist_sq = np.einsum("nd,nd->n", diff @ model.precision, diff)
        np.maximum(best, -dist_sq, out=best)
    return ScoreVector(method="mahalanobis", values=best, params={"ridge": model.ridge})


def save_mahalanobis(path: str | Path, model: MahalanobisModel) -> None:
    np.savez(path, means=model.means, precision=model.precision, ridge=np.float64(model.ridge))


def load_mahalanobis(path: str | Path) -> MahalanobisModel:
    with np.load(path) as data:
        return MahalanobisModel(
            means=data["means"], precision=data["precision"], ridge=float(data["ridge"])
        )


def ensemble_concept_banks(banks: list[ConceptBank], renormalize: bool = True) -> ConceptBank:
    """Average several concept banks row-wise into one.

    Banks must agree on class names (same order) and dimension. The mean of
    unit rows is generally not unit, so by default rows are renormalized;
    pass ``renormalize=False`` to keep the raw means. Templates concatenate
    in bank order.
    """
    if not banks:
        raise ValueError("need at least one concept bank")
    first = banks[0]
    for i, bank in enumerate(banks[1:], start=1):
        if bank.class_names != first.class_names:
            raise ValueError(f"bank {i} class names differ from bank 0")
        if bank.matrix.dim != first.matrix.dim:
            raise DimensionMismatchError(
                f"bank {i} dim {bank.matrix.dim} != bank 0 dim {first.matrix.dim}"
            )
    stacked = np.stack([np.asarray(b.matrix.values, dtype=np.float64) for b in banks])
    mean = stacked.mean(axis=0)
    out_dtype = np.result_type(*[b.matrix.values.dtype for b in banks])
    if renormalize:
        matrix = l2_normalize_rows(mean.astype(out_dtype))
    else:
        matrix = EmbeddingMatrix(values=mean.astype(out_dtype), normalized=False)
    templates = [t for b in banks for t in b.templates]
    return ConceptBank(matrix=matrix, class_names=list(first.class_names), templates=templates)


def filter_candidate_labels(candidates: list[str], id_class_names: list[str]) -> list[str]:
    """Drop candidate labels that collide with ID class names.

    Comparison is casefolded and whitespace-stripped. Candidate order is
    preserved and later duplicates (by the same folded key) are dropped.
    """
    id_keys = {name.strip().casefold() for name in id_class_names}
    seen: set[str] = set()
    kept: list[str] = []
    for name in candidates:
        key = name.strip().casefold()
        if key in id_keys or key in seen:
            continue
        seen.add(key)
        kept.append(name)
    return kept

"""Synthetic embedding tasks with a known ID/OOD structure.

Geometry: concept vectors concentrate inside a cone around a hidden anchor
direction, each ID sample concentrates around its class concept with
sharpness ``kappa``, and OOD samples are near-uniform directions whose
alignment with the anchor varies per sample. That per-sample alignment
spread is what makes OOD similarity rows heterogeneous: rows with a large
uniform offset fool a raw max-similarity threshold but keep a near-flat
softmax, which is exactly the regime the temperature bound speaks to.
Setting ``concept_cone=0`` and ``align_spread=0`` recovers fully uniform
concepts and OOD directions.

Determinism: all draws go through counter-based Philox streams keyed as
(seed, stream), so each array is reproducible independently of the others.
Stream ids: 1 anchor, 2 concepts, 3 OOD (alignment factors then Gaussians),
4 + k for ID class k.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import ConceptBank, EmbeddingMatrix, write_bundle
from .scoring import SimilarityMatrix

_STREAM_ANCHOR = 1
_STREAM_CONCEPTS = 2
_STREAM_OOD = 3
_STREAM_CLASS_BASE = 4


@dataclass
class SyntheticTaskConfig:
    """Parameters of one synthetic task. ``seed`` has no default on purpose."""

    seed: int
    n_classes: int = 100
    dim: int = 512
    n_id_per_class: int = 20
    n_ood: int = 2000
    kappa: float = 10.0
    concept_cone: float | None = None
    align_spread: float | None = None

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.n_id_per_class < 1 or self.n_ood < 1:
            raise ValueError("sample counts must be >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.concept_cone is None:
            self.concept_cone = float(np.sqrt(self.dim) / 2.0)
        if self.align_spread is None:
            self.align_spread = float(np.sqrt(self.dim))
        if self.concept_cone < 0 or self.align_spread < 0:
            raise ValueError("concept_cone and align_spread must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_classes": self.n_classes,
            "dim": self.dim,
            "n_id_per_class": self.n_id_per_class,
            "n_ood": self.n_ood,
            "kappa": self.kappa,
            "concept_cone": self.concept_cone,
            "align_spread": self.align_spread,
        }


@dataclass
class SyntheticTask:
    config: SyntheticTaskConfig
    concepts: ConceptBank
    id_embeddings: EmbeddingMatrix
    id_labels: np.ndarray
    ood_embeddings: EmbeddingMatrix


@dataclass
class UniformityStats:
    """Row-level statistics of an OOD similarity matrix.

    ``assumption_gap`` is the per-row mean of (runner_up - s_i) over non-top
    entries, the quantity whose maximum feeds the temperature bound.
    """

    row_std: np.ndarray
    top_gap: np.ndarray
    assumption_gap: np.ndarray
    mean_row_std: float
    mean_top_gap: float
    max_assumption_gap: float

    def to_json_dict(self) -> dict:
        return {
            "mean_row_std": self.mean_row_std,
            "mean_top_gap": self.mean_top_gap,
            "max_assumption_gap": self.max_assumption_gap,
            "n_rows": int(self.row_std.size),
        }


def _stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.Philox(key=[seed, stream]))


def _normalize_rows(rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # A zero Gaussian row has probability zero but underflow is cheap to guard.
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    while (norms == 0.0).any():
        bad = np.flatnonzero(norms[:, 0] == 0.0)
        rows[bad] = rng.standard_normal((bad.size, rows.shape[1]))
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / norms


def sample_uniform_sphere(n: int, dim: int, seed: int, stream: int = 0) -> np.ndarray:
    """n rows drawn uniformly from the unit sphere in R^dim."""
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be >= 1")
    rng = _stream_rng(seed, stream)
    return _normalize_rows(rng.standard_normal((n, dim)), rng)


def sample_concentrated(
    prototype: np.ndarray, kappa: float, n: int, seed: int, stream: int = 0
) -> np.ndarray:
    """n unit rows concentrated around a unit prototype direction.

    Each row is normalize(kappa * prototype + g) with standard Gaussian g,
    so kappa = 0 degenerates to the uniform sphere and large kappa collapses
    onto the prototype.
    """
    prototype = np.asarray(prototype, dtype=np.float64)
    if prototype.ndim != 1:
        raise ValueError("prototype must be a 1-D vector")
    if abs(np.linalg.norm(prototype) - 1.0) > 1e-6:
        raise ValueError("prototype must be unit norm")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _stream_rng(seed, stream)
    rows = kappa * prototype + rng.standard_normal((n, prototype.shape[0]))
    return _normalize_rows(rows, rng)


def make_synthetic_task(config: SyntheticTaskConfig) -> SyntheticTask:
    """Generate concepts, labeled ID samples, and OOD samples."""
    k, d = config.n_classes, config.dim
    anchor = sample_uniform_sphere(1, d, config.seed, stream=_STREAM_ANCHOR)[0]
    concept_rows = sample_concentrated(
        anchor, config.concept_cone, k, config.seed, stream=_STREAM_CONCEPTS
    )

    rng_ood = _stream_rng(config.seed, _STREAM_OOD)
    align = rng_ood.uniform(0.0, config.align_spread, size=(config.n_ood, 1))
    ood_rows = align * anchor + rng_ood.standard_normal((config.n_ood, d))
    ood_rows = _normalize_rows(ood_rows, rng_ood)

    id_blocks = []
    labels = np.repeat(np.arange(k, dtype=np.int64), config.n_id_per_class)
    for class_idx in range(k):
        id_blocks.append(
            sample_concentrated(
                concept_rows[class_idx],
                config.kappa,
                config.n_id_per_class,
                config.seed,
                stream=_STREAM_CLASS_BASE + class_idx,
            )
        )

    width = len(str(k - 1))
    names = [f"class_{i:0{width}d}" for i in range(k)]
    concepts = ConceptBank(
        matrix=EmbeddingMatrix(values=concept_rows, normalized=True),
        class_names=names,
        templates=[],
    )
    return SyntheticTask(
        config=config,
        concepts=concepts,
        id_embeddings=EmbeddingMatrix(values=np.vstack(id_blocks), normalized=True),
        id_labels=labels,
        ood_embeddings=EmbeddingMatrix(values=ood_rows, normalized=True),
    )


def uniformity_report(ood_sims: SimilarityMatrix) -> UniformityStats:
    """Summarize how flat each OOD similarity row is."""
    s = np.asarray(ood_sims.values, dtype=np.float64)
    if s.shape[1] < 2:
        raise ValueError("uniformity report needs at least 2 concepts")
    n_classes = s.shape[1]
    part = np.partition(s, -2, axis=1)
    top1, top2 = part[:, -1], part[:, -2]
    row_std = s.std(axis=1)
    top_gap = top1 - top2
    assumption_gap = ((n_classes - 1) * top2 - (s.sum(axis=1) - top1)) / (n_classes - 1)
    return UniformityStats(
        row_std=row_std,
        top_gap=top_gap,
        assumption_gap=assumption_gap,
        mean_row_std=float(row_std.mean()),
        mean_top_gap=float(top_gap.mean()),
        max_assumption_gap=float(assumption_gap.max()),
    )


def write_task(task: SyntheticTask, out_dir: str | Path) -> dict[str, Path]:
    """Write the task as three bundle directories: concepts, id_test, ood_test."""
    out = Path(out_dir)
    source = f"oodkit simulator {task.config.to_json_dict()}"
    paths = {
        "concepts": out / "concepts",
        "id_test": out / "id_test",
        "ood_test": out / "ood_test",
    }
    write_bundle(
        paths["concepts"],
        task.concepts.matrix,
        role="concepts",
        source=source,
        class_names=task.concepts.class_names,
        templates=task.concepts.templates,
    )
    write_bundle(paths["id_test"], task.id_embeddings, role="id_test", source=source, labels=task.id_labels)
    write_bundle(paths["ood_test"], task.ood_embeddings, role="ood_test", source=source)
    return paths

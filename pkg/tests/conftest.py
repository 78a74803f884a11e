import numpy as np
import pytest

from oodkit import (
    ConceptBank,
    EmbeddingMatrix,
    SyntheticTaskConfig,
    cosine_similarities,
    make_synthetic_task,
)


@pytest.fixture(scope="session")
def small_task():
    """A quick synthetic task with enough structure for metric tests."""
    config = SyntheticTaskConfig(seed=11, n_classes=20, dim=64, n_id_per_class=10, n_ood=300)
    return make_synthetic_task(config)


@pytest.fixture(scope="session")
def small_sims(small_task):
    id_sims = cosine_similarities(small_task.id_embeddings, small_task.concepts)
    ood_sims = cosine_similarities(small_task.ood_embeddings, small_task.concepts)
    return id_sims, ood_sims


@pytest.fixture()
def tiny_bank():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((4, 8))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return ConceptBank(
        matrix=EmbeddingMatrix(values=rows, normalized=True),
        class_names=["ant", "bee", "cat", "dog"],
        templates=["a photo of a <label>."],
    )

import numpy as np
import pytest

from oodkit.bundle import load_bundle, load_concept_bank
from oodkit.metrics import auroc, id_accuracy
from oodkit.scoring import cosine_similarities, max_cosine_scores, mcm_scores, predict_classes
from oodkit.simulator import (
    SyntheticTaskConfig,
    make_synthetic_task,
    sample_concentrated,
    sample_uniform_sphere,
    uniformity_report,
    write_task,
)


def _norms(values):
    return np.linalg.norm(values, axis=1)


class TestSamplers:
    def test_uniform_sphere_unit_norm(self):
        rows = sample_uniform_sphere(200, 32, seed=0)
        np.testing.assert_allclose(_norms(rows), 1.0, atol=1e-12)

    def test_uniform_sphere_deterministic_per_stream(self):
        a = sample_uniform_sphere(10, 8, seed=5, stream=3)
        b = sample_uniform_sphere(10, 8, seed=5, stream=3)
        c = sample_uniform_sphere(10, 8, seed=5, stream=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_uniform_sphere_isotropy(self):
        rows = sample_uniform_sphere(4000, 16, seed=1)
        assert np.abs(rows.mean(axis=0)).max() < 0.02
        np.testing.assert_allclose(rows.std(axis=0), 1.0 / 4.0, atol=0.02)

    def test_concentrated_tightens_with_kappa(self):
        proto = np.zeros(24)
        proto[0] = 1.0
        loose = sample_concentrated(proto, 1.0, 500, seed=2)
        tight = sample_concentrated(proto, 50.0, 500, seed=2)
        assert (tight @ proto).mean() > (loose @ proto).mean()
        assert (tight @ proto).min() > 0.98

    def test_concentrated_zero_kappa_is_isotropic(self):
        proto = np.zeros(16)
        proto[0] = 1.0
        rows = sample_concentrated(proto, 0.0, 3000, seed=3)
        assert abs((rows @ proto).mean()) < 0.02

    def test_concentrated_requires_unit_prototype(self):
        with pytest.raises(ValueError):
            sample_concentrated(np.array([1.0, 1.0]), 5.0, 3, seed=0)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sample_uniform_sphere(0, 4, seed=0)
        with pytest.raises(ValueError):
            sample_concentrated(np.array([1.0, 0.0]), -1.0, 3, seed=0)


class TestTaskGeneration:
    def test_shapes_labels_and_names(self, small_task):
        cfg = small_task.config
        assert small_task.concepts.matrix.values.shape == (cfg.n_classes, cfg.dim)
        assert small_task.id_embeddings.values.shape == (cfg.n_classes * cfg.n_id_per_class, cfg.dim)
        assert small_task.ood_embeddings.values.shape == (cfg.n_ood, cfg.dim)
        counts = np.bincount(small_task.id_labels, minlength=cfg.n_classes)
        assert (counts == cfg.n_id_per_class).all()
        assert len(set(small_task.concepts.class_names)) == cfg.n_classes
        assert small_task.concepts.templates == []

    def test_all_unit_norm(self, small_task):
        for matrix in (small_task.concepts.matrix, small_task.id_embeddings, small_task.ood_embeddings):
            np.testing.assert_allclose(_norms(matrix.values), 1.0, atol=1e-9)
            assert matrix.normalized is True

    def test_deterministic_and_seed_sensitive(self):
        cfg = dict(n_classes=5, dim=16, n_id_per_class=3, n_ood=20)
        a = make_synthetic_task(SyntheticTaskConfig(seed=42, **cfg))
        b = make_synthetic_task(SyntheticTaskConfig(seed=42, **cfg))
        c = make_synthetic_task(SyntheticTaskConfig(seed=43, **cfg))
        np.testing.assert_array_equal(a.id_embeddings.values, b.id_embeddings.values)
        np.testing.assert_array_equal(a.ood_embeddings.values, b.ood_embeddings.values)
        assert not np.array_equal(a.ood_embeddings.values, c.ood_embeddings.values)

    def test_id_accuracy_grows_with_kappa(self):
        accs = []
        for kappa in (0.5, 3.0, 10.0):
            task = make_synthetic_task(
                SyntheticTaskConfig(seed=9, n_classes=20, dim=64, n_id_per_class=10, n_ood=1, kappa=kappa)
            )
            sims = cosine_similarities(task.id_embeddings, task.concepts)
            accs.append(id_accuracy(predict_classes(sims), task.id_labels))
        assert accs[0] < accs[1] <= accs[2]

    def test_softmax_score_separates_better_than_raw_max(self, small_task, small_sims):
        id_sims, ood_sims = small_sims
        soft = auroc(mcm_scores(id_sims).values, mcm_scores(ood_sims).values)
        raw = auroc(max_cosine_scores(id_sims).values, max_cosine_scores(ood_sims).values)
        assert soft >= raw

    def test_zero_cone_and_spread_recover_isotropic_geometry(self):
        # literal mode: uniform concepts, uniform OOD; row std of OOD sims ~ 1/sqrt(d)
        task = make_synthetic_task(
            SyntheticTaskConfig(
                seed=4, n_classes=50, dim=256, n_id_per_class=1, n_ood=500,
                concept_cone=0.0, align_spread=0.0,
            )
        )
        ood_sims = cosine_similarities(task.ood_embeddings, task.concepts)
        stats = uniformity_report(ood_sims)
        assert stats.mean_row_std == pytest.approx(1.0 / 16.0, rel=0.15)
        assert abs(float(ood_sims.values.mean())) < 0.01

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SyntheticTaskConfig(seed=-1)
        with pytest.raises(ValueError):
            SyntheticTaskConfig(seed=0, n_classes=1)
        with pytest.raises(ValueError):
            SyntheticTaskConfig(seed=0, kappa=-0.1)
        with pytest.raises(ValueError):
            SyntheticTaskConfig(seed=0, concept_cone=-1.0)

    def test_default_geometry_parameters(self):
        cfg = SyntheticTaskConfig(seed=0, dim=512)
        assert cfg.concept_cone == pytest.approx(np.sqrt(512) / 2)
        assert cfg.align_spread == pytest.approx(np.sqrt(512))


class TestUniformityReport:
    def test_shapes_and_invariants(self, small_sims):
        _, ood_sims = small_sims
        stats = uniformity_report(ood_sims)
        n = ood_sims.n_rows
        assert stats.row_std.shape == stats.top_gap.shape == stats.assumption_gap.shape == (n,)
        assert (stats.assumption_gap >= 0.0).all()
        assert (stats.top_gap >= 0.0).all()
        assert stats.max_assumption_gap == pytest.approx(stats.assumption_gap.max())

    def test_summary_json(self, small_sims):
        _, ood_sims = small_sims
        doc = uniformity_report(ood_sims).to_json_dict()
        assert set(doc) == {"mean_row_std", "mean_top_gap", "max_assumption_gap", "n_rows"}


class TestWriteTask:
    def test_bundle_tree_round_trip(self, tmp_path, small_task):
        paths = write_task(small_task, tmp_path / "task")
        assert set(paths) == {"concepts", "id_test", "ood_test"}

        bank = load_concept_bank(paths["concepts"])
        assert bank.class_names == small_task.concepts.class_names
        np.testing.assert_array_equal(bank.matrix.values, small_task.concepts.matrix.values)

        id_loaded = load_bundle(paths["id_test"])
        assert id_loaded.manifest.role == "id_test"
        np.testing.assert_array_equal(id_loaded.labels, small_task.id_labels)
        np.testing.assert_array_equal(id_loaded.matrix.values, small_task.id_embeddings.values)

        ood_loaded = load_bundle(paths["ood_test"])
        assert ood_loaded.manifest.role == "ood_test"
        assert ood_loaded.labels is None
        assert ood_loaded.manifest.source.startswith("oodkit simulator")

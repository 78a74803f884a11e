import json

import numpy as np
import pytest

from oodkit_extractor.embf import read_embf
from oodkit_extractor.jobs import (
    DEFAULT_TEMPLATE,
    EXTENDED_TEMPLATES,
    ExtractionJob,
    build_concept_bank,
    extract_image_embeddings,
)

from conftest import make_image


class TestImageExtraction:
    def test_labeled_tree(self, labeled_tree, tmp_path):
        out = extract_image_embeddings(
            ExtractionJob(source=labeled_tree, out_dir=tmp_path / "bundle", encoder_spec="hash:64")
        )
        values, normalized = read_embf(out / "embeddings.embf")
        assert values.shape == (5, 64) and normalized
        labels = json.loads((out / "labels.json").read_text())
        assert labels == [0, 0, 0, 1, 1]  # ant sorts before bee
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["role"] == "id_test"
        assert manifest["labels_present"] is True
        assert manifest["count"] == 5 and manifest["dim"] == 64
        assert manifest["dtype"] == "float32" and manifest["normalized"] is True
        assert manifest["label_names"] == ["ant", "bee"]

    def test_flat_dir_is_unlabeled(self, flat_dir, tmp_path):
        out = extract_image_embeddings(
            ExtractionJob(source=flat_dir, out_dir=tmp_path / "bundle", encoder_spec="hash:64")
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["role"] == "ood_test"
        assert manifest["labels_present"] is False
        assert not (out / "labels.json").exists()

    def test_json_list_source(self, flat_dir, tmp_path):
        listing = tmp_path / "list.json"
        names = sorted(p.name for p in flat_dir.iterdir())[:2]
        listing.write_text(json.dumps([str(flat_dir / n) for n in names]))
        out = extract_image_embeddings(
            ExtractionJob(source=listing, out_dir=tmp_path / "bundle", encoder_spec="hash:64")
        )
        values, _ = read_embf(out / "embeddings.embf")
        assert values.shape[0] == 2

    def test_unreadable_image_skipped_with_warning(self, labeled_tree, tmp_path):
        (labeled_tree / "ant" / "broken.png").write_bytes(b"not an image at all")
        with pytest.warns(RuntimeWarning, match="unreadable"):
            out = extract_image_embeddings(
                ExtractionJob(source=labeled_tree, out_dir=tmp_path / "bundle", encoder_spec="hash:64")
            )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 5  # the broken file is not a row
        assert len(manifest["skipped"]) == 1 and manifest["skipped"][0].endswith("broken.png")
        labels = json.loads((out / "labels.json").read_text())
        assert labels == [0, 0, 0, 1, 1]

    def test_deterministic_output_bytes(self, labeled_tree, tmp_path):
        blobs = []
        for name in ("one", "two"):
            out = extract_image_embeddings(
                ExtractionJob(source=labeled_tree, out_dir=tmp_path / name, encoder_spec="hash:64")
            )
            blobs.append((out / "embeddings.embf").read_bytes())
        assert blobs[0] == blobs[1]

    def test_batching_does_not_change_rows(self, labeled_tree, tmp_path):
        outs = []
        for batch, name in ((1, "a"), (64, "b")):
            out = extract_image_embeddings(
                ExtractionJob(
                    source=labeled_tree, out_dir=tmp_path / name,
                    encoder_spec="hash:64", batch_size=batch,
                )
            )
            outs.append(read_embf(out / "embeddings.embf")[0])
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_role_override(self, flat_dir, tmp_path):
        out = extract_image_embeddings(
            ExtractionJob(source=flat_dir, out_dir=tmp_path / "b", encoder_spec="hash:64", role="id_train")
        )
        assert json.loads((out / "manifest.json").read_text())["role"] == "id_train"

    def test_empty_source_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ValueError):
            extract_image_embeddings(ExtractionJob(source=empty, out_dir=tmp_path / "b"))


class TestConceptBank:
    def test_single_template_files_and_row_order(self, tmp_path):
        names = ["ant", "bee", "cat"]
        banks = build_concept_bank(names, tmp_path / "bank", encoder_spec="hash:64")
        assert banks == [tmp_path / "bank"]
        values, normalized = read_embf(banks[0] / "embeddings.embf")
        assert values.shape == (3, 64) and normalized
        assert json.loads((banks[0] / "classnames.json").read_text()) == names
        assert json.loads((banks[0] / "templates.json").read_text()) == [DEFAULT_TEMPLATE]
        manifest = json.loads((banks[0] / "manifest.json").read_text())
        assert manifest["role"] == "concepts" and manifest["count"] == 3

    def test_five_templates_make_five_banks(self, tmp_path):
        from oodkit_extractor.encoders import get_encoder

        names = ["ant", "bee"]
        banks = build_concept_bank(
            names, tmp_path / "bank", encoder_spec="hash:64", templates=EXTENDED_TEMPLATES
        )
        assert len(banks) == 5
        assert all(b.parent == tmp_path / "bank" for b in banks)
        encoder = get_encoder("hash:64")
        for template, bank_dir in zip(EXTENDED_TEMPLATES, banks):
            assert json.loads((bank_dir / "templates.json").read_text()) == [template]
            assert json.loads((bank_dir / "classnames.json").read_text()) == names
            values, _ = read_embf(bank_dir / "embeddings.embf")
            expected = encoder.encode_texts([template.replace("<label>", n) for n in names])
            np.testing.assert_array_equal(values, expected)

    def test_template_needs_placeholder(self, tmp_path):
        with pytest.raises(ValueError):
            build_concept_bank(["ant"], tmp_path / "bank", templates=["no placeholder here"])

    def test_duplicate_names_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_concept_bank(["ant", "ant"], tmp_path / "bank")

    def test_blank_name_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_concept_bank(["ant", "  "], tmp_path / "bank")

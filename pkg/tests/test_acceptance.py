"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

Each line goes straight to the terminal (bypassing capture) so a plain
``pytest -v`` run shows the verdict table regardless of capture settings.
"""

import hashlib

import numpy as np
import pytest

from oodkit.bundle import EmbeddingMatrix, read_matrix, write_matrix
from oodkit.cli import main
from oodkit.errors import BadMagicError, TruncatedPayloadError, UnsupportedVersionError
from oodkit.metrics import calibrate_threshold, fpr_at_tpr, id_accuracy
from oodkit.scoring import (
    cosine_similarities,
    max_cosine_scores,
    mcm_scores,
    predict_classes,
)
from oodkit.simulator import SyntheticTaskConfig, make_synthetic_task
from oodkit.theory import BoundConstants, temperature_bound, verify_softmax_bound

TARGET_TPR = 0.95


def _report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def default_task():
    """The default-size synthetic task used by the data-driven criteria."""
    return make_synthetic_task(SyntheticTaskConfig(seed=7))


@pytest.fixture(scope="module")
def default_sims(default_task):
    task = default_task
    id_sims = cosine_similarities(task.id_embeddings, task.concepts)
    ood_sims = cosine_similarities(task.ood_embeddings, task.concepts)
    return id_sims, ood_sims


def test_c1_temperature_bound_published_constants(capsys):
    constants = BoundConstants(
        n_classes=100,
        softmax_threshold=0.011,
        raw_threshold=0.26,
        gap_bound=0.03,
        runner_up_similarity=0.23,
    )
    bound = temperature_bound(constants)
    by_hand = 0.011 * 99 * (0.26 + 0.03 - 0.23) / (100 * 0.011 - 1)
    ok = abs(bound - 0.6534) <= 0.005 and abs(bound - by_hand) < 1e-12
    _report(
        capsys,
        "C1 closed-form bound at published constants",
        ok,
        f"bound={bound:.6f}, expected 0.6534 +/- 0.005",
    )


def test_c2_bound_verification_on_default_task(capsys, default_sims):
    id_sims, ood_sims = default_sims
    report = verify_softmax_bound(id_sims, ood_sims, tau=1.0, target_tpr=TARGET_TPR)
    nonvacuous = (
        not report.degenerate_calibration
        and np.isfinite(report.constants.bound)
        and report.bound_satisfied
    )
    ok = nonvacuous and report.conclusion_holds
    _report(
        capsys,
        "C2 premise and conclusion on the default task",
        ok,
        f"bound={report.constants.bound:.4f} < tau=1.0 (non-vacuous), "
        f"fpr_softmax={report.fpr_softmax:.4f} <= fpr_raw={report.fpr_raw:.4f}",
    )


def test_c3_softmax_beats_raw_max_by_5_points(capsys, default_sims):
    id_sims, ood_sims = default_sims
    fpr_soft = fpr_at_tpr(mcm_scores(id_sims, tau=1.0), mcm_scores(ood_sims, tau=1.0), TARGET_TPR)
    fpr_raw = fpr_at_tpr(max_cosine_scores(id_sims), max_cosine_scores(ood_sims), TARGET_TPR)
    ok = fpr_soft + 0.05 <= fpr_raw
    _report(
        capsys,
        "C3 softmax FPR at least 5pp below raw-max FPR",
        ok,
        f"fpr mcm={100 * fpr_soft:.2f}%, fpr max_cosine={100 * fpr_raw:.2f}%, "
        f"gap={100 * (fpr_raw - fpr_soft):.2f}pp",
    )


def test_c4_temperature_robustness(capsys, default_sims):
    id_sims, ood_sims = default_sims
    fprs = {
        tau: fpr_at_tpr(mcm_scores(id_sims, tau=tau), mcm_scores(ood_sims, tau=tau), TARGET_TPR)
        for tau in (1.0, 10.0)
    }
    drift = abs(fprs[1.0] - fprs[10.0])
    ok = drift < 0.03
    _report(
        capsys,
        "C4 FPR drift under temperature change tau 1 -> 10",
        ok,
        f"|{100 * fprs[1.0]:.2f}% - {100 * fprs[10.0]:.2f}%| = {100 * drift:.2f}pp < 3pp",
    )


def test_c5_calibration_grid_example(capsys):
    scores = np.round(np.arange(1, 101) * 0.01, 2)
    threshold = calibrate_threshold(scores, target_tpr=0.95)
    fpr = fpr_at_tpr(scores, np.array([0.05, 0.07]), 0.95)
    ok = abs(threshold.value - 0.06) < 1e-12 and fpr == 0.5
    _report(
        capsys,
        "C5 calibration grid worked example",
        ok,
        f"threshold={threshold.value:.4f} (expected 0.0600), fpr on [0.05, 0.07] = {fpr}",
    )


def test_c6_simulator_determinism(capsys, tmp_path):
    digests = []
    for name in ("first", "second"):
        out = tmp_path / name
        rc = main(["simulate", "--out", str(out), "--seed", "7"])
        assert rc == 0
        tree = {
            str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.rglob("*"))
            if p.is_file()
        }
        digests.append(tree)
    ok = digests[0] == digests[1] and len(digests[0]) == 9
    _report(
        capsys,
        "C6 same-seed simulation reproduces identical bundle bytes",
        ok,
        f"{len(digests[0])} files, checksums {'match' if ok else 'DIFFER'}",
    )


def test_c7_embf_round_trip_and_corruption(capsys, tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((17, 9)).astype(np.float32)
    path = tmp_path / "m.embf"
    write_matrix(path, EmbeddingMatrix(values=values, normalized=False))
    back = read_matrix(path)
    round_trip_ok = back.values.tobytes() == values.tobytes() and back.values.dtype == np.float32

    blob = bytearray(path.read_bytes())
    failures = {}
    corrupted = tmp_path / "bad.embf"
    for label, mutate, expected in (
        ("magic", lambda b: b.__setitem__(slice(0, 4), b"JUNK"), BadMagicError),
        ("version", lambda b: b.__setitem__(4, 9), UnsupportedVersionError),
        ("truncation", lambda b: b.__setitem__(slice(100, len(b)), b""), TruncatedPayloadError),
    ):
        mutated = bytearray(blob)
        mutate(mutated)
        corrupted.write_bytes(bytes(mutated))
        try:
            read_matrix(corrupted)
            failures[label] = "no error raised"
        except expected:
            failures[label] = "ok"
        except Exception as exc:  # wrong class counts as failure
            failures[label] = f"wrong error {type(exc).__name__}"
    ok = round_trip_ok and all(v == "ok" for v in failures.values())
    _report(
        capsys,
        "C7 binary round trip and distinct corruption errors",
        ok,
        f"round_trip={'ok' if round_trip_ok else 'FAIL'}, {failures}",
    )


def test_c8_id_accuracy_monotone_in_kappa(capsys):
    accuracies = []
    for kappa in (0.0, 1.0, 5.0, 10.0, 100.0):
        task = make_synthetic_task(SyntheticTaskConfig(seed=7, kappa=kappa))
        sims = cosine_similarities(task.id_embeddings, task.concepts)
        accuracies.append(id_accuracy(predict_classes(sims), task.id_labels))
    ok = all(b >= a - 1e-9 for a, b in zip(accuracies, accuracies[1:]))
    _report(
        capsys,
        "C8 zero-shot ID accuracy non-decreasing in concentration",
        ok,
        "accuracy over kappa {0,1,5,10,100} = "
        + "[" + ", ".join(f"{a:.3f}" for a in accuracies) + "]",
    )

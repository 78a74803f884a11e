"""Report artifacts: delimited data files, JSON reports, and rendered figures.

CSV files are the canonical data outputs; the PNG figures rendered next to
them are conveniences for eyeballing a run and carry no extra information.

JSON reports separate a deterministic ``payload`` (serialized with sorted
keys, safe to hash for reproducibility checks) from an ``envelope`` of
run metadata like timestamps that legitimately changes between runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .theory import SweepEntry

REPORT_SCHEMA_VERSION = 1


def write_report_json(path: str | Path, payload: dict) -> None:
    """Write a payload/envelope report file."""
    doc = {
        "schema": REPORT_SCHEMA_VERSION,
        "payload": json.loads(canonical_payload_bytes(payload)),
        "envelope": {
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "tool": f"oodkit {__version__}",
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def canonical_payload_bytes(payload: dict) -> bytes:
    """Stable byte serialization of a payload, for hashing."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def payload_digest(payload: dict) -> str:
    return hashlib.sha256(canonical_payload_bytes(payload)).hexdigest()


def read_report_payload(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    return doc["payload"]


def write_histogram_csv(
    path: str | Path, id_scores: np.ndarray, ood_scores: np.ndarray, bins: int = 50
) -> None:
    """Shared-bin histogram counts of both score populations."""
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    lo = min(id_scores.min(), ood_scores.min())
    hi = max(id_scores.max(), ood_scores.max())
    if lo == hi:
        # all scores identical; widen so the single bin is well-formed
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    id_counts, _ = np.histogram(id_scores, bins=edges)
    ood_counts, _ = np.histogram(ood_scores, bins=edges)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "id_count", "ood_count"])
        for i in range(bins):
            writer.writerow(
                [repr(float(edges[i])), repr(float(edges[i + 1])), int(id_counts[i]), int(ood_counts[i])]
            )


def roc_points(id_scores: np.ndarray, ood_scores: np.ndarray) -> np.ndarray:
    """ROC curve as (threshold, fpr, tpr) rows, thresholds descending."""
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    thresholds = np.unique(np.concatenate([id_scores, ood_scores]))[::-1]
    tpr = (id_scores[None, :] >= thresholds[:, None]).mean(axis=1)
    fpr = (ood_scores[None, :] >= thresholds[:, None]).mean(axis=1)
    return np.column_stack([thresholds, fpr, tpr])


def write_roc_csv(path: str | Path, id_scores: np.ndarray, ood_scores: np.ndarray) -> None:
    rows = roc_points(id_scores, ood_scores)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for thr, fpr, tpr in rows:
            writer.writerow([repr(float(thr)), repr(float(fpr)), repr(float(tpr))])


def write_sweep_csv(path: str | Path, entries: list[SweepEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "tau", "fpr", "auroc"])
        for entry in entries:
            tau_repr = "" if entry.tau is None else repr(float(entry.tau))
            writer.writerow([entry.method, tau_repr, repr(float(entry.fpr)), repr(float(entry.auroc))])


def render_histogram_png(
    path: str | Path, id_scores: np.ndarray, ood_scores: np.ndarray, bins: int = 50, title: str = ""
) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(np.asarray(id_scores), bins=bins, alpha=0.6, label="ID", color="tab:blue")
    ax.hist(np.asarray(ood_scores), bins=bins, alpha=0.6, label="OOD", color="tab:orange")
    ax.set_xlabel("score")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_roc_png(path: str | Path, id_scores: np.ndarray, ood_scores: np.ndarray, title: str = "") -> None:
    rows = roc_points(id_scores, ood_scores)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(rows[:, 1], rows[:, 2], color="tab:blue")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_png(path: str | Path, entries: list[SweepEntry], title: str = "") -> None:
    """Two panels over the temperature grid, with the tau-free baseline dashed."""
    swept = [e for e in entries if e.tau is not None]
    baseline = [e for e in entries if e.tau is None]
    taus = [e.tau for e in swept]
    fig, (ax_fpr, ax_auroc) = plt.subplots(1, 2, figsize=(10, 4.5))
    ax_fpr.plot(taus, [e.fpr for e in swept], marker="o", color="tab:blue", label="softmax score")
    ax_auroc.plot(taus, [e.auroc for e in swept], marker="o", color="tab:blue", label="softmax score")
    for base in baseline:
        ax_fpr.axhline(base.fpr, linestyle="--", color="tab:orange", label=base.method)
        ax_auroc.axhline(base.auroc, linestyle="--", color="tab:orange", label=base.method)
    for ax, ylabel in ((ax_fpr, "FPR at target TPR"), (ax_auroc, "AUROC")):
        ax.set_xscale("log")
        ax.set_xlabel("temperature")
        ax.set_ylabel(ylabel)
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

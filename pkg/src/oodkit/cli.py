"""Command line interface.

Subcommands: score, eval, calibrate, bound, sweep, simulate, ensemble,
maha-fit. Exit codes: 0 success, 1 runtime failure (bad bundle, I/O), 2
usage error (argparse).
"""

from __future__ import annotations

import os

# Honor the thread cap before numpy initializes its BLAS thread pools. This
# has to run at import time, ahead of the numpy import below.
_threads = os.environ.get("OODKIT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import ConceptBank, load_bundle, load_concept_bank, validate_labels, write_bundle
from .errors import OodkitError
from .metrics import EvalReport, calibrate_threshold, format_percent, fpr_at_tpr
from .metrics import auroc as auroc_metric
from .metrics import id_accuracy as id_accuracy_metric
from .scoring import (
    SCORE_METHODS,
    ScoreVector,
    SimilarityMatrix,
    candidate_label_scores,
    cosine_similarities,
    energy_scores,
    ensemble_concept_banks,
    entropy_scores,
    fit_mahalanobis,
    load_mahalanobis,
    mahalanobis_scores,
    max_cosine_scores,
    mcm_scores,
    msp_scores,
    predict_classes,
    save_mahalanobis,
    scaled_diff_scores,
    variance_scores,
)
from .simulator import SyntheticTaskConfig, make_synthetic_task, write_task
from .theory import temperature_sweep, verify_softmax_bound
from . import report as report_mod


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OodkitError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"oodkit: error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodkit",
        description="Zero-shot OOD detection over precomputed embedding bundles.",
    )
    parser.add_argument("--version", action="version", version=f"oodkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score one bundle against a concept bank")
    _add_scoring_args(p_score)
    p_score.add_argument("--input", required=True, help="bundle directory to score")
    p_score.add_argument("--out", required=True, help="output file (.csv or .json)")
    p_score.set_defaults(func=cmd_score)

    p_eval = sub.add_parser("eval", help="full ID-vs-OOD detection evaluation")
    _add_scoring_args(p_eval)
    _add_eval_args(p_eval)
    p_eval.add_argument("--out", required=True, help="report JSON path")
    p_eval.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_eval.set_defaults(func=cmd_eval)

    p_cal = sub.add_parser("calibrate", help="calibrate a detection threshold on ID data")
    _add_scoring_args(p_cal)
    p_cal.add_argument("--id", required=True, dest="id_bundle", help="ID bundle directory")
    p_cal.add_argument("--tpr", type=float, default=0.95, help="target TPR (default 0.95)")
    p_cal.add_argument("--out", required=True, help="threshold JSON path")
    p_cal.set_defaults(func=cmd_calibrate)

    p_bound = sub.add_parser("bound", help="evaluate the temperature bound on data")
    p_bound.add_argument("--id", required=True, dest="id_bundle")
    p_bound.add_argument("--ood", required=True, dest="ood_bundle")
    p_bound.add_argument("--concepts", required=True)
    p_bound.add_argument("--tau", type=float, default=1.0)
    p_bound.add_argument("--tpr", type=float, default=0.95)
    p_bound.add_argument("--out", required=True, help="report JSON path")
    p_bound.set_defaults(func=cmd_bound)

    p_sweep = sub.add_parser("sweep", help="FPR/AUROC over a temperature grid")
    p_sweep.add_argument("--id", required=True, dest="id_bundle")
    p_sweep.add_argument("--ood", required=True, dest="ood_bundle")
    p_sweep.add_argument("--concepts", required=True)
    p_sweep.add_argument("--taus", required=True, help="comma-separated temperatures, e.g. 0.01,0.1,1,10")
    p_sweep.add_argument("--tpr", type=float, default=0.95)
    p_sweep.add_argument("--out", required=True, help="sweep CSV path")
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_sim = sub.add_parser("simulate", help="generate a synthetic task as bundle directories")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--classes", type=int, default=100)
    p_sim.add_argument("--dim", type=int, default=512)
    p_sim.add_argument("--id-per-class", type=int, default=20)
    p_sim.add_argument("--n-ood", type=int, default=2000)
    p_sim.add_argument("--kappa", type=float, default=10.0)
    p_sim.add_argument("--concept-cone", type=float, default=None)
    p_sim.add_argument("--align-spread", type=float, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_ens = sub.add_parser("ensemble", help="average several concept banks into one")
    p_ens.add_argument("--bank", action="append", required=True, help="concept bundle dir (repeatable)")
    p_ens.add_argument("--out", required=True, help="output concept bundle dir")
    p_ens.add_argument("--no-renormalize", action="store_true")
    p_ens.set_defaults(func=cmd_ensemble)

    p_fit = sub.add_parser("maha-fit", help="fit a Mahalanobis model on a labeled bundle")
    p_fit.add_argument("--train", required=True, help="labeled bundle directory")
    p_fit.add_argument("--ridge", type=float, default=None)
    p_fit.add_argument("--out", required=True, help="model file (.npz)")
    p_fit.set_defaults(func=cmd_maha_fit)

    return parser


def _add_scoring_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--concepts", required=True, help="concept bundle directory")
    parser.add_argument("--method", choices=SCORE_METHODS, default="mcm")
    parser.add_argument("--tau", type=float, default=1.0, help="softmax temperature (default 1.0)")
    parser.add_argument("--candidates", default=None, help="candidate concept bundle (candidate_label only)")
    parser.add_argument("--maha-model", default=None, help="fitted model .npz (mahalanobis only)")


def _add_eval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--id", required=True, dest="id_bundle", help="ID bundle directory")
    parser.add_argument("--ood", required=True, dest="ood_bundle", help="OOD bundle directory")
    parser.add_argument("--tpr", type=float, default=0.95, help="target TPR (default 0.95)")


def _compute_scores(args, bundle_dir: str, bank: ConceptBank) -> ScoreVector:
    """Score one bundle with the method selected on the command line."""
    loaded = load_bundle(bundle_dir)
    method = args.method
    if method == "mahalanobis":
        if not args.maha_model:
            raise ValueError("--maha-model is required for method mahalanobis")
        model = load_mahalanobis(args.maha_model)
        return mahalanobis_scores(model, loaded.matrix)
    if method == "candidate_label":
        if not args.candidates:
            raise ValueError("--candidates is required for method candidate_label")
        cand_bank = load_concept_bank(args.candidates)
        id_sims = cosine_similarities(loaded.matrix, bank).values
        cand_sims = cosine_similarities(loaded.matrix, cand_bank).values
        full = SimilarityMatrix(values=np.hstack([id_sims, cand_sims]))
        return candidate_label_scores(full, n_id=bank.n_classes, tau=args.tau)

    sims = cosine_similarities(loaded.matrix, bank)
    if method == "mcm":
        return mcm_scores(sims, tau=args.tau)
    if method == "max_cosine":
        return max_cosine_scores(sims)
    if method == "entropy":
        return entropy_scores(sims, tau=args.tau)
    if method == "variance":
        return variance_scores(sims)
    if method == "scaled_diff":
        return scaled_diff_scores(sims)
    if method == "msp":
        return msp_scores(sims)
    if method == "energy":
        return energy_scores(sims, tau=args.tau)
    raise ValueError(f"unhandled method {method!r}")


def cmd_score(args) -> int:
    bank = load_concept_bank(args.concepts)
    scores = _compute_scores(args, args.input, bank)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".csv":
        scores.to_csv(out)
    else:
        out.write_text(json.dumps(scores.to_json_dict(), indent=2) + "\n")
    print(f"wrote {scores.values.size} scores (method={scores.method}) to {out}")
    return 0


def cmd_eval(args) -> int:
    bank = load_concept_bank(args.concepts)
    id_loaded = load_bundle(args.id_bundle)
    id_scores = _compute_scores(args, args.id_bundle, bank)
    ood_scores = _compute_scores(args, args.ood_bundle, bank)

    threshold = calibrate_threshold(id_scores, args.tpr)
    fpr = fpr_at_tpr(id_scores, ood_scores, args.tpr)
    auroc = auroc_metric(id_scores, ood_scores)

    accuracy = None
    if id_loaded.labels is not None:
        validate_labels(id_loaded.labels, bank.n_classes)
        sims = cosine_similarities(id_loaded.matrix, bank)
        accuracy = id_accuracy_metric(predict_classes(sims), id_loaded.labels)

    eval_report = EvalReport(
        method=id_scores.method,
        params=id_scores.params,
        threshold=threshold,
        fpr_at_tpr=fpr,
        auroc=auroc,
        n_id=id_scores.values.size,
        n_ood=ood_scores.values.size,
        id_accuracy=accuracy,
    )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report_mod.write_report_json(out, eval_report.to_json_dict())
    stem = out.with_suffix("")
    report_mod.write_histogram_csv(f"{stem}_hist.csv", id_scores.values, ood_scores.values)
    report_mod.write_roc_csv(f"{stem}_roc.csv", id_scores.values, ood_scores.values)
    if not args.no_figures:
        label = f"{id_scores.method} scores"
        report_mod.render_histogram_png(f"{stem}_hist.png", id_scores.values, ood_scores.values, title=label)
        report_mod.render_roc_png(f"{stem}_roc.png", id_scores.values, ood_scores.values, title=label)

    acc_text = "n/a" if accuracy is None else f"{format_percent(accuracy)}%"
    tpr_label = f"{args.tpr * 100:g}"
    print(
        f"FPR@TPR{tpr_label}: {format_percent(fpr)}%  "
        f"AUROC: {format_percent(auroc)}%  ID-ACC: {acc_text}"
    )
    print(f"wrote report to {out}")
    return 0


def cmd_calibrate(args) -> int:
    bank = load_concept_bank(args.concepts)
    id_scores = _compute_scores(args, args.id_bundle, bank)
    threshold = calibrate_threshold(id_scores, args.tpr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report_mod.write_report_json(out, threshold.to_json_dict())
    print(
        f"threshold={threshold.value!r} method={threshold.method} "
        f"target_tpr={threshold.target_tpr} achieved_tpr={threshold.achieved_tpr}"
    )
    return 0


def cmd_bound(args) -> int:
    bank = load_concept_bank(args.concepts)
    id_loaded = load_bundle(args.id_bundle)
    ood_loaded = load_bundle(args.ood_bundle)
    id_sims = cosine_similarities(id_loaded.matrix, bank)
    ood_sims = cosine_similarities(ood_loaded.matrix, bank)
    result = verify_softmax_bound(id_sims, ood_sims, tau=args.tau, target_tpr=args.tpr)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report_mod.write_report_json(out, result.to_json_dict())

    c = result.constants
    print(
        f"n_classes={c.n_classes} softmax_threshold={c.softmax_threshold!r} "
        f"raw_threshold={c.raw_threshold!r} gap_bound={c.gap_bound!r} "
        f"runner_up={c.runner_up_similarity!r}"
    )
    premise = "satisfied" if result.bound_satisfied else "NOT satisfied"
    print(f"temperature bound = {c.bound!r}; tau = {c.temperature!r} -> premise {premise}")
    if result.degenerate_calibration:
        print("calibration is degenerate (softmax threshold at 1/K); bound is vacuous")
    relation = "<=" if result.conclusion_holds else ">"
    verdict = "holds" if result.conclusion_holds else "VIOLATED"
    print(
        f"fpr softmax = {format_percent(result.fpr_softmax)}% {relation} "
        f"fpr raw = {format_percent(result.fpr_raw)}% -> conclusion {verdict}"
    )
    return 0


def cmd_sweep(args) -> int:
    taus = [float(part) for part in args.taus.split(",") if part.strip()]
    bank = load_concept_bank(args.concepts)
    id_loaded = load_bundle(args.id_bundle)
    ood_loaded = load_bundle(args.ood_bundle)
    id_sims = cosine_similarities(id_loaded.matrix, bank)
    ood_sims = cosine_similarities(ood_loaded.matrix, bank)
    entries = temperature_sweep(id_sims, ood_sims, taus, target_tpr=args.tpr)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report_mod.write_sweep_csv(out, entries)
    if not args.no_figures:
        report_mod.render_sweep_png(out.with_suffix(".png"), entries)

    for entry in entries:
        tau_text = "-" if entry.tau is None else f"{entry.tau:g}"
        print(
            f"{entry.method:<12} tau={tau_text:<8} "
            f"fpr={format_percent(entry.fpr)}%  auroc={format_percent(entry.auroc)}%"
        )
    return 0


def cmd_simulate(args) -> int:
    config = SyntheticTaskConfig(
        seed=args.seed,
        n_classes=args.classes,
        dim=args.dim,
        n_id_per_class=args.id_per_class,
        n_ood=args.n_ood,
        kappa=args.kappa,
        concept_cone=args.concept_cone,
        align_spread=args.align_spread,
    )
    task = make_synthetic_task(config)
    paths = write_task(task, args.out)
    root = Path(args.out)
    for name in sorted(paths):
        for file in sorted(paths[name].iterdir()):
            digest = hashlib.sha256(file.read_bytes()).hexdigest()
            print(f"{digest}  {file.relative_to(root)}")
    return 0


def cmd_ensemble(args) -> int:
    banks = [load_concept_bank(path) for path in args.bank]
    merged = ensemble_concept_banks(banks, renormalize=not args.no_renormalize)
    write_bundle(
        args.out,
        merged.matrix,
        role="concepts",
        source=f"ensemble of {len(banks)} banks",
        class_names=merged.class_names,
        templates=merged.templates,
    )
    print(f"wrote ensembled bank ({merged.n_classes} classes, {len(merged.templates)} templates) to {args.out}")
    return 0


def cmd_maha_fit(args) -> int:
    loaded = load_bundle(args.train)
    if loaded.labels is None:
        raise ValueError(f"{args.train}: maha-fit needs a labeled bundle")
    model = fit_mahalanobis(loaded.matrix, loaded.labels, ridge=args.ridge)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mahalanobis(out, model)
    print(f"fitted {model.n_classes} classes in dim {model.means.shape[1]}, ridge={model.ridge!r}; wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

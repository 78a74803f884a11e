"""Command line interface for bundle extraction.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .jobs import EXTENDED_TEMPLATES, ExtractionJob, build_concept_bank, extract_image_embeddings


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"oodkit-extract: error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodkit-extract",
        description="Extract embedding bundles from images and class-name prompts.",
    )
    parser.add_argument("--version", action="version", version=f"oodkit-extract {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_img = sub.add_parser("images", help="encode an image tree or list into a bundle")
    p_img.add_argument("--source", required=True, help="class-folder tree, flat dir, or JSON path list")
    p_img.add_argument("--out", required=True, help="output bundle directory")
    p_img.add_argument("--encoder", default="hash:256", help="encoder spec (hash:<dim> or clip:<model>)")
    p_img.add_argument("--role", default=None, help="override the manifest role")
    p_img.add_argument("--batch-size", type=int, default=32)
    p_img.set_defaults(func=cmd_images)

    p_bank = sub.add_parser("bank", help="build a concept bank from class names")
    p_bank.add_argument("--names", default=None, help="comma-separated class names")
    p_bank.add_argument("--names-file", default=None, help="JSON list of class names")
    p_bank.add_argument("--out", required=True, help="output bundle directory")
    p_bank.add_argument("--encoder", default="hash:256")
    p_bank.add_argument("--template", action="append", default=None, help="prompt template (repeatable)")
    p_bank.add_argument(
        "--template-set",
        choices=["default", "extended"],
        default="default",
        help="extended = the five-template photo ensemble",
    )
    p_bank.set_defaults(func=cmd_bank)
    return parser


def cmd_images(args) -> int:
    job = ExtractionJob(
        source=Path(args.source),
        out_dir=Path(args.out),
        encoder_spec=args.encoder,
        role=args.role,
        batch_size=args.batch_size,
    )
    out = extract_image_embeddings(job)
    manifest = json.loads((out / "manifest.json").read_text())
    skipped = len(manifest.get("skipped", []))
    print(f"wrote {manifest['count']} rows (dim {manifest['dim']}, {skipped} skipped) to {out}")
    return 0


def cmd_bank(args) -> int:
    if bool(args.names) == bool(args.names_file):
        raise ValueError("pass exactly one of --names or --names-file")
    if args.names:
        names = [part.strip() for part in args.names.split(",") if part.strip()]
    else:
        names = json.loads(Path(args.names_file).read_text())
    templates = args.template
    if templates is None and args.template_set == "extended":
        templates = EXTENDED_TEMPLATES
    banks = build_concept_bank(names, args.out, encoder_spec=args.encoder, templates=templates)
    for bank_dir in banks:
        print(f"wrote {len(names)}-class bank to {bank_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

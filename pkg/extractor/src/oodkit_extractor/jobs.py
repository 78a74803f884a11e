"""Extraction jobs: images and class-name prompts to bundle directories.

Output bundles follow the detection toolkit's on-disk contract: an EMBF
matrix (float32, rows L2-normalized, flag set), a manifest.json describing
it, labels.json for labeled image trees, and classnames.json plus
templates.json for concept banks.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .embf import write_embf
from .encoders import get_encoder

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}

PLACEHOLDER = "<label>"
DEFAULT_TEMPLATE = "this is a photo of a <label>"
EXTENDED_TEMPLATES = [
    "A photo of a <label>.",
    "A blurry photo of a <label>.",
    "A photo of many <label>.",
    "A photo of the large <label>.",
    "A photo of the small <label>.",
]

MANIFEST_SCHEMA_VERSION = 1


@dataclass
class ExtractionJob:
    """One image-extraction run.

    ``source`` is a directory of class subdirectories (labeled), a flat
    directory of images (unlabeled), or a JSON file listing image paths
    (unlabeled). ``role`` defaults to id_test when labels exist, ood_test
    otherwise.
    """

    source: Path
    out_dir: Path
    encoder_spec: str = "hash:256"
    role: str | None = None
    batch_size: int = 32
    encoder_kwargs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.source = Path(self.source)
        self.out_dir = Path(self.out_dir)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _list_images(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def _resolve_source(job: ExtractionJob) -> tuple[list[Path], list[int] | None, list[str] | None]:
    """Return (image paths, labels or None, class names or None)."""
    src = job.source
    if src.is_file() and src.suffix.lower() == ".json":
        listed = json.loads(src.read_text())
        if not isinstance(listed, list):
            raise ValueError(f"{src}: expected a JSON list of image paths")
        base = src.parent
        paths = [base / p if not Path(p).is_absolute() else Path(p) for p in listed]
        return paths, None, None
    if not src.is_dir():
        raise ValueError(f"{src}: not a directory or manifest JSON file")
    class_dirs = sorted(p for p in src.iterdir() if p.is_dir())
    direct_images = _list_images(src)
    if class_dirs and not direct_images:
        paths: list[Path] = []
        labels: list[int] = []
        names = [d.name for d in class_dirs]
        for index, class_dir in enumerate(class_dirs):
            for image_path in _list_images(class_dir):
                paths.append(image_path)
                labels.append(index)
        return paths, labels, names
    return direct_images, None, None


def _load_images(paths: list[Path]) -> tuple[list[Image.Image], list[int], list[str]]:
    """Open every readable image; report indexes kept and paths skipped."""
    images: list[Image.Image] = []
    kept: list[int] = []
    skipped: list[str] = []
    for index, path in enumerate(paths):
        try:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
            kept.append(index)
        except (OSError, UnidentifiedImageError) as exc:
            warnings.warn(f"skipping unreadable image {path}: {exc}", RuntimeWarning, stacklevel=3)
            skipped.append(str(path))
    return images, kept, skipped


def _write_manifest(out: Path, role: str, values: np.ndarray, labels, source: str, extra: dict) -> None:
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "role": role,
        "dim": int(values.shape[1]),
        "count": int(values.shape[0]),
        "dtype": "float32",
        "normalized": True,
        "labels_present": labels is not None,
        "source": source,
    }
    manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def extract_image_embeddings(job: ExtractionJob) -> Path:
    """Encode every readable image under the job's source into a bundle."""
    paths, labels, class_names = _resolve_source(job)
    if not paths:
        raise ValueError(f"{job.source}: no images found")
    images, kept, skipped = _load_images(paths)
    if not images:
        raise ValueError(f"{job.source}: no readable images")

    encoder = get_encoder(job.encoder_spec, **job.encoder_kwargs)
    chunks = [
        encoder.encode_images(images[start : start + job.batch_size])
        for start in range(0, len(images), job.batch_size)
    ]
    values = np.vstack(chunks)

    kept_labels = [labels[i] for i in kept] if labels is not None else None
    role = job.role or ("id_test" if kept_labels is not None else "ood_test")

    out = job.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_embf(out / "embeddings.embf", values, normalized=True)
    if kept_labels is not None:
        (out / "labels.json").write_text(json.dumps(kept_labels) + "\n")
    extra: dict = {"images": [str(paths[i]) for i in kept]}
    if class_names is not None:
        extra["label_names"] = class_names
    if skipped:
        extra["skipped"] = skipped
    _write_manifest(
        out, role, values, kept_labels,
        source=f"{job.encoder_spec} on {job.source}", extra=extra,
    )
    return out


def build_concept_bank(
    class_names: list[str],
    out_dir: str | Path,
    encoder_spec: str = "hash:256",
    templates: list[str] | None = None,
    encoder_kwargs: dict | None = None,
) -> list[Path]:
    """Embed prompt-wrapped class names into one bank per template.

    Each template's ``<label>`` placeholder is filled with every class name
    and the prompts are encoded one row per class, row order following
    ``class_names`` exactly. A single template (the default) writes the bank
    directly at ``out_dir``; several templates write one bank bundle per
    template under ``out_dir`` so the consumer can ensemble them. Returns
    the bank directories in template order.
    """
    if not class_names:
        raise ValueError("need at least one class name")
    if any(not name.strip() for name in class_names):
        raise ValueError("class names must be non-empty")
    if len(set(class_names)) != len(class_names):
        raise ValueError("class names must be unique")
    templates = list(templates) if templates else [DEFAULT_TEMPLATE]
    for template in templates:
        if PLACEHOLDER not in template:
            raise ValueError(f"template {template!r} lacks the {PLACEHOLDER} placeholder")

    encoder = get_encoder(encoder_spec, **(encoder_kwargs or {}))
    out = Path(out_dir)
    banks: list[Path] = []
    for index, template in enumerate(templates):
        prompts = [template.replace(PLACEHOLDER, name) for name in class_names]
        bank = encoder.encode_texts(prompts)
        bank_dir = out if len(templates) == 1 else out / f"template_{index:02d}"
        bank_dir.mkdir(parents=True, exist_ok=True)
        write_embf(bank_dir / "embeddings.embf", bank, normalized=True)
        (bank_dir / "classnames.json").write_text(json.dumps(list(class_names), indent=2) + "\n")
        (bank_dir / "templates.json").write_text(json.dumps([template], indent=2) + "\n")
        _write_manifest(
            bank_dir, "concepts", bank, None,
            source=f"{encoder_spec} prompts, template {template!r}", extra={},
        )
        banks.append(bank_dir)
    return banks

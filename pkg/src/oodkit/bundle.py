"""Embedding bundle I/O.

A bundle is a directory holding one embedding matrix in the EMBF binary
format plus a JSON manifest, optional integer labels, and (for concept
banks) class names and prompt templates:

    bundle/
      manifest.json       required
      embeddings.embf     required
      labels.json         only when manifest.labels_present
      classnames.json     concept banks only
      templates.json      concept banks only

EMBF is a fixed 33-byte little-endian header followed by the row-major
matrix payload:

    offset  size  field
    0       4     magic b"EMBF"
    4       2     format version (u16), currently 1
    6       1     dtype code (u8): 1 = float32, 2 = float64
    7       1     reserved, 0
    8       8     row count (u64)
    16      8     column count (u64)
    24      8     reserved, 0
    32      1     normalized flag (u8): 1 if rows are unit-norm

Trailing bytes after the payload are ignored so the format can grow an
optional footer without breaking old readers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    BundleError,
    LabelRangeError,
    ManifestMismatchError,
    NonFiniteDataError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    ZeroRowError,
)

EMBF_MAGIC = b"EMBF"
EMBF_VERSION = 1
_HEADER = struct.Struct("<4sHBBQQQB")  # 33 bytes

_DTYPE_CODES = {1: np.float32, 2: np.float64}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPE_NAMES = {np.dtype(np.float32): "float32", np.dtype(np.float64): "float64"}

MANIFEST_SCHEMA_VERSION = 1
ROLES = frozenset({"id_train", "id_test", "ood_test", "concepts"})

EMBEDDINGS_FILENAME = "embeddings.embf"
MANIFEST_FILENAME = "manifest.json"
LABELS_FILENAME = "labels.json"
CLASSNAMES_FILENAME = "classnames.json"
TEMPLATES_FILENAME = "templates.json"

UNIT_NORM_TOL = 1e-6


@dataclass
class EmbeddingMatrix:
    """A 2-D float matrix of row embeddings.

    ``normalized`` declares that every row has unit L2 norm; it is set by
    :func:`l2_normalize_rows` and round-tripped through the EMBF flag byte.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got {self.values.ndim}-D")
        if self.values.dtype not in (np.float32, np.float64):
            raise ValueError(f"unsupported dtype {self.values.dtype}; use float32 or float64")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"embedding matrix must be non-empty, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise NonFiniteDataError("embedding matrix contains NaN or Inf")

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class ConceptBank:
    """Concept embeddings with one row per class name.

    ``templates`` records the prompt templates the rows were built from and
    may be empty for banks that did not come from text prompts.
    """

    matrix: EmbeddingMatrix
    class_names: list[str]
    templates: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.matrix.count != len(self.class_names):
            raise ValueError(
                f"concept bank has {self.matrix.count} rows but {len(self.class_names)} class names"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        if not all(isinstance(n, str) and n for n in self.class_names):
            raise ValueError("class names must be non-empty strings")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class BundleManifest:
    """Descriptive metadata checked against the matrix on load."""

    role: str
    dim: int
    count: int
    dtype: str
    normalized: bool
    labels_present: bool
    source: str = ""
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {sorted(ROLES)}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"manifest dtype must be float32 or float64, got {self.dtype!r}")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "role": self.role,
            "dim": self.dim,
            "count": self.count,
            "dtype": self.dtype,
            "normalized": self.normalized,
            "labels_present": self.labels_present,
            "source": self.source,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "BundleManifest":
        # Unknown extra keys are tolerated so producers can annotate bundles.
        required = ["schema_version", "role", "dim", "count", "dtype", "normalized", "labels_present"]
        missing = [key for key in required if key not in data]
        if missing:
            raise ManifestMismatchError(f"manifest missing required keys: {missing}")
        if data["schema_version"] != MANIFEST_SCHEMA_VERSION:
            raise ManifestMismatchError(
                f"unsupported manifest schema_version {data['schema_version']!r}"
            )
        try:
            return cls(
                role=data["role"],
                dim=int(data["dim"]),
                count=int(data["count"]),
                dtype=data["dtype"],
                normalized=bool(data["normalized"]),
                labels_present=bool(data["labels_present"]),
                source=str(data.get("source", "")),
                schema_version=int(data["schema_version"]),
            )
        except ValueError as exc:
            raise ManifestMismatchError(f"invalid manifest field: {exc}") from exc


@dataclass
class LoadedBundle:
    matrix: EmbeddingMatrix
    manifest: BundleManifest
    labels: np.ndarray | None = None


def write_matrix(path: str | Path, matrix: EmbeddingMatrix) -> int:
    """Write ``matrix`` to ``path`` in EMBF format. Returns bytes written."""
    values = matrix.values
    if not np.isfinite(values).all():
        raise NonFiniteDataError(f"refusing to write non-finite values to {path}")
    code = _CODE_FOR_DTYPE[values.dtype]
    header = _HEADER.pack(
        EMBF_MAGIC,
        EMBF_VERSION,
        code,
        0,
        values.shape[0],
        values.shape[1],
        0,
        1 if matrix.normalized else 0,
    )
    # Force little-endian row-major bytes regardless of host layout.
    payload = np.ascontiguousarray(values, dtype=values.dtype.newbyteorder("<")).tobytes()
    blob = header + payload
    Path(path).write_bytes(blob)
    return len(blob)


def read_matrix(path: str | Path) -> EmbeddingMatrix:
    """Read an EMBF file, validating magic, version, dtype, and size."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, code, _, rows, cols, _, norm_flag = _HEADER.unpack_from(blob, 0)
    if magic != EMBF_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {EMBF_MAGIC!r}")
    if version != EMBF_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported format version {version}")
    if code not in _DTYPE_CODES:
        raise UnsupportedDtypeError(f"{path}: unsupported dtype code {code}")
    dtype = np.dtype(_DTYPE_CODES[code]).newbyteorder("<")
    expected = rows * cols * dtype.itemsize
    available = len(blob) - _HEADER.size
    if available < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {available} bytes, header declares {expected}"
        )
    flat = np.frombuffer(blob, dtype=dtype, count=rows * cols, offset=_HEADER.size)
    values = np.asarray(flat, dtype=_DTYPE_CODES[code]).reshape(rows, cols).copy()
    if not np.isfinite(values).all():
        raise NonFiniteDataError(f"{path}: payload contains NaN or Inf")
    return EmbeddingMatrix(values=values, normalized=bool(norm_flag))


def l2_normalize_rows(matrix: EmbeddingMatrix | np.ndarray) -> EmbeddingMatrix:
    """Return a copy of ``matrix`` with every row scaled to unit L2 norm.

    Norms are accumulated in float64 even for float32 input so the unit-norm
    guarantee holds to within ``UNIT_NORM_TOL``. Rows of exactly zero norm
    raise :class:`ZeroRowError`. Idempotent up to dtype rounding.
    """
    if isinstance(matrix, EmbeddingMatrix):
        values = matrix.values
    else:
        values = np.asarray(matrix)
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(np.float64)
    norms = np.linalg.norm(values.astype(np.float64, copy=False), axis=1, keepdims=True)
    zero_rows = np.flatnonzero(norms[:, 0] == 0.0)
    if zero_rows.size:
        raise ZeroRowError(f"cannot normalize zero rows at indices {zero_rows[:8].tolist()}")
    normalized = (values.astype(np.float64, copy=False) / norms).astype(values.dtype)
    return EmbeddingMatrix(values=normalized, normalized=True)


def write_bundle(
    out_dir: str | Path,
    matrix: EmbeddingMatrix,
    role: str,
    source: str = "",
    labels: np.ndarray | None = None,
    class_names: list[str] | None = None,
    templates: list[str] | None = None,
) -> BundleManifest:
    """Write a complete bundle directory and return its manifest.

    ``class_names`` is required when ``role == "concepts"`` and rejected
    otherwise; ``labels`` must be one int per row when given.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if role == "concepts":
        if class_names is None:
            raise ValueError("concept bundles require class_names")
        bank = ConceptBank(matrix=matrix, class_names=list(class_names), templates=list(templates or []))
        _write_json(out / CLASSNAMES_FILENAME, bank.class_names)
        _write_json(out / TEMPLATES_FILENAME, bank.templates)
    elif class_names is not None or templates is not None:
        raise ValueError(f"class_names/templates only apply to concept bundles, not role {role!r}")

    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != matrix.count:
            raise ValueError(
                f"labels must be one int per row; got {labels.shape} for {matrix.count} rows"
            )
        if labels.min() < 0:
            raise LabelRangeError("labels must be non-negative")
        _write_json(out / LABELS_FILENAME, labels.tolist())

    manifest = BundleManifest(
        role=role,
        dim=matrix.dim,
        count=matrix.count,
        dtype=_DTYPE_NAMES[matrix.values.dtype],
        normalized=matrix.normalized,
        labels_present=labels is not None,
        source=source,
    )
    write_matrix(out / EMBEDDINGS_FILENAME, matrix)
    _write_json(out / MANIFEST_FILENAME, manifest.to_json_dict())
    return manifest


def load_bundle(bundle_dir: str | Path) -> LoadedBundle:
    """Load a bundle directory, cross-checking manifest against contents."""
    root = Path(bundle_dir)
    manifest_path = root / MANIFEST_FILENAME
    if not manifest_path.is_file():
        raise BundleError(f"{root}: missing {MANIFEST_FILENAME}")
    try:
        manifest_data = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if not isinstance(manifest_data, dict):
        raise ManifestMismatchError(f"{manifest_path}: manifest must be a JSON object")
    try:
        manifest = BundleManifest.from_json_dict(manifest_data)
    except ValueError as exc:
        raise ManifestMismatchError(f"{manifest_path}: {exc}") from exc

    embf_path = root / EMBEDDINGS_FILENAME
    if not embf_path.is_file():
        raise BundleError(f"{root}: missing {EMBEDDINGS_FILENAME}")
    matrix = read_matrix(embf_path)

    if matrix.count != manifest.count:
        raise ManifestMismatchError(
            f"{root}: manifest declares {manifest.count} rows, file holds {matrix.count}"
        )
    if matrix.dim != manifest.dim:
        raise ManifestMismatchError(
            f"{root}: manifest declares dim {manifest.dim}, file holds {matrix.dim}"
        )
    if _DTYPE_NAMES[matrix.values.dtype] != manifest.dtype:
        raise ManifestMismatchError(
            f"{root}: manifest declares dtype {manifest.dtype}, "
            f"file holds {_DTYPE_NAMES[matrix.values.dtype]}"
        )
    if matrix.normalized != manifest.normalized:
        raise ManifestMismatchError(
            f"{root}: manifest normalized={manifest.normalized} "
            f"but file flag is {matrix.normalized}"
        )

    labels_path = root / LABELS_FILENAME
    labels: np.ndarray | None = None
    if manifest.labels_present:
        if not labels_path.is_file():
            raise ManifestMismatchError(f"{root}: manifest declares labels but {LABELS_FILENAME} is missing")
        raw = json.loads(labels_path.read_text())
        labels = np.asarray(raw, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != matrix.count:
            raise ManifestMismatchError(
                f"{root}: labels length {labels.shape} does not match {matrix.count} rows"
            )
        if labels.size and labels.min() < 0:
            raise LabelRangeError(f"{root}: labels must be non-negative")
    elif labels_path.is_file():
        raise ManifestMismatchError(f"{root}: {LABELS_FILENAME} present but manifest says labels_present=false")

    return LoadedBundle(matrix=matrix, manifest=manifest, labels=labels)


def load_concept_bank(bundle_dir: str | Path) -> ConceptBank:
    """Load a concepts-role bundle together with its names and templates."""
    root = Path(bundle_dir)
    loaded = load_bundle(root)
    if loaded.manifest.role != "concepts":
        raise ManifestMismatchError(
            f"{root}: expected role 'concepts', manifest says {loaded.manifest.role!r}"
        )
    names_path = root / CLASSNAMES_FILENAME
    if not names_path.is_file():
        raise BundleError(f"{root}: missing {CLASSNAMES_FILENAME}")
    class_names = json.loads(names_path.read_text())
    if not isinstance(class_names, list):
        raise BundleError(f"{names_path}: expected a JSON list of class names")
    templates_path = root / TEMPLATES_FILENAME
    templates: list[str] = []
    if templates_path.is_file():
        templates = json.loads(templates_path.read_text())
    return ConceptBank(matrix=loaded.matrix, class_names=class_names, templates=templates)


def validate_labels(labels: np.ndarray, n_classes: int) -> None:
    """Raise LabelRangeError unless every label is in [0, n_classes)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return
    low, high = int(labels.min()), int(labels.max())
    if low < 0 or high >= n_classes:
        raise LabelRangeError(
            f"labels span [{low}, {high}] but must lie in [0, {n_classes})"
        )


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")

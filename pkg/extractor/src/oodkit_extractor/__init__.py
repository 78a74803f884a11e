"""oodkit-extractor: images and prompts to EMBF embedding bundles."""

__version__ = "0.1.0"

from .embf import read_embf, write_embf
from .encoders import ClipEncoder, HashEncoder, get_encoder
from .jobs import (
    DEFAULT_TEMPLATE,
    EXTENDED_TEMPLATES,
    PLACEHOLDER,
    ExtractionJob,
    build_concept_bank,
    extract_image_embeddings,
)

__all__ = [
    "__version__",
    "read_embf",
    "write_embf",
    "ClipEncoder",
    "HashEncoder",
    "get_encoder",
    "DEFAULT_TEMPLATE",
    "EXTENDED_TEMPLATES",
    "PLACEHOLDER",
    "ExtractionJob",
    "build_concept_bank",
    "extract_image_embeddings",
]

"""Encoder backends behind a tiny registry.

An encoder spec is ``scheme:argument``:

    hash:<dim>    deterministic offline featurizer, no model weights needed
    clip:<model>  CLIP dual encoder via transformers (model id or local path)

Both backends return L2-normalized float32 rows. The hash backend exists so
extraction plumbing is testable without network access or model downloads;
it is NOT a semantic embedding, just a stable one.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

_THUMB = 16  # images reduce to a 16x16 RGB grid before projection


class HashEncoder:
    """Deterministic featurizer for images and texts.

    Images: downscale to a fixed RGB grid, flatten, project with a Gaussian
    matrix seeded only by the output dimension, normalize. Texts: hashed
    character trigrams (hashing-trick bag), signed, normalized. Identical
    inputs produce bit-identical vectors across runs and processes.
    """

    def __init__(self, dim: int):
        if dim < 8:
            raise ValueError("hash encoder needs dim >= 8")
        self.dim = int(dim)
        rng = np.random.default_rng(np.random.Philox(key=[self.dim, 0x0DDC0DE]))
        self._projection = rng.standard_normal((_THUMB * _THUMB * 3, self.dim)).astype(np.float64)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        if not images:
            raise ValueError("no images to encode")
        flat = np.stack([self._flatten(img) for img in images])
        out = flat @ self._projection
        return _normalize_f32(out)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("no texts to encode")
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            padded = f"  {text.strip().casefold()}  "
            for j in range(len(padded) - 2):
                trigram = padded[j : j + 3].encode("utf-8")
                digest = hashlib.sha256(trigram).digest()
                index = int.from_bytes(digest[:8], "little") % self.dim
                sign = 1.0 if digest[8] % 2 == 0 else -1.0
                out[i, index] += sign
            if not out[i].any():
                # e.g. whitespace-only text; give it a stable fallback bucket
                out[i, 0] = 1.0
        return _normalize_f32(out)

    @staticmethod
    def _flatten(image: Image.Image) -> np.ndarray:
        small = image.convert("RGB").resize((_THUMB, _THUMB), Image.BILINEAR)
        return np.asarray(small, dtype=np.float64).reshape(-1) / 255.0


class ClipEncoder:
    """CLIP dual encoder; needs transformers, torch, and local weights."""

    def __init__(self, model_id: str, device: str = "cpu", batch_size: int = 32):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "the clip backend needs the optional [clip] extras installed"
            ) from exc
        self._torch = torch
        self._model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self._processor = CLIPProcessor.from_pretrained(model_id)
        self._device = device
        self._batch = int(batch_size)
        self.dim = int(self._model.config.projection_dim)

    def encode_images(self, images) -> np.ndarray:
        chunks = []
        with self._torch.no_grad():
            for start in range(0, len(images), self._batch):
                batch = images[start : start + self._batch]
                inputs = self._processor(images=batch, return_tensors="pt").to(self._device)
                feats = self._model.get_image_features(**inputs)
                chunks.append(feats.cpu().numpy())
        return _normalize_f32(np.vstack(chunks))

    def encode_texts(self, texts) -> np.ndarray:
        chunks = []
        with self._torch.no_grad():
            for start in range(0, len(texts), self._batch):
                batch = list(texts[start : start + self._batch])
                inputs = self._processor(
                    text=batch, return_tensors="pt", padding=True, truncation=True
                ).to(self._device)
                feats = self._model.get_text_features(**inputs)
                chunks.append(feats.cpu().numpy())
        return _normalize_f32(np.vstack(chunks))


def _normalize_f32(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values.astype(np.float64), axis=1, keepdims=True)
    if (norms == 0.0).any():
        raise ValueError("cannot normalize a zero embedding row")
    return (values / norms).astype(np.float32)


def get_encoder(spec: str, **kwargs):
    """Build an encoder from a ``scheme:argument`` spec string."""
    scheme, _, arg = spec.partition(":")
    if scheme == "hash":
        return HashEncoder(dim=int(arg or 256))
    if scheme == "clip":
        if not arg:
            raise ValueError("clip spec needs a model id or path, e.g. clip:openai/clip-vit-base-patch16")
        return ClipEncoder(model_id=arg, **kwargs)
    raise ValueError(f"unknown encoder scheme {scheme!r}; known schemes: hash, clip")

"""Encoder backbones.

The default is a CLIP-style vision-language pair pulled from the public
model hub (requires the ``clip`` extra and network access at first use).
``test-hash-<D>`` is a bundled deterministic stand-in used by the self-test
and the test suite: it needs no downloads and gives identical features for
identical inputs on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

DEFAULT_BACKBONE = "vit-b32"
_HUB_ALIASES = {"vit-b32": "openai/clip-vit-base-patch32"}


class HashProjectionEncoder:
    """Deterministic toy encoder: a fixed random projection of a downsampled
    grayscale thumbnail; prompts map to hashed unit vectors."""

    def __init__(self, dim: int = 16):
        self.dim = dim
        key = int.from_bytes(
            hashlib.sha256(f"fembexport/hash-encoder/{dim}".encode()).digest()[:16],
            "little",
        )
        rng = np.random.Generator(np.random.Philox(key=key))
        self._projection = rng.standard_normal((64, dim)).astype(np.float64)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for image in images:
            thumb = image.convert("L").resize((8, 8), Image.BILINEAR)
            pixels = np.asarray(thumb, dtype=np.float64).ravel() / 255.0
            rows.append(pixels @ self._projection)
        return np.asarray(rows, dtype=np.float32)

    def encode_texts(self, prompts: list[str]) -> np.ndarray:
        rows = []
        for prompt in prompts:
            key = int.from_bytes(
                hashlib.sha256(prompt.encode("utf-8")).digest()[:16], "little"
            )
            rng = np.random.Generator(np.random.Philox(key=key))
            vec = rng.standard_normal(self.dim)
            rows.append(vec / np.linalg.norm(vec))
        return np.asarray(rows, dtype=np.float32)


class HubClipEncoder:
    """Vision-language encoder pair loaded from the model hub."""

    def __init__(self, model_name: str, device: str = "cpu", batch_size: int = 16):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.device = device
        self.batch_size = batch_size
        self.model = CLIPModel.from_pretrained(model_name).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_name)
        self.dim = int(self.model.config.projection_dim)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        chunks = []
        with self._torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                batch = images[start : start + self.batch_size]
                inputs = self.processor(images=batch, return_tensors="pt").to(self.device)
                feats = self.model.get_image_features(**inputs)
                chunks.append(feats.cpu().numpy().astype(np.float32))
        return np.concatenate(chunks, axis=0)

    def encode_texts(self, prompts: list[str]) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self.processor(
                text=prompts, return_tensors="pt", padding=True
            ).to(self.device)
            feats = self.model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


def get_encoder(backbone: str, device: str = "cpu"):
    if backbone.startswith("test-hash"):
        _, _, dim = backbone.partition("test-hash-")
        return HashProjectionEncoder(int(dim) if dim else 16)
    return HubClipEncoder(_HUB_ALIASES.get(backbone, backbone), device)

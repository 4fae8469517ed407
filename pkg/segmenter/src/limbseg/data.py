"""Manifest-backed dataset of backprojected images and fluid truth masks."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from .lsr1 import read_raster


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def split_records(manifest: dict, split: str) -> list[dict]:
    recs = [r for r in manifest["samples"] if r["split"] == split]
    if not recs:
        raise ValueError(f"manifest has no samples in split {split!r}")
    return recs


class FluidDataset(Dataset):
    """Pairs of (min/max-scaled image, binary mask) as (1, 256, 256) tensors.

    Augmentation applies the identical quarter-turn rotation and flips to the
    image and its mask so the supervision stays aligned.
    """

    def __init__(self, manifest_path, split: str, image_key: str,
                 augment: bool = False, seed: int = 0):
        manifest_path = Path(manifest_path)
        self.root = manifest_path.parent
        self.records = split_records(load_manifest(manifest_path), split)
        self.image_key = image_key
        self.augment = augment
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.records)

    def _load_pair(self, rec: dict) -> tuple[np.ndarray, np.ndarray]:
        img = read_raster(self.root / rec["images"][self.image_key]).array
        img = img.astype(np.float32)
        if img.min() < 0.0 or img.max() > 1.0 + 1e-6:
            raise ValueError(f"{rec['id']}: image is not min/max scaled")
        mask = read_raster(self.root / rec["truth"]).array.astype(np.float32)
        return img, mask

    def __getitem__(self, idx: int):
        img, mask = self._load_pair(self.records[idx])
        if self.augment:
            img, mask = random_paired_transform(img, mask, self.rng)
        return (torch.from_numpy(img.copy()).unsqueeze(0),
                torch.from_numpy(mask.copy()).unsqueeze(0))


def random_paired_transform(img: np.ndarray, mask: np.ndarray,
                            rng: np.random.Generator):
    """Same quarter-turn rotation and flips on both arrays."""
    k = int(rng.integers(4))
    img = np.rot90(img, k)
    mask = np.rot90(mask, k)
    if rng.random() < 0.5:
        img = np.fliplr(img)
        mask = np.fliplr(mask)
    if rng.random() < 0.5:
        img = np.flipud(img)
        mask = np.flipud(mask)
    return np.ascontiguousarray(img), np.ascontiguousarray(mask)

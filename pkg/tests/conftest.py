"""Shared fixtures: small geometries and the cached desk-scale dataset."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from limbscan.dataset import DatasetConfig, Manifest, generate_dataset
from limbscan.fdtd import SimConfig

CACHE_ROOT = Path(__file__).resolve().parent.parent / "var"


def desk_config() -> DatasetConfig:
    """The 40-sample acceptance dataset: 10 phantoms x 4 samples, M = 24."""
    return DatasetConfig(seed=7, n_samples=40)


def tiny_config(seed: int = 3) -> DatasetConfig:
    """Small, fast pipeline config for smoke/determinism tests."""
    return DatasetConfig(
        seed=seed, n_samples=2, base_ids=(0, 5),
        fluid_radii=(2.5e-3,), n_elements=4,
        sim=SimConfig(cell_size=2e-3, record_window=5e-9),
        split_fractions=(0.5, 0.0, 0.5),
        noisy_contour=False)


def cached_dataset(config: DatasetConfig, name: str) -> Manifest:
    """Generate (or reuse) a dataset under var/<name>-<confighash>/."""
    tag = hashlib.sha256(
        json.dumps(config.to_json(), sort_keys=True).encode()).hexdigest()[:10]
    out = CACHE_ROOT / f"{name}-{tag}"
    manifest, _ = generate_dataset(config, out)
    return manifest


@pytest.fixture(scope="session")
def desk_dataset() -> Manifest:
    return cached_dataset(desk_config(), "desk")


def load_image(manifest: Manifest, rec: dict, key: str) -> np.ndarray:
    from limbscan.raster import load_raster

    return load_raster(manifest.path.parent / rec["images"][key]).array.astype(float)


def load_truth(manifest: Manifest, rec: dict) -> np.ndarray:
    from limbscan.raster import load_raster

    return load_raster(manifest.path.parent / rec["truth"]).array

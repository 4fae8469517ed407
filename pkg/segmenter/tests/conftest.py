"""Segmenter test fixtures: locate the imaging pipeline's desk dataset."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]


def find_desk_manifest() -> Path:
    hits = sorted(REPO_ROOT.glob("var/desk-*/manifest.json"))
    if not hits:
        pytest.fail("desk dataset missing: run the imaging package's acceptance "
                    "suite first (pytest ../tests -m acceptance)")
    return hits[0]


@pytest.fixture(scope="session")
def desk_manifest() -> Path:
    return find_desk_manifest()


def synthetic_manifest(root: Path, n: int = 4, size: int = 256,
                       seed: int = 0) -> Path:
    """Tiny self-contained manifest with random images and blob masks."""
    import json

    from limbseg.lsr1 import write_raster

    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    samples = []
    for k in range(n):
        img = rng.random((size, size)).astype(np.float32)
        mask = np.zeros((size, size), dtype=np.uint8)
        margin = size // 4
        cy, cx = rng.integers(margin, size - margin, 2)
        yy, xx = np.mgrid[0:size, 0:size]
        mask[(yy - cy) ** 2 + (xx - cx) ** 2 < max(size // 16, 2) ** 2] = 1
        img[mask == 1] = np.clip(img[mask == 1] + 0.5, 0, 1)
        write_raster(root / f"s{k}_img.lsr", img, 0.20 / size, (-0.1, -0.1))
        write_raster(root / f"s{k}_truth.lsr", mask, 0.20 / size, (-0.1, -0.1))
        samples.append({
            "id": f"s{k}", "split": "train" if k < n - 1 else "val",
            "base_id": k, "fluid_radius": 0.003, "hash": f"h{k}",
            "scene": "", "sinogram": "", "contour": "",
            "images": {"cgli": f"s{k}_img.lsr"},
            "truth": f"s{k}_truth.lsr",
        })
    manifest = {"version": 1, "samples": samples}
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path

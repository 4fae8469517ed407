import numpy as np
import pytest
import torch

from limbseg.data import FluidDataset, random_paired_transform
from limbseg.lsr1 import read_raster, write_raster

from conftest import synthetic_manifest


def test_lsr1_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.random((16, 24)).astype(np.float32)
    write_raster(tmp_path / "a.lsr", arr, 1e-3, (-0.008, -0.012), {"k": 1})
    back = read_raster(tmp_path / "a.lsr")
    assert np.array_equal(back.array, arr)
    assert back.cell_size == 1e-3
    assert back.origin == (-0.008, -0.012)
    assert back.meta == {"k": 1}


def test_lsr1_rejects_bad_magic(tmp_path):
    (tmp_path / "bad.lsr").write_bytes(b"XXXX" + bytes(48))
    with pytest.raises(ValueError):
        read_raster(tmp_path / "bad.lsr")


def test_paired_transform_moves_together():
    rng = np.random.default_rng(3)
    img = rng.random((32, 32)).astype(np.float32)
    # transform a copy of the image as a stand-in mask: both must see the
    # exact same rotation/flips
    for seed in range(8):
        a, b = random_paired_transform(img, img.copy(),
                                       np.random.default_rng(seed))
        assert np.array_equal(a, b)


def test_dataset_tensors(tmp_path):
    manifest = synthetic_manifest(tmp_path, n=4, size=64)
    ds = FluidDataset(manifest, "train", "cgli")
    assert len(ds) == 3
    img, mask = ds[0]
    assert img.shape == (1, 64, 64)
    assert mask.shape == (1, 64, 64)
    assert img.dtype == torch.float32
    assert set(np.unique(mask.numpy())) <= {0.0, 1.0}


def test_dataset_rejects_unscaled_images(tmp_path):
    manifest = synthetic_manifest(tmp_path, n=2, size=32)
    bad = read_raster(tmp_path / "s0_img.lsr").array * 3.0
    write_raster(tmp_path / "s0_img.lsr", bad.astype(np.float32), 1e-3, (0, 0))
    ds = FluidDataset(manifest, "train", "cgli")
    with pytest.raises(ValueError):
        ds[0]


def test_dataset_missing_split(tmp_path):
    manifest = synthetic_manifest(tmp_path, n=2, size=32)
    with pytest.raises(ValueError):
        FluidDataset(manifest, "test", "cgli")

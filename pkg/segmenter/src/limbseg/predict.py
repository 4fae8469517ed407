"""Inference: LSR1 image in, LSR1 probability raster out."""

from __future__ import annotations

import numpy as np
import torch

from .lsr1 import Raster, read_raster, write_raster
from .train import load_checkpoint


def predict_raster(model, raster: Raster) -> np.ndarray:
    img = raster.array.astype(np.float32)
    with torch.no_grad():
        logits = model(torch.from_numpy(img).reshape(1, 1, *img.shape))
        prob = torch.sigmoid(logits)[0, 0].numpy()
    return prob.astype(np.float32)


def predict_file(checkpoint_path, in_path, out_path) -> None:
    model, ckpt = load_checkpoint(checkpoint_path)
    raster = read_raster(in_path)
    if raster.array.dtype != np.float32:
        raise ValueError(f"{in_path}: expected an f32 image raster")
    prob = predict_raster(model, raster)
    write_raster(out_path, prob, raster.cell_size, raster.origin,
                 {"stage": "prediction", "checkpoint_epoch": ckpt["epoch"],
                  "image_key": ckpt["image_key"]})

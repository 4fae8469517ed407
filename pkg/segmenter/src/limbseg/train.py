"""Training loop: BCE-with-logits, best-validation checkpointing, seedable."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import FluidDataset
from .model import SegmenterConfig, build_model


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def _epoch(model, loader, loss_fn, optimizer=None) -> float:
    training = optimizer is not None
    model.train(training)
    total = 0.0
    count = 0
    with torch.set_grad_enabled(training):
        for img, mask in loader:
            logits = model(img)
            loss = loss_fn(logits, mask)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total += float(loss) * img.shape[0]
            count += img.shape[0]
    return total / count


def train(manifest_path, image_key: str, out_path, cfg: SegmenterConfig,
          val_split: str = "val", log=print) -> dict:
    """Train on the manifest's train split; keep the lowest-val-loss weights.

    Returns the checkpoint payload (also written to ``out_path``); the loss
    history sits alongside as ``<out>.history.json``.
    """
    seed_everything(cfg.seed)
    train_ds = FluidDataset(manifest_path, "train", image_key,
                            augment=cfg.augment, seed=cfg.seed)
    val_ds = FluidDataset(manifest_path, val_split, image_key, augment=False)
    gen = torch.Generator().manual_seed(cfg.seed)
    train_loader = DataLoader(train_ds, batch_size=cfg.batch_size, shuffle=True,
                              generator=gen)
    val_loader = DataLoader(val_ds, batch_size=cfg.batch_size, shuffle=False)

    model = build_model(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.BCEWithLogitsLoss()

    best = {"val_loss": float("inf")}
    history = []
    for epoch in range(cfg.epochs):
        train_loss = _epoch(model, train_loader, loss_fn, optimizer)
        val_loss = _epoch(model, val_loader, loss_fn)
        history.append({"epoch": epoch, "train": train_loss, "val": val_loss})
        log(f"epoch {epoch:3d}  train {train_loss:.4f}  val {val_loss:.4f}")
        if val_loss < best["val_loss"]:
            best = {
                "val_loss": val_loss,
                "epoch": epoch,
                "image_key": image_key,
                "config": asdict(cfg),
                "state_dict": {k: v.clone() for k, v in model.state_dict().items()},
            }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(best, out_path)
    out_path.with_suffix(out_path.suffix + ".history.json").write_text(
        json.dumps(history, indent=2) + "\n")
    return best


def load_checkpoint(path):
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    cfg = SegmenterConfig(**ckpt["config"])
    cfg.pretrained = False          # weights come from the checkpoint
    model = build_model(cfg)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt

"""U-Net with a residual-34 encoder for single-channel 256 x 256 images.

Five encoding levels compress the input up to 512 channels; each decoding
level upsamples with a transposed convolution, concatenates the skip tensor
from its encoder counterpart, and refines with two conv/BN/ReLU blocks. The
head emits single-channel logits (sigmoid applied at predict time, folded
into the loss during training).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
from torch import nn
from torchvision.models import resnet34


@dataclass
class SegmenterConfig:
    pretrained: bool = True          # fall back to random init when weights
    epochs: int = 200                # cannot be fetched in the environment
    batch_size: int = 8
    learning_rate: float = 1e-4
    seed: int = 0
    augment: bool = True


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class _DecoderLevel(nn.Module):
    def __init__(self, c_in: int, c_skip: int, c_out: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(c_in, c_out, 2, stride=2)
        self.block = _conv_block(c_out + c_skip, c_out)

    def forward(self, x, skip=None):
        x = self.up(x)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.block(x)


class FluidSegmenter(nn.Module):
    """256 x 256 single-channel in, single-channel logits out."""

    def __init__(self, cfg: SegmenterConfig | None = None):
        super().__init__()
        cfg = cfg or SegmenterConfig()
        weights = None
        if cfg.pretrained:
            try:
                from torchvision.models import ResNet34_Weights

                weights = ResNet34_Weights.IMAGENET1K_V1
                encoder = resnet34(weights=weights)
            except Exception as exc:   # offline environments
                warnings.warn(f"pretrained encoder unavailable ({exc}); "
                              "using random initialization")
                encoder = resnet34(weights=None)
        else:
            encoder = resnet34(weights=None)

        self.stem = nn.Sequential(encoder.conv1, encoder.bn1, encoder.relu)
        self.pool = encoder.maxpool
        self.enc1 = encoder.layer1    # 64
        self.enc2 = encoder.layer2    # 128
        self.enc3 = encoder.layer3    # 256
        self.enc4 = encoder.layer4    # 512
        self.dec4 = _DecoderLevel(512, 256, 256)
        self.dec3 = _DecoderLevel(256, 128, 128)
        self.dec2 = _DecoderLevel(128, 64, 64)
        self.dec1 = _DecoderLevel(64, 64, 64)
        self.dec0 = _DecoderLevel(64, 0, 32)
        self.head = nn.Conv2d(32, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] == 1:
            x = x.repeat(1, 3, 1, 1)   # pretrained stem expects 3 channels
        s0 = self.stem(x)              # 64 x 128
        e1 = self.enc1(self.pool(s0))  # 64 x 64
        e2 = self.enc2(e1)             # 128 x 32
        e3 = self.enc3(e2)             # 256 x 16
        e4 = self.enc4(e3)             # 512 x 8
        d = self.dec4(e4, e3)
        d = self.dec3(d, e2)
        d = self.dec2(d, e1)
        d = self.dec1(d, s0)
        d = self.dec0(d)
        return self.head(d)


def build_model(cfg: SegmenterConfig | None = None) -> FluidSegmenter:
    return FluidSegmenter(cfg)

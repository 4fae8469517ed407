"""U-Net lymphatic-fluid segmenter operating on LSR1 image rasters."""

from .model import FluidSegmenter, SegmenterConfig, build_model
from .predict import predict_file, predict_raster
from .train import load_checkpoint, train

__version__ = "0.1.0"

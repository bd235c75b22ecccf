"""Learned noise-predictor backend serving the GPN1 wire protocol."""

from .data import PatchDataset, denormalize, extract_patches, normalize
from .model import UNet3d
from .serve import PredictorServer, serve_stdio
from .train import Checkpoint, TrainConfig, train

__version__ = "0.1.0"

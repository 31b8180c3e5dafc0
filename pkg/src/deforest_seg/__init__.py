"""Attention UNet deforestation segmentation for Landsat-8 and Sentinel-1 tiles."""

from .dataset import Manifest, ManifestEntry, Sample, Sensor, load_manifest, load_sample, split_dataset
from .losses import LossConfig, bce_loss, combined_loss, dice_loss
from .metrics import MetricsReport, evaluate
from .model import ModelConfig, build_attention_unet, forward, forward_with_gradients
from .preprocess import PreprocessConfig, assemble_sample, augment, minmax_normalize, percentile_stretch
from .refine import PredictionRecord, Query, RefineConfig, Variant, refine_query
from .trainer import TrainConfig, train, validate

__version__ = "0.1.0"

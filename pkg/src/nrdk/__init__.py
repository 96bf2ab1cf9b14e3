"""Synthetic deforming-surface videos, relief-invariant losses and depth nets.

The estimator stack (net, training, stitcher, experiments) sits behind a
lazy import so that data generation and inspection never pay the torch
import; everything else loads eagerly.
"""

from __future__ import annotations

from importlib import import_module

__version__ = "0.1.0"

from .config import (DEFAULT_CONFIG, SCENE_CONFIG, GenerationConfig,
                     config_from_dict, load_generation_config, override)
from .core import VideoTensor, average_pool_2x, bilinear_resize, grayscale
from .dataset import (dataset_count, dataset_read, dataset_write, fields_read,
                      fields_write)
from .errors import (ConfigError, DataFormatError, DegenerateInputError,
                     DivergenceError, FitError, MetricError, NrdkError,
                     SizeError)
from .generate import generate_clip, generate_clips, generate_dataset
from .invariants import (GbrParams, apply_alignment, eta, fit_linear_alignment,
                         gbr_apply, gbr_fit, iota, jet, moving_frame)
from .losses import LossValue, MetricReport, loss_gbr, loss_trsc, mae_sn
from .render import ClipSample, make_clip
from .rng import SeededRng
from .synth import build_surface, displacement_field, sample_params

_LAZY = {
    "NetConfig": "net",
    "DepthNet": "net",
    "build_net": "net",
    "OptimizerConfig": "training",
    "TrainState": "training",
    "train": "training",
    "predict_clip": "training",
    "checkpoint_save": "training",
    "checkpoint_load": "training",
    "NetPredictor": "training",
    "OraclePredictor": "training",
    "ConstantPlanePredictor": "training",
    "cola_window": "stitcher",
    "TilingPlan": "stitcher",
    "plan_tiling": "stitcher",
    "stitch": "stitcher",
    "reconstruct_video": "stitcher",
    "run_experiment1": "experiments",
    "run_experiment2": "experiments",
}

__all__ = [
    "__version__",
    "DEFAULT_CONFIG", "SCENE_CONFIG", "GenerationConfig", "config_from_dict",
    "load_generation_config", "override",
    "VideoTensor", "average_pool_2x", "bilinear_resize", "grayscale",
    "dataset_count", "dataset_read", "dataset_write", "fields_read", "fields_write",
    "ConfigError", "DataFormatError", "DegenerateInputError", "DivergenceError",
    "FitError", "MetricError", "NrdkError", "SizeError",
    "generate_clip", "generate_clips", "generate_dataset",
    "GbrParams", "apply_alignment", "eta", "fit_linear_alignment", "gbr_apply",
    "gbr_fit", "iota", "jet", "moving_frame",
    "LossValue", "MetricReport", "loss_gbr", "loss_trsc", "mae_sn",
    "ClipSample", "make_clip",
    "SeededRng",
    "build_surface", "displacement_field", "sample_params",
    *sorted(_LAZY),
]


def __getattr__(name: str):
    module = _LAZY.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_LAZY))

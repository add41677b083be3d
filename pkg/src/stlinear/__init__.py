"""Localized linear spatio-temporal traffic forecasting."""

import os as _os

_threads = _os.environ.get("STLINEAR_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from ._accel import USE_NUMBA, set_threads  # noqa: E402
from .data import (  # noqa: E402
    Normalizer,
    SeriesDataset,
    WindowSample,
    fit_normalizer,
    load_dataset,
    make_windows,
    split_samples,
    time_indices,
)
from .model import ModelConfig, ParameterSet, STLinear  # noqa: E402
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train  # noqa: E402

if _threads:
    set_threads(int(_threads))

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "Checkpoint",
    "ModelConfig",
    "Normalizer",
    "ParameterSet",
    "STLinear",
    "SeriesDataset",
    "TrainConfig",
    "WindowSample",
    "fit_normalizer",
    "load_checkpoint",
    "load_dataset",
    "make_windows",
    "save_checkpoint",
    "split_samples",
    "time_indices",
    "train",
]

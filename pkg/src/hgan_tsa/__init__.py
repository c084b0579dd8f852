"""Transient stability assessment with a hierarchy of conditional GANs.

Subpackages: ``grid`` (simulator and datasets), ``nn`` (GRU/dense kernel),
``evaluation`` (metrics, sweeps, baseline, reports). ``gan`` and ``hgan``
hold the single-level GAN and the stacked model.
"""

from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    HganError,
    ImbalanceError,
    NotReadyError,
)
from .hgan import HganConfig, HganModel, TsaVerdict, assess, load_model, save_model, train_hgan

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DivergenceError", "FormatError", "HganError", "ImbalanceError",
    "NotReadyError", "HganConfig", "HganModel", "TsaVerdict", "assess", "load_model",
    "save_model", "train_hgan", "__version__",
]

"""Denoising by lossy compression under the channel-matched distortion."""

from __future__ import annotations

from .exceptions import (
    BudgetExceededError,
    ConfigError,
    InfeasibleError,
    ModelMismatchError,
    ValidationError,
)
from .probcore import Channel, DistortionMatrix, JointPmf, Pmf, bec, bsc, matched_distortion
from .sources import IidSource, MarkovSource, SamplePath, sample_path

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ConfigError",
    "InfeasibleError",
    "ModelMismatchError",
    "ValidationError",
    "Channel",
    "DistortionMatrix",
    "JointPmf",
    "Pmf",
    "bec",
    "bsc",
    "matched_distortion",
    "IidSource",
    "MarkovSource",
    "SamplePath",
    "sample_path",
    "__version__",
]

"""Simulation and likelihood analysis of photon-pair (quantum illumination) lidar."""

__version__ = "0.1.0"

from .params import SystemParams, RateSpec, rate_to_mean, validate  # noqa: E402
from .click_model import ClickProbabilities, click_probabilities  # noqa: E402

__all__ = [
    "__version__",
    "SystemParams",
    "RateSpec",
    "rate_to_mean",
    "validate",
    "ClickProbabilities",
    "click_probabilities",
]

"""Background jamming waveforms and LUT-based dynamic background tracking."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .click_model import ClickProbabilities, click_probabilities
from .llv import LinearLlvCoeffs, linear_coeffs
from .params import SystemParams

__all__ = [
    "NoiseWaveform",
    "BackgroundLut",
    "instantaneous_rate",
    "measurement_rates",
    "build_lut",
    "select_levels",
    "tracked_llv",
    "tracked_llv_series",
    "sinusoid_amplitude",
    "write_lut_csv",
]

KINDS = ("constant", "sinusoid", "white", "composite")


@dataclass(frozen=True)
class NoiseWaveform:
    kind: str = "constant"
    mean_rate: float = 0.0  # Hz
    amplitude: float = 0.0  # Hz
    period: float = 1.0  # s
    white_sigma: float = 0.0  # Hz

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.mean_rate < 0:
            raise ValueError("mean_rate must be nonnegative")
        if self.kind in ("sinusoid", "composite"):
            if self.amplitude > self.mean_rate:
                raise ValueError("sinusoid amplitude exceeds mean rate")
            if not self.period > 0:
                raise ValueError("period must be positive")
        if self.white_sigma < 0:
            raise ValueError("white_sigma must be nonnegative")


def instantaneous_rate(waveform: NoiseWaveform, t, rng: np.random.Generator | None = None):
    """Background rate at time(s) ``t``; white noise is one fresh draw per value."""
    w = waveform
    t = np.asarray(t, dtype=float)
    rate = np.full(t.shape, w.mean_rate)
    if w.kind in ("sinusoid", "composite"):
        rate = rate + w.amplitude * np.sin(2 * np.pi * t / w.period)
    if w.kind in ("white", "composite") and w.white_sigma > 0:
        if rng is None:
            raise ValueError("white-noise waveforms need an rng")
        rate = rate + rng.normal(0.0, w.white_sigma, t.shape)
    rate = np.maximum(rate, 0.0)
    return float(rate) if rate.ndim == 0 else rate


def measurement_rates(waveform: NoiseWaveform, n: int, t_int: float, rng=None,
                      t0: float = 0.0) -> np.ndarray:
    """Rate per measurement, sampled at each measurement's midpoint."""
    t = t0 + (np.arange(n) + 0.5) * t_int
    return np.atleast_1d(instantaneous_rate(waveform, t, rng))


@dataclass(frozen=True)
class BackgroundLut:
    levels: np.ndarray  # Hz, strictly increasing
    probabilities: tuple[ClickProbabilities, ...]
    ci: tuple[LinearLlvCoeffs, ...]
    qi: tuple[LinearLlvCoeffs, ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError("a LUT needs at least two levels")
        if np.any(np.diff(self.levels) <= 0):
            raise ValueError("LUT levels must be strictly increasing")

    def __len__(self):
        return len(self.levels)

    @property
    def qi_m(self) -> np.ndarray:
        return np.array([c.m for c in self.qi])

    @property
    def qi_c(self) -> np.ndarray:
        return np.array([c.c for c in self.qi])


def build_lut(params: SystemParams, level_range: tuple[float, float], n_levels: int = 25) -> BackgroundLut:
    """Click probabilities and LLV coefficients on a grid of background rates,
    all other parameters held fixed."""
    lo, hi = level_range
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    if not hi > lo:
        raise ValueError(f"degenerate LUT range ({lo}, {hi})")
    levels = np.linspace(lo, hi, n_levels)
    probs, ci, qi = [], [], []
    for level in levels:
        cp = click_probabilities(params.with_signal_bg_rate(float(level)))
        probs.append(cp)
        ci.append(linear_coeffs(cp.p_h0_ci, cp.p_h1_ci))
        qi.append(linear_coeffs(cp.p_h0_qi, cp.p_h1_qi))
    return BackgroundLut(levels, tuple(probs), tuple(ci), tuple(qi))


def select_levels(lut: BackgroundLut, background) -> np.ndarray:
    """Index of the nearest LUT level; exact ties go to the lower level."""
    est = np.atleast_1d(np.asarray(background, dtype=float))
    levels = lut.levels
    upper = np.clip(np.searchsorted(levels, est, side="left"), 1, len(levels) - 1)
    lower = upper - 1
    take_upper = (levels[upper] - est) < (est - levels[lower])
    return np.where(take_upper, upper, lower)


def tracked_llv(measurement, lut: BackgroundLut, t_int: float | None = None) -> tuple[float, int]:
    """QI LLV using the LUT level closest to the measured signal rate.

    The background is estimated from the raw signal counts; the target
    return is ignored, which is valid while background dominates.
    """
    if t_int is None:
        est = measurement.background_estimate
    else:
        est = measurement.signal_counts / t_int
    level = int(select_levels(lut, est)[0])
    coeffs = lut.qi[level]
    value = coeffs.m * measurement.coincidence_counts + coeffs.c * measurement.idler_counts
    return float(value), level


def tracked_llv_series(records, lut: BackgroundLut) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`tracked_llv` over a :class:`MeasurementRecords`."""
    idx = select_levels(lut, records.background_estimate)
    values = lut.qi_m[idx] * records.coincidence_counts + lut.qi_c[idx] * records.idler_counts
    return values, idx


def sinusoid_amplitude(values, t, period: float) -> float:
    """Amplitude of the best-fit sinusoid at a known period (plus offset)."""
    values = np.asarray(values, float)
    t = np.asarray(t, float)
    w = 2 * math.pi / period
    design = np.column_stack([np.ones_like(t), np.sin(w * t), np.cos(w * t)])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(math.hypot(coef[1], coef[2]))


def write_lut_csv(lut: BackgroundLut, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level_hz", "p_h0_qi", "p_h1_qi", "M", "C"])
        for level, cp, c in zip(lut.levels, lut.probabilities, lut.qi):
            w.writerow([repr(float(level)), repr(cp.p_h0_qi), repr(cp.p_h1_qi), repr(c.m), repr(c.c)])

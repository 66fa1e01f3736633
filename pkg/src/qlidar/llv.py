"""Log-likelihood values, distinguishability and ROC analysis.

The LLV for ``x`` successes in ``k`` Bernoulli trials is linear in the
counts, ``Lambda = M x + C k``; positive values favour "target present".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import (
    CountExceedsTrials,
    DegenerateProbability,
    EmptySeries,
    NoConvergence,
    WindowTooLarge,
)

__all__ = [
    "LinearLlvCoeffs",
    "LlvSeries",
    "LlvGaussian",
    "LlvModel",
    "RocCurve",
    "linear_coeffs",
    "llv",
    "rolling_average",
    "empirical_pd_pfa",
    "empirical_distinguishability",
    "max_distinguishability",
    "analytic_llv_distribution",
    "analytic_pd_pfa",
    "analytic_distinguishability",
    "roc_curve",
    "empirical_roc",
    "equivalent_averaging_factor",
]


@dataclass(frozen=True)
class LinearLlvCoeffs:
    m: float
    c: float


@dataclass(frozen=True)
class LlvGaussian:
    """Normal LLV law; ``sigma == 0`` is the point mass of equal hypotheses."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    def sf(self, threshold):
        """P(Lambda > threshold)."""
        threshold = np.asarray(threshold, float)
        if self.sigma == 0:
            return np.where(self.mu > threshold, 1.0, 0.0)
        return norm.sf((threshold - self.mu) / self.sigma)


@dataclass
class LlvSeries:
    """Per-measurement LLV values.

    ``labels`` holds ``"H0"``/``"H1"`` per entry (or is None when unknown);
    ``window`` is the averaging length already applied.
    """

    values: np.ndarray
    labels: np.ndarray | None = None
    window: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != self.values.shape:
                raise ValueError("labels and values differ in length")

    def __len__(self):
        return len(self.values)

    def select(self, label: str) -> "LlvSeries":
        mask = self.labels == label
        return LlvSeries(self.values[mask], self.labels[mask], self.window)


@dataclass(frozen=True)
class RocCurve:
    p_fa: np.ndarray
    p_d: np.ndarray
    thresholds: np.ndarray = field(default=None)

    def sorted(self) -> "RocCurve":
        order = np.lexsort((self.p_d, self.p_fa))
        th = None if self.thresholds is None else np.asarray(self.thresholds)[order]
        return RocCurve(np.asarray(self.p_fa)[order], np.asarray(self.p_d)[order], th)


def linear_coeffs(p_h0: float, p_h1: float) -> LinearLlvCoeffs:
    for p in (p_h0, p_h1):
        if not 0.0 < p < 1.0:
            raise DegenerateProbability(f"click probability {p!r} must lie strictly in (0, 1)")
    m = math.log(p_h1) - math.log(p_h0) + math.log1p(-p_h0) - math.log1p(-p_h1)
    c = math.log1p(-p_h1) - math.log1p(-p_h0)
    return LinearLlvCoeffs(m, c)


def llv(x, k, coeffs: LinearLlvCoeffs):
    """``M x + C k``; works elementwise on arrays."""
    x_arr = np.asarray(x)
    k_arr = np.asarray(k)
    if np.any(x_arr > k_arr):
        raise CountExceedsTrials("click count exceeds number of trials")
    out = coeffs.m * x_arr + coeffs.c * k_arr
    return float(out) if out.ndim == 0 else out


def rolling_average(series: LlvSeries, n_av: int) -> LlvSeries:
    """Trailing moving mean; the first ``n_av - 1`` points are dropped."""
    n = len(series)
    if n_av < 1:
        raise ValueError("n_av must be at least 1")
    if n_av > n:
        raise WindowTooLarge(f"window {n_av} exceeds series length {n}")
    if n_av == 1:
        return LlvSeries(series.values.copy(), series.labels, series.window)
    windows = np.lib.stride_tricks.sliding_window_view(series.values, n_av)
    labels = None if series.labels is None else series.labels[n_av - 1:]
    return LlvSeries(windows.mean(axis=1), labels, series.window * n_av)


def _values(series) -> np.ndarray:
    values = series.values if isinstance(series, LlvSeries) else np.asarray(series, float)
    if values.size == 0:
        raise EmptySeries("distinguishability needs nonempty series")
    return values


def empirical_pd_pfa(h1_series, h0_series, threshold: float = 0.0) -> tuple[float, float]:
    h1 = _values(h1_series)
    h0 = _values(h0_series)
    return float(np.mean(h1 > threshold)), float(np.mean(h0 > threshold))


def empirical_distinguishability(h1_series, h0_series, threshold: float = 0.0) -> float:
    """phi = P_D - P_FA from the fractions of points above ``threshold``."""
    p_d, p_fa = empirical_pd_pfa(h1_series, h0_series, threshold)
    return 1.0 - ((1.0 - p_d) + p_fa)


def max_distinguishability(h1_series, h0_series) -> tuple[float, float]:
    """Best phi over all thresholds, and the threshold achieving it."""
    h1 = np.sort(_values(h1_series))
    h0 = np.sort(_values(h0_series))
    candidates = np.concatenate([h1, h0, [-np.inf]])
    p_d = 1.0 - np.searchsorted(h1, candidates, side="right") / h1.size
    p_fa = 1.0 - np.searchsorted(h0, candidates, side="right") / h0.size
    phi = p_d - p_fa
    best = int(np.argmax(phi))
    return float(phi[best]), float(candidates[best])


def analytic_llv_distribution(coeffs: LinearLlvCoeffs, p: float, k: float, n_av: int = 1) -> LlvGaussian:
    """Gaussian approximation of the LLV for binomial(k, p) counts averaged n_av times."""
    x_mean = k * p
    x_sigma = math.sqrt(k * p * (1.0 - p))
    mu = coeffs.m * x_mean + coeffs.c * k
    return LlvGaussian(mu, abs(coeffs.m) * x_sigma / math.sqrt(n_av))


def analytic_pd_pfa(h1: LlvGaussian, h0: LlvGaussian, threshold: float = 0.0) -> tuple[float, float]:
    return float(h1.sf(threshold)), float(h0.sf(threshold))


@dataclass(frozen=True)
class LlvModel:
    """Single-shot LLV Gaussians for one detection scheme (CI or QI)."""

    h1: LlvGaussian
    h0: LlvGaussian

    @classmethod
    def from_probabilities(cls, p_h0: float, p_h1: float, k: float) -> "LlvModel":
        coeffs = linear_coeffs(p_h0, p_h1)
        return cls(
            analytic_llv_distribution(coeffs, p_h1, k),
            analytic_llv_distribution(coeffs, p_h0, k),
        )

    def averaged(self, n_av: float) -> "LlvModel":
        s = math.sqrt(n_av)
        return LlvModel(
            LlvGaussian(self.h1.mu, self.h1.sigma / s),
            LlvGaussian(self.h0.mu, self.h0.sigma / s),
        )

    def pd_pfa(self, n_av: float = 1, threshold: float = 0.0) -> tuple[float, float]:
        model = self.averaged(n_av)
        return analytic_pd_pfa(model.h1, model.h0, threshold)

    def distinguishability(self, n_av: float = 1, threshold: float = 0.0) -> float:
        p_d, p_fa = self.pd_pfa(n_av, threshold)
        return p_d - p_fa

    def pd_at_pfa(self, p_fa, n_av: float = 1) -> np.ndarray:
        """Detection probability of the threshold that yields ``p_fa``."""
        model = self.averaged(n_av)
        threshold = model.h0.mu + model.h0.sigma * norm.isf(np.asarray(p_fa, float))
        return model.h1.sf(threshold)


def analytic_distinguishability(h1: LlvGaussian, h0: LlvGaussian, threshold: float = 0.0) -> float:
    p_d, p_fa = analytic_pd_pfa(h1, h0, threshold)
    return p_d - p_fa


def roc_curve(h1: LlvGaussian, h0: LlvGaussian, grid) -> RocCurve:
    grid = np.asarray(grid, float)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    return RocCurve(h0.sf(grid), h1.sf(grid), grid)


def empirical_roc(h1_series, h0_series, grid) -> RocCurve:
    grid = np.asarray(grid, float)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    h1 = np.sort(_values(h1_series))
    h0 = np.sort(_values(h0_series))
    p_d = 1.0 - np.searchsorted(h1, grid, side="right") / h1.size
    p_fa = 1.0 - np.searchsorted(h0, grid, side="right") / h0.size
    return RocCurve(p_fa, p_d, grid)


def equivalent_averaging_factor(
    ci: LlvModel,
    qi: LlvModel | None = None,
    n_av: float = 1,
    target_roc: RocCurve | None = None,
    grid_size: int = 201,
    rtol: float = 1e-6,
) -> float:
    """Smallest multiplier f so that CI averaged over ``n_av * f`` measurements
    has an ROC at least as good as ``target_roc`` at every target point.

    Without an explicit target, the analytic QI ROC at ``n_av`` is used.
    Target points with P_FA in {0, 1} or P_D == 1 carry no usable constraint
    for Gaussian ROCs and are skipped.
    """
    if target_roc is None:
        if qi is None:
            raise ValueError("need either a QI model or a target ROC")
        model = qi.averaged(n_av)
        lo = min(model.h0.mu - 8 * model.h0.sigma, model.h1.mu - 8 * model.h1.sigma)
        hi = max(model.h0.mu + 8 * model.h0.sigma, model.h1.mu + 8 * model.h1.sigma)
        target_roc = roc_curve(model.h1, model.h0, np.linspace(lo, hi, grid_size))
    p_fa = np.asarray(target_roc.p_fa, float)
    p_d = np.asarray(target_roc.p_d, float)
    usable = (p_fa > 0) & (p_fa < 1) & (p_d < 1)
    p_fa, p_d = p_fa[usable], p_d[usable]
    if p_fa.size == 0:
        raise ValueError("target ROC has no interior points")

    def dominates(f):
        return bool(np.all(ci.pd_at_pfa(p_fa, n_av * f) >= p_d - 1e-12))

    f_lo, f_hi = 1e-6, 1e6
    if not dominates(f_hi):
        raise NoConvergence("CI cannot match the target ROC with f <= 1e6")
    if dominates(f_lo):
        return f_lo
    # bisection in log space; dominance is monotone in f
    while f_hi / f_lo - 1.0 > rtol:
        mid = math.sqrt(f_lo * f_hi)
        if dominates(mid):
            f_hi = mid
        else:
            f_lo = mid
    return f_hi

"""Event-level sampler of the photon-pair lidar chain.

Each coincidence window draws a thermal (geometric) number of pairs. Idler
photons are kept with probability ``eta_i``, signal photons with
``xi * eta_s``, and both arms receive independent Poisson background after
efficiency. A threshold detector clicks on one or more photons.

Two routes produce measurement-level counts:

* brute force, window by window (:func:`sample_windows`); this is the
  oracle the closed-form click model is checked against;
* aggregate, drawing the four joint (idler, signal) outcome counts of one
  integration time from a multinomial whose cell probabilities are the
  sampler's own exact per-window law (:func:`window_joint_probs`). Windows
  are i.i.d., so this has the same distribution as the brute-force loop
  and makes paper-scale runs (5e7 windows per measurement) feasible.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import InsufficientStatistics
from .params import SystemParams

__all__ = [
    "H0",
    "H1",
    "TrialRecord",
    "WindowSamples",
    "MeasurementRecord",
    "MeasurementRecords",
    "RngSeedPolicy",
    "sample_window",
    "sample_windows",
    "window_joint_probs",
    "run_measurement",
    "run_block",
    "estimate_g2",
]

H0 = "H0"
H1 = "H1"

_CHUNK = 2_000_000


class TrialRecord(NamedTuple):
    idler_click: bool
    signal_click: bool
    window_index: int


@dataclass
class WindowSamples:
    idler_click: np.ndarray
    signal_click: np.ndarray

    def __len__(self):
        return len(self.idler_click)

    @property
    def coincidence(self) -> np.ndarray:
        return self.idler_click & self.signal_click


@dataclass(frozen=True)
class MeasurementRecord:
    signal_counts: int
    idler_counts: int
    coincidence_counts: int
    k_ci: int
    background_estimate: float  # Hz, from signal counts

    def __post_init__(self):
        if self.coincidence_counts > min(self.signal_counts, self.idler_counts):
            raise ValueError("coincidences exceed singles")
        if self.signal_counts > self.k_ci:
            raise ValueError("signal counts exceed number of windows")


@dataclass
class MeasurementRecords:
    """Column store for a sequence of measurements."""

    signal_counts: np.ndarray
    idler_counts: np.ndarray
    coincidence_counts: np.ndarray
    k_ci: np.ndarray
    background_estimate: np.ndarray

    def __len__(self):
        return len(self.signal_counts)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return MeasurementRecords(**{f.name: getattr(self, f.name)[i] for f in fields(self)})
        return MeasurementRecord(
            int(self.signal_counts[i]),
            int(self.idler_counts[i]),
            int(self.coincidence_counts[i]),
            int(self.k_ci[i]),
            float(self.background_estimate[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_records(cls, records) -> "MeasurementRecords":
        records = list(records)
        return cls(
            np.array([r.signal_counts for r in records], dtype=np.int64),
            np.array([r.idler_counts for r in records], dtype=np.int64),
            np.array([r.coincidence_counts for r in records], dtype=np.int64),
            np.array([r.k_ci for r in records], dtype=np.int64),
            np.array([r.background_estimate for r in records], dtype=float),
        )

    @classmethod
    def concatenate(cls, parts) -> "MeasurementRecords":
        parts = list(parts)
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)})


@dataclass(frozen=True)
class RngSeedPolicy:
    """Derives an independent, reproducible generator per (block, index)."""

    base_seed: int = 0

    def generator(self, *stream_id: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.base_seed, spawn_key=tuple(int(s) for s in stream_id))
        return np.random.Generator(np.random.PCG64(seq))


def _signal_transmission(params: SystemParams, hypothesis: str) -> float:
    # beam block under H0
    return 0.0 if hypothesis == H0 else params.xi * params.eta_s


def _apply_dead_time(clicks: np.ndarray, dead_windows: int) -> np.ndarray:
    if dead_windows <= 0:
        return clicks
    out = np.zeros_like(clicks)
    blocked_until = -1
    for idx in np.flatnonzero(clicks):
        if idx > blocked_until:
            out[idx] = True
            blocked_until = idx + dead_windows
    return out


def sample_windows(
    params: SystemParams,
    rng: np.random.Generator,
    n_windows: int,
    hypothesis: str = H1,
    dead_windows: int = 0,
) -> WindowSamples:
    """Brute-force draw of ``n_windows`` consecutive coincidence windows.

    ``dead_windows`` suppresses clicks on each detector for that many
    windows after a registered click.
    """
    p = params
    t_sig = _signal_transmission(p, hypothesis)
    pairs = rng.geometric(1.0 / (1.0 + p.n_mean), size=n_windows) - 1
    has = np.flatnonzero(pairs)
    n = pairs[has]
    idler_photons = np.zeros(n_windows, dtype=np.int64)
    signal_photons = np.zeros(n_windows, dtype=np.int64)
    idler_photons[has] = rng.binomial(n, p.eta_i)
    signal_photons[has] = rng.binomial(n, t_sig)
    idler_photons += rng.poisson(p.eta_i * p.nbg_i, size=n_windows)
    signal_photons += rng.poisson(p.eta_s * p.nbg_s, size=n_windows)
    idler = _apply_dead_time(idler_photons > 0, dead_windows)
    signal = _apply_dead_time(signal_photons > 0, dead_windows)
    return WindowSamples(idler, signal)


def sample_window(params: SystemParams, rng: np.random.Generator, hypothesis: str = H1,
                  window_index: int = 0) -> TrialRecord:
    s = sample_windows(params, rng, 1, hypothesis)
    return TrialRecord(bool(s.idler_click[0]), bool(s.signal_click[0]), window_index)


def _silent_prob(n_mean: float, photon_loss: float, bg: float) -> float:
    """P(no click on a detector set) = exp(-bg) E[z^n] with 1 - z = photon_loss."""
    return math.exp(-bg - math.log1p(n_mean * photon_loss))


def _silent_complement(n_mean: float, photon_loss: float, bg: float) -> float:
    return -math.expm1(-bg - math.log1p(n_mean * photon_loss))


def window_joint_probs(params: SystemParams, hypothesis: str = H1) -> np.ndarray:
    """Exact per-window probabilities of (no click, signal only, idler only, both)."""
    p = params
    t = _signal_transmission(p, hypothesis)
    bi = p.eta_i * p.nbg_i
    bs = p.eta_s * p.nbg_s
    q_i = _silent_complement(p.n_mean, p.eta_i, bi)
    q_s = _silent_complement(p.n_mean, t, bs)
    q_any = _silent_complement(p.n_mean, p.eta_i + t - p.eta_i * t, bi + bs)
    p11 = max(q_i + q_s - q_any, 0.0)
    p10 = max(q_i - p11, 0.0)  # idler only
    p01 = max(q_s - p11, 0.0)  # signal only
    p00 = 1.0 - q_any
    return np.array([p00, p01, p10, p11])


def run_measurement(
    params: SystemParams,
    hypothesis: str,
    rng: np.random.Generator,
    method: str = "aggregate",
    dead_windows: int = 0,
) -> MeasurementRecord:
    """Counts over one integration time of ``params.k_ci`` windows."""
    k = params.k_ci
    if method == "aggregate":
        if dead_windows:
            raise ValueError("dead time needs the brute-force method")
        _, n01, n10, n11 = rng.multinomial(k, window_joint_probs(params, hypothesis))
        signal, idler, coinc = n01 + n11, n10 + n11, n11
    elif method == "brute":
        signal = idler = coinc = 0
        remaining = k
        while remaining:
            n = min(remaining, _CHUNK)
            s = sample_windows(params, rng, n, hypothesis, dead_windows)
            signal += int(s.signal_click.sum())
            idler += int(s.idler_click.sum())
            coinc += int(s.coincidence.sum())
            remaining -= n
    else:
        raise ValueError(f"unknown method {method!r}")
    return MeasurementRecord(int(signal), int(idler), int(coinc), k, signal / params.t_int)


def run_block(
    params: SystemParams,
    hypothesis: str,
    n_measurements: int,
    seeds: RngSeedPolicy,
    block_id: int = 0,
    signal_bg_rates=None,
) -> MeasurementRecords:
    """Independent measurements, each on its own seeded stream.

    ``signal_bg_rates`` optionally gives a detected background rate (Hz)
    per measurement, e.g. from a jamming waveform.
    """
    records = []
    for i in range(n_measurements):
        p = params
        if signal_bg_rates is not None:
            p = params.with_signal_bg_rate(float(signal_bg_rates[i]))
        records.append(run_measurement(p, hypothesis, seeds.generator(block_id, i)))
    return MeasurementRecords.from_records(records)


# -- heralded g2 ---------------------------------------------------------

def _hbt_outcome_probs(params: SystemParams, source: str = "thermal") -> dict:
    """Exact law of (idler, arm1, arm2) clicks with the signal split 50/50."""
    p = params
    t = p.xi * p.eta_s
    bi = p.eta_i * p.nbg_i
    bs = p.eta_s * p.nbg_s
    detectors = ("I", "1", "2")

    def silent(group):
        loss_i = p.eta_i if "I" in group else 0.0
        arms = sum(d in group for d in ("1", "2"))
        loss_s = t * arms / 2.0
        loss = 1.0 - (1.0 - loss_i) * (1.0 - loss_s)
        bg = (bi if "I" in group else 0.0) + bs * arms / 2.0
        if source == "coherent":
            # idler keeps its thermal marginal; the arms see independent Poisson light
            idler = _silent_prob(p.n_mean, loss_i, bi) if "I" in group else 1.0
            return idler * math.exp(-p.n_mean * loss_s - bs * arms / 2.0)
        return _silent_prob(p.n_mean, loss, bg)

    probs = {}
    for clicked in itertools.product((0, 1), repeat=3):
        on = [d for d, c in zip(detectors, clicked) if c]
        off = [d for d, c in zip(detectors, clicked) if not c]
        total = 0.0
        for r in range(len(on) + 1):
            for sub in itertools.combinations(on, r):
                total += (-1) ** r * silent(set(off) | set(sub))
        probs[clicked] = max(total, 0.0)
    return probs


def estimate_g2(params: SystemParams, rng: np.random.Generator, windows: int,
                method: str = "aggregate", source: str = "thermal") -> float:
    """Heralded g2(0) of the signal arm from a three-detector HBT emulation.

    The estimator is N_I12 * N_I / (N_I1 * N_I2) over ``windows`` windows.
    ``source="coherent"`` feeds the HBT arms with Poisson light of the same
    mean, uncorrelated with the idler (a reference for which g2 = 1).
    """
    if source not in ("thermal", "coherent"):
        raise ValueError(f"unknown source {source!r}")
    if method == "aggregate":
        probs = _hbt_outcome_probs(params, source)
        keys = list(probs)
        pv = np.array([probs[k] for k in keys])
        counts = dict(zip(keys, rng.multinomial(windows, pv / pv.sum())))
        n_i = sum(v for k, v in counts.items() if k[0])
        n_i1 = counts[(1, 1, 0)] + counts[(1, 1, 1)]
        n_i2 = counts[(1, 0, 1)] + counts[(1, 1, 1)]
        n_i12 = counts[(1, 1, 1)]
    elif method == "brute":
        p = params
        t = p.xi * p.eta_s
        n_i = n_i1 = n_i2 = n_i12 = 0
        remaining = windows
        while remaining:
            n = min(remaining, _CHUNK)
            pairs = rng.geometric(1.0 / (1.0 + p.n_mean), size=n) - 1
            idler = rng.binomial(pairs, p.eta_i) + rng.poisson(p.eta_i * p.nbg_i, n)
            if source == "coherent":
                kept = rng.poisson(p.n_mean * t, n)
            else:
                kept = rng.binomial(pairs, t)
            arm1 = rng.binomial(kept, 0.5)
            arm2 = kept - arm1
            arm1 = arm1 + rng.poisson(p.eta_s * p.nbg_s / 2, n)
            arm2 = arm2 + rng.poisson(p.eta_s * p.nbg_s / 2, n)
            ci = idler > 0
            c1 = ci & (arm1 > 0)
            c2 = ci & (arm2 > 0)
            n_i += int(ci.sum())
            n_i1 += int(c1.sum())
            n_i2 += int(c2.sum())
            n_i12 += int((c1 & c2).sum())
            remaining -= n
    else:
        raise ValueError(f"unknown method {method!r}")
    if n_i == 0 or n_i1 == 0 or n_i2 == 0:
        raise InsufficientStatistics(
            f"heralded counts too low for g2 (N_I={n_i}, N_I1={n_i1}, N_I2={n_i2})"
        )
    return n_i12 * n_i / (n_i1 * n_i2)

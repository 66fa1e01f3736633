"""Continuous-time detection streams and delayed coincidence counting.

Timestamps are integer picoseconds. Channel 0 is the idler (herald),
channel 1 the signal detector.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import norm

from .errors import FormatError, NonMonotonicTimestamps, UnsortedStream
from .montecarlo import MeasurementRecords
from .params import SystemParams

__all__ = [
    "IDLER",
    "SIGNAL",
    "TimeTagStream",
    "CoincidenceChannel",
    "JitterModel",
    "generate_stream",
    "count_coincidences",
    "delay_histogram",
    "fit_delay_peak",
    "window_capture_fraction",
    "write_timetags",
    "parse_timetags",
    "write_histogram_csv",
    "SPEED_OF_LIGHT",
]

IDLER = 0
SIGNAL = 1
CHANNEL_NAMES = {IDLER: "idler", SIGNAL: "signal"}
PS = 1e-12
SPEED_OF_LIGHT = 299_792_458.0

_MAGIC = b"QLTT"
_RECORD = np.dtype([("t", "<u8"), ("ch", "u1")])


@dataclass
class TimeTagStream:
    times: np.ndarray  # int64 picoseconds
    channels: np.ndarray  # uint8
    resolution_ps: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.times.shape != self.channels.shape:
            raise ValueError("times and channels differ in length")

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.resolution_ps == other.resolution_ps
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.channels, other.channels)
        )

    @property
    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times) >= 0))

    def channel_times(self, channel: int) -> np.ndarray:
        return self.times[self.channels == channel]

    @classmethod
    def empty(cls) -> "TimeTagStream":
        return cls(np.empty(0, np.int64), np.empty(0, np.uint8))

    @classmethod
    def merge(cls, idler_ps, signal_ps) -> "TimeTagStream":
        times = np.concatenate([np.asarray(idler_ps, np.int64), np.asarray(signal_ps, np.int64)])
        chans = np.concatenate([
            np.full(len(idler_ps), IDLER, np.uint8),
            np.full(len(signal_ps), SIGNAL, np.uint8),
        ])
        order = np.lexsort((chans, times))
        return cls(times[order], chans[order])


@dataclass(frozen=True)
class CoincidenceChannel:
    delay: float  # seconds
    window: float  # seconds
    label: str = ""

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("coincidence window must be positive")
        if not self.delay >= 0:
            raise ValueError("channel delay must be nonnegative")


@dataclass(frozen=True)
class JitterModel:
    sigma: float = 0.0  # seconds, per detection

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("jitter sigma must be nonnegative")


def _poisson_times(rate: float, start: float, duration: float, rng) -> np.ndarray:
    n = rng.poisson(rate * duration) if rate > 0 else 0
    return start + rng.random(n) * duration


def generate_stream(
    params: SystemParams,
    target_delay: float,
    jitter: JitterModel,
    duration: float,
    rng: np.random.Generator,
    start: float = 0.0,
    signal_bg_rate: float | None = None,
) -> TimeTagStream:
    """Simulate tags over ``[start, start + duration)``.

    Pairs are emitted as a Poisson process at ``params.pair_rate``; the
    target is absent when ``params.xi == 0``. Background rates are the
    detected rates implied by ``params`` unless ``signal_bg_rate`` overrides
    the signal one.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    p = params
    emit = _poisson_times(p.pair_rate, start, duration, rng)
    keep_i = rng.random(emit.size) < p.eta_i
    keep_s = rng.random(emit.size) < p.xi * p.eta_s
    idler = emit[keep_i] + rng.normal(0.0, jitter.sigma, keep_i.sum()) if jitter.sigma else emit[keep_i]
    sig = emit[keep_s] + target_delay
    if jitter.sigma:
        sig = sig + rng.normal(0.0, jitter.sigma, sig.size)
    bg_s = p.signal_bg_rate if signal_bg_rate is None else signal_bg_rate
    idler = np.concatenate([idler, _poisson_times(p.idler_bg_rate, start, duration, rng)])
    sig = np.concatenate([sig, _poisson_times(bg_s, start, duration, rng)])
    idler_ps = np.rint(idler / PS).astype(np.int64)
    sig_ps = np.rint(sig / PS).astype(np.int64)
    # jitter can push the first tags before t = 0; unsigned files cannot hold them
    return TimeTagStream.merge(idler_ps[idler_ps >= 0], sig_ps[sig_ps >= 0])


def _match_channel(t_idler: np.ndarray, t_signal: np.ndarray, delay_ps: float, half_ps: float) -> np.ndarray:
    """Boolean per idler tag: did it claim a signal tag in its window?

    Each idler claims the closest unused signal tag inside
    ``[t + delay - half, t + delay + half]``; a signal tag is claimed at most
    once. Idlers whose candidate ranges overlap are resolved greedily in
    time order; all others are independent and handled vectorised.
    """
    centre = t_idler + delay_ps
    lo = np.searchsorted(t_signal, centre - half_ps, side="left")
    hi = np.searchsorted(t_signal, centre + half_ps, side="right")
    fired = hi > lo
    if t_idler.size < 2:
        return fired
    nonempty = np.flatnonzero(fired)
    if nonempty.size < 2:
        return fired
    # consecutive nonempty idlers share candidates iff ranges overlap
    shared = hi[nonempty[:-1]] > lo[nonempty[1:]]
    if not shared.any():
        return fired
    starts = np.flatnonzero(shared)
    # group overlapping runs into clusters
    cluster_edges = np.flatnonzero(np.diff(starts) > 1)
    run_starts = np.concatenate([[starts[0]], starts[cluster_edges + 1]])
    run_ends = np.concatenate([starts[cluster_edges], [starts[-1]]]) + 1
    for a, b in zip(run_starts, run_ends):
        used = set()
        for idx in nonempty[a:b + 1]:
            cand = np.arange(lo[idx], hi[idx])
            cand = [j for j in cand[np.argsort(np.abs(t_signal[cand] - centre[idx]), kind="stable")]
                    if j not in used]
            if cand:
                used.add(cand[0])
                fired[idx] = True
            else:
                fired[idx] = False
    return fired


def count_coincidences(
    stream: TimeTagStream,
    channels,
    bin: float,
    start: float = 0.0,
    n_bins: int | None = None,
) -> list[MeasurementRecords]:
    """Per-channel measurement records aggregated over integration bins.

    ``k_ci`` of a channel's record is the number of whole coincidence
    windows in one bin.
    """
    if not stream.is_sorted:
        raise UnsortedStream("time-tag stream must be sorted by timestamp")
    bin_ps = bin / PS
    start_ps = start / PS
    t_idler = stream.channel_times(IDLER)
    t_signal = stream.channel_times(SIGNAL)
    if n_bins is None:
        last = stream.times[-1] if len(stream) else start_ps
        n_bins = max(int((last - start_ps) // bin_ps) + 1, 1)

    def binned(times, weights=None):
        idx = np.floor((times - start_ps) / bin_ps).astype(np.int64)
        ok = (idx >= 0) & (idx < n_bins)
        w = None if weights is None else weights[ok]
        return np.bincount(idx[ok], weights=w, minlength=n_bins).astype(np.int64)

    idler_counts = binned(t_idler)
    signal_counts = binned(t_signal)
    out = []
    for ch in channels:
        fired = _match_channel(t_idler, t_signal, ch.delay / PS, ch.window / PS / 2)
        coinc = binned(t_idler[fired])
        k = int(math.floor(bin / ch.window * (1 + 1e-12)))
        out.append(MeasurementRecords(
            signal_counts=signal_counts.copy(),
            idler_counts=idler_counts.copy(),
            coincidence_counts=coinc,
            k_ci=np.full(n_bins, k, np.int64),
            background_estimate=signal_counts / bin,
        ))
    return out


def delay_histogram(stream: TimeTagStream, range: tuple[float, float], bin_width: float):
    """Histogram of signal-minus-idler delays in ``range`` (seconds).

    Returns ``(bin_centres_s, counts)``.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    lo_s, hi_s = range
    n_bins = int(round((hi_s - lo_s) / bin_width))
    # round off float noise so integer-ps delays land in the bin they start
    edges_ps = np.round((lo_s + bin_width * np.arange(n_bins + 1)) / PS, 6)
    t_idler = stream.channel_times(IDLER)
    t_signal = stream.channel_times(SIGNAL)
    j_lo = np.searchsorted(t_signal, t_idler + edges_ps[0], side="left")
    j_hi = np.searchsorted(t_signal, t_idler + edges_ps[-1], side="left")
    n = j_hi - j_lo
    total = int(n.sum())
    if total:
        owner = np.repeat(np.arange(t_idler.size), n)
        offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        diffs = t_signal[j_lo[owner] + offsets] - t_idler[owner]
    else:
        diffs = np.empty(0)
    counts, _ = np.histogram(diffs, bins=edges_ps)
    centres = (edges_ps[:-1] + edges_ps[1:]) / 2 * PS
    return centres, counts


def _gauss_const(x, amp, mu, sigma, base):
    return base + amp * np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def fit_delay_peak(centres, counts) -> tuple[float, float]:
    """Fit a Gaussian on a flat accidental floor; returns (delay, sigma) in seconds."""
    centres = np.asarray(centres, float)
    counts = np.asarray(counts, float)
    scale = 1e-9
    x = centres / scale
    base0 = float(np.median(counts))
    i = int(np.argmax(counts))
    width0 = max(3 * (x[1] - x[0]), 0.1)
    popt, _ = curve_fit(
        _gauss_const, x, counts,
        p0=(counts[i] - base0, x[i], width0, base0),
        sigma=np.sqrt(np.maximum(counts, 1.0)),
        maxfev=20000,
    )
    return popt[1] * scale, abs(popt[2]) * scale


def window_capture_fraction(window: float, sigma: float, offset: float = 0.0) -> float:
    """Probability that a N(offset, sigma) delay error lands in a centred window."""
    half = window / 2
    if sigma == 0:
        return float(-half <= offset <= half)
    return float(norm.cdf((half - offset) / sigma) - norm.cdf((-half - offset) / sigma))


# -- file formats ----------------------------------------------------------

def _header(stream: TimeTagStream) -> dict:
    return {
        "resolution_ps": stream.resolution_ps,
        "channels": {str(k): v for k, v in CHANNEL_NAMES.items()},
    }


def write_timetags(stream: TimeTagStream, path, format: str = "binary") -> None:
    """Binary: ``QLTT`` magic, u16 version, u32 header length, JSON header,
    then packed little-endian ``(u64 ps, u8 channel)`` records.
    CSV: ``#``-prefixed header lines, then ``timestamp_ps,channel`` rows.
    """
    path = Path(path)
    if np.any(stream.times < 0):
        raise FormatError("negative timestamps cannot be serialised")
    header = json.dumps(_header(stream), sort_keys=True).encode()
    if format == "binary":
        rec = np.empty(len(stream), dtype=_RECORD)
        rec["t"] = stream.times
        rec["ch"] = stream.channels
        with path.open("wb") as fh:
            fh.write(_MAGIC + struct.pack("<HI", 1, len(header)) + header)
            fh.write(rec.tobytes())
    elif format == "csv":
        with path.open("w", newline="") as fh:
            fh.write(f"# resolution_ps={stream.resolution_ps}\n")
            fh.write("# channels=" + ",".join(f"{k}:{v}" for k, v in CHANNEL_NAMES.items()) + "\n")
            fh.write("timestamp_ps,channel\n")
            np.savetxt(fh, np.column_stack([stream.times, stream.channels]), fmt="%d", delimiter=",")
    else:
        raise ValueError(f"unknown format {format!r}")


def _check_monotonic(times: np.ndarray) -> None:
    bad = np.flatnonzero(np.diff(times) < 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise NonMonotonicTimestamps(
            f"timestamp {int(times[i])} ps precedes previous {int(times[i - 1])} ps", record=i
        )


def _parse_binary(data: bytes) -> TimeTagStream:
    if len(data) < 10:
        raise FormatError("truncated header")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != 1:
        raise FormatError(f"unsupported version {version}")
    try:
        header = json.loads(data[10:10 + hlen])
    except ValueError as exc:
        raise FormatError(f"bad header: {exc}") from None
    body = data[10 + hlen:]
    if len(body) % _RECORD.itemsize:
        raise FormatError("trailing partial record", record=len(body) // _RECORD.itemsize)
    rec = np.frombuffer(body, dtype=_RECORD)
    times = rec["t"].astype(np.int64)
    chans = rec["ch"].copy()
    bad = np.flatnonzero(~np.isin(chans, list(CHANNEL_NAMES)))
    if bad.size:
        raise FormatError(f"unknown channel {int(chans[bad[0]])}", record=int(bad[0]))
    _check_monotonic(times)
    return TimeTagStream(times, chans, int(header.get("resolution_ps", 1)))


def _parse_csv(text: str) -> TimeTagStream:
    resolution = 1
    times, chans = [], []
    reader = csv.reader(io.StringIO(text))
    index = 0
    for row in reader:
        if not row or not "".join(row).strip():
            continue
        first = row[0].strip()
        if first.startswith("#"):
            if first.startswith("# resolution_ps="):
                resolution = int(first.split("=", 1)[1])
            continue
        if first == "timestamp_ps":
            continue
        if len(row) != 2:
            raise FormatError(f"expected 2 fields, got {len(row)}", record=index)
        try:
            t, ch = int(row[0]), int(row[1])
        except ValueError:
            raise FormatError(f"non-integer field in {row!r}", record=index) from None
        if ch not in CHANNEL_NAMES:
            raise FormatError(f"unknown channel {ch}", record=index)
        if t < 0:
            raise FormatError("negative timestamp", record=index)
        times.append(t)
        chans.append(ch)
        index += 1
    times = np.array(times, dtype=np.int64)
    _check_monotonic(times)
    return TimeTagStream(times, np.array(chans, dtype=np.uint8), resolution)


def parse_timetags(path) -> TimeTagStream:
    data = Path(path).read_bytes()
    if not data:
        return TimeTagStream.empty()
    if data[:4] == _MAGIC:
        return _parse_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("neither a binary time-tag file nor UTF-8 CSV") from None
    return _parse_csv(text)


def write_histogram_csv(centres, counts, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center_ps", "counts"])
        for c, n in zip(centres, counts):
            w.writerow([f"{c / PS:.3f}", int(n)])

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import accidental_rate, gaussian_overlap
from qlidar.errors import FormatError, NonMonotonicTimestamps, UnsortedStream
from qlidar.montecarlo import H1, sample_windows
from qlidar.params import SystemParams
from qlidar.timetag import (
    IDLER,
    SIGNAL,
    CoincidenceChannel,
    JitterModel,
    TimeTagStream,
    count_coincidences,
    delay_histogram,
    fit_delay_peak,
    generate_stream,
    parse_timetags,
    window_capture_fraction,
    write_histogram_csv,
    write_timetags,
)

NS = 1e-9
PS = 1e-12


def _p(**kw):
    base = dict(pair_rate=1e6, xi=1.0, eta_s=1.0, eta_i=1.0, signal_bg_rate=0.0, idler_bg_rate=0.0,
                tau_c=0.2e-9, t_int=0.1)
    base.update(kw)
    return SystemParams.from_rates(**base)


def _channels(delays, window=0.2 * NS):
    return [CoincidenceChannel(d, window, f"c{i}") for i, d in enumerate(delays)]


class TestGenerate:
    def test_zero_rates(self):
        s = generate_stream(_p(pair_rate=0.0), 1 * NS, JitterModel(0), 0.01, np.random.default_rng(0))
        assert len(s) == 0

    def test_exact_offset_without_jitter(self):
        s = generate_stream(_p(pair_rate=1e5), 1.77 * NS, JitterModel(0), 0.01, np.random.default_rng(1))
        ti, ts = s.channel_times(IDLER), s.channel_times(SIGNAL)
        assert ti.size == ts.size > 500
        assert np.all(ts - ti == 1770)

    def test_sorted_and_reproducible(self):
        a = generate_stream(_p(signal_bg_rate=1e5), 2 * NS, JitterModel(250e-12), 0.01, np.random.default_rng(2))
        b = generate_stream(_p(signal_bg_rate=1e5), 2 * NS, JitterModel(250e-12), 0.01, np.random.default_rng(2))
        assert a.is_sorted and a == b

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            generate_stream(_p(), 0, JitterModel(0), 0, np.random.default_rng())


class TestCoincidences:
    def test_single_pair(self):
        s = TimeTagStream.merge([1_000_000], [1_000_000 + 2520])
        recs = count_coincidences(s, _channels([1.77 * NS, 2.52 * NS, 3.27 * NS]), 1e-3)
        assert [int(r.coincidence_counts.sum()) for r in recs] == [0, 1, 0]

    def test_one_signal_per_idler_and_back(self):
        # two idlers compete for one signal tag; two signals in one idler window
        s = TimeTagStream.merge([1000, 1050], [2000])
        r = count_coincidences(s, _channels([1 * NS]), 1e-6)[0]
        assert r.coincidence_counts.sum() == 1
        s = TimeTagStream.merge([1000], [1990, 2010])
        r = count_coincidences(s, _channels([1 * NS]), 1e-6)[0]
        assert r.coincidence_counts.sum() == 1

    def test_unsorted(self):
        s = TimeTagStream(np.array([5, 1]), np.array([0, 1]))
        with pytest.raises(UnsortedStream):
            count_coincidences(s, _channels([0.0]), 1e-3)

    def test_duplicate_channels_identical(self):
        s = generate_stream(_p(signal_bg_rate=1e6, idler_bg_rate=1e5, xi=0.01), 2.52 * NS,
                            JitterModel(250e-12), 0.05, np.random.default_rng(3))
        a, b = count_coincidences(s, _channels([2.52 * NS, 2.52 * NS]), 0.01)
        assert np.array_equal(a.coincidence_counts, b.coincidence_counts)

    def test_accidental_rate_law(self):
        """Pure Poisson backgrounds over 10 s; 3 sigma against r_s r_i window."""
        rs, ri, w = 1e6, 1e5, 2 * NS
        p = _p(pair_rate=0.0, signal_bg_rate=rs, idler_bg_rate=ri, tau_c=w)
        total = 0
        for i in range(10):
            s = generate_stream(p, 0.0, JitterModel(0), 1.0, np.random.default_rng(100 + i), start=i * 1.0)
            total += int(count_coincidences(s, _channels([5 * NS], w), 1.0, start=i * 1.0, n_bins=1)[0]
                         .coincidence_counts.sum())
        expected = accidental_rate(rs, ri, w) * 10
        assert abs(total - expected) < 3 * math.sqrt(expected)

    @pytest.mark.parametrize("rs,ri", [(1e5, 1e5), (3e6, 2e4)])
    def test_accidental_grid(self, rs, ri):
        w = 1 * NS
        p = _p(pair_rate=0.0, signal_bg_rate=rs, idler_bg_rate=ri, tau_c=w)
        s = generate_stream(p, 0.0, JitterModel(0), 2.0, np.random.default_rng(7))
        n = count_coincidences(s, _channels([3 * NS], w), 2.0, n_bins=1)[0].coincidence_counts.sum()
        expected = accidental_rate(rs, ri, w) * 2.0
        assert abs(n - expected) < 3 * math.sqrt(expected)

    def test_crosstalk_fractions_match_overlap(self):
        sigma = 250e-12
        p = _p(pair_rate=1e6)
        s = generate_stream(p, 2.52 * NS, JitterModel(sigma), 0.05, np.random.default_rng(5))
        recs = count_coincidences(s, _channels([1.77 * NS, 2.52 * NS, 3.27 * NS]), 0.05, n_bins=1)
        n_idler = recs[0].idler_counts.sum()
        fracs = [r.coincidence_counts.sum() / n_idler for r in recs]
        rel = math.sqrt(2) * sigma
        matched = gaussian_overlap(0.2 * NS, rel, 0.0)
        adjacent = gaussian_overlap(0.2 * NS, rel, 0.75 * NS)
        se = math.sqrt(matched / n_idler)
        assert fracs[1] == pytest.approx(matched, abs=4 * se)
        assert fracs[0] == pytest.approx(adjacent, abs=4 * math.sqrt(adjacent / n_idler))
        assert fracs[2] == pytest.approx(adjacent, abs=4 * math.sqrt(adjacent / n_idler))
        assert fracs[0] < fracs[1]

    def test_capture_fraction_against_quadrature(self):
        for off in (0.0, 0.3 * NS, 0.75 * NS):
            assert window_capture_fraction(0.2 * NS, 354e-12, off) == pytest.approx(
                gaussian_overlap(0.2 * NS, 354e-12, off), rel=1e-9)
        assert window_capture_fraction(1.0, 0.0) == 1.0

    def test_agrees_with_windowed_sampler(self):
        """Re-binned tags of a window-level run reproduce its coincidences exactly."""
        tau = 2 * NS
        p = SystemParams(n_mean=0.05, xi=0.3, eta_s=0.5, eta_i=0.5, nbg_s=0.02, nbg_i=0.02, tau_c=tau, t_int=1e-3)
        win = sample_windows(p, np.random.default_rng(9), 200_000, H1)
        starts = np.arange(len(win)) * 2000  # ps
        delay = 3 * 2000
        s = TimeTagStream.merge(starts[win.idler_click], starts[win.signal_click] + delay)
        rec = count_coincidences(s, [CoincidenceChannel(delay * PS, tau)], 1e-4, n_bins=4)[0]
        assert rec.coincidence_counts.sum() == win.coincidence.sum()
        per_bin = win.coincidence.reshape(4, -1).sum(axis=1)
        assert np.array_equal(rec.coincidence_counts, per_bin)


class TestHistogram:
    def test_flat_without_target(self):
        p = _p(pair_rate=1e5, xi=0.0, signal_bg_rate=1e6, idler_bg_rate=1e5)
        s = generate_stream(p, 0.0, JitterModel(0), 0.2, np.random.default_rng(0))
        _, counts = delay_histogram(s, (0, 10 * NS), 0.5 * NS)
        mean = counts.mean()
        chi2 = np.sum((counts - mean) ** 2 / mean)
        assert chi2 < 20 + 4 * math.sqrt(40)

    def test_single_bin_peak(self):
        s = generate_stream(_p(pair_rate=1e5), 2.0 * NS, JitterModel(0), 0.01, np.random.default_rng(1))
        centres, counts = delay_histogram(s, (1.5 * NS, 2.5 * NS), 20e-12)
        assert counts.sum() == np.max(counts)
        assert centres[np.argmax(counts)] == pytest.approx(2.01 * NS, abs=10e-12)

    def test_jitter_width(self):
        p = _p(pair_rate=2e5, signal_bg_rate=1e5, idler_bg_rate=1e4)
        s = generate_stream(p, 2.52 * NS, JitterModel(250e-12), 0.2, np.random.default_rng(2))
        centres, counts = delay_histogram(s, (0.52 * NS, 4.52 * NS), 20e-12)
        delay, sigma = fit_delay_peak(centres, counts)
        assert sigma == pytest.approx(250e-12 * math.sqrt(2), rel=0.15)
        # c * sigma ~ 11 cm
        assert sigma * 299_792_458.0 == pytest.approx(0.106, rel=0.15)

    def test_peak_location_unbiased(self):
        p = _p(pair_rate=2e4, eta_i=0.3, xi=0.3, signal_bg_rate=1e5, idler_bg_rate=1e4)
        bin_width = 20e-12
        est = []
        for seed in range(100):
            s = generate_stream(p, 2.52 * NS, JitterModel(250e-12), 0.05, np.random.default_rng(seed))
            c, n = delay_histogram(s, (0.52 * NS, 4.52 * NS), bin_width)
            est.append(fit_delay_peak(c, n)[0])
        assert abs(np.mean(est) - 2.52 * NS) < bin_width / 2

    def test_bad_bin(self):
        with pytest.raises(ValueError):
            delay_histogram(TimeTagStream.empty(), (0, 1e-9), 0)

    def test_histogram_csv(self, tmp_path):
        write_histogram_csv(np.array([1e-9, 2e-9]), np.array([3, 4]), tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_text().splitlines() == ["bin_center_ps,counts", "1000.000,3", "2000.000,4"]


class TestFiles:
    def test_empty_file(self, tmp_path):
        f = tmp_path / "e.bin"
        f.write_bytes(b"")
        assert len(parse_timetags(f)) == 0

    @pytest.mark.parametrize("fmt", ["binary", "csv"])
    def test_round_trip(self, tmp_path, fmt):
        s = generate_stream(_p(signal_bg_rate=1e5, idler_bg_rate=1e4), 2 * NS, JitterModel(250e-12), 0.01,
                            np.random.default_rng(4))
        f = tmp_path / "tags"
        write_timetags(s, f, fmt)
        assert parse_timetags(f) == s

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 2**62), st.sampled_from([0, 1])), max_size=50),
           st.sampled_from(["binary", "csv"]))
    def test_round_trip_property(self, tmp_path_factory, events, fmt):
        events.sort()
        s = TimeTagStream(np.array([e[0] for e in events], np.int64), np.array([e[1] for e in events], np.uint8))
        f = tmp_path_factory.mktemp("rt") / "tags"
        write_timetags(s, f, fmt)
        assert parse_timetags(f) == s

    def test_out_of_order_csv(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("timestamp_ps,channel\n10,0\n20,1\n15,0\n")
        with pytest.raises(NonMonotonicTimestamps, match="record 2"):
            parse_timetags(f)

    def test_out_of_order_binary(self, tmp_path):
        s = TimeTagStream(np.array([10, 20, 15]), np.array([0, 1, 0]))
        f = tmp_path / "t.bin"
        write_timetags(s, f)
        with pytest.raises(NonMonotonicTimestamps) as info:
            parse_timetags(f)
        assert info.value.record == 2

    def test_bad_records(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("timestamp_ps,channel\n10,0\nabc,1\n")
        with pytest.raises(FormatError, match="record 1"):
            parse_timetags(f)
        f.write_text("10,7\n")
        with pytest.raises(FormatError, match="unknown channel"):
            parse_timetags(f)

    def test_truncated_binary(self, tmp_path):
        s = TimeTagStream(np.array([10, 20]), np.array([0, 1]))
        f = tmp_path / "t.bin"
        write_timetags(s, f)
        f.write_bytes(f.read_bytes()[:-3])
        with pytest.raises(FormatError, match="partial"):
            parse_timetags(f)

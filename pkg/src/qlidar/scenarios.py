"""End-to-end experiment harness: detection, jamming and rangefinding runs.

Every scenario writes a run directory with a per-measurement table, a
``summary.json`` and a ``metadata.json``. The empirical part of each summary
is recomputed from the table by :func:`summarize_detection` (and friends), so
``report`` can re-derive it later without rerunning anything.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .click_model import click_probabilities
from .jamming import (
    NoiseWaveform,
    build_lut,
    measurement_rates,
    sinusoid_amplitude,
    tracked_llv_series,
)
from .llv import (
    LlvModel,
    LlvSeries,
    empirical_distinguishability,
    empirical_roc,
    equivalent_averaging_factor,
    linear_coeffs,
    llv,
    rolling_average,
    roc_curve,
)
from .montecarlo import H0, H1, MeasurementRecords, RngSeedPolicy, run_block
from .params import SystemParams, check, db_to_ratio
from .timetag import (
    CoincidenceChannel,
    SPEED_OF_LIGHT,
    JitterModel,
    count_coincidences,
    delay_histogram,
    fit_delay_peak,
    generate_stream,
    window_capture_fraction,
)

__all__ = [
    "ScenarioConfig",
    "RangefindingSpec",
    "RunReport",
    "config_hash",
    "fig2_preset",
    "fig2_52db_preset",
    "fig4_preset",
    "fig5_preset",
    "run_scenario",
    "run_detection_scenario",
    "run_jamming_scenario",
    "run_rangefinding_scenario",
    "summarize_detection",
    "summarize_jamming",
    "summarize_rangefinding",
    "read_table",
    "load_report",
    "analytic_models",
]

KINDS = ("detection", "jamming", "rangefinding")
DEFAULT_SWEEP = (1, 2, 5, 10, 20, 50, 100, 150)


@dataclass(frozen=True)
class RangefindingSpec:
    delays: tuple[float, ...]  # s, one coincidence channel per entry
    labels: tuple[str, ...]
    schedule: tuple[tuple[str, int], ...]  # (label or "none", measurements)
    jitter: float = 250e-12  # s, per detector
    histogram_bin: float = 20e-12

    def __post_init__(self):
        if len(self.delays) != len(self.labels):
            raise ValueError("rangefinding delays and labels differ in length")
        if not self.schedule:
            raise ValueError("rangefinding schedule is empty")
        for label, n in self.schedule:
            if label != "none" and label not in self.labels:
                raise ValueError(f"schedule position {label!r} has no channel")
            if n < 1:
                raise ValueError("schedule counts must be positive")

    @property
    def move_indices(self) -> list[int]:
        """Measurement index at which each schedule block starts."""
        return [int(i) for i in np.cumsum([0] + [n for _, n in self.schedule[:-1]])]


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    system: SystemParams
    schedule: tuple[tuple[str, int], ...] = ()
    jamming: NoiseWaveform | None = None
    static_measurements: int = 0
    rangefinding: RangefindingSpec | None = None
    n_av: int = 50
    n_av_sweep: tuple[int, ...] = DEFAULT_SWEEP
    threshold_points: int = 201
    lut_spacing: float = 25e3  # Hz between LUT levels
    seed: int = 0
    name: str = "run"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        check(self.system)
        if self.kind != "rangefinding":
            if not self.schedule:
                raise ValueError("hypothesis schedule is empty")
            for hyp, n in self.schedule:
                if hyp not in (H0, H1):
                    raise ValueError(f"schedule hypothesis must be H0 or H1, got {hyp!r}")
                if n < 1:
                    raise ValueError("schedule counts must be positive")
        if self.kind == "jamming" and self.jamming is None:
            raise ValueError("jamming scenario needs a waveform")
        if self.kind == "rangefinding" and self.rangefinding is None:
            raise ValueError("rangefinding scenario needs positions")
        if self.n_av < 1:
            raise ValueError("n_av must be at least 1")

    @property
    def seeds(self) -> RngSeedPolicy:
        return RngSeedPolicy(self.seed)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return _replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["system"] = self.system.to_dict()
        return d


def _replace(cfg, **changes):
    from dataclasses import replace

    return replace(cfg, **changes)


def config_hash(config: ScenarioConfig) -> str:
    text = json.dumps(config.to_dict(), sort_keys=True, default=list)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunReport:
    kind: str
    table: list[dict]
    summary: dict
    metadata: dict
    extra_tables: dict = field(default_factory=dict)  # name -> list of row dicts

    def write(self, out_dir, fmt: str = "csv") -> Path:
        """Write all artifacts; returns the directory."""
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / f"measurements.{fmt}", self.table, fmt)
        for name, rows in self.extra_tables.items():
            _write_rows(out / f"{name}.{fmt}", rows, fmt)
        meta = dict(self.metadata, format=fmt)
        (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        (out / "summary.json").write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return out


# -- table I/O ------------------------------------------------------------

def _cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_rows(path: Path, rows: list[dict], fmt: str) -> None:
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
        path.write_text(json.dumps(clean, indent=1) + "\n")
        return
    buf = io.StringIO(newline="")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_cell(v) for v in r.values()])
    path.write_text(buf.getvalue())


def _parse_cell(text: str):
    if text == "":
        return math.nan
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path) -> list[dict]:
    path = Path(path)
    if path.suffix == ".json":
        rows = json.loads(path.read_text())
        return [{k: (math.nan if v is None else v) for k, v in r.items()} for r in rows]
    with path.open(newline="") as fh:
        return [{k: _parse_cell(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def _column(rows, name, where=None) -> np.ndarray:
    return np.array([r[name] for r in rows if where is None or where(r)], dtype=float)


def _metadata(config: ScenarioConfig) -> dict:
    return {
        "scenario": config.kind,
        "name": config.name,
        "seed": config.seed,
        "config_hash": config_hash(config),
        "config": config.to_dict(),
        "versions": {"qlidar": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }


# -- presets --------------------------------------------------------------

# Efficiencies and backgrounds of the 33.5 dB source. The quoted loss is the
# whole signal-arm transmission (xi * eta_s), which makes the return rate
# 377 kHz * 10**-3.35 = 168 Hz.
ETA_S = 0.1958
ETA_I = 0.2329


def _loss_to_xi(loss_db: float, eta_s: float = ETA_S) -> float:
    return db_to_ratio(loss_db) / eta_s


def fig2_preset(scale: str = "reduced", seed: int = 0) -> ScenarioConfig:
    """33.5 dB loss, 1 MHz background, T = 0.1 s."""
    n = {"reduced": 305, "paper": 3050}[scale]
    system = SystemParams.from_rates(
        pair_rate=377e3, xi=_loss_to_xi(33.5), eta_s=ETA_S, eta_i=ETA_I,
        signal_bg_rate=1e6, idler_bg_rate=12.3e3, tau_c=2e-9, t_int=0.1,
    )
    return ScenarioConfig("detection", system, ((H1, n), (H0, n)), n_av=50,
                          seed=seed, name=f"fig2-33.5dB-{scale}")


def fig2_52db_preset(scale: str = "reduced", seed: int = 0) -> ScenarioConfig:
    """52 dB loss, 1.13 MHz pairs, 1 MHz background, T = 1 s, N_av = 150."""
    n = {"reduced": 600, "paper": 3000}[scale]
    system = SystemParams.from_rates(
        pair_rate=1.13e6, xi=_loss_to_xi(52.0), eta_s=ETA_S, eta_i=ETA_I,
        signal_bg_rate=1e6, idler_bg_rate=25.3e3, tau_c=2e-9, t_int=1.0,
    )
    return ScenarioConfig("detection", system, ((H1, n), (H0, n)), n_av=150,
                          seed=seed, name=f"fig2-52dB-{scale}")


def fig4_preset(kind: str = "sinusoid", scale: str = "reduced", seed: int = 0) -> ScenarioConfig:
    """2.3 MHz mean background modulated by 0.3 MHz, optionally plus white noise."""
    n = {"reduced": 400, "paper": 2000}[scale]
    base = fig2_preset().system.with_signal_bg_rate(2.3e6)
    white = 0.1e6 if kind == "composite" else 0.0
    wave = NoiseWaveform(kind, mean_rate=2.3e6, amplitude=0.3e6, period=20.0, white_sigma=white)
    return ScenarioConfig("jamming", base, ((H1, n), (H0, n)), jamming=wave,
                          static_measurements=200, n_av=50, seed=seed,
                          name=f"fig4-{kind}-{scale}")


def fig5_preset(scale: str = "reduced", seed: int = 0) -> ScenarioConfig:
    """Three target positions probed by parallel coincidence channels."""
    counts = {"reduced": (200, 100, 100), "paper": (1000, 500, 500)}[scale]
    system = SystemParams.from_rates(
        pair_rate=377e3, xi=_loss_to_xi(33.5), eta_s=ETA_S, eta_i=ETA_I,
        signal_bg_rate=0.1e6, idler_bg_rate=12.3e3, tau_c=0.2e-9, t_int=0.1,
    )
    spec = RangefindingSpec(
        delays=(1.77e-9, 2.52e-9, 3.27e-9), labels=("A", "B", "C"),
        schedule=tuple(zip(("A", "B", "C"), counts)), jitter=250e-12,
    )
    wave = NoiseWaveform("sinusoid", mean_rate=0.1e6, amplitude=10e3, period=20.0)
    return ScenarioConfig("rangefinding", system, jamming=wave, rangefinding=spec,
                          n_av=50, seed=seed, name=f"fig5-{scale}")


# -- detection ------------------------------------------------------------

def _simulate_schedule(config: ScenarioConfig, rates_for=None):
    """Run each (hypothesis, n) block on its own seed stream."""
    parts = []
    for b, (hyp, n) in enumerate(config.schedule):
        rates = None if rates_for is None else rates_for(b, n)
        parts.append((b, hyp, run_block(config.system, hyp, n, config.seeds, b, rates)))
    return parts


def _block_rolling(values: np.ndarray, blocks: np.ndarray, n_av: int) -> np.ndarray:
    """Trailing mean restricted to each block; NaN until the window fills."""
    out = np.full(values.shape, np.nan)
    for b in np.unique(blocks):
        idx = np.flatnonzero(blocks == b)
        if idx.size >= n_av:
            out[idx[n_av - 1:]] = rolling_average(LlvSeries(values[idx]), n_av).values
    return out


def analytic_models(params: SystemParams) -> tuple[LlvModel, LlvModel]:
    """(CI, QI) single-shot Gaussian LLV models; QI trials are expected idler clicks."""
    cp = click_probabilities(params)
    k_qi = params.k_ci * cp.p_idler
    return (LlvModel.from_probabilities(cp.p_h0_ci, cp.p_h1_ci, params.k_ci),
            LlvModel.from_probabilities(cp.p_h0_qi, cp.p_h1_qi, k_qi))


def run_detection_scenario(config: ScenarioConfig) -> RunReport:
    params = config.system
    cp = click_probabilities(params)
    ci = linear_coeffs(cp.p_h0_ci, cp.p_h1_ci)
    qi = linear_coeffs(cp.p_h0_qi, cp.p_h1_qi)
    parts = _simulate_schedule(config)
    rec = MeasurementRecords.concatenate(p[2] for p in parts)
    blocks = np.concatenate([np.full(len(p[2]), p[0]) for p in parts])
    hyps = np.concatenate([np.full(len(p[2]), p[1]) for p in parts])

    llv_ci = llv(rec.signal_counts, rec.k_ci, ci)
    llv_qi = llv(rec.coincidence_counts, rec.idler_counts, qi)
    avg_ci = _block_rolling(llv_ci, blocks, config.n_av)
    avg_qi = _block_rolling(llv_qi, blocks, config.n_av)
    table = [
        {
            "index": i, "block": int(blocks[i]), "hypothesis": str(hyps[i]),
            "x_ci": int(rec.signal_counts[i]), "k_ci": int(rec.k_ci[i]),
            "x_qi": int(rec.coincidence_counts[i]), "k_qi": int(rec.idler_counts[i]),
            "llv_ci": float(llv_ci[i]), "llv_qi": float(llv_qi[i]),
            "llv_ci_avg": float(avg_ci[i]), "llv_qi_avg": float(avg_qi[i]),
        }
        for i in range(len(rec))
    ]
    summary = summarize_detection(table, params.t_int, config.n_av)
    summary.update(_analytic_detection(config))

    sweep = _phi_sweep(config, llv_ci, llv_qi, blocks, hyps)
    roc = _roc_rows(config, table)
    return RunReport("detection", table, summary, _metadata(config),
                     {"phi_sweep": sweep, "roc": roc})


def _db(x: float) -> float:
    return 10 * math.log10(x) if x > 0 else -math.inf


def summarize_detection(table: list[dict], t_int: float, n_av: int) -> dict:
    """Empirical summary from the per-measurement table alone."""
    is1 = lambda r: r["hypothesis"] == H1  # noqa: E731
    is0 = lambda r: r["hypothesis"] == H0  # noqa: E731
    out = {"n_av": n_av}
    for scheme in ("ci", "qi"):
        h1 = _column(table, f"llv_{scheme}", is1)
        h0 = _column(table, f"llv_{scheme}", is0)
        out[f"phi_{scheme}_single"] = empirical_distinguishability(h1, h0)
        a1 = _column(table, f"llv_{scheme}_avg", is1)
        a0 = _column(table, f"llv_{scheme}_avg", is0)
        a1, a0 = a1[~np.isnan(a1)], a0[~np.isnan(a0)]
        if a1.size and a0.size:
            out[f"phi_{scheme}_avg"] = empirical_distinguishability(a1, a0)
            out[f"p_fa_{scheme}_avg_empirical"] = float(np.mean(a0 > 0))
    sig1 = _column(table, "x_ci", is1).mean() / t_int
    sig0 = _column(table, "x_ci", is0).mean() / t_int
    co1 = _column(table, "x_qi", is1).mean() / t_int
    co0 = _column(table, "x_qi", is0).mean() / t_int
    # the pair coincidence rate is the H1 excess over the target-absent accidentals
    out.update(
        signal_return_rate_hz=sig1 - sig0,
        background_rate_hz=sig0,
        coincidence_rate_hz=co1 - co0,
        accidental_rate_hz=co0,
        snr_ci_db=_db((sig1 - sig0) / sig0),
        snr_qi_db=_db((co1 - co0) / co0) if co0 > 0 else math.inf,
    )
    return out


def _analytic_detection(config: ScenarioConfig) -> dict:
    ci, qi = analytic_models(config.system)
    out = {
        "analytic_phi_ci_single": ci.distinguishability(1),
        "analytic_phi_qi_single": qi.distinguishability(1),
        "analytic_phi_ci_avg": ci.distinguishability(config.n_av),
        "analytic_phi_qi_avg": qi.distinguishability(config.n_av),
        "analytic_p_fa_ci_avg": ci.pd_pfa(config.n_av)[1],
        "analytic_p_fa_qi_avg": qi.pd_pfa(config.n_av)[1],
    }
    try:
        out["equivalent_averaging_factor"] = equivalent_averaging_factor(ci, qi, config.n_av)
    except Exception as exc:  # reported, not fatal
        out["equivalent_averaging_factor"] = None
        out["equivalent_averaging_factor_error"] = str(exc)
    return out


def _phi_sweep(config, llv_ci, llv_qi, blocks, hyps) -> list[dict]:
    ci_model, qi_model = analytic_models(config.system)
    rows = []
    for n_av in config.n_av_sweep:
        row = {"n_av": int(n_av)}
        for scheme, values, model in (("ci", llv_ci, ci_model), ("qi", llv_qi, qi_model)):
            avg = _block_rolling(values, blocks, n_av)
            h1 = avg[(hyps == H1) & ~np.isnan(avg)]
            h0 = avg[(hyps == H0) & ~np.isnan(avg)]
            row[f"phi_{scheme}"] = empirical_distinguishability(h1, h0) if h1.size and h0.size else math.nan
            row[f"phi_{scheme}_analytic"] = model.distinguishability(n_av)
        rows.append(row)
    return rows


def _roc_rows(config: ScenarioConfig, table: list[dict]) -> list[dict]:
    models = dict(zip(("ci", "qi"), analytic_models(config.system)))
    rows = []
    for scheme, model in models.items():
        m = model.averaged(config.n_av)
        lo = min(m.h0.mu - 6 * m.h0.sigma, m.h1.mu - 6 * m.h1.sigma)
        hi = max(m.h0.mu + 6 * m.h0.sigma, m.h1.mu + 6 * m.h1.sigma)
        grid = np.linspace(lo, hi, config.threshold_points)
        analytic = roc_curve(m.h1, m.h0, grid)
        h1 = _column(table, f"llv_{scheme}_avg", lambda r: r["hypothesis"] == H1)
        h0 = _column(table, f"llv_{scheme}_avg", lambda r: r["hypothesis"] == H0)
        h1, h0 = h1[~np.isnan(h1)], h0[~np.isnan(h0)]
        emp = empirical_roc(h1, h0, grid) if h1.size and h0.size else None
        for j, th in enumerate(grid):
            rows.append({
                "scheme": scheme, "threshold": float(th),
                "p_fa_analytic": float(analytic.p_fa[j]), "p_d_analytic": float(analytic.p_d[j]),
                "p_fa_empirical": float(emp.p_fa[j]) if emp else math.nan,
                "p_d_empirical": float(emp.p_d[j]) if emp else math.nan,
            })
    return rows


# -- jamming --------------------------------------------------------------

def _lut_range(wave: NoiseWaveform) -> tuple[float, float]:
    span = wave.amplitude + 4 * wave.white_sigma
    return max(wave.mean_rate - span, 1.0), wave.mean_rate + span + 1.0


def run_jamming_scenario(config: ScenarioConfig) -> RunReport:
    """Static calibration stretch, then jammed H1/H0 blocks.

    Each hypothesis block has a short static stretch at the waveform mean,
    the jammed stretch, and a separately seeded constant-background stretch
    of the same length whose phi is the reference for the jammed one.
    Untracked LLVs use the static coefficients throughout; tracked QI picks
    LUT coefficients per measurement.
    """
    params = config.system
    wave = config.jamming
    static_params = params.with_signal_bg_rate(wave.mean_rate)
    cp = click_probabilities(static_params)
    ci = linear_coeffs(cp.p_h0_ci, cp.p_h1_ci)
    qi = linear_coeffs(cp.p_h0_qi, cp.p_h1_qi)
    lo, hi = _lut_range(wave)
    n_levels = max(int(math.ceil((hi - lo) / config.lut_spacing)) + 1, 2)
    lut = build_lut(static_params, (lo, hi), n_levels)

    n_static = config.static_measurements
    rows = []
    index = 0
    for b, (hyp, n) in enumerate(config.schedule):
        phases = []
        if n_static:
            phases.append(("static", n_static, np.full(n_static, wave.mean_rate), 0.0))
        white_rng = config.seeds.generator(1000 + b)
        t_jam = n_static * params.t_int
        phases.append(("jammed", n, measurement_rates(wave, n, params.t_int, white_rng, t0=t_jam), t_jam))
        # same length as the jammed stretch, constant background: the reference phi
        phases.append(("reference", n, np.full(n, wave.mean_rate), 0.0))
        for j, (phase, count, phase_rates, t0) in enumerate(phases):
            rec = run_block(static_params, hyp, count, config.seeds, 3 * b + j, phase_rates)
            tracked, levels = tracked_llv_series(rec, lut)
            l_ci = llv(rec.signal_counts, rec.k_ci, ci)
            l_qi = llv(rec.coincidence_counts, rec.idler_counts, qi)
            for i in range(count):
                rows.append({
                    "index": index, "block": b, "phase": phase, "hypothesis": hyp,
                    "t_s": t0 + (i + 0.5) * params.t_int,
                    "bg_rate_hz": float(phase_rates[i]),
                    "x_ci": int(rec.signal_counts[i]), "k_ci": int(rec.k_ci[i]),
                    "x_qi": int(rec.coincidence_counts[i]), "k_qi": int(rec.idler_counts[i]),
                    "llv_ci": float(l_ci[i]), "llv_qi": float(l_qi[i]),
                    "llv_qi_tracked": float(tracked[i]), "lut_level": int(levels[i]),
                })
                index += 1

    summary = summarize_jamming(rows, wave.period)
    summary.update(
        lut_levels=n_levels, lut_range_hz=[lo, hi],
        analytic_phi_qi_static=analytic_models(static_params)[1].distinguishability(1),
        analytic_phi_ci_static=analytic_models(static_params)[0].distinguishability(1),
    )
    lut_rows = [
        {"level_hz": float(lv), "p_h0_qi": p.p_h0_qi, "p_h1_qi": p.p_h1_qi, "M": c.m, "C": c.c}
        for lv, p, c in zip(lut.levels, lut.probabilities, lut.qi)
    ]
    return RunReport("jamming", rows, summary, _metadata(config), {"lut": lut_rows})


def _zero_crossings(values: np.ndarray) -> int:
    s = np.sign(values)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def summarize_jamming(table: list[dict], period: float) -> dict:
    def sel(phase, hyp):
        return lambda r: r["phase"] == phase and r["hypothesis"] == hyp

    out = {}
    for phase in ("static", "jammed", "reference"):
        if not any(r["phase"] == phase for r in table):
            continue
        for col, key in (("llv_ci", "ci"), ("llv_qi", "qi_untracked"), ("llv_qi_tracked", "qi_tracked")):
            h1 = _column(table, col, sel(phase, H1))
            h0 = _column(table, col, sel(phase, H0))
            out[f"phi_{key}_{phase}"] = empirical_distinguishability(h1, h0)
    for hyp in (H1, H0):
        t = _column(table, "t_s", sel("jammed", hyp))
        for col, key in (("llv_qi", "untracked"), ("llv_qi_tracked", "tracked")):
            v = _column(table, col, sel("jammed", hyp))
            out[f"sinusoid_amplitude_qi_{key}_{hyp}"] = sinusoid_amplitude(v, t, period)
        out[f"ci_zero_crossings_{hyp}"] = _zero_crossings(_column(table, "llv_ci", sel("jammed", hyp)))
    for key in ("untracked", "tracked"):
        out[f"sinusoid_amplitude_qi_{key}"] = 0.5 * (
            out[f"sinusoid_amplitude_qi_{key}_{H1}"] + out[f"sinusoid_amplitude_qi_{key}_{H0}"])
    return out


# -- rangefinding ---------------------------------------------------------

def _rangefinding_params(config: ScenarioConfig) -> SystemParams:
    """Model parameters of a matched channel: jitter loss folded into beta."""
    spec = config.rangefinding
    p = config.system
    capture = window_capture_fraction(p.tau_c, math.sqrt(2) * spec.jitter)
    return p.replace(beta=p.beta * capture)


def run_rangefinding_scenario(config: ScenarioConfig) -> RunReport:
    spec = config.rangefinding
    params = config.system
    wave = config.jamming or NoiseWaveform("constant", params.signal_bg_rate)
    model = _rangefinding_params(config)
    cp = click_probabilities(model)
    coeffs = linear_coeffs(cp.p_h0_qi, cp.p_h1_qi)
    channels = [CoincidenceChannel(d, params.tau_c, lab) for d, lab in zip(spec.delays, spec.labels)]
    delay_of = dict(zip(spec.labels, spec.delays))
    t_int = params.t_int
    n_total = sum(n for _, n in spec.schedule)
    rates = measurement_rates(wave, n_total, t_int, config.seeds.generator(999))

    rows = []
    hist_counts = {}
    index = 0
    for b, (label, n) in enumerate(spec.schedule):
        target = params if label != "none" else params.replace(xi=0.0)
        delay = delay_of.get(label, 0.0)
        for i in range(n):
            start = index * t_int
            stream = generate_stream(target, delay, JitterModel(spec.jitter), t_int,
                                     config.seeds.generator(b, i), start=start,
                                     signal_bg_rate=float(rates[index]))
            recs = count_coincidences(stream, channels, t_int, start=start, n_bins=1)
            row = {"index": index, "block": b, "position": label,
                   "x_ci": int(recs[0].signal_counts[0]), "k_qi": int(recs[0].idler_counts[0])}
            for ch, r in zip(channels, recs):
                row[f"x_{ch.label}"] = int(r.coincidence_counts[0])
            rows.append(row)
            if label != "none":
                lo, hi = delay - 2e-9, delay + 2e-9
                centres, counts = delay_histogram(stream, (lo, hi), spec.histogram_bin)
                acc = hist_counts.setdefault(label, [centres - delay, np.zeros_like(counts)])
                acc[1] += counts
            index += 1

    for lab in spec.labels:
        values = llv(_column(rows, f"x_{lab}"), _column(rows, "k_qi"), coeffs)
        avg = _block_rolling(values, np.zeros(len(rows)), config.n_av)
        for r, v, a in zip(rows, values, avg):
            r[f"llv_{lab}"] = float(v)
            r[f"llv_{lab}_avg"] = float(a)

    summary = summarize_rangefinding(rows, spec.labels, config.n_av)
    extra = {}
    if hist_counts:
        rel = np.mean([v[0] for v in hist_counts.values()], axis=0)
        total = np.sum([v[1] for v in hist_counts.values()], axis=0)
        try:
            _, width = fit_delay_peak(rel, total)
        except RuntimeError:
            width = math.nan
        summary["delay_peak_sigma_s"] = width
        # path-length equivalent of the round-trip timing spread
        summary["spatial_resolution_m"] = width * SPEED_OF_LIGHT
        extra["delay_histogram"] = [{"bin_center_ps": float(c / 1e-12), "counts": int(k)}
                                    for c, k in zip(rel, total)]
    summary["beta_capture"] = model.beta
    return RunReport("rangefinding", rows, summary, _metadata(config), extra)


def summarize_rangefinding(table: list[dict], labels, n_av: int) -> dict:
    """Fraction of fully-averaged points in each block where exactly the
    matching channel is positive (and, overall, over all such points)."""
    blocks = np.array([r["block"] for r in table])
    positions = [r["position"] for r in table]
    ok_total = n_total = 0
    out = {"blocks": []}
    for b in np.unique(blocks):
        idx = np.flatnonzero(blocks == b)
        label = positions[idx[0]]
        # averaged points whose whole window lies inside this block
        inside = idx[n_av - 1:]
        good = 0
        for i in inside:
            signs = {lab: table[i][f"llv_{lab}_avg"] > 0 for lab in labels}
            good += all(signs[lab] == (lab == label) for lab in labels)
        frac = good / inside.size if inside.size else math.nan
        out["blocks"].append({"block": int(b), "position": label, "points": int(inside.size),
                              "correct_fraction": frac})
        ok_total += good
        n_total += inside.size
    out["correct_fraction"] = ok_total / n_total if n_total else math.nan
    return out


# -- dispatch -------------------------------------------------------------

def run_scenario(config: ScenarioConfig) -> RunReport:
    return {
        "detection": run_detection_scenario,
        "jamming": run_jamming_scenario,
        "rangefinding": run_rangefinding_scenario,
    }[config.kind](config)


def load_report(run_dir) -> tuple[dict, list[dict], dict]:
    """(metadata, table, stored summary) of a written run directory."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "metadata.json").read_text())
    table = read_table(run_dir / f"measurements.{meta.get('format', 'csv')}")
    summary = json.loads((run_dir / "summary.json").read_text())
    return meta, table, summary

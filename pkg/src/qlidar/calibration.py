"""Recover system parameters from calibration runs.

The procedure is sequential: efficiencies from source-only singles,
reflectivity from filtered/unfiltered rates with dark subtraction, then the
heralding (beta) and CI (gamma) shape factors by matching single-window
click frequencies of a target-present run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .click_model import ci_click_probs, qi_click_probs
from .errors import NegativeNetRate, NoRoot, RateExceedsBrightness
from .montecarlo import H0, H1, MeasurementRecords, RngSeedPolicy, run_block
from .params import SystemParams

__all__ = [
    "CalibrationRun",
    "Estimate",
    "CalibrationReport",
    "estimate_efficiencies",
    "estimate_reflectivity",
    "fit_shape_params",
    "simulate_run",
    "calibrate",
]

CONFIGURATIONS = ("source_only", "noise_only", "target_present", "target_absent",
                  "filter_in", "filter_out", "dark")
SHAPE_BRACKET = (1e-3, 1e3)


@dataclass
class CalibrationRun:
    configuration: str
    records: MeasurementRecords
    t_int: float

    def __post_init__(self):
        if len(self.records) < 1:
            raise ValueError("a calibration run needs at least one measurement")

    @property
    def duration(self) -> float:
        return len(self.records) * self.t_int

    def signal_rate(self) -> tuple[float, float]:
        n = float(self.records.signal_counts.sum())
        return n / self.duration, math.sqrt(n) / self.duration

    def idler_rate(self) -> tuple[float, float]:
        n = float(self.records.idler_counts.sum())
        return n / self.duration, math.sqrt(n) / self.duration

    def head(self, n: int) -> "CalibrationRun":
        return CalibrationRun(self.configuration, self.records[:n], self.t_int)


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float
    method: str = ""

    def __float__(self):
        return float(self.value)


def estimate_efficiencies(source_only: CalibrationRun, brightness: float,
                          tau_c: float | None = None) -> tuple[Estimate, Estimate]:
    """(eta_s, eta_i) from the source-only singles and the known pair rate.

    Without ``tau_c`` this is the plain rate ratio. With it, the per-window
    click probability q is inverted through the thermal click law
    q = a / (1 + a), a = eta * n_mean, which removes the saturation bias.
    """
    out = []
    for rate, err in (source_only.signal_rate(), source_only.idler_rate()):
        if rate > brightness:
            raise RateExceedsBrightness(f"detector rate {rate:.6g} Hz exceeds pair rate {brightness:.6g} Hz")
        if tau_c is None:
            out.append(Estimate(rate / brightness, err / brightness, "singles rate / pair rate"))
            continue
        q, n_mean = rate * tau_c, brightness * tau_c
        eta = q / ((1 - q) * n_mean)
        out.append(Estimate(eta, err * tau_c / ((1 - q) ** 2 * n_mean), "thermal click law inverted"))
    return out[0], out[1]


def estimate_reflectivity(with_filter: CalibrationRun, without_filter: CalibrationRun,
                          dark: CalibrationRun) -> Estimate:
    r_w, e_w = with_filter.signal_rate()
    r_o, e_o = without_filter.signal_rate()
    r_d, e_d = dark.signal_rate()
    if r_d > r_w or r_d >= r_o:
        raise NegativeNetRate(f"dark rate {r_d:.6g} Hz exceeds a measured rate")
    num, den = r_w - r_d, r_o - r_d
    xi = num / den
    # first-order propagation; dark enters numerator and denominator
    d_num = 1 / den
    d_den = -num / den**2
    err = math.sqrt((d_num * e_w) ** 2 + (d_den * e_o) ** 2 + ((-d_num - d_den) * e_d) ** 2)
    return Estimate(xi, err, "dark-subtracted filter ratio")


def _solve_shape(model, target: float, name: str) -> float:
    lo, hi = SHAPE_BRACKET
    f_lo, f_hi = model(lo) - target, model(hi) - target
    if f_lo > 0 or f_hi < 0:
        raise NoRoot(f"empirical probability {target:.6g} outside model range for {name}")
    return brentq(lambda v: model(v) - target, lo, hi, rtol=1e-6, xtol=1e-12)


def fit_shape_params(h0_run: CalibrationRun, h1_run: CalibrationRun, params: SystemParams,
                     n_first: int | None = None) -> tuple[Estimate, Estimate]:
    """Fit (beta, gamma) so the model reproduces the H1 click frequencies.

    Frequencies are moment estimates over the first ``n_first`` measurements
    of each run (all of them when None).
    """
    if n_first is not None:
        h0_run, h1_run = h0_run.head(n_first), h1_run.head(n_first)
    r0, r1 = h0_run.records, h1_run.records

    p0_ci = r0.signal_counts.sum() / r0.k_ci.sum()
    p1_ci = r1.signal_counts.sum() / r1.k_ci.sum()
    p0_qi = r0.coincidence_counts.sum() / max(r0.idler_counts.sum(), 1)
    p1_qi = r1.coincidence_counts.sum() / max(r1.idler_counts.sum(), 1)
    if p1_ci <= p0_ci or p1_qi <= p0_qi:
        raise NoRoot("target-present click frequency not above target-absent; calibration invalid")

    def ci_model(g):
        return ci_click_probs(params.replace(gamma=g))[1]

    def qi_model(b):
        return qi_click_probs(params.replace(beta=b))[1]

    gamma = _solve_shape(ci_model, p1_ci, "gamma")
    beta = _solve_shape(qi_model, p1_qi, "beta")

    # delta-method errors from the binomial error of each frequency
    def err(model, v, p, n):
        h = v * 1e-4
        slope = (model(v + h) - model(v - h)) / (2 * h)
        return math.sqrt(p * (1 - p) / n) / slope

    gamma_err = err(ci_model, gamma, p1_ci, float(r1.k_ci.sum()))
    beta_err = err(qi_model, beta, p1_qi, float(max(r1.idler_counts.sum(), 1)))
    return (
        Estimate(beta, beta_err, "heralded click frequency match"),
        Estimate(gamma, gamma_err, "signal click frequency match"),
    )


def simulate_run(params: SystemParams, configuration: str, n: int, seeds: RngSeedPolicy,
                 block_id: int = 0) -> CalibrationRun:
    """Generate a calibration run with the sampler under a lab configuration."""
    p = params
    if configuration == "source_only":
        p, hyp = p.replace(xi=1.0, nbg_s=0.0, nbg_i=0.0), H1
    elif configuration == "noise_only":
        p, hyp = p.replace(n_mean=0.0), H0
    elif configuration == "target_present":
        hyp = H1
    elif configuration == "target_absent":
        hyp = H0
    elif configuration == "filter_in":
        hyp = H1
    elif configuration == "filter_out":
        p, hyp = p.replace(xi=1.0), H1
    elif configuration == "dark":
        p, hyp = p.replace(n_mean=0.0), H1
    else:
        raise ValueError(f"unknown configuration {configuration!r}")
    return CalibrationRun(configuration, run_block(p, hyp, n, seeds, block_id), p.t_int)


@dataclass
class CalibrationReport:
    entries: dict = field(default_factory=dict)

    def add(self, name: str, est: Estimate):
        self.entries[name] = est

    def __getitem__(self, name) -> Estimate:
        return self.entries[name]

    def to_text(self) -> str:
        lines = [f"{'parameter':<10} {'value':>14} {'stat_error':>12}  method"]
        for name, e in self.entries.items():
            lines.append(f"{name:<10} {e.value:>14.6g} {e.error:>12.3g}  {e.method}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {k: {"value": e.value, "error": e.error, "method": e.method} for k, e in self.entries.items()}


def calibrate(truth: SystemParams, n: int = 100, seeds: RngSeedPolicy = RngSeedPolicy(0),
              detector_dark_rate: float = 0.0) -> CalibrationReport:
    """Full simulated calibration against ground truth ``truth``.

    Runs, in order: source-only singles (efficiencies, from the known pair
    rate); source blocked with the noise on (backgrounds); filter in/out and
    detector dark (reflectivity); target present/absent (shape factors).
    Errors on beta and gamma include the propagated errors of the earlier
    estimates, obtained by re-fitting with each input shifted by one sigma.
    """
    report = CalibrationReport()
    eta_s, eta_i = estimate_efficiencies(simulate_run(truth, "source_only", n, seeds, 1), truth.pair_rate,
                                         truth.tau_c)
    noise = simulate_run(truth, "noise_only", n, seeds, 2)
    bg_s, bg_s_err = noise.signal_rate()
    bg_i, bg_i_err = noise.idler_rate()
    dark_params = truth.with_signal_bg_rate(detector_dark_rate)
    xi = estimate_reflectivity(
        simulate_run(dark_params, "filter_in", n, seeds, 3),
        simulate_run(dark_params, "filter_out", n, seeds, 4),
        simulate_run(dark_params, "dark", n, seeds, 5),
    )
    h0 = simulate_run(truth, "target_absent", n, seeds, 6)
    h1 = simulate_run(truth, "target_present", n, seeds, 7)

    tau = truth.tau_c

    def fit(e_s, e_i, x, b_s, b_i):
        # click rates -> mean detected photon rates (Poisson backgrounds)
        fitted = SystemParams.from_rates(
            pair_rate=truth.pair_rate, xi=x, eta_s=e_s, eta_i=e_i,
            signal_bg_rate=-math.log1p(-b_s * tau) / tau, idler_bg_rate=-math.log1p(-b_i * tau) / tau,
            tau_c=tau, t_int=truth.t_int,
        )
        return fit_shape_params(h0, h1, fitted)

    inputs = [eta_s.value, eta_i.value, xi.value, bg_s, bg_i]
    errors = [eta_s.error, eta_i.error, xi.error, bg_s_err, bg_i_err]
    beta, gamma = fit(*inputs)
    var_b, var_g = beta.error**2, gamma.error**2
    for i, e in enumerate(errors):
        if e == 0:
            continue
        shifted = list(inputs)
        shifted[i] += e
        b2, g2 = fit(*shifted)
        var_b += (b2.value - beta.value) ** 2
        var_g += (g2.value - gamma.value) ** 2

    report.add("eta_s", eta_s)
    report.add("eta_i", eta_i)
    report.add("bg_s_hz", Estimate(bg_s, bg_s_err, "source-blocked signal rate"))
    report.add("bg_i_hz", Estimate(bg_i, bg_i_err, "source-blocked idler rate"))
    report.add("xi", xi)
    report.add("beta", Estimate(beta.value, math.sqrt(var_b), beta.method))
    report.add("gamma", Estimate(gamma.value, math.sqrt(var_g), gamma.method))
    return report

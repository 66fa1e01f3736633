"""Acceptance checks at full scale, one printed PASS/FAIL line per criterion.

Each test prints its verdict with the measured numbers before asserting, so
a failing criterion still shows how far off it is.
"""
import math

import numpy as np
import pytest

from oracles import exact_binomial_llr
from qlidar.calibration import calibrate, fit_shape_params, simulate_run
from qlidar.errors import NoRoot
from qlidar.cli import main, oracle_deviations, oracle_parameter_sets
from qlidar.llv import linear_coeffs, llv
from qlidar.montecarlo import RngSeedPolicy, estimate_g2
from qlidar.params import SystemParams
from qlidar.scenarios import fig2_52db_preset, fig2_preset, fig4_preset, fig5_preset, run_scenario

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def fig2_run():
    return run_scenario(fig2_preset("paper"))


def test_criterion_1_oracle_equivalence(verdict):
    presets = [fig2_preset().system, fig2_52db_preset().system,
               fig4_preset().system, fig5_preset().system]
    sets = presets + oracle_parameter_sets(16, 2024)
    zs, worst, where = [], 0.0, None
    for i, p in enumerate(sets):
        dev = oracle_deviations(p, 10_000_000, RngSeedPolicy(2024).generator(i))
        zs += list(dev.values())
        name, z = max(dev.items(), key=lambda kv: kv[1])
        if z > worst:
            worst, where = z, (i, name)
    over = sum(z >= 3 for z in zs)
    ok = verdict(1, worst < 3.0 and len(sets) >= 20,
                 f"{len(sets)} sets x 1e7 windows, worst deviation {worst:.2f} SE (set {where[0]}, {where[1]}); "
                 f"need < 3. {over}/{len(zs)} comparisons >= 3 SE, {len(zs) * 0.0027:.2f} expected by chance; "
                 f"rms {math.sqrt(np.mean(np.square(zs))):.2f}")
    assert ok


def test_criterion_2_linear_llv_exact(verdict):
    rng = np.random.default_rng(12)
    n = 10_000
    p0 = 10 ** rng.uniform(-6, -0.05, n)
    p1 = np.clip(p0 * 10 ** rng.uniform(-1, 1, n), 1e-7, 0.99)
    k = rng.integers(1, 100_000, n)
    x = rng.integers(0, k + 1)
    worst = 0.0
    for i in range(n):
        got = llv(x[i], k[i], linear_coeffs(p0[i], p1[i]))
        ref = exact_binomial_llr(x[i], k[i], p0[i], p1[i])
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    ok = verdict(2, worst <= 1e-9, f"worst relative error {worst:.2e} over {n} tuples; need <= 1e-9")
    assert ok


def test_criterion_3_fig2_reproduction(verdict, fig2_run):
    s = fig2_run.summary
    checks = {
        "phi_qi single in [0.26, 0.36]": 0.26 <= s["phi_qi_single"] <= 0.36,
        "phi_ci single in [0.036, 0.136]": 0.036 <= s["phi_ci_single"] <= 0.136,
        "phi_qi N_av=50 >= 0.97": s["phi_qi_avg"] >= 0.97,
        "analytic P_FA within 3x of 5e-4": 5e-4 / 3 <= s["analytic_p_fa_qi_avg"] <= 3 * 5e-4,
    }
    detail = (f"phi_qi={s['phi_qi_single']:.3f} (analytic {s['analytic_phi_qi_single']:.3f}), "
              f"phi_ci={s['phi_ci_single']:.3f} (analytic {s['analytic_phi_ci_single']:.3f}), "
              f"phi_qi@50={s['phi_qi_avg']:.4f}, P_FA={s['analytic_p_fa_qi_avg']:.2e}; "
              f"failed: {[k for k, v in checks.items() if not v] or 'none'}")
    ok = verdict(3, all(checks.values()), detail)
    assert ok


def test_criterion_4_52db(verdict):
    s = run_scenario(fig2_52db_preset("paper")).summary
    ok = verdict(4, s["phi_qi_avg"] > s["phi_ci_avg"] and 0.45 <= s["phi_qi_avg"] <= 0.90,
                 f"phi_qi@150={s['phi_qi_avg']:.3f} (analytic {s['analytic_phi_qi_avg']:.3f}), "
                 f"phi_ci@150={s['phi_ci_avg']:.3f}; need phi_qi > phi_ci and phi_qi in [0.45, 0.90]")
    assert ok


def test_criterion_5_equivalent_averaging(verdict, fig2_run):
    f = fig2_run.summary["equivalent_averaging_factor"]
    ok = verdict(5, f is not None and 13 <= f <= 21, f"f = {f if f is None else round(f, 1)}; need 17 +/- 4")
    assert ok


def test_criterion_6_jamming(verdict):
    s = run_scenario(fig4_preset("composite", "paper")).summary
    ratio = s["sinusoid_amplitude_qi_tracked"] / s["sinusoid_amplitude_qi_untracked"]
    checks = {
        "|phi_ci| < 0.05": abs(s["phi_ci_jammed"]) < 0.05,
        "tracked phi_qi within 0.05 of static": abs(s["phi_qi_tracked_jammed"] - s["phi_qi_tracked_reference"]) <= 0.05,
        "residual ratio <= 0.1": ratio <= 0.1,
        "tracked phi_qi in [0.08, 0.22]": 0.08 <= s["phi_qi_tracked_jammed"] <= 0.22,
    }
    detail = (f"phi_ci={s['phi_ci_jammed']:.3f}, tracked phi_qi={s['phi_qi_tracked_jammed']:.4f} "
              f"(static {s['phi_qi_tracked_reference']:.4f}, analytic {s['analytic_phi_qi_static']:.3f}), "
              f"residual ratio={ratio:.3f}; failed: {[k for k, v in checks.items() if not v] or 'none'}")
    ok = verdict(6, all(checks.values()), detail)
    assert ok


def test_criterion_7_rangefinding(verdict):
    s = run_scenario(fig5_preset("paper")).summary
    target = 250e-12 * math.sqrt(2)
    width = s["delay_peak_sigma_s"]
    ok = verdict(7, s["correct_fraction"] >= 0.95 and abs(width / target - 1) <= 0.15,
                 f"correct block time {s['correct_fraction']:.4f} (need >= 0.95), peak std "
                 f"{width * 1e12:.1f} ps vs {target * 1e12:.1f} ps +/- 15%, c*sigma={s['spatial_resolution_m'] * 100:.1f} cm")
    assert ok


def test_criterion_8_determinism(verdict, tmp_path):
    from pathlib import Path

    configs = Path(__file__).parents[1] / "demos" / "configs"
    mismatched = []
    for name in ("fig2.toml", "fig4_composite.toml", "fig5.toml"):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / name / run
            assert main(["run", str(configs / name), "--out", str(out)]) == 0
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            if f.read_bytes() != (outs[1] / f.name).read_bytes():
                mismatched.append(f"{name}/{f.name}")
    ok = verdict(8, not mismatched, f"byte-identical reruns of 3 configs; mismatches: {mismatched or 'none'}")
    assert ok


BRIGHT = SystemParams.from_rates(pair_rate=5e6, xi=0.05, eta_s=0.2, eta_i=0.25, signal_bg_rate=2e5,
                                idler_bg_rate=1e4, tau_c=2e-9, t_int=0.1)


def _pulls(truth, rep):
    expected = {"eta_s": truth.eta_s, "eta_i": truth.eta_i, "xi": truth.xi, "beta": 1.0, "gamma": 1.0}
    return {k: (rep[k].value - v) / rep[k].error for k, v in expected.items()}


def test_criterion_9_calibration(verdict, capsys):
    # shape factors are only identifiable where the target return is resolvable
    # within the calibration data, so the round trip runs in a bright regime
    pulls = _pulls(BRIGHT, calibrate(BRIGHT, n=100, seeds=RngSeedPolicy(9)))
    seeds = RngSeedPolicy(10)
    beta, gamma = fit_shape_params(simulate_run(BRIGHT, "target_absent", 100, seeds, 6),
                                   simulate_run(BRIGHT, "target_present", 100, seeds, 7), BRIGHT)
    try:
        low = ", ".join(f"{k}={z:+.2f}" for k, z in
                        _pulls(fig2_preset().system, calibrate(fig2_preset().system, n=100,
                                                               seeds=RngSeedPolicy(9))).items())
    except NoRoot as exc:
        low = f"no fit ({exc})"
    with capsys.disabled():
        print(f"\n  info: 33.5 dB regime, 100 measurements: {low}")
    ok = verdict(9, all(abs(z) < 3 for z in pulls.values())
                 and abs(beta.value - 1) <= 0.02 and abs(gamma.value - 1) <= 0.02,
                 "pulls " + ", ".join(f"{k}={z:+.2f}" for k, z in pulls.items())
                 + f"; fitted beta={beta.value:.4f}, gamma={gamma.value:.4f} (need 1.00 +/- 0.02)")
    assert ok


def test_antibunching_bound(verdict):
    # source characterisation: signal arm straight onto the HBT, noise source off
    p = fig2_preset().system.replace(xi=1.0, nbg_s=0.0, nbg_i=0.0)
    g2 = estimate_g2(p, np.random.default_rng(3), 4_000_000_000)
    ok = verdict("g2", g2 < 0.05, f"heralded g2 = {g2:.4f} at the 33.5 dB source settings; need < 0.05")
    assert ok

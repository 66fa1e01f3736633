"""Command-line entry point: ``qlidar {run,calibrate,oracle-check,roc,report}``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .calibration import calibrate
from .click_model import click_probabilities
from .config import load_config
from .errors import QlidarError
from .montecarlo import H1, RngSeedPolicy, sample_windows
from .params import SystemParams
from .scenarios import (
    analytic_models,
    load_report,
    run_scenario,
    summarize_detection,
    summarize_jamming,
    summarize_rangefinding,
)
from .llv import roc_curve


def _emit(rows: list[dict], fmt: str, out: Path | None, name: str) -> None:
    if fmt == "json":
        text = json.dumps(rows, indent=1) + "\n"
    else:
        keys = list(rows[0]) if rows else []
        lines = [",".join(keys)] + [",".join(_fmt(r[k]) for k in keys) for r in rows]
        text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.{fmt}").write_text(text)


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run_scenario(cfg)
    out = Path(args.out) if args.out else Path("runs") / cfg.name
    report.write(out, args.format)
    print(f"wrote {out}")
    for k, v in report.summary.items():
        if isinstance(v, (int, float)) or v is None:
            print(f"  {k} = {v}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    rep = calibrate(cfg.system, n=args.measurements, seeds=RngSeedPolicy(cfg.seed))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.format == "json":
            (out / "calibration.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        else:
            (out / "calibration.txt").write_text(rep.to_text())
    else:
        sys.stdout.write(json.dumps(rep.to_dict(), indent=2) + "\n" if args.format == "json" else rep.to_text())
    return 0


def oracle_parameter_sets(n: int, seed: int) -> list[SystemParams]:
    """Random parameter sets spread over the experimental regimes."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        tau_c = rng.choice([0.2e-9, 2e-9])
        out.append(SystemParams.from_rates(
            pair_rate=10 ** rng.uniform(5, 6.5),
            xi=10 ** rng.uniform(-3, 0),
            eta_s=rng.uniform(0.1, 0.6),
            eta_i=rng.uniform(0.1, 0.6),
            signal_bg_rate=10 ** rng.uniform(4, 6.5),
            idler_bg_rate=10 ** rng.uniform(3, 5),
            tau_c=tau_c, t_int=0.1,
        ))
    return out


def oracle_deviations(params: SystemParams, windows: int, rng) -> dict:
    """Largest |closed form - empirical| in binomial standard errors."""
    cp = click_probabilities(params)
    h1 = sample_windows(params, rng, windows, H1)
    h0 = sample_windows(params, rng, windows, "H0")

    def z(p, hits, trials):
        se = math.sqrt(p * (1 - p) / trials)
        return abs(hits / trials - p) / se

    herald = h1.idler_click
    return {
        "p_h0_ci": z(cp.p_h0_ci, int(h0.signal_click.sum()), windows),
        "p_h1_ci": z(cp.p_h1_ci, int(h1.signal_click.sum()), windows),
        "p_idler": z(cp.p_idler, int(herald.sum()), windows),
        "p_h1_qi": z(cp.p_h1_qi, int(h1.coincidence.sum()), int(herald.sum())),
    }


def cmd_oracle_check(args) -> int:
    seed = 0 if args.seed is None else args.seed
    rows = []
    worst = 0.0
    for i, p in enumerate(oracle_parameter_sets(args.sets, seed)):
        dev = oracle_deviations(p, args.windows, RngSeedPolicy(seed).generator(i))
        m = max(dev.values())
        worst = max(worst, m)
        rows.append({"set": i, "pair_rate_hz": p.pair_rate, "xi": p.xi,
                     "signal_bg_hz": p.signal_bg_rate, "tau_c_s": p.tau_c, "max_sigma": m})
    _emit(rows, args.format, Path(args.out) if args.out else None, "oracle_check")
    # 4 comparisons per set: a lone 3-sigma excursion is expected now and then,
    # so only a gross miss counts as a model error
    return 0 if worst < 5.0 else 1


def cmd_roc(args) -> int:
    cfg = _load(args)
    rows = []
    for scheme, model in zip(("ci", "qi"), analytic_models(cfg.system)):
        m = model.averaged(cfg.n_av)
        lo = min(m.h0.mu - 6 * m.h0.sigma, m.h1.mu - 6 * m.h1.sigma)
        hi = max(m.h0.mu + 6 * m.h0.sigma, m.h1.mu + 6 * m.h1.sigma)
        roc = roc_curve(m.h1, m.h0, np.linspace(lo, hi, cfg.threshold_points))
        rows += [{"scheme": scheme, "threshold": float(t), "p_fa": float(a), "p_d": float(b)}
                 for t, a, b in zip(roc.thresholds, roc.p_fa, roc.p_d)]
    _emit(rows, args.format, Path(args.out) if args.out else None, "roc")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "metadata.json").is_file():
        raise QlidarError(f"{run_dir}: not a run directory (no metadata.json)")
    meta, table, stored = load_report(run_dir)
    cfg = meta["config"]
    kind = meta["scenario"]
    if kind == "detection":
        fresh = summarize_detection(table, cfg["system"]["t_int"], cfg["n_av"])
    elif kind == "jamming":
        fresh = summarize_jamming(table, cfg["jamming"]["period"])
    else:
        fresh = summarize_rangefinding(table, cfg["rangefinding"]["labels"], cfg["n_av"])
    mismatched = [k for k, v in fresh.items()
                  if isinstance(v, float) and not _close(v, stored.get(k))]
    print(f"run {meta['name']} ({kind}), seed {meta['seed']}, config {meta['config_hash'][:12]}")
    for k, v in fresh.items():
        if isinstance(v, (int, float)):
            print(f"  {k} = {v}")
    if mismatched:
        print(f"summary.json disagrees with the table for: {', '.join(mismatched)}", file=sys.stderr)
        return 1
    return 0


def _close(a: float, b) -> bool:
    if b is None:
        return math.isnan(a)
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= 1e-12 * max(1.0, abs(a))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qlidar", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a scenario config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", parents=[common], help="simulated calibration of a config's system")
    p.add_argument("config")
    p.add_argument("--measurements", type=int, default=100)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle-check", parents=[common], help="click model vs brute-force sampler")
    p.add_argument("--sets", type=int, default=20)
    p.add_argument("--windows", type=int, default=10_000_000)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("roc", parents=[common], help="analytic ROC table of a config")
    p.add_argument("config")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("report", parents=[common], help="re-derive a run's summary from its table")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QlidarError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = exc.filename or ""
        print(f"error: {name}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""TOML scenario files.

Schema (all sections except ``[system]`` optional)::

    [scenario]
    kind = "detection"          # detection | jamming | rangefinding
    name = "fig2"
    seed = 7
    schedule = [["H1", 305], ["H0", 305]]

    [system]                    # SystemParams fields, or the rate forms below
    pair_rate = "377 kHz"       # or n_mean = 7.54e-4
    loss_db = 33.5              # signal-arm transmission xi*eta_s; or xi = ...
    eta_s = 0.1958
    eta_i = 0.2329
    signal_bg_rate = "1 MHz"    # detected rate; or nbg_s = ...
    idler_bg_rate = "12.3 kHz"
    tau_c = "2 ns"
    t_int = "0.1 s"

    [analysis]
    n_av = 50
    n_av_sweep = [1, 10, 50]
    threshold_points = 201
    lut_spacing = "25 kHz"

    [jamming]
    kind = "composite"
    mean_rate = "2.3 MHz"
    amplitude = "0.3 MHz"
    period = "20 s"
    white_sigma = "0.1 MHz"
    static_measurements = 200

    [rangefinding]
    delays = ["1.77 ns", "2.52 ns", "3.27 ns"]
    labels = ["A", "B", "C"]
    schedule = [["A", 1000], ["B", 500], ["C", 500]]
    jitter = "250 ps"

A bare number is taken in SI units (Hz, s). Strings carry a unit suffix.
"""
from __future__ import annotations

import re
from pathlib import Path

import tomli

from .errors import ConfigError
from .jamming import NoiseWaveform
from .params import SystemParams, db_to_ratio
from .scenarios import RangefindingSpec, ScenarioConfig

__all__ = ["parse_quantity", "load_config", "config_from_dict"]

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "m": 1e-3, "u": 1e-6, "µ": 1e-6, "n": 1e-9, "p": 1e-12}
_QUANTITY = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([kMGmuµnp]?)(Hz|s)\s*$")
_SYSTEM_FIELDS = {"n_mean", "xi", "eta_s", "eta_i", "nbg_s", "nbg_i", "tau_c", "t_int", "gamma", "beta"}
_RATE_FIELDS = {"pair_rate", "loss_db", "signal_bg_rate", "idler_bg_rate"}


def parse_quantity(value, unit: str, where: str = "") -> float:
    """Number in SI units from ``value`` (a number or e.g. ``"2.3 MHz"``)."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a {unit} quantity, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a {unit} quantity, got {value!r}")
    m = _QUANTITY.match(value)
    if not m or m.group(3) != unit:
        raise ConfigError(f"{where}: cannot read {value!r} as a quantity in {unit}")
    return float(m.group(1)) * _PREFIX[m.group(2)]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _system(sec: dict, src: str) -> SystemParams:
    w = f"{src}: [system]"
    unknown = set(sec) - _SYSTEM_FIELDS - _RATE_FIELDS
    if unknown:
        raise ConfigError(f"{w}: unknown field(s) {sorted(unknown)}")
    try:
        tau_c = parse_quantity(sec["tau_c"], "s", f"{w}.tau_c")
        t_int = parse_quantity(sec["t_int"], "s", f"{w}.t_int")
        eta_s = _number(sec["eta_s"], f"{w}.eta_s")
        eta_i = _number(sec["eta_i"], f"{w}.eta_i")
    except KeyError as exc:
        raise ConfigError(f"{w}: missing field {exc.args[0]}") from None

    def pick(direct: str, rate: str, unit: str, convert):
        if direct in sec and rate in sec:
            raise ConfigError(f"{w}: give either {direct} or {rate}, not both")
        if direct in sec:
            return _number(sec[direct], f"{w}.{direct}")
        if rate in sec:
            return convert(parse_quantity(sec[rate], unit, f"{w}.{rate}") if unit else
                           _number(sec[rate], f"{w}.{rate}"))
        return None

    n_mean = pick("n_mean", "pair_rate", "Hz", lambda r: r * tau_c)
    if n_mean is None:
        raise ConfigError(f"{w}: missing field n_mean (or pair_rate)")
    xi = pick("xi", "loss_db", "", lambda db: db_to_ratio(db) / eta_s)
    if xi is None:
        raise ConfigError(f"{w}: missing field xi (or loss_db)")
    nbg_s = pick("nbg_s", "signal_bg_rate", "Hz", lambda r: r * tau_c / eta_s) or 0.0
    nbg_i = pick("nbg_i", "idler_bg_rate", "Hz", lambda r: r * tau_c / eta_i) or 0.0
    return SystemParams(
        n_mean=n_mean, xi=xi, eta_s=eta_s, eta_i=eta_i, nbg_s=nbg_s, nbg_i=nbg_i,
        tau_c=tau_c, t_int=t_int,
        gamma=_number(sec.get("gamma", 1.0), f"{w}.gamma"),
        beta=_number(sec.get("beta", 1.0), f"{w}.beta"),
    )


def _schedule(value, where: str, labels=None):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a nonempty list of [label, count] pairs")
    out = []
    for i, item in enumerate(value):
        if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], str)
                and isinstance(item[1], int) and not isinstance(item[1], bool)):
            raise ConfigError(f"{where}[{i}]: expected [label, count], got {item!r}")
        out.append((item[0], item[1]))
    return tuple(out)


def _waveform(sec: dict, w: str) -> NoiseWaveform:
    allowed = {"kind", "mean_rate", "amplitude", "period", "white_sigma", "static_measurements"}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"{w}: unknown field(s) {sorted(unknown)}")
    try:
        return NoiseWaveform(
            kind=sec.get("kind", "constant"),
            mean_rate=parse_quantity(sec.get("mean_rate", 0.0), "Hz", f"{w}.mean_rate"),
            amplitude=parse_quantity(sec.get("amplitude", 0.0), "Hz", f"{w}.amplitude"),
            period=parse_quantity(sec.get("period", 1.0), "s", f"{w}.period"),
            white_sigma=parse_quantity(sec.get("white_sigma", 0.0), "Hz", f"{w}.white_sigma"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{w}: {exc}") from None


def config_from_dict(data: dict, src: str = "<config>") -> ScenarioConfig:
    known = {"scenario", "system", "analysis", "jamming", "rangefinding"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{src}: unknown section(s) {sorted(unknown)}")
    if "system" not in data:
        raise ConfigError(f"{src}: missing section [system]")
    scen = data.get("scenario", {})
    kind = scen.get("kind", "detection")
    system = _system(data["system"], src)
    kwargs = {"kind": kind, "system": system, "name": str(scen.get("name", "run"))}
    if "seed" in scen:
        kwargs["seed"] = int(_number(scen["seed"], f"{src}: [scenario].seed"))
    if "schedule" in scen:
        kwargs["schedule"] = _schedule(scen["schedule"], f"{src}: [scenario].schedule")

    ana = data.get("analysis", {})
    w = f"{src}: [analysis]"
    unknown = set(ana) - {"n_av", "n_av_sweep", "threshold_points", "lut_spacing"}
    if unknown:
        raise ConfigError(f"{w}: unknown field(s) {sorted(unknown)}")
    if "n_av" in ana:
        kwargs["n_av"] = int(_number(ana["n_av"], f"{w}.n_av"))
    if "n_av_sweep" in ana:
        kwargs["n_av_sweep"] = tuple(int(_number(v, f"{w}.n_av_sweep")) for v in ana["n_av_sweep"])
    if "threshold_points" in ana:
        kwargs["threshold_points"] = int(_number(ana["threshold_points"], f"{w}.threshold_points"))
    if "lut_spacing" in ana:
        kwargs["lut_spacing"] = parse_quantity(ana["lut_spacing"], "Hz", f"{w}.lut_spacing")

    if "jamming" in data:
        jam = data["jamming"]
        kwargs["jamming"] = _waveform(jam, f"{src}: [jamming]")
        if "static_measurements" in jam:
            kwargs["static_measurements"] = int(_number(jam["static_measurements"],
                                                        f"{src}: [jamming].static_measurements"))

    if "rangefinding" in data:
        rf = data["rangefinding"]
        w = f"{src}: [rangefinding]"
        try:
            delays = tuple(parse_quantity(d, "s", f"{w}.delays") for d in rf["delays"])
            labels = tuple(rf.get("labels", [chr(ord("A") + i) for i in range(len(delays))]))
            kwargs["rangefinding"] = RangefindingSpec(
                delays=delays, labels=labels,
                schedule=_schedule(rf["schedule"], f"{w}.schedule"),
                jitter=parse_quantity(rf.get("jitter", 250e-12), "s", f"{w}.jitter"),
            )
        except KeyError as exc:
            raise ConfigError(f"{w}: missing field {exc.args[0]}") from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{w}: {exc}") from None

    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{src}: {exc}") from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, str(path))

import pytest

from qlidar.config import config_from_dict, load_config, parse_quantity
from qlidar.errors import ConfigError
from qlidar.scenarios import fig2_preset

SYSTEM = {"pair_rate": "377 kHz", "loss_db": 33.5, "eta_s": 0.1958, "eta_i": 0.2329,
          "signal_bg_rate": "1 MHz", "idler_bg_rate": "12.3 kHz", "tau_c": "2 ns", "t_int": "0.1 s"}


def _data(**sections):
    data = {"scenario": {"kind": "detection", "schedule": [["H1", 10], ["H0", 10]]}, "system": dict(SYSTEM)}
    data.update(sections)
    return data


@pytest.mark.parametrize("text,unit,value", [("2.3 MHz", "Hz", 2.3e6), ("250ps", "s", 250e-12),
                                             ("12.3 kHz", "Hz", 12.3e3), ("1e-3 s", "s", 1e-3),
                                             (5, "Hz", 5.0), ("2 µs", "s", 2e-6)])
def test_quantities(text, unit, value):
    assert parse_quantity(text, unit) == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("text", ["2.3 Mhz", "fast", "1 ns", True, [1]])
def test_bad_quantities(text):
    with pytest.raises(ConfigError, match="x.y"):
        parse_quantity(text, "Hz", "x.y")


def test_matches_preset():
    cfg = config_from_dict(_data())
    ref = fig2_preset().system
    for f in ("n_mean", "xi", "nbg_s", "nbg_i", "tau_c", "t_int"):
        assert getattr(cfg.system, f) == pytest.approx(getattr(ref, f), rel=1e-12)


def test_demo_configs_load():
    from pathlib import Path

    for path in sorted((Path(__file__).parents[1] / "demos" / "configs").glob("*.toml")):
        load_config(path)


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d["system"].pop("tau_c"), "tau_c"),
    (lambda d: d["system"].update(eta_s="high"), "eta_s"),
    (lambda d: d["system"].update(xi=0.1), "xi"),
    (lambda d: d["system"].update(colour=1), "colour"),
    (lambda d: d["system"].update(signal_bg_rate="1 Ms"), "signal_bg_rate"),
    (lambda d: d["scenario"].update(schedule=[["H1"]]), "schedule"),
    (lambda d: d.update(extra={}), "extra"),
    (lambda d: d.update(analysis={"n_av": "ten"}), "n_av"),
    (lambda d: d.update(jamming={"kind": "sinusoid", "mean_rate": 1, "amplitude": 2}), "jamming"),
    (lambda d: d.update(rangefinding={"delays": ["1 ns"]}), "rangefinding"),
])
def test_errors_name_path_and_field(mutate, field):
    data = _data()
    mutate(data)
    with pytest.raises(ConfigError) as info:
        config_from_dict(data, "cfg.toml")
    msg = str(info.value)
    assert msg.startswith("cfg.toml") and field in msg


def test_invalid_physics_is_config_error():
    data = _data()
    data["system"]["eta_s"] = 1.5
    with pytest.raises(ConfigError, match="cfg.toml"):
        config_from_dict(data, "cfg.toml")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.toml: no such file"):
        load_config(tmp_path / "nope.toml")


def test_bad_toml(tmp_path):
    f = tmp_path / "bad.toml"
    f.write_text("[system\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(f)

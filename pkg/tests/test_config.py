import os

import pytest
import yaml

from shieldsim.core.config import config_hash, dump_resolved, load_config, parse_config, worker_count
from shieldsim.core.constants import WORKERS_ENV
from shieldsim.core.errors import ConfigError, FloorplanError


def _write(tmp_path, data, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_minimal_config_is_fully_defaulted(tmp_path):
    cfg = parse_config(_write(tmp_path, {"experiment": {"seed": 42}}))
    sc = cfg.scenario
    assert cfg.seed == 42
    assert sc.key.n == 1024
    assert sc.monitor.m == 32
    assert sc.mode == "none"
    assert cfg.resolved["victim"]["key_hex"] is not None
    assert len(cfg.resolved["monitor"]["ro_locations"]) == 32
    assert cfg.resolved["defense"]["p_set"] == pytest.approx(1.0 / 4)
    assert cfg.resolved["overhead"]["victim_ff"] == 4096
    assert cfg.source == tmp_path / "scenario.yaml"


def test_resolved_config_reproduces_the_hash(small_cfg):
    again = load_config(small_cfg.resolved)
    assert again.config_hash == small_cfg.config_hash
    assert again.scenario.key == small_cfg.scenario.key


def test_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_dump_resolved_round_trips(small_cfg):
    assert yaml.safe_load(dump_resolved(small_cfg.resolved)) == small_cfg.resolved


def test_same_seed_same_key(make_config):
    assert make_config().scenario.key == make_config().scenario.key
    assert make_config().scenario.key != make_config(experiment={"seed": 8}).scenario.key


def test_explicit_key(make_config):
    cfg = make_config(victim={"n_bits": 8, "key_hex": "a5", "modulus_hex": "fb"})
    assert cfg.scenario.key.exponent == 0xA5
    assert cfg.scenario.key.modulus == 0xFB


def test_key_without_modulus(make_config):
    with pytest.raises(ConfigError, match="victim.modulus_hex"):
        make_config(victim={"key_hex": "a5"})


def test_monitor_m_must_be_power_of_two(make_config):
    with pytest.raises(ConfigError, match="monitor.m"):
        make_config(monitor={"m": 24})


def test_shield_needs_theta0(make_config):
    with pytest.raises(ConfigError, match="defense.theta0"):
        make_config(defense={"mode": "shield"})


def test_shield_with_explicit_thresholds(make_config):
    cfg = make_config(defense={"mode": "shield", "theta0": 118.0, "delta": 1.0})
    ctl = cfg.scenario.defense.controller()
    assert (ctl.theta0, ctl.delta, ctl.s) == (118.0, 1.0, 4)


def test_auto_calibration_writes_back(make_config):
    cfg = make_config(defense={"mode": "shield", "auto_calibrate": True})
    d = cfg.resolved["defense"]
    assert d["theta0"] is not None
    assert d["delta"] >= 0
    assert cfg.scenario.defense.theta0 == d["theta0"]


def test_unknown_key(make_config):
    with pytest.raises(ConfigError, match="monitor.colour: unknown key"):
        make_config(monitor={"colour": "red"})


def test_type_mismatch(make_config):
    with pytest.raises(ConfigError, match="monitor.c_ref"):
        make_config(monitor={"c_ref": "four"})
    with pytest.raises(ConfigError, match="defense.auto_calibrate"):
        make_config(defense={"auto_calibrate": 1})


def test_float_strings_are_accepted(make_config):
    assert make_config(monitor={"f_ref": "50e6"}).scenario.monitor.f_ref == 50e6


def test_off_floorplan_location(make_config):
    with pytest.raises(FloorplanError, match="victim.location"):
        make_config(victim={"location": [40, 2]})


def test_unknown_label(make_config):
    with pytest.raises(ConfigError, match="defense.location"):
        make_config(defense={"location": "attic"})


def test_custom_placement(make_config):
    cfg = make_config(
        placements={"corner": {"kind": "cluster", "anchor": [0, 0]}},
        monitor={"placement": "corner", "m": 4},
    )
    assert cfg.scenario.monitor.ro_locations == ((0, 0),) * 4


def test_explicit_ro_locations(make_config):
    cfg = make_config(monitor={"m": 2, "ro_locations": [[1, 1], "rsa"]})
    assert cfg.scenario.monitor.ro_locations == ((1, 1), (16, 16))
    with pytest.raises(ConfigError, match="monitor.ro_locations"):
        make_config(monitor={"m": 2, "ro_locations": [[1, 1]]})


def test_tenants(make_config):
    cfg = make_config(tenants=[{"location": [2, 2], "p_mean": 0.3, "p_std": 0.1}])
    assert cfg.scenario.tenants[0].location == (2, 2)
    with pytest.raises(ConfigError, match=r"tenants\[0\].location"):
        make_config(tenants=[{"p_mean": 0.3}])


def test_noise_budget(make_config):
    with pytest.raises(ConfigError, match="defense.p_set"):
        make_config(defense={"s": 4, "p_set": 0.5})


def test_missing_experiment_section():
    with pytest.raises(ConfigError, match="experiment: missing section"):
        load_config({"victim": {"n_bits": 16}})


def test_missing_seed():
    with pytest.raises(ConfigError, match="experiment.seed: required"):
        load_config({"experiment": {"trials": 3}})


def test_root_must_be_a_mapping():
    with pytest.raises(ConfigError):
        load_config([1, 2, 3])


def test_unreadable_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [seed: 1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        parse_config(bad)


def test_dse_validation(make_config):
    with pytest.raises(ConfigError, match=r"dse.ro_counts\[1\]"):
        make_config(dse={"ro_counts": [16, 24]})
    with pytest.raises(ConfigError, match=r"dse.placements\[0\]"):
        make_config(dse={"placements": ["nowhere"]})


def test_worker_count_from_environment(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert worker_count() == 3
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ConfigError, match=WORKERS_ENV):
        worker_count()


def test_worker_count_from_dotenv(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    (tmp_path / ".env").write_text(f"{WORKERS_ENV}=2\n", encoding="utf-8")
    try:
        assert worker_count() == 2
    finally:
        os.environ.pop(WORKERS_ENV, None)

"""YAML configuration loading: strict keys, presets, and round-trips."""

import pytest
import yaml

from neosim import builtin_scenario, neo_model
from neosim.config import (ConfigError, dump_config, load_config,
                           scenario_from_dict, scenario_to_dict)


def load_str(text: str, tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(text, encoding="utf-8")
    return load_config(str(path))


# ----------------------------------------------------------------- round trip

@pytest.mark.parametrize("name", ["disc-stopped", "disc-slow", "mand-overtake"])
def test_builtin_round_trips_through_yaml(name):
    cfg = builtin_scenario(name)
    again = scenario_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg


def test_round_trip_preserves_custom_model(tmp_path):
    cfg = builtin_scenario("disc-slow")
    custom = neo_model(0.5, model_id="mine")
    cfg = type(cfg)(**{**cfg.__dict__, "models": (custom,)})
    loaded = load_str(dump_config(cfg), tmp_path)
    assert loaded.models == (custom,)


def test_scenario_to_dict_is_plain_yaml_data():
    data = scenario_to_dict(builtin_scenario("mand-overtake"))
    text = yaml.safe_dump(data)  # would raise on non-plain types
    assert yaml.safe_load(text) == data


# -------------------------------------------------------------------- presets

def test_scenario_preset_with_overrides(tmp_path):
    cfg = load_str(
        "scenario: disc-slow\n"
        "sim:\n"
        "  horizon: 50\n"
        "n_runs: 3\n", tmp_path)
    base = builtin_scenario("disc-slow")
    assert cfg.sim.horizon == 50.0
    assert cfg.n_runs == 3
    assert cfg.incident == base.incident
    assert cfg.models == base.models


def test_model_presets_by_name(tmp_path):
    cfg = load_str(
        "name: x\n"
        "models: [human, altruistic-mobil, neo-p0, neo-p1]\n", tmp_path)
    ids = [m.id for m in cfg.models]
    assert ids == ["human", "altruistic-mobil", "neo-p0", "neo-p1"]
    assert cfg.models[1].lambda_p == 1.0
    assert not cfg.models[1].connected
    assert cfg.models[2].connected and cfg.models[2].lambda_p == 0.0
    assert cfg.models[3].lambda_d == 100.0


def test_unknown_model_preset(tmp_path):
    with pytest.raises(ConfigError, match="preset"):
        load_str("name: x\nmodels: [warp-drive]\n", tmp_path)


# --------------------------------------------------------------- strict keys

def test_unknown_top_level_key(tmp_path):
    with pytest.raises(ConfigError, match="simm"):
        load_str("scenario: disc-slow\nsimm: {}\n", tmp_path)


def test_unknown_nested_key_reports_dotted_path(tmp_path):
    with pytest.raises(ConfigError, match=r"sim\.idm"):
        load_str(
            "scenario: disc-slow\n"
            "sim:\n"
            "  idm:\n"
            "    v00: 25\n", tmp_path)


def test_model_mapping_requires_id(tmp_path):
    with pytest.raises(ConfigError, match="id"):
        load_str("name: x\nmodels:\n  - lambda_p: 1\n", tmp_path)


# ----------------------------------------------------------- semantic errors

def test_semantic_error_is_wrapped_with_path(tmp_path):
    with pytest.raises(ConfigError, match="incident"):
        load_str(
            "name: x\n"
            "incident: {kind: stopped, position: 100, speed: 3}\n", tmp_path)


def test_type_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_str("name: x\ninflows: nope\n", tmp_path)
    with pytest.raises(ConfigError):
        load_str("name: x\nsim: {seed: 1.5}\n", tmp_path)
    with pytest.raises(ConfigError):
        load_str("name: x\nsim: {check_invariants: 3}\n", tmp_path)


def test_empty_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError, match="empty"):
        load_str("", tmp_path)
    with pytest.raises(ConfigError, match="YAML"):
        load_str("{:::", tmp_path)


def test_requires_name_or_preset(tmp_path):
    with pytest.raises(ConfigError, match="name"):
        load_str("n_runs: 5\n", tmp_path)


# ------------------------------------------------------------------- sections

def test_null_incident_and_offramp(tmp_path):
    cfg = load_str(
        "scenario: mand-overtake\n"
        "incident: null\n"
        "segment: {offramp: null}\n", tmp_path)
    assert cfg.incident is None
    assert cfg.segment.offramp is None


def test_noise_grid_parsing(tmp_path):
    cfg = load_str(
        "name: x\n"
        "noise_grid:\n"
        "  - {sigma_x: 0, sigma_v: 0}\n"
        "  - {sigma_x: 250, sigma_v: 5}\n", tmp_path)
    assert len(cfg.noise_grid) == 2
    assert cfg.noise_grid[1].sigma_x == 250.0
    with pytest.raises(ConfigError, match=r"noise_grid\[0\]"):
        load_str("name: x\nnoise_grid: [{sigma_z: 1}]\n", tmp_path)

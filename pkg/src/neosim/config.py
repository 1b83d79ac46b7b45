"""YAML configuration mirroring ScenarioConfig field-for-field.

A file either starts from a builtin scenario (``scenario: disc-slow``) and
overrides selected keys, or spells out the pieces from their defaults.
Mappings merge key-by-key onto their base; lists replace wholesale.  Unknown
keys anywhere are errors, reported with the dotted path to the typo.
"""

from __future__ import annotations

import yaml

from .engine import IncidentSpec, ModelSpec, SimConfig
from .experiments import ScenarioConfig, builtin_scenario
from .idm import IdmParams
from .incident import NoiseSpec
from .road import HighwaySegment, OffRamp

MODEL_PRESETS = ("human", "altruistic-mobil", "neo-p0", "neo-p1")


class ConfigError(ValueError):
    """Configuration problem, located by a dotted key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _require_map(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    for k in value:
        if not isinstance(k, str):
            raise ConfigError(path, f"non-string key {k!r}")
    return value


def _check_keys(d: dict, allowed, path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(_join(path, k), "unknown key")


def _float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    return value


def _str(value, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    return value


def _build(cls, kwargs, path: str):
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(path, str(e)) from e


def _parse_offramp(value, path: str) -> OffRamp | None:
    if value is None:
        return None
    d = _require_map(value, path)
    _check_keys(d, ("position", "target_lane"), path)
    if "position" not in d:
        raise ConfigError(path, "offramp requires 'position'")
    kwargs = {"position": _float(d["position"], _join(path, "position"))}
    if "target_lane" in d:
        kwargs["target_lane"] = _int(d["target_lane"],
                                     _join(path, "target_lane"))
    return _build(OffRamp, kwargs, path)


def _parse_segment(value, base: HighwaySegment, path: str) -> HighwaySegment:
    d = _require_map(value, path)
    _check_keys(d, ("length", "n_lanes", "offramp"), path)
    kwargs = {
        "length": base.length, "n_lanes": base.n_lanes, "offramp": base.offramp,
    }
    if "length" in d:
        kwargs["length"] = _float(d["length"], _join(path, "length"))
    if "n_lanes" in d:
        kwargs["n_lanes"] = _int(d["n_lanes"], _join(path, "n_lanes"))
    if "offramp" in d:
        kwargs["offramp"] = _parse_offramp(d["offramp"], _join(path, "offramp"))
    return _build(HighwaySegment, kwargs, path)


def _parse_incident(value, path: str) -> IncidentSpec | None:
    if value is None:
        return None
    d = _require_map(value, path)
    _check_keys(d, ("kind", "position", "speed", "lane"), path)
    for req in ("kind", "position"):
        if req not in d:
            raise ConfigError(path, f"incident requires {req!r}")
    kwargs = {
        "kind": _str(d["kind"], _join(path, "kind")),
        "position": _float(d["position"], _join(path, "position")),
    }
    if "speed" in d:
        kwargs["speed"] = _float(d["speed"], _join(path, "speed"))
    if "lane" in d:
        kwargs["lane"] = _int(d["lane"], _join(path, "lane"))
    return _build(IncidentSpec, kwargs, path)


_MODEL_FIELDS = ("id", "connected", "lambda_s", "lambda_p", "lambda_d",
                 "lambda_m", "x_safe", "anneal_start", "accel_threshold",
                 "safe_braking", "realign_boundary")


def _model_preset(name: str, path: str) -> ModelSpec:
    from .engine import altruistic_mobil_model, human_model, neo_model
    if name == "human":
        return human_model()
    if name == "altruistic-mobil":
        return altruistic_mobil_model()
    if name == "neo-p0":
        return neo_model(0.0)
    if name == "neo-p1":
        return neo_model(1.0)
    raise ConfigError(path, f"unknown model preset {name!r}; "
                            f"presets: {', '.join(MODEL_PRESETS)}")


def _parse_model(value, path: str) -> ModelSpec:
    if isinstance(value, str):
        return _model_preset(value, path)
    d = _require_map(value, path)
    _check_keys(d, _MODEL_FIELDS, path)
    if "id" not in d:
        raise ConfigError(path, "a model mapping requires 'id'")
    kwargs = {"id": _str(d["id"], _join(path, "id"))}
    if "connected" in d:
        kwargs["connected"] = _bool(d["connected"], _join(path, "connected"))
    for k in ("lambda_s", "lambda_p", "lambda_d", "lambda_m", "x_safe",
              "anneal_start", "accel_threshold", "safe_braking"):
        if k in d:
            kwargs[k] = _float(d[k], _join(path, k))
    if "realign_boundary" in d:
        v = d["realign_boundary"]
        kwargs["realign_boundary"] = (
            None if v is None else _float(v, _join(path, "realign_boundary")))
    return _build(ModelSpec, kwargs, path)


_IDM_FIELDS = ("v0", "T", "a", "b", "delta", "s0", "noise_std")


def _parse_idm(value, base: IdmParams, path: str) -> IdmParams:
    d = _require_map(value, path)
    _check_keys(d, _IDM_FIELDS, path)
    kwargs = {k: getattr(base, k) for k in _IDM_FIELDS}
    for k in _IDM_FIELDS:
        if k in d:
            kwargs[k] = _float(d[k], _join(path, k))
    return _build(IdmParams, kwargs, path)


_SIM_FIELDS = ("dt", "horizon", "seed", "inflow_per_lane", "p_cav",
               "routing_fraction", "model_human", "model_cav", "idm",
               "lc_cooldown", "check_invariants")


def _parse_sim(value, base: SimConfig, path: str) -> SimConfig:
    d = _require_map(value, path)
    _check_keys(d, _SIM_FIELDS, path)
    kwargs = {k: getattr(base, k) for k in _SIM_FIELDS}
    for k in ("dt", "horizon", "inflow_per_lane", "p_cav",
              "routing_fraction", "lc_cooldown"):
        if k in d:
            kwargs[k] = _float(d[k], _join(path, k))
    if "seed" in d:
        kwargs["seed"] = _int(d["seed"], _join(path, "seed"))
    if "check_invariants" in d:
        kwargs["check_invariants"] = _bool(d["check_invariants"],
                                           _join(path, "check_invariants"))
    if "model_human" in d:
        kwargs["model_human"] = _parse_model(d["model_human"],
                                             _join(path, "model_human"))
    if "model_cav" in d:
        kwargs["model_cav"] = _parse_model(d["model_cav"],
                                           _join(path, "model_cav"))
    if "idm" in d:
        kwargs["idm"] = _parse_idm(d["idm"], base.idm, _join(path, "idm"))
    return _build(SimConfig, kwargs, path)


def _parse_noise(value, path: str) -> NoiseSpec:
    d = _require_map(value, path)
    _check_keys(d, ("sigma_x", "sigma_v"), path)
    kwargs = {}
    for k in ("sigma_x", "sigma_v"):
        if k in d:
            kwargs[k] = _float(d[k], _join(path, k))
    return _build(NoiseSpec, kwargs, path)


def _parse_numbers(value, path: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list of numbers")
    return tuple(_float(v, f"{path}[{i}]") for i, v in enumerate(value))


_TOP_FIELDS = ("scenario", "name", "segment", "incident", "sim", "models",
               "inflows", "penetrations", "noise_grid", "n_runs", "base_seed")


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from plain parsed data (strict keys)."""
    d = _require_map(data, "")
    _check_keys(d, _TOP_FIELDS, "")
    if "scenario" in d:
        base = builtin_scenario(_str(d["scenario"], "scenario"))
    else:
        if "name" not in d:
            raise ConfigError("", "requires 'name' (or a 'scenario' preset)")
        base = ScenarioConfig(
            name="", segment=HighwaySegment(), incident=None,
            sim=SimConfig(), models=tuple(
                _model_preset(p, "models") for p in
                ("altruistic-mobil", "neo-p0", "neo-p1")))

    name = base.name
    if "name" in d:
        name = _str(d["name"], "name")
    segment = base.segment
    if "segment" in d:
        segment = _parse_segment(d["segment"], base.segment, "segment")
    incident = base.incident
    if "incident" in d:
        incident = _parse_incident(d["incident"], "incident")
    sim = base.sim
    if "sim" in d:
        sim = _parse_sim(d["sim"], base.sim, "sim")
    models = base.models
    if "models" in d:
        if not isinstance(d["models"], list):
            raise ConfigError("models", "expected a list")
        models = tuple(_parse_model(m, f"models[{i}]")
                       for i, m in enumerate(d["models"]))
    inflows = base.inflows
    if "inflows" in d:
        inflows = _parse_numbers(d["inflows"], "inflows")
    penetrations = base.penetrations
    if "penetrations" in d:
        penetrations = _parse_numbers(d["penetrations"], "penetrations")
    noise_grid = base.noise_grid
    if "noise_grid" in d:
        if not isinstance(d["noise_grid"], list):
            raise ConfigError("noise_grid", "expected a list")
        noise_grid = tuple(_parse_noise(n, f"noise_grid[{i}]")
                           for i, n in enumerate(d["noise_grid"]))
    n_runs = base.n_runs
    if "n_runs" in d:
        n_runs = _int(d["n_runs"], "n_runs")
    base_seed = base.base_seed
    if "base_seed" in d:
        base_seed = _int(d["base_seed"], "base_seed")

    return _build(ScenarioConfig, dict(
        name=name, segment=segment, incident=incident, sim=sim,
        models=models, inflows=inflows, penetrations=penetrations,
        noise_grid=noise_grid, n_runs=n_runs, base_seed=base_seed), "")


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError("", f"not valid YAML: {e}") from e
    if data is None:
        raise ConfigError("", "empty configuration file")
    return scenario_from_dict(data)


def _model_dict(m: ModelSpec) -> dict:
    return {
        "id": m.id, "connected": m.connected, "lambda_s": m.lambda_s,
        "lambda_p": m.lambda_p, "lambda_d": m.lambda_d, "lambda_m": m.lambda_m,
        "x_safe": m.x_safe, "anneal_start": m.anneal_start,
        "accel_threshold": m.accel_threshold, "safe_braking": m.safe_braking,
        "realign_boundary": m.realign_boundary,
    }


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully explicit mapping; load(scenario_to_dict(cfg)) round-trips."""
    seg: dict = {"length": cfg.segment.length, "n_lanes": cfg.segment.n_lanes}
    if cfg.segment.offramp is not None:
        seg["offramp"] = {"position": cfg.segment.offramp.position,
                          "target_lane": cfg.segment.offramp.target_lane}
    else:
        seg["offramp"] = None
    incident = None
    if cfg.incident is not None:
        incident = {"kind": cfg.incident.kind,
                    "position": cfg.incident.position,
                    "speed": cfg.incident.speed, "lane": cfg.incident.lane}
    sim = {
        "dt": cfg.sim.dt, "horizon": cfg.sim.horizon, "seed": cfg.sim.seed,
        "inflow_per_lane": cfg.sim.inflow_per_lane, "p_cav": cfg.sim.p_cav,
        "routing_fraction": cfg.sim.routing_fraction,
        "model_human": _model_dict(cfg.sim.model_human),
        "model_cav": _model_dict(cfg.sim.model_cav),
        "idm": {k: getattr(cfg.sim.idm, k) for k in _IDM_FIELDS},
        "lc_cooldown": cfg.sim.lc_cooldown,
        "check_invariants": cfg.sim.check_invariants,
    }
    return {
        "name": cfg.name, "segment": seg, "incident": incident, "sim": sim,
        "models": [_model_dict(m) for m in cfg.models],
        "inflows": list(cfg.inflows),
        "penetrations": list(cfg.penetrations),
        "noise_grid": [{"sigma_x": n.sigma_x, "sigma_v": n.sigma_v}
                       for n in cfg.noise_grid],
        "n_runs": cfg.n_runs, "base_seed": cfg.base_seed,
    }


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)

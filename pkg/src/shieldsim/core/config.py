"""
Scenario configuration: strict YAML → resolved mapping → ``Scenario``.

User values are merged over ``constants.DEFAULTS``.  Unknown keys and type
mismatches are rejected with the dotted key path; every derived value (key,
p_set, victim FF count, RO locations, calibrated thresholds) is written back
so the resolved mapping alone reproduces a run.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import yaml
from dotenv import load_dotenv

from .constants import (
    DEFAULTS, FREE_MAPPINGS, MODES, NULLABLE_TYPES, PLACEMENT_KEYS,
    PLACEMENT_KINDS, STREAM_KEYGEN, TENANT_KEYS, WORKERS_ENV,
)
from .defense import NoiseGenBank, RandomNoiseConfig
from .engine import make_rng
from .errors import ConfigError, ShieldsimError
from .monitor import MonitorConfig, PlacementSpec, RoSensorParams, is_power_of_two, resolve_placement
from .pdn import Floorplan, PdnParams
from .scenario import DefenseSetup, DseSetup, ExperimentSetup, OverheadModel, Scenario, Tenant
from .victim import VictimPowerParams, generate_key, key_from_hex, key_to_hex

log = logging.getLogger(__name__)

DSE_MODES = ("exhaustive", "coordinate")
# keys holding a floorplan label or an [x, y] pair
LOCATION_KEYS = ("location", "anchor")


@dataclass(frozen=True)
class ScenarioConfig:
    resolved: Dict[str, Any]
    scenario: Scenario
    source: Optional[Path] = None

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)

    @property
    def seed(self) -> int:
        return self.scenario.experiment.seed

    def with_calibration(self, theta0: float, delta: float) -> "ScenarioConfig":
        resolved = copy.deepcopy(self.resolved)
        resolved["defense"]["theta0"] = float(theta0)
        resolved["defense"]["delta"] = float(delta)
        return replace(self, resolved=resolved, scenario=self.scenario.with_calibration(theta0, delta))


# ───────────────────────────── public API ─────────────────────────────
def parse_config(path: Union[str, Path], require_thresholds: bool = True) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e.strerror or e}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"invalid YAML: {e}") from None
    cfg = load_config(raw if raw is not None else {}, require_thresholds)
    log.debug("loaded %s (hash %s)", path, cfg.config_hash[:12])
    return replace(cfg, source=path)


def load_config(raw: Any, require_thresholds: bool = True) -> ScenarioConfig:
    """
    Validate a raw mapping (already parsed YAML) and build the scenario.
    With *require_thresholds* off a SHIELD scenario may lack theta0/delta;
    the calibrate command fills them in.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", f"expected a mapping, got {type(raw).__name__}")
    if "experiment" not in raw:
        raise ConfigError("experiment", "missing section")
    resolved = _merge(DEFAULTS, raw, "")
    if resolved["experiment"]["seed"] is None:
        raise ConfigError("experiment.seed", "required")

    scenario = _build_scenario(resolved, require_thresholds)
    cfg = ScenarioConfig(resolved, scenario)

    defense = resolved["defense"]
    if defense["mode"] == "shield" and defense["auto_calibrate"] and None in (defense["theta0"], defense["delta"]):
        from .calibration import calibrate

        result = calibrate(scenario)
        log.info("auto-calibrated theta0=%.4f delta=%.4f", result.theta0, result.delta)
        cfg = cfg.with_calibration(result.theta0, result.delta)
    return cfg


def config_hash(resolved: Dict[str, Any]) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def dump_resolved(resolved: Dict[str, Any]) -> str:
    return yaml.safe_dump(resolved, sort_keys=False, allow_unicode=True)


def worker_count() -> int:
    """Thread count from $SHIELDSIM_WORKERS (``.env`` honoured) or the CPU count."""
    if not os.getenv(WORKERS_ENV):
        load_dotenv(dotenv_path=Path.cwd() / ".env")
    value = os.getenv(WORKERS_ENV)
    if not value:
        return os.cpu_count() or 1
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {value!r}") from None
    if workers < 1:
        raise ConfigError(WORKERS_ENV, "must be >= 1")
    return workers


# ───────────────────────────── merging ────────────────────────────────
def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _merge(defaults: Dict[str, Any], user: Any, path: str) -> Dict[str, Any]:
    if not isinstance(user, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(user).__name__}")
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        key_path = _join(path, str(key))
        if key not in defaults:
            raise ConfigError(key_path, "unknown key")
        out[key] = _check_value(defaults[key], value, key_path)
    return out


def _check_value(default: Any, value: Any, key_path: str) -> Any:
    if key_path.rsplit(".", 1)[-1] in LOCATION_KEYS:
        if value is None and default is None:
            return None
        return value if isinstance(value, str) else _coerce_pair(value, key_path)
    if key_path in FREE_MAPPINGS:
        if not isinstance(value, dict):
            raise ConfigError(key_path, f"expected a mapping, got {type(value).__name__}")
        merged = copy.deepcopy(default)
        for label, item in value.items():
            merged[str(label)] = (
                _merge(PLACEMENT_KEYS, item, _join(key_path, str(label)))
                if key_path == "placements" else _coerce_pair(item, _join(key_path, str(label)))
            )
        return merged
    if key_path == "tenants":
        if not isinstance(value, list):
            raise ConfigError(key_path, f"expected a list, got {type(value).__name__}")
        return [_merge(TENANT_KEYS, t, f"tenants[{i}]") for i, t in enumerate(value)]
    if default is None:
        if value is None:
            return None
        return _coerce(NULLABLE_TYPES[key_path], value, key_path)
    if isinstance(default, dict):
        return _merge(default, value, key_path)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key_path, f"expected a list, got {type(value).__name__}")
        item_type = type(default[0]) if default else float
        return [_coerce(item_type, v, f"{key_path}[{i}]") for i, v in enumerate(value)]
    if value is None:
        raise ConfigError(key_path, "may not be null")
    return _coerce(type(default), value, key_path)


def _coerce(expected: type, value: Any, key_path: str) -> Any:
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            # YAML 1.1 reads "10e6" as a string
            try:
                return float(value)
            except ValueError:
                pass
    elif expected is str:
        if isinstance(value, str):
            return value
    elif expected is list:
        if isinstance(value, list):
            return [_coerce_pair(v, f"{key_path}[{i}]") if isinstance(v, list) else _coerce(str, v, f"{key_path}[{i}]")
                    for i, v in enumerate(value)]
    raise ConfigError(key_path, f"expected {expected.__name__}, got {type(value).__name__}")


def _coerce_pair(value: Any, key_path: str) -> List[int]:
    if (
        isinstance(value, list) and len(value) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        return list(value)
    raise ConfigError(key_path, f"expected [x, y] integer pair, got {value!r}")


@contextmanager
def _section(key_path: str) -> Iterator[None]:
    """Re-raise domain ValueErrors as ConfigErrors naming *key_path*."""
    try:
        yield
    except ShieldsimError:
        raise
    except ValueError as e:
        raise ConfigError(key_path, str(e)) from None


# ───────────────────────────── building ───────────────────────────────
def _build_scenario(r: Dict[str, Any], require_thresholds: bool = True) -> Scenario:
    with _section("floorplan"):
        fp_cfg = r["floorplan"]
        floorplan = Floorplan(
            fp_cfg["width"], fp_cfg["height"],
            {label: tuple(loc) for label, loc in fp_cfg["locations"].items()},
        )
    with _section("pdn"):
        p = r["pdn"]
        pdn = PdnParams(p["v_nom"], p["r_eff"], p["l_eff"], p["lambda"], p["tick_period"])

    victim = _build_victim(r, floorplan)
    placements = _build_placements(r, floorplan)
    monitor = _build_monitor(r, floorplan, placements)
    defense = _build_defense(r, floorplan, victim, require_thresholds)

    tenants = []
    for i, t in enumerate(r["tenants"]):
        if t["location"] is None:
            raise ConfigError(f"tenants[{i}].location", "required")
        if t["p_mean"] < 0 or t["p_std"] < 0:
            raise ConfigError(f"tenants[{i}]", "p_mean and p_std must be >= 0")
        tenants.append(Tenant(floorplan.resolve(t["location"], f"tenants[{i}].location"), t["p_mean"], t["p_std"]))

    exp = r["experiment"]
    for name in ("trials", "n_max", "traces", "success_order", "success_traces"):
        if exp[name] < 1:
            raise ConfigError(f"experiment.{name}", "must be >= 1")
    if exp["tail_ticks"] < 0:
        raise ConfigError("experiment.tail_ticks", "must be >= 0")
    if any(f <= 0 for f in exp["reaction_frequencies"]):
        raise ConfigError("experiment.reaction_frequencies", "frequencies must be > 0")
    experiment = ExperimentSetup(
        name=exp["name"], seed=exp["seed"], trials=exp["trials"], n_max=exp["n_max"],
        traces=exp["traces"], tail_ticks=exp["tail_ticks"], success_order=exp["success_order"],
        success_traces=exp["success_traces"], reaction_frequencies=tuple(exp["reaction_frequencies"]),
    )
    if r["attacker"]["error_tolerance"] < 0:
        raise ConfigError("attacker.error_tolerance", "must be >= 0")

    key = _build_key(r)
    scenario = Scenario(
        floorplan=floorplan, pdn=pdn, victim=victim, key=key, monitor=monitor,
        defense=defense, experiment=experiment, tenants=tuple(tenants),
        placements=placements, error_tolerance=r["attacker"]["error_tolerance"],
        dse=_build_dse(r, placements), overhead=_build_overhead(r),
    )
    log.debug("scenario %s: %d-bit key, %d samples per trace", experiment.name, key.n, scenario.n_ticks)
    return scenario


def _build_victim(r: Dict[str, Any], floorplan: Floorplan) -> VictimPowerParams:
    v = r["victim"]
    if v["n_bits"] < 1:
        raise ConfigError("victim.n_bits", "must be >= 1")
    location = floorplan.resolve(v["location"], "victim.location")
    with _section("victim"):
        return VictimPowerParams(v["p_square"], v["p_mult"], v["p_idle"], v["t_square"], v["t_mult"], location)


def _build_key(r: Dict[str, Any]):
    v = r["victim"]
    if v["key_hex"] is None:
        if v["modulus_hex"] is not None:
            raise ConfigError("victim.key_hex", "required when victim.modulus_hex is set")
        key = generate_key(v["n_bits"], make_rng(r["experiment"]["seed"], STREAM_KEYGEN))
        v["key_hex"] = key_to_hex(key)
        v["modulus_hex"] = format(key.modulus, "x")
        return key
    if v["modulus_hex"] is None:
        raise ConfigError("victim.modulus_hex", "required when victim.key_hex is set")
    with _section("victim.key_hex"):
        return key_from_hex(v["key_hex"], v["modulus_hex"], v["n_bits"])


def _build_placements(r: Dict[str, Any], floorplan: Floorplan) -> Dict[str, PlacementSpec]:
    out: Dict[str, PlacementSpec] = {}
    for name, p in r["placements"].items():
        key_path = f"placements.{name}"
        if p["kind"] not in PLACEMENT_KINDS:
            raise ConfigError(f"{key_path}.kind", f"expected one of {', '.join(PLACEMENT_KINDS)}")
        if p["radius"] < 0:
            raise ConfigError(f"{key_path}.radius", "must be >= 0")
        anchor = floorplan.resolve(p["anchor"], f"{key_path}.anchor")
        out[name] = PlacementSpec(p["kind"], anchor, p["radius"])
    return out


def _build_monitor(r: Dict[str, Any], floorplan: Floorplan, placements: Dict[str, PlacementSpec]) -> MonitorConfig:
    mon = r["monitor"]
    if not is_power_of_two(mon["m"]):
        raise ConfigError("monitor.m", f"must be a power of 2, got {mon['m']}")
    with _section("monitor"):
        sensor = RoSensorParams(mon["k"], mon["f0"], mon["n_ff"], mon["cycle_jitter"])

    if mon["ro_locations"] is not None:
        if len(mon["ro_locations"]) != mon["m"]:
            raise ConfigError("monitor.ro_locations", f"expected {mon['m']} entries, got {len(mon['ro_locations'])}")
        locations = tuple(
            floorplan.resolve(loc, f"monitor.ro_locations[{i}]") for i, loc in enumerate(mon["ro_locations"])
        )
    else:
        if mon["placement"] not in placements:
            raise ConfigError("monitor.placement", f"unknown placement {mon['placement']!r}")
        spec = placements[mon["placement"]]
        locations = resolve_placement(spec, mon["m"], floorplan, f"placements.{mon['placement']}")
        mon["ro_locations"] = [list(loc) for loc in locations]

    with _section("monitor"):
        return MonitorConfig(mon["m"], locations, mon["f_ref"], mon["c_ref"], sensor, mon["self_power_per_ro"])


def _build_defense(
    r: Dict[str, Any], floorplan: Floorplan, victim: VictimPowerParams, require_thresholds: bool = True,
) -> DefenseSetup:
    d = r["defense"]
    if d["mode"] not in MODES:
        raise ConfigError("defense.mode", f"expected one of {', '.join(MODES)}, got {d['mode']!r}")
    if d["s"] < 1:
        raise ConfigError("defense.s", "must be >= 1")
    if d["p_set"] is None:
        d["p_set"] = victim.p_mult / d["s"]
    with _section("defense"):
        bank = NoiseGenBank(d["s"], d["p_set"], floorplan.resolve(d["location"], "defense.location"), d["ro_per_set"])
    if not bank.within_budget(victim.p_mult):
        raise ConfigError("defense.p_set", f"s * p_set = {bank.full_power:g} W exceeds p_mult = {victim.p_mult:g} W")

    rnd = d["random"]
    with _section("defense.random"):
        random = RandomNoiseConfig(
            rnd["n_ros"], rnd["p_per_ro"], rnd["duty"],
            floorplan.resolve(rnd["location"], "defense.random.location"),
        )

    if d["mode"] == "shield" and require_thresholds and not d["auto_calibrate"]:
        for name in ("theta0", "delta"):
            if d[name] is None:
                raise ConfigError(f"defense.{name}", "required for mode shield unless defense.auto_calibrate is true")
    if d["delta"] is not None and d["delta"] < 0:
        raise ConfigError("defense.delta", "must be >= 0")
    return DefenseSetup(d["mode"], bank, random, d["theta0"], d["delta"])


def _build_dse(r: Dict[str, Any], placements: Dict[str, PlacementSpec]) -> DseSetup:
    d = r["dse"]
    if d["mode"] not in DSE_MODES:
        raise ConfigError("dse.mode", f"expected one of {', '.join(DSE_MODES)}")
    for name in ("placements", "frequencies", "ro_counts", "noise_sets", "random_ros"):
        if not d[name]:
            raise ConfigError(f"dse.{name}", "must not be empty")
    for i, name in enumerate(d["placements"]):
        if name not in placements:
            raise ConfigError(f"dse.placements[{i}]", f"unknown placement {name!r}")
    for i, m in enumerate(d["ro_counts"]):
        if not is_power_of_two(m):
            raise ConfigError(f"dse.ro_counts[{i}]", f"must be a power of 2, got {m}")
    if any(f <= 0 for f in d["frequencies"]):
        raise ConfigError("dse.frequencies", "frequencies must be > 0")
    if any(s < 1 for s in d["noise_sets"]):
        raise ConfigError("dse.noise_sets", "set counts must be >= 1")
    if any(n < 0 for n in d["random_ros"]):
        raise ConfigError("dse.random_ros", "RO counts must be >= 0")
    weights = (d["w_acc"], d["w_area"], d["w_power"])
    if min(weights) < 0 or sum(weights) == 0:
        raise ConfigError("dse.w_acc", "weights must be >= 0 and not all zero")
    for name in ("trials", "effort_trials", "effort_n_max"):
        if d[name] < 1:
            raise ConfigError(f"dse.{name}", "must be >= 1")
    return DseSetup(
        mode=d["mode"], placements=tuple(d["placements"]), frequencies=tuple(d["frequencies"]),
        ro_counts=tuple(d["ro_counts"]), w_acc=d["w_acc"], w_area=d["w_area"], w_power=d["w_power"],
        trials=d["trials"], effort_trials=d["effort_trials"], effort_n_max=d["effort_n_max"],
        noise_sets=tuple(d["noise_sets"]), random_ros=tuple(d["random_ros"]),
    )


def _build_overhead(r: Dict[str, Any]) -> OverheadModel:
    o = r["overhead"]
    if o["victim_ff"] is None:
        o["victim_ff"] = 4 * r["victim"]["n_bits"]
    for name, value in o.items():
        if value < 0:
            raise ConfigError(f"overhead.{name}", "must be >= 0")
    return OverheadModel(**o)

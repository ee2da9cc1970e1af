"""Flat key/value scenario files.

A config file is a YAML (or JSON) mapping whose keys are exactly the field
names of :class:`WorldConfig`, :class:`PrbiConfig` and :class:`ScenarioConfig`,
plus ``attacker_ratio`` as a shorthand for a prefix attacker set. Unknown keys
are rejected.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from prbi.core import PrbiConfig, Rounding
from prbi.fleet import AttackModel, WorldConfig, attackers_for_ratio
from prbi.harness import ScenarioConfig

WORLD_KEYS = tuple(f.name for f in fields(WorldConfig))
PRBI_KEYS = tuple(f.name for f in fields(PrbiConfig))
SCENARIO_KEYS = ("frame_count", "method", "replicates")
EXTRA_KEYS = ("attacker_ratio",)
KNOWN_KEYS = WORLD_KEYS + PRBI_KEYS + SCENARIO_KEYS + EXTRA_KEYS


class ConfigError(ValueError):
    """Raised for unreadable, malformed or invalid scenario configs."""


def _int(key: str, v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return v


def _float(key: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    return float(v)


def _attack_model(v: Any) -> AttackModel:
    if isinstance(v, str):
        return AttackModel(kind=v)
    if isinstance(v, Mapping):
        unknown = set(v) - {"kind", "period", "start"}
        if unknown:
            raise ConfigError(f"unknown attack_model keys: {sorted(unknown)}")
        kw = {k: (_int(f"attack_model.{k}", x) if k != "kind" else x) for k, x in v.items()}
        return AttackModel(**kw)
    raise ConfigError(f"attack_model must be a string or mapping, got {v!r}")


_WORLD_TYPES = {
    "n": _int,
    "seed": _int,
    "object_count": _int,
    "persist_prob": _float,
    "jitter_sigma": _float,
    "miss_prob": _float,
    "delta_del": _float,
    "delta_inj": _float,
    "speed": _float,
    "world_size": _float,
}
_PRBI_TYPES = {
    "epsilon": _float,
    "window_size": _int,
    "alpha": _float,
    "gamma": _float,
    "lam": _float,
    "tau_match": _float,
}


def scenario_from_mapping(data: Mapping[str, Any]) -> ScenarioConfig:
    """Build and validate a :class:`ScenarioConfig` from a flat mapping."""
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a key/value mapping")
    unknown = sorted(set(data) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "n" not in data:
        raise ConfigError("config must set n")
    if "attacker_set" in data and "attacker_ratio" in data:
        raise ConfigError("set at most one of attacker_set and attacker_ratio")

    try:
        world_kw: dict[str, Any] = {k: conv(k, data[k]) for k, conv in _WORLD_TYPES.items() if k in data}
        if "attack_model" in data:
            world_kw["attack_model"] = _attack_model(data["attack_model"])
        if "attacker_set" in data:
            raw = data["attacker_set"]
            if not isinstance(raw, (list, tuple)):
                raise ConfigError(f"attacker_set must be a list of vehicle ids, got {raw!r}")
            world_kw["attacker_set"] = frozenset(_int("attacker_set", a) for a in raw)
        elif "attacker_ratio" in data:
            world_kw["attacker_set"] = attackers_for_ratio(world_kw["n"], _float("attacker_ratio", data["attacker_ratio"]))
        world = WorldConfig(**world_kw)

        prbi_kw: dict[str, Any] = {k: conv(k, data[k]) for k, conv in _PRBI_TYPES.items() if k in data}
        if "grouping_rounding" in data:
            prbi_kw["grouping_rounding"] = Rounding(data["grouping_rounding"])
        if "halt_on_convergence" in data:
            if not isinstance(data["halt_on_convergence"], bool):
                raise ConfigError("halt_on_convergence must be true or false")
            prbi_kw["halt_on_convergence"] = data["halt_on_convergence"]
        prbi = PrbiConfig(**prbi_kw)

        scen_kw: dict[str, Any] = {}
        for key in ("frame_count", "replicates"):
            if key in data:
                scen_kw[key] = _int(key, data[key])
        if "method" in data:
            scen_kw["method"] = str(data["method"])
        return ScenarioConfig(world=world, prbi=prbi, **scen_kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    try:
        return scenario_from_mapping(data if data is not None else {})
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None

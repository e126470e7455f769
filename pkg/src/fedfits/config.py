"""JSON experiment configuration: defaults, dotted-key overrides, validation.

A config file needs only the keys that differ from the defaults below; the
fully resolved document is echoed next to the run outputs so every result
file names its exact provenance. Validation errors name the JSON path of the
offending key (e.g. "fitness.beta").
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from typing import Any

from fedfits.aggregation import Aggregator
from fedfits.attacks import AttackSpec
from fedfits.data import DatasetSpec, PartitionSpec
from fedfits.fitness import FitnessParams
from fedfits.models import ModelSpec, TrainConfig
from fedfits.orchestrator import ExperimentConfig
from fedfits.scheduling import SlotParams
from fedfits.selection import SelectionStrategy

DEFAULT_CONFIG: dict[str, Any] = {
    "name": "",
    "seed": 0,
    "total_rounds": 20,
    "target_accuracy": None,
    "eval_fraction": 0.1,
    "train_fraction": 0.8,
    "slot_theta_statistic": "sum",
    "dataset": {
        "kind": "blobs",
        "num_classes": 2,
        "dim": 20,
        "samples_per_class": 1000,
        "separation": 3.0,
        "path": "",
        "labels_path": "",
    },
    "partition": {
        "num_clients": 10,
        "scheme": "dirichlet",
        "concentration": 0.3,
        "shards_per_client": 2,
        "min_samples_per_client": 10,
    },
    "model": {"kind": "logreg", "input_dim": 20, "num_classes": 2, "hidden_dim": 0},
    "train": {"local_epochs": 1, "batch_size": 32, "learning_rate": 0.1},
    "strategy": {"kind": "fedfits", "fraction": 0.5, "candidates": 0, "team_size": 0},
    "fitness": {
        "alpha": "dynamic",
        "beta": 0.1,
        "theta_normalized": True,
        "legacy_theta_denominator": False,
    },
    "slots": {"msl": 5, "pft": 2},
    "aggregator": {
        "kind": "weighted_mean",
        "trim_fraction": 0.1,
        "byzantine_f": 1,
        "unnormalized_weights": False,
    },
    "attack": {
        "kind": "none",
        "flip_fraction": 1.0,
        "sigma": 0.1,
        "scale": 1.0,
        "malicious_ids": [],
        "last_m": 0,
        "malicious_fraction": 0.0,
        "start_round": 1,
    },
}

# Keys whose value type the template alone cannot express.
_SPECIAL_TYPES = {
    "target_accuracy": "optional_number",
    "fitness.alpha": "number_or_dynamic",
    "attack.malicious_ids": "int_list",
}


def _type_check(path: str, value: Any, default: Any):
    special = _SPECIAL_TYPES.get(path)
    if special == "optional_number":
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ValueError(f"{path}: expected a number or null, got {value!r}")
        return
    if special == "number_or_dynamic":
        if isinstance(value, str):
            return  # FitnessParams rejects anything but "dynamic"
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{path}: expected a number or \"dynamic\", got {value!r}")
        return
    if special == "int_list":
        if not isinstance(value, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            raise ValueError(f"{path}: expected a list of integers, got {value!r}")
        return
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{path}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{path}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{path}: expected a number, got {value!r}")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{path}: expected a string, got {value!r}")


def _merge(resolved: dict, user: dict, prefix: str = ""):
    for key, value in user.items():
        path = f"{prefix}{key}"
        if key not in resolved:
            raise ValueError(f"unknown config key: {path}")
        if isinstance(resolved[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"{path}: expected an object, got {value!r}")
            _merge(resolved[key], value, f"{path}.")
        else:
            _type_check(path, value, resolved[key])
            resolved[key] = value


def apply_overrides(resolved: dict, overrides: list[str]):
    """Apply `dotted.key=value` pairs; values parse as JSON, else raw strings."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override must look like key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        tree: Any = value
        for part in reversed(key.split(".")):
            tree = {part: tree}
        _merge(resolved, tree)


def _section(resolved: dict, name: str, cls):
    """Construct a dataclass section, re-raising with the JSON path prefixed."""
    try:
        return cls(**resolved[name])
    except ValueError as exc:
        msg = str(exc)
        for fld in dataclasses.fields(cls):
            if msg.startswith(f"{fld.name} "):
                raise ValueError(f"{name}.{msg}") from None
        raise ValueError(f"{name}: {msg}") from None


def build_experiment(resolved: dict) -> ExperimentConfig:
    """Turn a fully resolved config dict into an ExperimentConfig.

    Top-level validation messages already start with the key name, so every
    ValueError out of here names its JSON path.
    """
    resolved = copy.deepcopy(resolved)
    resolved["attack"]["malicious_ids"] = tuple(resolved["attack"]["malicious_ids"])
    alpha = resolved["fitness"]["alpha"]
    if isinstance(alpha, int) and not isinstance(alpha, bool):
        resolved["fitness"]["alpha"] = float(alpha)
    return ExperimentConfig(
        seed=resolved["seed"],
        dataset=_section(resolved, "dataset", DatasetSpec),
        partition=_section(resolved, "partition", PartitionSpec),
        model=_section(resolved, "model", ModelSpec),
        train=_section(resolved, "train", TrainConfig),
        strategy=_section(resolved, "strategy", SelectionStrategy),
        fitness=_section(resolved, "fitness", FitnessParams),
        slots=_section(resolved, "slots", SlotParams),
        aggregator=_section(resolved, "aggregator", Aggregator),
        attack=_section(resolved, "attack", AttackSpec),
        total_rounds=resolved["total_rounds"],
        target_accuracy=resolved["target_accuracy"],
        eval_fraction=resolved["eval_fraction"],
        train_fraction=resolved["train_fraction"],
        slot_theta_statistic=resolved["slot_theta_statistic"],
        name=resolved["name"],
    )


def resolve_config(document: dict, overrides: list[str] | None = None) -> dict:
    """Defaults overlaid with the user document, then with the overrides."""
    if not isinstance(document, dict):
        raise ValueError(f"config root must be a JSON object, got {type(document).__name__}")
    resolved = copy.deepcopy(DEFAULT_CONFIG)
    _merge(resolved, document)
    apply_overrides(resolved, overrides or [])
    return resolved


def parse_config(path: str, overrides: list[str] | None = None) -> tuple[ExperimentConfig, dict]:
    """Load, override, validate; returns (config, resolved echo document)."""
    with open(path, encoding="utf-8") as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from None
    resolved = resolve_config(document, overrides)
    return build_experiment(resolved), resolved


def config_digest(resolved: dict) -> str:
    """sha256 of the canonical (sorted, compact) JSON encoding of the echo."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

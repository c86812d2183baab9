"""Experiment configuration: one flat record, JSON file plus --set overrides.

Every knob that influences a run lives here so that (config, seed) pins all
randomness. The adaptation learning rate defaults to 5e-3, sized for this
package's small policy; the grid {5e-6, 1e-6, 5e-7} seen in large-scale
settings is far too small to move anything here and is not a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

METHODS = ("none", "entropy_min", "entropy_min_al", "meo_al", "atena")
SAMPLINGS = ("uncertainty", "random_k", "consecutive_k", "all")
ORACLES = ("ground_truth", "interactive")
# Methods that consume episode labels and therefore obey a sampling rule.
FEEDBACK_METHODS = ("entropy_min_al", "meo_al", "atena")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # What to run.
    method: str = "atena"
    sampling: str = "uncertainty"
    budget_k: int | None = None
    oracle: str = "ground_truth"
    noise_rate: float = 0.0
    feedback_timeout_s: float | None = None

    # World suite.
    n_seen_worlds: int = 8
    n_test_worlds: int = 8
    episodes_per_world: int = 25
    n_nodes: int = 40
    feature_dim: int = 16
    connectivity: float = 0.55
    shift_feature_noise_std: float = 1.2
    shift_edge_dropout: float = 0.0

    # Tasks.
    success_radius: float = 3.0
    max_steps: int = 20

    # Policy and adaptation hyperparameters.
    hidden_dim: int = 32
    lam: float = 0.4
    delta: float = 0.1
    gamma: float = 1.0
    eta: float = 5e-3

    # Behavior-cloning pretraining schedule.
    pretrain_tasks_per_world: int = 48
    pretrain_epochs: int = 300
    pretrain_lr: float = 0.5

    # Bookkeeping.
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out_dir: str = "runs"

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.sampling not in SAMPLINGS:
            raise ConfigError(f"unknown sampling {self.sampling!r}; choose from {SAMPLINGS}")
        if self.oracle not in ORACLES:
            raise ConfigError(f"unknown oracle {self.oracle!r}; choose from {ORACLES}")
        if self.method not in FEEDBACK_METHODS and self.sampling != "uncertainty":
            raise ConfigError(
                f"sampling={self.sampling!r} needs a feedback-using method "
                f"({', '.join(FEEDBACK_METHODS)}); {self.method!r} never asks for labels"
            )
        if self.sampling in ("random_k", "consecutive_k"):
            if self.budget_k is None or self.budget_k < 0:
                raise ConfigError(f"sampling={self.sampling!r} requires budget_k >= 0")
            if self.budget_k > self.n_episodes:
                raise ConfigError(
                    f"budget_k={self.budget_k} exceeds the {self.n_episodes}-episode run"
                )
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must be in [0, 1]")
        if self.delta < 0.0:
            raise ConfigError("delta must be >= 0")
        if self.gamma < 0.0:
            raise ConfigError("gamma must be >= 0")
        if self.eta < 0.0:
            raise ConfigError("eta must be >= 0")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigError("noise_rate must be in [0, 1]")
        if self.n_test_worlds > self.n_seen_worlds:
            raise ConfigError("test worlds are shifted seen worlds: n_test_worlds <= n_seen_worlds")
        for name in (
            "n_seen_worlds",
            "n_test_worlds",
            "episodes_per_world",
            "feature_dim",
            "hidden_dim",
            "max_steps",
            "pretrain_tasks_per_world",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_nodes < 4:
            raise ConfigError("n_nodes must be >= 4")
        if not 0.0 < self.connectivity <= 2.0:
            raise ConfigError("connectivity must be in (0, 2]")
        if not 0.0 <= self.shift_edge_dropout < 1.0:
            raise ConfigError("shift_edge_dropout must be in [0, 1)")
        if self.shift_feature_noise_std < 0.0:
            raise ConfigError("shift_feature_noise_std must be >= 0")
        if self.success_radius <= 0.0:
            raise ConfigError("success_radius must be > 0")
        if self.pretrain_epochs < 0 or self.pretrain_lr < 0.0:
            raise ConfigError("pretraining schedule must be non-negative")
        if self.feedback_timeout_s is not None and self.feedback_timeout_s <= 0.0:
            raise ConfigError("feedback_timeout_s must be positive or null")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")

    @property
    def n_episodes(self) -> int:
        return self.n_test_worlds * self.episodes_per_world

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        out = dataclasses.replace(self, **changes)
        out.validate()
        return out


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def parse_field_value(name: str, raw: str):
    """Parse a --set or grid value into the field's declared type."""
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config field {name!r}")
    text = raw.strip()
    lowered = text.lower()
    if name == "seeds":
        try:
            seeds = [int(part) for part in text.strip("[]").split(",") if part.strip()]
        except ValueError as exc:
            raise ConfigError(f"seeds must be a comma-separated integer list: {raw!r}") from exc
        if not seeds:
            raise ConfigError("seeds must be non-empty")
        return seeds
    if lowered in ("none", "null"):
        return None
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", "int | None"):
            return int(text)
        if kind in ("float", "float | None"):
            return float(text)
        if kind == "bool":
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name}={raw!r} as {kind}") from exc
    return text


def apply_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply key=value pairs; values are parsed per field type; flags win."""
    changes = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        changes[key] = parse_field_value(key, raw)
    out = dataclasses.replace(config, **changes)
    out.validate()
    return out


def load_config(path: str | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Defaults, then the JSON file (if any), then --set overrides."""
    config = ExperimentConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown config fields in {path}: {sorted(unknown)}")
        config = dataclasses.replace(config, **data)
    config = apply_overrides(config, overrides or [])
    return config

"""Experiment configuration: defaults, file format, per-fold seed streams.

Config files are flat ``section.key = value`` lines (``#`` starts a comment).
Defaults mirror the experimental protocol this artifact reproduces: K=4
clients, 10 rounds, 5 folds, Dirichlet alpha=0.5, sigma=0.1, PGD
(0.007, 0.3, 40) and GTG thresholds eps1=0.001, eps2=0.05, eps3=0.002.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .attacks import AttackSpec
from .data import CsvSchema, PartitionMode
from .errors import ConfigError
from .federation import TrainingConfig
from .metrics import FairnessSpec, NoiseSpec
from .seeding import derive_seed
from .valuation import Scheme, TruncationRule, ValuationConfig


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    data_source: str = "synthetic"  # synthetic | csv
    synthetic_n: int = 2000
    synthetic_d: int = 8
    group_imbalance: float = 0.3
    csv_path: str = ""
    label_column: str = "y"
    sensitive_column: str = "s"
    positive_sensitive_value: str = "1"
    test_fraction: float = 0.2
    # partition
    partition_mode: PartitionMode = PartitionMode.DIRICHLET
    dirichlet_alpha: float = 0.5
    clients: int = 4
    # model
    hidden_sizes: tuple[int, ...] = (16,)
    output_activation: str = "sigmoid"
    # training
    rounds: int = 10
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    # metrics
    sigma: float = 0.1
    target_class: int = 1
    attack_epsilon: float = 0.3
    attack_step_size: float = 0.007
    attack_steps: int = 40
    # valuation
    schemes: tuple[Scheme, ...] = (Scheme.EXACT, Scheme.GTG, Scheme.LOO)
    eps1: float = 0.001
    eps2: float = 0.05
    eps3: float = 0.002
    truncation_rule: TruncationRule = TruncationRule.PREFIX_DISTANCE
    # experiment
    folds: int = 5
    master_seed: int = 42
    output_dir: str = "runs/default"

    def __post_init__(self) -> None:
        if self.data_source not in ("synthetic", "csv"):
            raise ConfigError(f"unknown data source {self.data_source!r}")
        if self.data_source == "csv" and not self.csv_path:
            raise ConfigError("csv data source needs data.csv_path")
        if self.output_activation not in ("softmax", "sigmoid"):
            raise ConfigError(f"unknown output activation {self.output_activation!r}")
        if self.folds < 1:
            raise ConfigError("folds must be at least 1")
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "partition_mode", PartitionMode(self.partition_mode))
        object.__setattr__(self, "truncation_rule", TruncationRule(self.truncation_rule))
        if not self.schemes:
            raise ConfigError("at least one valuation scheme is required")
        # constructing the sub-configs runs their own validation up front
        self.training_config(seed=0)
        self.valuation_config(perm_seed=0)
        self.attack_spec()
        NoiseSpec(self.sigma, 0)
        FairnessSpec(self.target_class)
        if not 0.0 <= self.group_imbalance < 1.0:
            raise ConfigError("data.group_imbalance must lie in [0, 1)")

    def training_config(self, seed: int) -> TrainingConfig:
        return TrainingConfig(
            rounds=self.rounds,
            local_epochs=self.local_epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=seed,
        )

    def valuation_config(self, perm_seed: int) -> ValuationConfig:
        return ValuationConfig(
            eps1=self.eps1,
            eps2=self.eps2,
            eps3=self.eps3,
            perm_seed=perm_seed,
            truncation_rule=self.truncation_rule,
        )

    def attack_spec(self) -> AttackSpec:
        return AttackSpec(self.attack_epsilon, self.attack_step_size, self.attack_steps)

    def fold_seed(self, fold: int) -> int:
        return derive_seed(self.master_seed, "fold", fold)

    def csv_schema(self) -> CsvSchema:
        return CsvSchema(
            label=self.label_column,
            sensitive=self.sensitive_column,
            positive_sensitive_value=self.positive_sensitive_value,
        )


def _as_int(raw: str) -> int:
    return int(raw)


def _as_float(raw: str) -> float:
    return float(raw)


def _as_str(raw: str) -> str:
    return raw


def _as_int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.split(",") if p.strip())


def _as_schemes(raw: str) -> tuple[Scheme, ...]:
    return tuple(Scheme(p.strip()) for p in raw.split(",") if p.strip())


# config key -> (ExperimentConfig field, caster)
_KEYS: dict[str, tuple[str, Callable]] = {
    "data.source": ("data_source", _as_str),
    "data.n": ("synthetic_n", _as_int),
    "data.d": ("synthetic_d", _as_int),
    "data.group_imbalance": ("group_imbalance", _as_float),
    "data.csv_path": ("csv_path", _as_str),
    "data.label_column": ("label_column", _as_str),
    "data.sensitive_column": ("sensitive_column", _as_str),
    "data.positive_sensitive_value": ("positive_sensitive_value", _as_str),
    "data.test_fraction": ("test_fraction", _as_float),
    "partition.mode": ("partition_mode", PartitionMode),
    "partition.alpha": ("dirichlet_alpha", _as_float),
    "partition.clients": ("clients", _as_int),
    "model.hidden": ("hidden_sizes", _as_int_tuple),
    "model.output": ("output_activation", _as_str),
    "training.rounds": ("rounds", _as_int),
    "training.local_epochs": ("local_epochs", _as_int),
    "training.batch_size": ("batch_size", _as_int),
    "training.learning_rate": ("learning_rate", _as_float),
    "training.optimizer": ("optimizer", _as_str),
    "metrics.sigma": ("sigma", _as_float),
    "metrics.target_class": ("target_class", _as_int),
    "attack.epsilon": ("attack_epsilon", _as_float),
    "attack.step_size": ("attack_step_size", _as_float),
    "attack.steps": ("attack_steps", _as_int),
    "valuation.schemes": ("schemes", _as_schemes),
    "valuation.eps1": ("eps1", _as_float),
    "valuation.eps2": ("eps2", _as_float),
    "valuation.eps3": ("eps3", _as_float),
    "valuation.truncation_rule": ("truncation_rule", TruncationRule),
    "experiment.folds": ("folds", _as_int),
    "experiment.master_seed": ("master_seed", _as_int),
    "experiment.output_dir": ("output_dir", _as_str),
}


def parse_config_text(text: str, origin: str = "<config>") -> ExperimentConfig:
    overrides: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown config key {key!r}")
        field_name, caster = _KEYS[key]
        try:
            overrides[field_name] = caster(raw_value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(
                f"{origin}:{lineno}: bad value for {key!r}: {raw_value!r} ({exc})"
            ) from exc
    try:
        return ExperimentConfig(**overrides)
    except ConfigError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc


def parse_config_file(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, origin=str(path))

"""FedAvg orchestration: local training, aggregation, round records.

Every round trains all clients from the previous global model, aggregates by
sample-count-weighted parameter averaging, and (optionally) checkpoints the
artifacts the valuation stage consumes:

    <run_dir>/round_<t>/{global_before.txt, global_after.txt,
                         client_<k>.txt, meta.json}

Client shuffling streams are derived per (seed, round, client), so a full
training run is a pure function of its configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .data import Dataset
from .errors import ConfigError, InputError, NumericError
from .nn import AdamState, Batch, ModelParams
from .seeding import derive_seed

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainingConfig:
    rounds: int = 10
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 2:
            raise ConfigError("need rounds >= 2 (round 1 is excluded from scoring)")
        if self.local_epochs < 0:
            raise ConfigError("local_epochs must be non-negative")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("batch_size and learning_rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    round: int
    params: ModelParams
    sample_count: int

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ConfigError("sample_count must be at least 1")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    global_before: ModelParams
    updates: tuple[ClientUpdate, ...]
    global_after: ModelParams

    def __post_init__(self) -> None:
        ids = [u.client_id for u in self.updates]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate client ids in round record")
        object.__setattr__(self, "updates", tuple(self.updates))

    @property
    def client_ids(self) -> tuple[int, ...]:
        return tuple(u.client_id for u in self.updates)

    def update_for(self, client_id: int) -> ClientUpdate:
        for u in self.updates:
            if u.client_id == client_id:
                return u
        raise InputError(f"no update for client {client_id} in round {self.round}")


def local_train(
    global_params: ModelParams,
    data: Dataset,
    cfg: TrainingConfig,
    round_idx: int,
    client_id: int,
    shuffle_seed: int | None = None,
) -> ClientUpdate:
    """Mini-batch local optimization starting from the global model.

    ``shuffle_seed`` overrides the derived (seed, round, client) stream; two
    clients given the same override and the same data produce identical
    updates.
    """
    if len(data) == 0:
        raise InputError(f"client {client_id} has no training data")
    if shuffle_seed is None:
        shuffle_seed = derive_seed(cfg.seed, "local", round_idx, client_id)
    rng = np.random.default_rng(shuffle_seed)
    params = global_params
    state = AdamState.fresh(params.architecture)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = Batch(data.features[idx], data.labels[idx])
            try:
                loss, grad = nn.loss_and_param_grads(params, batch)
                if not np.isfinite(loss):
                    raise NumericError("non-finite loss")
                if cfg.optimizer == "adam":
                    params, state = nn.adam_step(state, params, grad, cfg.learning_rate)
                else:
                    params = nn.sgd_step(params, grad, cfg.learning_rate)
            except NumericError as exc:
                raise NumericError(
                    f"training diverged in round {round_idx}, client {client_id}: {exc}"
                ) from exc
    return ClientUpdate(client_id, round_idx, params, len(data))


def fedavg(base: ModelParams, updates: Sequence[ClientUpdate]) -> ModelParams:
    """Sample-count-weighted mean of the update parameters.

    An empty update set returns ``base`` unchanged (the v(empty-coalition)
    convention); a single update returns that client's parameters exactly.
    """
    if not updates:
        return base
    for u in updates:
        if u.params.architecture != base.architecture:
            raise ConfigError(
                f"client {u.client_id} architecture does not match the base model"
            )
    if len(updates) == 1:
        return updates[0].params
    counts = np.array([u.sample_count for u in updates], dtype=np.float64)
    weights = counts / counts.sum()
    stacked = np.stack([u.params.values for u in updates])
    return ModelParams(base.architecture, (stacked * weights[:, None]).sum(axis=0))


def run_round(
    global_params: ModelParams,
    parts: Sequence[Dataset],
    cfg: TrainingConfig,
    round_idx: int,
) -> RoundRecord:
    """Train every client from the current global model and aggregate."""
    updates = tuple(
        local_train(global_params, parts[k], cfg, round_idx, k)
        for k in range(len(parts))
    )
    return RoundRecord(round_idx, global_params, updates, fedavg(global_params, updates))


class RunWriter:
    """Checkpoints round artifacts under a run directory."""

    def __init__(self, run_dir) -> None:
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def write_round(self, record: RoundRecord, cfg: TrainingConfig) -> None:
        round_dir = self.run_dir / f"round_{record.round}"
        round_dir.mkdir(parents=True, exist_ok=True)
        nn.save_params(record.global_before, round_dir / "global_before.txt")
        nn.save_params(record.global_after, round_dir / "global_after.txt")
        for u in record.updates:
            nn.save_params(u.params, round_dir / f"client_{u.client_id}.txt")
        meta = {
            "round": record.round,
            "sample_counts": {str(u.client_id): u.sample_count for u in record.updates},
            "shuffle_seeds": {
                str(u.client_id): derive_seed(cfg.seed, "local", record.round, u.client_id)
                for u in record.updates
            },
            "aggregation": "fedavg",
            "weighting": "sample_count",
        }
        with open(round_dir / "meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    def read_round(self, round_idx: int) -> RoundRecord:
        round_dir = self.run_dir / f"round_{round_idx}"
        with open(round_dir / "meta.json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        before = nn.load_params(round_dir / "global_before.txt")
        after = nn.load_params(round_dir / "global_after.txt")
        updates = tuple(
            ClientUpdate(
                int(k),
                round_idx,
                nn.load_params(round_dir / f"client_{k}.txt"),
                count,
            )
            for k, count in sorted(meta["sample_counts"].items(), key=lambda kv: int(kv[0]))
        )
        return RoundRecord(round_idx, before, updates, after)


def run_training(
    init: ModelParams,
    parts: Sequence[Dataset],
    cfg: TrainingConfig,
    writer: RunWriter | None = None,
) -> list[RoundRecord]:
    """Run rounds 1..T of FedAvg, checkpointing each round as it completes."""
    records: list[RoundRecord] = []
    current = init
    for t in range(1, cfg.rounds + 1):
        record = run_round(current, parts, cfg, t)
        if writer is not None:
            writer.write_round(record, cfg)
        records.append(record)
        current = record.global_after
    return records

"""Labeled tabular datasets with a sensitive attribute.

Provides a synthetic binary-classification generator with a tunable
label/group dependence (the fairness tension), CSV ingestion with min-max
normalization and one-hot expansion, IID and Dirichlet client partitioning,
and a stratified train/test split. Datasets are immutable after construction
and every operation is a pure function of its seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .seeding import rng_from


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int
    sensitive: bool


@dataclass(frozen=True)
class Dataset:
    """Feature matrix in [0, 1], integer labels, boolean sensitive flags."""

    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        s = np.asarray(self.sensitive, dtype=bool)
        if x.ndim != 2:
            raise ConfigError(f"features must be 2-d, got shape {x.shape}")
        if y.shape != (x.shape[0],) or s.shape != (x.shape[0],):
            raise ConfigError("labels/sensitive must align with feature rows")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ConfigError("labels out of range for class_count")
        for arr in (x, y, s):
            arr.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "sensitive", s)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]), bool(self.sensitive[i]))

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx], self.labels[idx], self.sensitive[idx], self.class_count
        )


class PartitionMode(str, Enum):
    IID = "iid"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class PartitionSpec:
    mode: PartitionMode
    client_count: int
    dirichlet_alpha: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", PartitionMode(self.mode))
        if self.client_count < 2:
            raise ConfigError("need at least two clients")
        if self.mode is PartitionMode.DIRICHLET and self.dirichlet_alpha <= 0:
            raise ConfigError("dirichlet_alpha must be positive")


def generate_synthetic(
    n: int, d: int, group_imbalance: float, seed: int
) -> Dataset:
    """Binary class-conditional Gaussian features with a sensitive attribute.

    Features for class 0/1 are drawn N(0.5 -/+ 0.25, 0.15^2) per coordinate
    and clipped to [0, 1]. The sensitive bit is a fair coin; labels depend on
    it through P(y=1 | s) = 0.5 +/- group_imbalance / 2, which makes the
    demographic-parity gap of a good classifier roughly ``group_imbalance``.
    """
    if n < 10 or d < 2:
        raise ConfigError(f"need n >= 10 and d >= 2, got n={n}, d={d}")
    if not 0.0 <= group_imbalance < 1.0:
        raise ConfigError("group_imbalance must lie in [0, 1)")
    rng = rng_from(seed, "synthetic")
    sensitive = rng.random(n) < 0.5
    p_one = np.where(sensitive, 0.5 + group_imbalance / 2, 0.5 - group_imbalance / 2)
    labels = (rng.random(n) < p_one).astype(np.int64)
    means = np.where(labels == 1, 0.75, 0.25)
    features = rng.normal(size=(n, d)) * 0.15 + means[:, None]
    features = np.clip(features, 0.0, 1.0)
    return Dataset(features, labels, sensitive, class_count=2)


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``feature_columns=None`` means every non-label, non-sensitive column is a
    feature. Feature columns whose cells all parse as floats are min-max
    normalized; any other column is one-hot expanded over its sorted distinct
    values.
    """

    label: str
    sensitive: str
    positive_sensitive_value: str
    feature_columns: tuple[str, ...] | None = None


def normalize_minmax(column: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; constant columns collapse to 0."""
    lo, hi = column.min(), column.max()
    if hi == lo:
        return np.zeros_like(column)
    return (column - lo) / (hi - lo)


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
    return header, body


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Load a header-first CSV into a normalized Dataset."""
    header, body = _read_rows(path)
    col_index = {name: j for j, name in enumerate(header)}
    for role, name in (("label", schema.label), ("sensitive", schema.sensitive)):
        if name not in col_index:
            raise SchemaError(f"{path}: declared {role} column {name!r} not in header")
    feature_names = (
        list(schema.feature_columns)
        if schema.feature_columns is not None
        else [c for c in header if c not in (schema.label, schema.sensitive)]
    )
    if not feature_names:
        raise SchemaError(f"{path}: schema declares no feature columns")
    for name in feature_names:
        if name not in col_index:
            raise SchemaError(f"{path}: declared feature column {name!r} not in header")

    def cell(row_i: int, name: str) -> str:
        value = body[row_i][col_index[name]].strip()
        if value == "":
            raise DataError(f"{path}: empty cell at row {row_i + 2}, column {name!r}")
        return value

    n = len(body)
    blocks: list[np.ndarray] = []
    for name in feature_names:
        raw = [cell(i, name) for i in range(n)]
        try:
            numeric = np.array([float(v) for v in raw], dtype=np.float64)
        except ValueError:
            levels = sorted(set(raw))
            onehot = np.zeros((n, len(levels)))
            index = {lv: j for j, lv in enumerate(levels)}
            for i, v in enumerate(raw):
                onehot[i, index[v]] = 1.0
            blocks.append(onehot)
            continue
        if not np.all(np.isfinite(numeric)):
            bad = int(np.flatnonzero(~np.isfinite(numeric))[0])
            raise DataError(
                f"{path}: non-finite value at row {bad + 2}, column {name!r}"
            )
        blocks.append(normalize_minmax(numeric)[:, None])
    features = np.hstack(blocks)

    raw_labels = [cell(i, schema.label) for i in range(n)]
    classes = sorted(set(raw_labels))
    class_index = {c: j for j, c in enumerate(classes)}
    labels = np.array([class_index[v] for v in raw_labels], dtype=np.int64)
    sensitive = np.array(
        [cell(i, schema.sensitive) == schema.positive_sensitive_value for i in range(n)]
    )
    return Dataset(features, labels, sensitive, class_count=len(classes))


def save_dataset_csv(ds: Dataset, path) -> None:
    """Canonical cache format: columns f0..f{d-1}, s, y."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(ds.feature_dim)] + ["s", "y"])
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append("1" if ds.sensitive[i] else "0")
            row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def train_test_split(
    data: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic label-stratified split into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    rng = rng_from(seed, "split")
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(data.class_count):
        idx = np.flatnonzero(data.labels == c)
        idx = rng.permutation(idx)
        n_test = int(np.floor(len(idx) * test_fraction + 0.5))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train = np.concatenate(train_idx)
    test = np.concatenate(test_idx)
    if len(train) == 0 or len(test) == 0:
        raise ConfigError(
            f"degenerate split: {len(train)} train / {len(test)} test samples"
        )
    return data.subset(train), data.subset(test)


def partition(train: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Split a training set across clients, IID or Dirichlet non-IID.

    The parts are disjoint, their union is the training set, and every client
    receives at least one sample (Dirichlet draws that leave a client empty
    are repaired by moving single samples from the largest client).
    """
    k = spec.client_count
    if len(train) < k * train.class_count:
        raise ConfigError(
            f"need at least K*C = {k * train.class_count} samples, have {len(train)}"
        )
    rng = rng_from(spec.seed, "partition")
    assignments: list[list[int]] = [[] for _ in range(k)]
    if spec.mode is PartitionMode.IID:
        order = rng.permutation(len(train))
        base, extra = divmod(len(train), k)
        start = 0
        for c in range(k):
            size = base + (1 if c < extra else 0)
            assignments[c] = list(order[start : start + size])
            start += size
    else:
        for cls in range(train.class_count):
            idx = rng.permutation(np.flatnonzero(train.labels == cls))
            props = rng.dirichlet(np.full(k, spec.dirichlet_alpha))
            counts = rng.multinomial(len(idx), props)
            start = 0
            for c in range(k):
                assignments[c].extend(idx[start : start + counts[c]])
                start += counts[c]
        sizes = np.array([len(a) for a in assignments])
        while (sizes == 0).any():
            empty = int(np.flatnonzero(sizes == 0)[0])
            donor = int(np.argmax(sizes))
            assignments[empty].append(assignments[donor].pop())
            sizes[empty] += 1
            sizes[donor] -= 1
    return [train.subset(a) for a in assignments]

"""The four model evaluation functions: perf, fair, rel, res.

All return a score in [0, 1] oriented so that higher means better. ``perf``
is plain accuracy, ``fair`` is one minus the demographic-parity gap, ``rel``
is the fraction of predictions unchanged under additive Gaussian input noise
(accuracy-independent by construction: predictions are compared with
predictions, never with labels), and ``res`` is one minus the adversarial
attack success rate on the correctly classified test samples.

Models are anything with a ``predict(x) -> class`` method; ``res`` with the
default attack additionally needs input gradients and therefore a real
:class:`~fedtrust.nn.ModelParams`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .attacks import AttackSpec, pgd_batch
from .data import Dataset
from .errors import ConfigError, InputError, MetricUndefinedError
from .nn import ModelParams, predict_batch
from .seeding import rng_from


class Metric(str, Enum):
    PERF = "perf"
    FAIR = "fair"
    REL = "rel"
    RES = "res"


@dataclass(frozen=True)
class FairnessSpec:
    """Target class for the demographic-parity comparison.

    The protected group is the set of samples whose sensitive flag is True.
    """

    target_class: int = 1

    def __post_init__(self) -> None:
        if self.target_class < 0:
            raise ConfigError("target_class must be a class index")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.1
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")


def _predictions(model, inputs: np.ndarray) -> np.ndarray:
    if isinstance(model, ModelParams):
        return predict_batch(model, inputs)
    return np.array([int(model.predict(x)) for x in inputs], dtype=np.int64)


def perf(model, test: Dataset) -> float:
    """Fraction of test samples classified correctly."""
    if len(test) == 0:
        raise InputError("perf needs a non-empty test set")
    preds = _predictions(model, test.features)
    return float(np.mean(preds == test.labels))


def demographic_parity_gap(model, test: Dataset, spec: FairnessSpec) -> float:
    """|P(M(x)=target | protected) - P(M(x)=target | unprotected)|."""
    protected = test.sensitive
    if not protected.any() or protected.all():
        raise MetricUndefinedError(
            "demographic parity needs both protected and unprotected samples"
        )
    hits = _predictions(model, test.features) == spec.target_class
    rate_in = float(np.mean(hits[protected]))
    rate_out = float(np.mean(hits[~protected]))
    return abs(rate_in - rate_out)


def fair(model, test: Dataset, spec: FairnessSpec) -> float:
    return 1.0 - demographic_parity_gap(model, test, spec)


def _noise_matrix(noise: NoiseSpec, n: int, d: int) -> np.ndarray:
    # One stream per sample index: evaluation order and batching cannot
    # change which noise vector a sample receives.
    out = np.empty((n, d))
    for i in range(n):
        out[i] = rng_from(noise.noise_seed, "noise", i).standard_normal(d)
    return out * noise.sigma


def rel(model, test: Dataset, noise: NoiseSpec) -> float:
    """Fraction of predictions unchanged under one Gaussian perturbation.

    The perturbed inputs are deliberately not clipped to the feature box:
    the noise models channel corruption, not feasible adversarial inputs.
    """
    if len(test) == 0:
        raise InputError("rel needs a non-empty test set")
    clean = _predictions(model, test.features)
    perturbed_inputs = test.features + _noise_matrix(
        noise, len(test), test.feature_dim
    )
    perturbed = _predictions(model, perturbed_inputs)
    return 1.0 - float(np.mean(perturbed != clean))


AttackFn = Callable[[object, np.ndarray, int], np.ndarray]


def res(model, test: Dataset, attack: AttackSpec, attack_fn: AttackFn | None = None) -> float:
    """One minus the attack success rate on correctly classified samples.

    ``attack_fn(model, x, y) -> x_adv`` overrides the default PGD attack;
    tests and the toy demo use this to inject fixed attack outcomes.
    """
    if len(test) == 0:
        raise InputError("res needs a non-empty test set")
    preds = _predictions(model, test.features)
    correct = preds == test.labels
    if not correct.any():
        raise MetricUndefinedError(
            "res is undefined: no test sample is correctly classified"
        )
    inputs = test.features[correct]
    labels = test.labels[correct]
    if attack_fn is None:
        adv = pgd_batch(model, inputs, labels, attack)
    else:
        adv = np.stack(
            [attack_fn(model, inputs[i], int(labels[i])) for i in range(len(labels))]
        )
    flipped = _predictions(model, adv) != labels
    return 1.0 - float(np.mean(flipped))


@dataclass(frozen=True)
class EvalContext:
    """Everything needed to evaluate any metric on a model."""

    test: Dataset
    fairness: FairnessSpec
    noise: NoiseSpec
    attack: AttackSpec


def evaluate(model, metric: Metric, ctx: EvalContext) -> float:
    metric = Metric(metric)
    if metric is Metric.PERF:
        return perf(model, ctx.test)
    if metric is Metric.FAIR:
        return fair(model, ctx.test, ctx.fairness)
    if metric is Metric.REL:
        return rel(model, ctx.test, ctx.noise)
    return res(model, ctx.test, ctx.attack)

"""Poisoning adversaries applied to designated malicious clients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedfits.core import FlatModel, Rng
from fedfits.data import Dataset

ATTACK_KINDS = ("none", "label_flip", "noise_inject", "sign_flip")


@dataclass(frozen=True)
class AttackSpec:
    """Which clients misbehave and how.

    Malicious clients are named explicitly (`malicious_ids`), as the last
    `last_m` ids, or as the last round(fraction * K) ids. Label flipping
    corrupts the training shard once, before round 1; model attacks perturb
    the submitted update on every round >= start_round.
    """

    kind: str = "none"
    flip_fraction: float = 1.0  # label_flip: fraction of training rows flipped
    sigma: float = 0.1  # noise_inject: per-weight gaussian std
    scale: float = 1.0  # sign_flip: negation scale
    malicious_ids: tuple[int, ...] = ()
    last_m: int = 0
    malicious_fraction: float = 0.0
    start_round: int = 1

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "label_flip" and not 0.0 < self.flip_fraction <= 1.0:
            raise ValueError(f"flip_fraction must be in (0, 1], got {self.flip_fraction}")
        if self.kind == "noise_inject" and self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.kind == "sign_flip" and self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if not 0.0 <= self.malicious_fraction < 1.0:
            raise ValueError(
                f"malicious_fraction must be in [0, 1), got {self.malicious_fraction}"
            )
        if self.last_m < 0:
            raise ValueError(f"last_m must be >= 0, got {self.last_m}")
        if self.start_round < 1:
            raise ValueError(f"start_round must be >= 1, got {self.start_round}")
        chosen = sum(
            1
            for used in (self.malicious_ids, self.last_m, self.malicious_fraction)
            if used
        )
        if self.kind != "none" and chosen == 0:
            raise ValueError(
                "attack needs malicious clients: set malicious_ids, last_m, "
                "or malicious_fraction"
            )
        if chosen > 1:
            raise ValueError(
                "set only one of malicious_ids, last_m, malicious_fraction"
            )


def resolve_malicious_ids(spec: AttackSpec, num_clients: int) -> frozenset[int]:
    """The concrete malicious id set for a K-client run."""
    if spec.kind == "none":
        return frozenset()
    if spec.malicious_ids:
        bad = [i for i in spec.malicious_ids if not 0 <= i < num_clients]
        if bad:
            raise ValueError(f"malicious ids {bad} outside [0, {num_clients})")
        return frozenset(spec.malicious_ids)
    if spec.last_m:
        if spec.last_m > num_clients:
            raise ValueError(f"last_m={spec.last_m} exceeds {num_clients} clients")
        return frozenset(range(num_clients - spec.last_m, num_clients))
    count = int(np.floor(spec.malicious_fraction * num_clients + 0.5))
    return frozenset(range(num_clients - count, num_clients))


def poison_labels(shard: Dataset, flip_fraction: float, rng: Rng) -> Dataset:
    """Flip y -> (y+1) mod C on a seeded sample of exactly round(fraction * n) rows."""
    if not 0.0 < flip_fraction <= 1.0:
        raise ValueError(f"flip_fraction must be in (0, 1], got {flip_fraction}")
    count = int(np.floor(flip_fraction * shard.n + 0.5))
    if count == 0:
        return shard
    rows = rng.generator().choice(shard.n, size=count, replace=False)
    labels = shard.labels.copy()
    labels[rows] = (labels[rows] + 1) % shard.num_classes
    return Dataset(shard.features, labels, shard.num_classes)


def poison_update(model: FlatModel, kind: str, param: float, rng: Rng) -> FlatModel:
    """Perturb a submitted model.

    noise_inject adds i.i.d. Gaussian(0, param^2) to every weight; sign_flip
    returns -param * weights; none returns the model untouched.
    """
    if kind == "noise_inject":
        if param < 0:
            raise ValueError(f"sigma must be >= 0, got {param}")
        noise = rng.generator().normal(0.0, param, model.size)
        return model.with_weights(model.weights + noise)
    if kind == "sign_flip":
        if param <= 0:
            raise ValueError(f"scale must be > 0, got {param}")
        return model.with_weights(-param * model.weights)
    if kind in ("none", "label_flip"):
        return model
    raise ValueError(f"unknown attack kind {kind!r}")

"""Server-side model combination: weighted mean plus robust alternatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedfits.core import FlatModel

AGGREGATOR_KINDS = ("weighted_mean", "coord_median", "trimmed_mean", "krum")


@dataclass(frozen=True)
class Aggregator:
    kind: str = "weighted_mean"
    trim_fraction: float = 0.1  # trimmed_mean: fraction dropped per tail
    byzantine_f: int = 1  # krum: tolerated bad clients
    # Use the raw n_k / team-size weights instead of normalizing by sum(n_k).
    # Off by default: unnormalized weights do not sum to 1 and shrink the
    # aggregate whenever shards are unequal.
    unnormalized_weights: bool = False

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ValueError(f"unknown aggregator {self.kind!r}")
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ValueError(f"trim_fraction must be in [0, 0.5), got {self.trim_fraction}")
        if self.byzantine_f < 0:
            raise ValueError(f"byzantine_f must be >= 0, got {self.byzantine_f}")


def _check_archs(models: list[FlatModel]):
    if not models:
        raise ValueError("aggregation needs at least one model")
    arch = models[0].arch
    for i, m in enumerate(models[1:], start=1):
        if m.arch != arch:
            raise ValueError(f"model {i} arch differs from model 0")


def weighted_mean(
    weighted: list[tuple[FlatModel, int]], unnormalized: bool = False
) -> FlatModel:
    """Convex combination with weights n_k / sum(n_j).

    With unnormalized=True the weights are n_k / len(team) instead; they only
    sum to 1 when every shard has the mean size.
    """
    models = [m for m, _ in weighted]
    _check_archs(models)
    counts = np.array([n for _, n in weighted], dtype=np.float64)
    if (counts <= 0).any():
        raise ValueError("sample counts must be positive")
    coeff = counts / len(counts) if unnormalized else counts / counts.sum()
    stacked = np.stack([m.weights for m in models])
    return models[0].with_weights(coeff @ stacked)


def coord_median(models: list[FlatModel]) -> FlatModel:
    """Per-coordinate median; an even count averages the two middle values."""
    _check_archs(models)
    stacked = np.stack([m.weights for m in models])
    return models[0].with_weights(np.median(stacked, axis=0))


def trimmed_mean(models: list[FlatModel], trim_fraction: float) -> FlatModel:
    """Per-coordinate mean after dropping floor(trim_fraction * n) per tail."""
    _check_archs(models)
    if not 0.0 <= trim_fraction < 0.5:
        raise ValueError(f"trim_fraction must be in [0, 0.5), got {trim_fraction}")
    n = len(models)
    drop = int(np.floor(trim_fraction * n))
    if n - 2 * drop < 1:
        raise ValueError(f"trimming {drop} per tail leaves nothing of {n} models")
    stacked = np.sort(np.stack([m.weights for m in models]), axis=0)
    kept = stacked[drop : n - drop]
    return models[0].with_weights(kept.mean(axis=0))


def krum(models: list[FlatModel], byzantine_f: int) -> FlatModel:
    """Return the input model whose summed squared distance to its n-f-2
    nearest neighbours is smallest; score ties go to the lowest index.
    """
    _check_archs(models)
    n = len(models)
    if n < 2 * byzantine_f + 3:
        raise ValueError(f"krum needs n >= 2f + 3, got n={n}, f={byzantine_f}")
    stacked = np.stack([m.weights for m in models])
    diffs = stacked[:, None, :] - stacked[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diffs, diffs)
    keep = n - byzantine_f - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(sq[i], i)
        scores[i] = np.sort(others)[:keep].sum()
    return models[int(np.argmin(scores))]


def aggregate(agg: Aggregator, weighted: list[tuple[FlatModel, int]]) -> FlatModel:
    """Dispatch on agg.kind; `weighted` pairs each model with its sample count."""
    if agg.kind == "weighted_mean":
        return weighted_mean(weighted, unnormalized=agg.unnormalized_weights)
    models = [m for m, _ in weighted]
    if agg.kind == "coord_median":
        return coord_median(models)
    if agg.kind == "trimmed_mean":
        return trimmed_mean(models, agg.trim_fraction)
    return krum(models, agg.byzantine_f)

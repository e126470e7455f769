"""Client election strategies.

The fitness-threshold election keeps every client whose score reaches the
relaxed mean; the baselines reselect every round by census, uniform sampling,
or loss-biased sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedfits.core import Rng
from fedfits.fitness import ClientScore, compute_threshold

STRATEGY_KINDS = ("fedfits", "fedavg_full", "fedrand", "fedpow")


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    fraction: float = 0.5  # fedrand: c, team size max(1, round(cK))
    candidates: int = 0  # fedpow: d
    team_size: int = 0  # fedpow: m

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown selection strategy {self.kind!r}")
        if self.kind == "fedrand" and not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fedrand fraction must be in (0, 1], got {self.fraction}")
        if self.kind == "fedpow":
            if not 1 <= self.team_size <= self.candidates:
                raise ValueError(
                    f"fedpow needs 1 <= team_size <= candidates, got "
                    f"team_size={self.team_size}, candidates={self.candidates}"
                )


def select_fedfits(scores: list[ClientScore], beta: float) -> tuple[set[int], float]:
    """All clients at or above the relaxed-mean threshold; never empty.

    Returns (selected ids, threshold). Non-empty because the maximum score is
    at least the mean, and the threshold is mean * (1 - beta) <= mean.
    """
    threshold = compute_threshold(scores, beta)
    selected = {s.client_id for s in scores if s.score >= threshold}
    if not selected:
        # Unreachable for valid inputs; kept so aggregation can never starve.
        selected = {s.client_id for s in scores}
    return selected, threshold


def select_fedrand(client_ids: list[int], fraction: float, rng: Rng) -> set[int]:
    """Uniform sample without replacement of size max(1, round(cK)), half-up."""
    if not client_ids:
        raise ValueError("no clients to select from")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    size = max(1, int(np.floor(fraction * len(client_ids) + 0.5)))
    ids = np.sort(np.asarray(client_ids, dtype=np.int64))
    picked = rng.generator().choice(ids, size=size, replace=False)
    return {int(i) for i in picked}


def select_fedpow(
    client_ids: list[int],
    losses: dict[int, float],
    candidates: int,
    team_size: int,
    rng: Rng,
) -> set[int]:
    """Loss-biased election: sample `candidates` ids uniformly, keep the
    `team_size` with the highest loss. Loss ties break toward the lower id.
    """
    if not client_ids:
        raise ValueError("no clients to select from")
    if not 1 <= team_size <= candidates <= len(client_ids):
        raise ValueError(
            f"need 1 <= team_size <= candidates <= {len(client_ids)}, got "
            f"team_size={team_size}, candidates={candidates}"
        )
    ids = np.sort(np.asarray(client_ids, dtype=np.int64))
    pool = rng.generator().choice(ids, size=candidates, replace=False)
    missing = [int(i) for i in pool if int(i) not in losses]
    if missing:
        raise ValueError(f"missing losses for candidate clients {missing}")
    ranked = sorted((int(i) for i in pool), key=lambda k: (-losses[k], k))
    return set(ranked[:team_size])

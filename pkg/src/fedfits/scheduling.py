"""Slotted training: decline counter and the reselection switching rule.

A selected team trains for a slot of consecutive rounds. The slot ends early
when team performance (the round theta statistic) declines PFT rounds in a
row, and ends at the latest on an MSL boundary. Rounds 1 and 2 are free-for-
all rounds: every client trains so that scoring data exists.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SlotParams:
    msl: int = 5  # maximum slot length, rounds
    pft: int = 2  # performance fluctuation threshold, consecutive declines

    def __post_init__(self):
        if self.msl < 1:
            raise ValueError(f"msl must be >= 1, got {self.msl}")
        if self.pft < 1:
            raise ValueError(f"pft must be >= 1, got {self.pft}")


@dataclass(frozen=True)
class SlotState:
    """Scheduler state after finishing some round t."""

    p: int = 0  # consecutive-decline counter p(t+1)
    last_theta: float | None = None  # theta(t) of the round just finished
    team: tuple[int, ...] = ()  # S_t, sorted client ids
    round_of_last_selection: int = 0

    def __post_init__(self):
        if self.p < 0:
            raise ValueError(f"decline counter must be >= 0, got {self.p}")


def update_decline_counter(state: SlotState, theta_t: float, round_num: int) -> SlotState:
    """Advance p after round t: increment on a strict decline, else reset.

    p(t+1) = p(t) + 1 when t > 2 and theta(t) < theta(t-1); otherwise 0.
    Ties reset. Rounds 1 and 2 never count as declines (no settled team yet).
    """
    if round_num < 1:
        raise ValueError(f"round must be >= 1, got {round_num}")
    declined = (
        round_num > 2
        and state.last_theta is not None
        and theta_t < state.last_theta
    )
    return replace(state, p=state.p + 1 if declined else 0, last_theta=theta_t)


def should_reselect(p_next: int, next_round: int, params: SlotParams) -> bool:
    """Switching rule h for the coming round.

    True when the decline counter hit PFT, when the round lands on an MSL
    boundary, or for the two free-for-all rounds at the start.
    """
    if next_round < 1:
        raise ValueError(f"round must be >= 1, got {next_round}")
    return p_next >= params.pft or next_round % params.msl == 0 or next_round <= 2

"""Client fitness: the quality-of-learning angle, scores, threshold, dynamic alpha.

A client's round evaluation gives four numbers: loss and accuracy of the
global model (GL, GA) and of the local model (LL, LA) on the client's test
shard. The midpoint M = ((GL+LL)/2, (GA+LA)/2) summarizes the pair, and the
angle of M against the loss axis [1, 0] measures how much of the client's
evidence is accuracy rather than loss: theta = 0 means all loss, pi/2 means
all accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from fedfits.core import EvalResult

HALF_PI = math.pi / 2.0

DYNAMIC = "dynamic"


@dataclass(frozen=True)
class FitnessParams:
    """Scoring knobs.

    alpha: weight of data quantity vs learning quality in the score; the
      string "dynamic" recomputes it each selection event from the clients.
    beta: threshold slack; the admission bar is mean score times (1 - beta).
    theta_normalized: divide the angle by pi/2 so it lands in [0, 1].
    legacy_theta_denominator: reproduce an earlier variant of the angle whose
      denominator mixes the loss and accuracy coordinates; kept for
      comparison runs, off by default.
    """

    alpha: float | str = DYNAMIC
    beta: float = 0.1
    theta_normalized: bool = True
    legacy_theta_denominator: bool = False

    def __post_init__(self):
        if isinstance(self.alpha, str):
            if self.alpha != DYNAMIC:
                raise ValueError(f"alpha must be a number in [0,1] or 'dynamic', got {self.alpha!r}")
        elif not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.alpha == DYNAMIC and not self.theta_normalized:
            raise ValueError("dynamic alpha requires normalized theta")

    @property
    def dynamic_alpha(self) -> bool:
        return self.alpha == DYNAMIC


@dataclass(frozen=True)
class ClientScore:
    """One client's scoring inputs and result for a selection event."""

    client_id: int
    q_k: float  # data-quantity fraction n_k / n
    theta_k: float  # quality-of-learning angle (radians, or [0,1] if normalized)
    score: float

    def __post_init__(self):
        if not 0.0 <= self.q_k <= 1.0:
            raise ValueError(f"q_k must be in [0, 1], got {self.q_k}")
        if self.theta_k < 0.0:
            raise ValueError(f"theta_k must be >= 0, got {self.theta_k}")


def compute_theta(global_eval: EvalResult, local_eval: EvalResult, params: FitnessParams) -> float:
    """Quality-of-learning angle from the paired global/local evaluations.

    Default form: theta = arccos( (GL+LL) / sqrt((GL+LL)^2 + (GA+LA)^2) ),
    the angle of the midpoint M to the loss axis. The legacy variant swaps the
    denominator grouping to sqrt((GL+GA)^2 + (LL+LA)^2) and clamps the arccos
    argument into [-1, 1]. Both are optionally normalized by pi/2.
    """
    gl, ga = global_eval.loss, global_eval.accuracy
    ll, la = local_eval.loss, local_eval.accuracy
    loss_sum = gl + ll
    acc_sum = ga + la
    if loss_sum == 0.0 and acc_sum == 0.0:
        raise ValueError("degenerate evaluation point: all four metrics are zero")
    if params.legacy_theta_denominator:
        denom = math.hypot(gl + ga, ll + la)
        if denom == 0.0:
            raise ValueError("degenerate evaluation point: all four metrics are zero")
        arg = min(1.0, max(-1.0, loss_sum / denom))
    else:
        arg = loss_sum / math.hypot(loss_sum, acc_sum)
        # loss_sum, acc_sum >= 0 keeps arg in [0, 1] up to rounding.
        arg = min(1.0, arg)
    theta = math.acos(arg)
    return theta / HALF_PI if params.theta_normalized else theta


def compute_score(q_k: float, theta_k: float, alpha: float) -> float:
    """score = alpha * q_k + (1 - alpha) * theta_k."""
    if not 0.0 <= q_k <= 1.0:
        raise ValueError(f"q_k must be in [0, 1], got {q_k}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * q_k + (1.0 - alpha) * theta_k


def compute_threshold(scores: list[ClientScore], beta: float) -> float:
    """Admission bar: mean of all client scores, relaxed by (1 - beta)."""
    if not scores:
        raise ValueError("threshold needs at least one scored client")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    mean = sum(s.score for s in scores) / len(scores)
    return mean * (1.0 - beta)


def dynamic_alpha(scores: list[ClientScore]) -> float:
    """Fraction of clients whose data quantity beats their learning quality.

    alpha = mean over clients of 1[q_k > theta_k], ties counting as 0. Only
    meaningful when theta is normalized onto the same [0, 1] scale as q.
    """
    if not scores:
        raise ValueError("dynamic alpha needs at least one scored client")
    for s in scores:
        if s.theta_k > 1.0:
            raise ValueError(
                "dynamic alpha requires normalized theta; "
                f"client {s.client_id} has theta_k = {s.theta_k}"
            )
    hits = sum(1 for s in scores if s.q_k > s.theta_k)
    return hits / len(scores)

"""Foundational value types: flat models, evaluation results, seeded RNG streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Stream domains. Every random draw in the library goes through one of these
# named streams; there is no global RNG anywhere.
RNG_DOMAINS = {
    "data": 0,
    "server_split": 1,
    "partition": 2,
    "client_split": 3,
    "init": 4,
    "shuffle": 5,
    "select": 6,
    "attack_labels": 7,
    "attack_model": 8,
    "quad_noise": 9,
    "test": 10,
}


@dataclass(frozen=True)
class Rng:
    """A named, counter-based random stream.

    Streams are keyed by (seed, domain, client_id, round): the same key always
    yields the same sequence, on every platform, no matter what other streams
    were consumed before it. This is what makes parallel client execution
    bit-reproducible.
    """

    seed: int
    domain: str
    client_id: int = 0
    round: int = 0

    def __post_init__(self):
        if self.domain not in RNG_DOMAINS:
            raise ValueError(f"unknown rng domain {self.domain!r}")

    @property
    def stream(self) -> tuple[int, int, int]:
        return (RNG_DOMAINS[self.domain], self.client_id, self.round)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def rng_draw(rng: Rng, n: int) -> np.ndarray:
    """Draw `n` uniforms in [0, 1) from the start of the stream."""
    if n < 0:
        raise ValueError(f"draw count must be >= 0, got {n}")
    return rng.generator().random(n)


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: (in_dim, out_dim) weight matrix plus bias, then an activation tag."""

    in_dim: int
    out_dim: int
    activation: str  # "relu" or "softmax"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ("relu", "softmax"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def size(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


Arch = tuple  # tuple[LayerSpec, ...]


def arch_size(arch: Sequence[LayerSpec]) -> int:
    return sum(layer.size for layer in arch)


def _as_readonly(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FlatModel:
    """Model parameters as one flat float64 vector.

    Layout is layer-major with weights before biases: for each layer in order,
    the (in_dim, out_dim) weight matrix in row-major order, then the bias
    vector. Aggregation is therefore plain vector arithmetic.
    """

    arch: Arch
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_readonly(self.weights))
        expected = arch_size(self.arch)
        if self.weights.ndim != 1 or self.weights.shape[0] != expected:
            raise ValueError(
                f"weight vector has length {self.weights.size}, arch implies {expected}"
            )
        if not np.isfinite(self.weights).all():
            raise ValueError("model weights contain non-finite entries")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def with_weights(self, weights) -> "FlatModel":
        return FlatModel(self.arch, weights)


def flatten(arch: Sequence[LayerSpec], layers: Sequence[tuple]) -> FlatModel:
    """Pack per-layer (weight matrix, bias vector) pairs into a FlatModel.

    Raises ValueError naming the offending layer when a shape does not match
    the arch.
    """
    if len(layers) != len(arch):
        raise ValueError(f"arch has {len(arch)} layers, got {len(layers)} parameter pairs")
    parts = []
    for i, (spec, (w, b)) in enumerate(zip(arch, layers)):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.shape != (spec.in_dim, spec.out_dim):
            raise ValueError(
                f"layer {i}: weight shape {w.shape} does not match "
                f"({spec.in_dim}, {spec.out_dim})"
            )
        if b.shape != (spec.out_dim,):
            raise ValueError(
                f"layer {i}: bias shape {b.shape} does not match ({spec.out_dim},)"
            )
        parts.append(w.reshape(-1))
        parts.append(b)
    return FlatModel(tuple(arch), np.concatenate(parts))


def unflatten(model: FlatModel) -> list[tuple[np.ndarray, np.ndarray]]:
    """Inverse of flatten: per-layer (weight matrix, bias vector) pairs."""
    layers = []
    offset = 0
    for spec in model.arch:
        w_end = offset + spec.in_dim * spec.out_dim
        b_end = w_end + spec.out_dim
        w = model.weights[offset:w_end].reshape(spec.in_dim, spec.out_dim)
        b = model.weights[w_end:b_end]
        layers.append((w, b))
        offset = b_end
    return layers


@dataclass(frozen=True)
class EvalResult:
    """Mean cross-entropy (nats) and accuracy fraction of one evaluation pass."""

    loss: float
    accuracy: float

    def __post_init__(self):
        if not (self.loss >= 0.0 and np.isfinite(self.loss)):
            raise ValueError(f"loss must be finite and >= 0, got {self.loss}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")


@dataclass(frozen=True)
class RoundRecord:
    """One row of experiment output."""

    round: int
    team: tuple[int, ...]  # sorted client ids that were aggregated
    global_eval: EvalResult
    theta_sum: float
    selection_event: bool
    wall_ms: int
    participation_cumulative: float
    sim_cost: float = 0.0
    alpha_used: float | None = None
    threshold: float | None = None

    def __post_init__(self):
        if len(self.team) == 0:
            raise ValueError("round team must be non-empty")
        if self.wall_ms < 0:
            raise ValueError("wall_ms must be non-negative")

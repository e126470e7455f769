"""Trainable models: multinomial logistic regression and a one-hidden-layer MLP.

Gradients, evaluation, and the SGD inner loop live in `fedfits._kernels`
(compiled extension with a numpy fallback); this module owns initialization,
shard plumbing, and the per-round client step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedfits import _kernels
from fedfits.core import EvalResult, FlatModel, LayerSpec, Rng, arch_size
from fedfits.data import ClientState, Dataset
from fedfits.fitness import FitnessParams, compute_theta


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # logreg | mlp1
    input_dim: int
    num_classes: int
    hidden_dim: int = 0  # mlp1 only; ignored for logreg

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp1"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kind == "mlp1" and self.hidden_dim < 1:
            raise ValueError(f"mlp1 needs hidden_dim >= 1, got {self.hidden_dim}")

    def arch(self) -> tuple[LayerSpec, ...]:
        if self.kind == "logreg":
            return (LayerSpec(self.input_dim, self.num_classes, "softmax"),)
        return (
            LayerSpec(self.input_dim, self.hidden_dim, "relu"),
            LayerSpec(self.hidden_dim, self.num_classes, "softmax"),
        )


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ValueError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")


def _dims(arch: tuple[LayerSpec, ...]) -> tuple[int, int, int, int]:
    """(kernel kind code, input_dim, hidden_dim, num_classes) from an arch."""
    if len(arch) == 1:
        return _kernels.KIND_LOGREG, arch[0].in_dim, 0, arch[0].out_dim
    return _kernels.KIND_MLP1, arch[0].in_dim, arch[0].out_dim, arch[1].out_dim


def _check_features(arch: tuple[LayerSpec, ...], shard: Dataset, what: str):
    if shard.dim != arch[0].in_dim:
        raise ValueError(
            f"{what} has {shard.dim} features, model expects {arch[0].in_dim}"
        )


def init_model(spec: ModelSpec, rng: Rng) -> FlatModel:
    """Uniform init with per-layer bound sqrt(6/(fan_in+fan_out)); zero biases."""
    arch = spec.arch()
    gen = rng.generator()
    weights = np.empty(arch_size(arch))
    offset = 0
    for layer in arch:
        bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        count = layer.in_dim * layer.out_dim
        weights[offset : offset + count] = gen.uniform(-bound, bound, count)
        offset += count
        weights[offset : offset + layer.out_dim] = 0.0
        offset += layer.out_dim
    return FlatModel(arch, weights)


def evaluate(model: FlatModel, shard: Dataset) -> EvalResult:
    """Mean cross-entropy and accuracy of the model on the shard."""
    if shard.n == 0:
        raise ValueError("degenerate evaluation: empty shard")
    _check_features(model.arch, shard, "evaluation shard")
    kind, d, h, c = _dims(model.arch)
    loss, acc = _kernels.evaluate_model(
        kind, model.weights, d, h, c, shard.features, shard.labels
    )
    return EvalResult(loss, acc)


def predict_proba(model: FlatModel, shard: Dataset) -> np.ndarray:
    """Per-sample class probabilities, shape (n, num_classes)."""
    _check_features(model.arch, shard, "shard")
    kind, d, h, c = _dims(model.arch)
    return _kernels.predict_proba(kind, model.weights, d, h, c, shard.features)


def gradient(model: FlatModel, batch: Dataset) -> np.ndarray:
    """Analytic gradient of the mean cross-entropy over the batch, flat layout."""
    if batch.n == 0:
        raise ValueError("gradient needs a non-empty batch")
    _check_features(model.arch, batch, "batch")
    kind, d, h, c = _dims(model.arch)
    return _kernels.gradient_model(kind, model.weights, d, h, c, batch.features, batch.labels)


def local_update(model_in: FlatModel, train_shard: Dataset, cfg: TrainConfig, rng: Rng) -> FlatModel:
    """E epochs of minibatch SGD with a seeded shuffle per epoch.

    Pure in its arguments: the input model is untouched and the result depends
    only on (model_in, shard, cfg, rng).
    """
    if train_shard.n == 0:
        raise ValueError("local_update needs a non-empty train shard")
    _check_features(model_in.arch, train_shard, "train shard")
    kind, d, h, c = _dims(model_in.arch)
    gen = rng.generator()
    perms = np.stack(
        [gen.permutation(train_shard.n) for _ in range(cfg.local_epochs)]
    ).astype(np.int64)
    batch = min(cfg.batch_size, train_shard.n)
    weights = _kernels.sgd_epochs(
        kind,
        model_in.weights,
        d,
        h,
        c,
        train_shard.features,
        train_shard.labels,
        cfg.learning_rate,
        batch,
        perms,
    )
    return model_in.with_weights(weights)


def client_update(
    client: ClientState,
    global_model: FlatModel,
    cfg: TrainConfig,
    fparams: FitnessParams,
    round_num: int,
    rng: Rng,
) -> tuple[FlatModel, float]:
    """One client round: train locally, then report the quality-of-learning angle.

    Round 1 reports theta_k = 0 (there is no trained reference yet); later
    rounds evaluate both the incoming global model and the freshly trained
    local model on the client's own test shard.
    """
    if round_num < 1:
        raise ValueError(f"round must be >= 1, got {round_num}")
    local_model = local_update(global_model, client.train, cfg, rng)
    if round_num == 1:
        return local_model, 0.0
    global_eval = evaluate(global_model, client.test)
    local_eval = evaluate(local_model, client.test)
    return local_model, compute_theta(global_eval, local_eval, fparams)

"""Deterministic federated-learning simulator.

Clients are elected by a fitness score that mixes data quantity with a
quality-of-learning angle; elected teams train for slots of rounds bounded by
a decline counter and a maximum slot length. Round-based baselines (full
census, uniform random, loss-biased sampling), poisoning attacks, robust
aggregators, and non-IID partitioning round out the toolkit.
"""

from fedfits._kernels import BACKEND_NAME
from fedfits.aggregation import Aggregator, aggregate
from fedfits.attacks import AttackSpec, poison_labels, poison_update, resolve_malicious_ids
from fedfits.core import EvalResult, FlatModel, LayerSpec, Rng, RoundRecord, flatten, unflatten
from fedfits.data import (
    ClientState,
    Dataset,
    DatasetSpec,
    PartitionSpec,
    load_csv,
    load_idx,
    partition,
    server_split,
    synth_blobs,
)
from fedfits.fitness import (
    ClientScore,
    FitnessParams,
    compute_score,
    compute_theta,
    compute_threshold,
    dynamic_alpha,
)
from fedfits.models import ModelSpec, TrainConfig, evaluate, init_model, local_update
from fedfits.orchestrator import (
    ExperimentConfig,
    RunResult,
    SelectionEvent,
    compare,
    make_quadratic_clients,
    run,
    validate_convergence,
)
from fedfits.scheduling import SlotParams, SlotState, should_reselect, update_decline_counter
from fedfits.selection import SelectionStrategy, select_fedfits, select_fedpow, select_fedrand

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "AttackSpec",
    "BACKEND_NAME",
    "ClientScore",
    "ClientState",
    "Dataset",
    "DatasetSpec",
    "EvalResult",
    "ExperimentConfig",
    "FitnessParams",
    "FlatModel",
    "LayerSpec",
    "ModelSpec",
    "PartitionSpec",
    "Rng",
    "RoundRecord",
    "RunResult",
    "SelectionEvent",
    "SelectionStrategy",
    "SlotParams",
    "SlotState",
    "TrainConfig",
    "aggregate",
    "compare",
    "compute_score",
    "compute_theta",
    "compute_threshold",
    "dynamic_alpha",
    "evaluate",
    "flatten",
    "init_model",
    "load_csv",
    "load_idx",
    "local_update",
    "make_quadratic_clients",
    "partition",
    "poison_labels",
    "poison_update",
    "resolve_malicious_ids",
    "run",
    "select_fedfits",
    "select_fedpow",
    "select_fedrand",
    "server_split",
    "should_reselect",
    "synth_blobs",
    "unflatten",
    "update_decline_counter",
    "validate_convergence",
    "__version__",
]

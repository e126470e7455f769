"""Dataset synthesis, file ingestion, and client partitioning."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from fedfits.core import Rng

DIRICHLET_MAX_RETRIES = 100


@dataclass(frozen=True)
class Dataset:
    """A labeled sample matrix. Arrays are float64/int64, C-contiguous, read-only."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        feats.flags.writeable = False
        labs.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-d matrix, got shape {feats.shape}")
        if labs.shape != (feats.shape[0],):
            raise ValueError(
                f"labels shape {labs.shape} does not match {feats.shape[0]} samples"
            )
        if not np.isfinite(feats).all():
            raise ValueError("features contain non-finite entries")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if labs.size and (labs.min() < 0 or labs.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{labs.min()}, {labs.max()}]"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class ClientState:
    """One client's local data. `n` (train + test) is the n_k used for q_k and weighting."""

    client_id: int
    train: Dataset
    test: Dataset

    def __post_init__(self):
        if self.client_id < 0:
            raise ValueError(f"client_id must be >= 0, got {self.client_id}")

    @property
    def n(self) -> int:
        return self.train.n + self.test.n


@dataclass(frozen=True)
class PartitionSpec:
    """How the global dataset is divided into client shards."""

    num_clients: int
    scheme: str = "dirichlet"  # dirichlet | uniform_iid | by_shards
    concentration: float = 0.3
    shards_per_client: int = 2
    min_samples_per_client: int = 10

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError(f"num_clients must be >= 1, got {self.num_clients}")
        if self.scheme not in ("dirichlet", "uniform_iid", "by_shards"):
            raise ValueError(f"unknown partition scheme {self.scheme!r}")
        if self.concentration <= 0:
            raise ValueError(f"concentration must be > 0, got {self.concentration}")
        if self.shards_per_client < 1:
            raise ValueError(f"shards_per_client must be >= 1, got {self.shards_per_client}")
        if self.min_samples_per_client < 2:
            raise ValueError(
                f"min_samples_per_client must be >= 2, got {self.min_samples_per_client}"
            )


@dataclass(frozen=True)
class DatasetSpec:
    """Source of the global dataset: synthetic blobs or a file on disk."""

    kind: str = "blobs"  # blobs | csv | idx
    num_classes: int = 2
    dim: int = 20
    samples_per_class: int = 1000
    separation: float = 3.0
    path: str = ""  # csv: data file; idx: images file
    labels_path: str = ""  # idx only

    def __post_init__(self):
        if self.kind not in ("blobs", "csv", "idx"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "blobs":
            if self.num_classes < 2 or self.dim < 1 or self.samples_per_class < 1:
                raise ValueError("blobs parameters must be positive (num_classes >= 2)")
            if self.separation < 0:
                raise ValueError(f"separation must be >= 0, got {self.separation}")
        elif not self.path:
            raise ValueError(f"dataset kind {self.kind!r} requires a path")


def synth_blobs(
    num_classes: int, dim: int, samples_per_class: int, separation: float, rng: Rng
) -> Dataset:
    """Gaussian class blobs: centers at separation x random unit vectors, unit noise."""
    gen = rng.generator()
    centers = gen.standard_normal((num_classes, dim))
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    centers = separation * centers / norms
    features = np.empty((num_classes * samples_per_class, dim))
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for c in range(num_classes):
        lo = c * samples_per_class
        hi = lo + samples_per_class
        features[lo:hi] = centers[c] + gen.standard_normal((samples_per_class, dim))
        labels[lo:hi] = c
    return Dataset(features, labels, num_classes)


def _class_indices(ds: Dataset) -> list[np.ndarray]:
    return [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]


def partition_dirichlet(
    ds: Dataset, num_clients: int, concentration: float, min_samples: int, rng: Rng
) -> list[np.ndarray]:
    """Split sample indices across clients with per-class Dirichlet proportions.

    Redraws the proportions until every client holds at least `min_samples`
    samples; raises after DIRICHLET_MAX_RETRIES failed draws.
    """
    if num_clients * min_samples > ds.n:
        raise ValueError(
            f"cannot give {num_clients} clients >= {min_samples} samples each "
            f"from {ds.n} total"
        )
    gen = rng.generator()
    by_class = _class_indices(ds)
    shuffled = [gen.permuted(idx) for idx in by_class]
    for _ in range(DIRICHLET_MAX_RETRIES):
        assignments: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
        for idx in shuffled:
            props = gen.dirichlet(np.full(num_clients, concentration))
            cuts = (np.cumsum(props)[:-1] * len(idx)).astype(np.int64)
            for k, part in enumerate(np.split(idx, cuts)):
                assignments[k].append(part)
        shards = [np.sort(np.concatenate(parts)) for parts in assignments]
        if min(s.size for s in shards) >= min_samples:
            return shards
    raise ValueError(
        f"could not give every client >= {min_samples} samples after "
        f"{DIRICHLET_MAX_RETRIES} draws; lower min_samples_per_client or "
        f"raise the concentration"
    )


def partition_uniform_iid(ds: Dataset, num_clients: int, rng: Rng) -> list[np.ndarray]:
    """Random equal-size split (sizes differ by at most 1)."""
    perm = rng.generator().permutation(ds.n)
    return [np.sort(part) for part in np.array_split(perm, num_clients)]


def partition_by_shards(
    ds: Dataset, num_clients: int, shards_per_client: int, rng: Rng
) -> list[np.ndarray]:
    """Label-sorted shards dealt randomly, a classic pathological non-IID split."""
    order = np.argsort(ds.labels, kind="stable")
    pieces = np.array_split(order, num_clients * shards_per_client)
    deal = rng.generator().permutation(len(pieces))
    shards = []
    for k in range(num_clients):
        mine = deal[k * shards_per_client : (k + 1) * shards_per_client]
        shards.append(np.sort(np.concatenate([pieces[i] for i in mine])))
    return shards


def partition(ds: Dataset, spec: PartitionSpec, rng: Rng) -> list[np.ndarray]:
    """Dispatch on spec.scheme; returns per-client index arrays (disjoint, covering)."""
    if spec.scheme == "dirichlet":
        return partition_dirichlet(
            ds, spec.num_clients, spec.concentration, spec.min_samples_per_client, rng
        )
    if spec.scheme == "uniform_iid":
        shards = partition_uniform_iid(ds, spec.num_clients, rng)
    else:
        shards = partition_by_shards(ds, spec.num_clients, spec.shards_per_client, rng)
    small = min(s.size for s in shards)
    if small < spec.min_samples_per_client:
        raise ValueError(
            f"scheme {spec.scheme!r} left a client with {small} < "
            f"{spec.min_samples_per_client} samples"
        )
    return shards


def stratified_split(ds: Dataset, first_fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (first, second) with per-class proportions near first_fraction.

    Both halves are guaranteed non-empty (one sample is moved if a draw left a
    side empty, largest class first).
    """
    if not 0.0 < first_fraction < 1.0:
        raise ValueError(f"first_fraction must be in (0, 1), got {first_fraction}")
    gen = rng.generator()
    first_parts: list[np.ndarray] = []
    second_parts: list[np.ndarray] = []
    for idx in _class_indices(ds):
        if idx.size == 0:
            continue
        shuffled = gen.permuted(idx)
        take = int(np.floor(first_fraction * idx.size + 0.5))
        take = min(max(take, 0), idx.size)
        first_parts.append(shuffled[:take])
        second_parts.append(shuffled[take:])
    first = np.concatenate(first_parts) if first_parts else np.empty(0, dtype=np.int64)
    second = np.concatenate(second_parts) if second_parts else np.empty(0, dtype=np.int64)
    if first.size == 0 and second.size > 1:
        first, second = second[:1], second[1:]
    elif second.size == 0 and first.size > 1:
        first, second = first[:-1], first[-1:]
    if first.size == 0 or second.size == 0:
        raise ValueError("shard too small to split into two non-empty parts")
    return np.sort(first), np.sort(second)


def server_split(ds: Dataset, eval_fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
    """Hold out a stratified server evaluation shard; returns (eval, rest)."""
    eval_idx, rest_idx = stratified_split(ds, eval_fraction, rng)
    return ds.take(eval_idx), ds.take(rest_idx)


def make_clients(
    ds: Dataset, shards: list[np.ndarray], train_fraction: float, seed: int
) -> list[ClientState]:
    """Build ClientStates with per-client seeded stratified train/test splits."""
    clients = []
    for k, shard_idx in enumerate(shards):
        shard = ds.take(shard_idx)
        train_idx, test_idx = stratified_split(
            shard, train_fraction, Rng(seed, "client_split", client_id=k)
        )
        clients.append(ClientState(k, shard.take(train_idx), shard.take(test_idx)))
    return clients


def load_csv(path: str) -> Dataset:
    """Read a labeled table: header row, comma-separated, label in the last column.

    Features parse as floats; labels are strings mapped to class ids in order
    of first appearance. Errors carry 1-based line numbers.
    """
    label_to_id: dict[str, int] = {}
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        width = len(header)
        if width < 2:
            raise ValueError(f"{path}: line 1: need at least 1 feature and a label column")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(row)}"
                )
            feats = []
            for col, cell in enumerate(row[:-1]):
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno}: could not parse feature "
                        f"{header[col]!r} value {cell!r}"
                    ) from None
            label = row[-1]
            if label not in label_to_id:
                label_to_id[label] = len(label_to_id)
            rows.append(feats)
            labels.append(label_to_id[label])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len(label_to_id) < 2:
        raise ValueError(f"{path}: need at least 2 distinct labels, got {len(label_to_id)}")
    return Dataset(np.array(rows), np.array(labels, dtype=np.int64), len(label_to_id))


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Read the big-endian IDX image/label pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">iiii", fh.read(16))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(
                f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        raw = fh.read(n * rows * cols)
    if len(raw) != n * rows * cols:
        raise ValueError(f"{images_path}: truncated, expected {n * rows * cols} pixels")
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">ii", fh.read(8))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        raw_labels = fh.read(n_labels)
    if len(raw_labels) != n_labels:
        raise ValueError(f"{labels_path}: truncated, expected {n_labels} labels")
    if n != n_labels:
        raise ValueError(f"image count {n} does not match label count {n_labels}")
    features = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1)


def build_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    """Materialize the global dataset a DatasetSpec describes."""
    if spec.kind == "blobs":
        return synth_blobs(
            spec.num_classes,
            spec.dim,
            spec.samples_per_class,
            spec.separation,
            Rng(seed, "data"),
        )
    if spec.kind == "csv":
        return load_csv(spec.path)
    return load_idx(spec.path, spec.labels_path)

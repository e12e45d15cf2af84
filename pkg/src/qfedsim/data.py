"""Datasets: CSV ingestion, random projection, synthetic benchmark, partitioning.

The file format is comma-separated text, one sample per row: F real features
followed by one integer class label; an optional header row is skipped when
its first field is not numeric.

Anomalies never enter training shards — the model trains on normal classes
only and anomaly labels exist to build scored validation sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoding import FeatureVector
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateInputError,
    LabelError,
    ParseError,
    PartitionError,
    SchemaError,
    ShapeError,
)

KL_SMOOTHING = 1e-6
PARTITION_RETRIES = 200

SCHEME_IID = "iid"
SCHEME_STEP = "step"
SCHEME_DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class LabeledDataset:
    """Samples plus the normal/anomaly class split.

    `class_ids` is the sorted tuple of every class id present in the split
    sets; histograms and label maps index classes in this order.
    """

    samples: tuple
    normal_classes: frozenset
    anomaly_classes: frozenset

    def __post_init__(self):
        samples = tuple(self.samples)
        normal = frozenset(int(c) for c in self.normal_classes)
        anomaly = frozenset(int(c) for c in self.anomaly_classes)
        if normal & anomaly:
            raise LabelError(f"classes {sorted(normal & anomaly)} are both normal and anomaly")
        known = normal | anomaly
        for fv in samples:
            if fv.label not in known:
                raise LabelError(f"label {fv.label} belongs to neither class set")
        widths = {fv.values.size for fv in samples}
        if len(widths) > 1:
            raise SchemaError(f"inconsistent feature widths {sorted(widths)}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "normal_classes", normal)
        object.__setattr__(self, "anomaly_classes", anomaly)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def class_ids(self) -> tuple:
        return tuple(sorted(self.normal_classes | self.anomaly_classes))

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def feature_dim(self) -> int:
        return self.samples[0].values.size if self.samples else 0

    def features_matrix(self) -> np.ndarray:
        return np.stack([fv.values for fv in self.samples])

    def labels_array(self) -> np.ndarray:
        return np.array([fv.label for fv in self.samples], dtype=np.int64)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(
            tuple(self.samples[i] for i in indices),
            self.normal_classes,
            self.anomaly_classes,
        )

    def normal_label_map(self) -> dict:
        """Sorted normal class ids -> contiguous logit indices 0..C-1."""
        return {c: i for i, c in enumerate(sorted(self.normal_classes))}


@dataclass(frozen=True)
class PartitionedDataset:
    """Disjoint per-client index shards over a training dataset."""

    dataset: LabeledDataset
    shards: tuple
    scheme: str

    def __post_init__(self):
        shards = tuple(tuple(int(i) for i in shard) for shard in self.shards)
        seen = [i for shard in shards for i in shard]
        if any(len(shard) == 0 for shard in shards):
            raise PartitionError("empty shard")
        if len(set(seen)) != len(seen):
            raise PartitionError("shards overlap")
        if set(seen) != set(range(len(self.dataset))):
            raise PartitionError("shards do not cover the dataset")
        object.__setattr__(self, "shards", shards)

    @property
    def n_clients(self) -> int:
        return len(self.shards)

    def shard_sizes(self) -> tuple:
        return tuple(len(s) for s in self.shards)


@dataclass(frozen=True)
class PartitionStats:
    """Per-client class histograms and the mean pairwise class-distribution
    divergence (symmetrized KL with additive smoothing)."""

    class_histograms: np.ndarray  # (n_clients, n_classes) counts
    avg_pairwise_kl: float


def load_features(path) -> LabeledDataset:
    """Parse a feature CSV into a dataset; all classes start as normal."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    samples = []
    width = None
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        fields = [f.strip() for f in text.split(",")]
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if lineno == 1 and not samples:
                continue  # header row
            raise ParseError(f"line {lineno}: non-numeric field in {text!r}") from None
        if len(values) < 2:
            raise SchemaError(f"line {lineno}: need at least one feature and a label")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise SchemaError(
                f"line {lineno}: row has {len(values)} fields, expected {width}"
            )
        label = values[-1]
        if label != int(label):
            raise ParseError(f"line {lineno}: label {fields[-1]!r} is not an integer")
        samples.append(FeatureVector(np.array(values[:-1]), int(label)))
    if not samples:
        raise DataError(f"{path} holds no samples")
    return LabeledDataset(tuple(samples), frozenset(fv.label for fv in samples), frozenset())


def with_anomaly_classes(dataset: LabeledDataset, anomaly_ids) -> LabeledDataset:
    """Re-split an all-normal dataset into normal vs anomaly classes."""
    anomaly = frozenset(int(c) for c in anomaly_ids)
    present = dataset.normal_classes | dataset.anomaly_classes
    missing = anomaly - present
    if missing:
        raise LabelError(f"anomaly classes {sorted(missing)} not present in the data")
    normal = present - anomaly
    if not normal:
        raise LabelError("every class marked anomalous; nothing left to train on")
    return LabeledDataset(dataset.samples, normal, anomaly)


def reduce_features(dataset: LabeledDataset, target_dim: int,
                    rng: np.random.Generator) -> LabeledDataset:
    """Project every sample with one shared Gaussian random matrix.

    Entries are N(0, 1/target_dim), so squared norms (and pairwise distances)
    are preserved in expectation. target_dim == current dim returns the
    dataset unchanged.
    """
    dim = dataset.feature_dim
    if target_dim > dim:
        raise ShapeError(f"target_dim {target_dim} exceeds feature dim {dim}")
    if target_dim < 1:
        raise ShapeError(f"target_dim must be >= 1, got {target_dim}")
    if target_dim == dim:
        return dataset
    projection = rng.normal(0.0, 1.0 / math.sqrt(target_dim), size=(target_dim, dim))
    projected = dataset.features_matrix() @ projection.T
    samples = tuple(
        FeatureVector(projected[i], fv.label) for i, fv in enumerate(dataset.samples)
    )
    return LabeledDataset(samples, dataset.normal_classes, dataset.anomaly_classes)


def synth_anomaly_dataset(n_normal_classes: int, per_class: int, n_anomaly: int,
                          dim: int, separation: float,
                          rng: np.random.Generator) -> LabeledDataset:
    """Gaussian-blob benchmark with unit within-class spread.

    Normal class i is centered at separation * e_i (pairwise mean distance
    separation * sqrt(2)); the anomaly cloud (class id n_normal_classes) is
    centered on the negated mean of the normal directions, so it differs from
    every normal class in direction — scale alone is invisible to
    amplitude-encoded models.
    """
    if dim < 2:
        raise DegenerateInputError(f"dim must be >= 2, got {dim}")
    if n_normal_classes < 1:
        raise ConfigError(f"need at least one normal class, got {n_normal_classes}")
    if n_normal_classes > dim:
        raise ConfigError(
            f"{n_normal_classes} classes will not fit on {dim} coordinate axes"
        )
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    if separation <= 0:
        raise ConfigError(f"separation must be > 0, got {separation}")
    samples = []
    for c in range(n_normal_classes):
        mean = np.zeros(dim)
        mean[c] = separation
        points = rng.normal(0.0, 1.0, size=(per_class, dim)) + mean
        samples.extend(FeatureVector(p, c) for p in points)
    if n_anomaly > 0:
        direction = np.zeros(dim)
        direction[:n_normal_classes] = -1.0 / math.sqrt(n_normal_classes)
        mean = separation * direction
        points = rng.normal(0.0, 1.0, size=(n_anomaly, dim)) + mean
        samples.extend(FeatureVector(p, n_normal_classes) for p in points)
    return LabeledDataset(
        tuple(samples),
        frozenset(range(n_normal_classes)),
        frozenset([n_normal_classes]) if n_anomaly > 0 else frozenset(),
    )


@dataclass(frozen=True)
class PartitionScheme:
    kind: str
    alpha: float | None = None
    step_remainder: float = 0.05

    def __post_init__(self):
        if self.kind not in (SCHEME_IID, SCHEME_STEP, SCHEME_DIRICHLET):
            raise ConfigError(f"unknown partition scheme {self.kind!r}")
        if self.kind == SCHEME_DIRICHLET and (self.alpha is None or self.alpha <= 0):
            raise ConfigError(f"dirichlet needs alpha > 0, got {self.alpha}")
        if not 0.0 <= self.step_remainder < 1.0:
            raise ConfigError(
                f"step_remainder must lie in [0, 1), got {self.step_remainder}"
            )

    def describe(self) -> str:
        if self.kind == SCHEME_DIRICHLET:
            return f"dirichlet({self.alpha})"
        return self.kind


def _indices_by_class(labels: np.ndarray) -> dict:
    return {c: np.flatnonzero(labels == c) for c in np.unique(labels)}


def _attempt_dirichlet(labels, n_clients, alpha, rng):
    shards = [[] for _ in range(n_clients)]
    for _, idx in sorted(_indices_by_class(labels).items()):
        proportions = rng.dirichlet(np.full(n_clients, alpha))
        shuffled = rng.permutation(idx)
        cuts = (np.cumsum(proportions)[:-1] * len(idx)).astype(int)
        for client, chunk in enumerate(np.split(shuffled, cuts)):
            shards[client].extend(chunk.tolist())
    return shards


def _attempt_step(labels, n_clients, remainder, rng):
    classes = sorted(np.unique(labels))
    per_owner = math.ceil(len(classes) / n_clients)
    shards = [[] for _ in range(n_clients)]
    for rank, c in enumerate(classes):
        owner = min(rank // per_owner, n_clients - 1)
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_spread = int(round(remainder * len(idx)))
        for i in idx[:n_spread]:
            shards[int(rng.integers(n_clients))].append(int(i))
        shards[owner].extend(idx[n_spread:].tolist())
    return shards


def partition(dataset: LabeledDataset, scheme, n_clients: int,
              rng: np.random.Generator) -> PartitionedDataset:
    """Split a dataset's indices across clients.

    iid: a random permutation split as evenly as possible. dirichlet(alpha):
    per-class client proportions drawn from a symmetric Dirichlet. step: each
    client owns a contiguous block of classes, with a small uniform remainder
    spread over everyone. Draws are retried (bounded) until no shard is empty.
    """
    if isinstance(scheme, str):
        scheme = PartitionScheme(scheme)
    if n_clients < 1:
        raise ConfigError(f"n_clients must be >= 1, got {n_clients}")
    if len(dataset) < n_clients:
        raise PartitionError(
            f"{len(dataset)} samples cannot fill {n_clients} non-empty shards"
        )
    labels = dataset.labels_array()
    if scheme.kind == SCHEME_IID:
        order = rng.permutation(len(dataset))
        shards = [chunk.tolist() for chunk in np.array_split(order, n_clients)]
        return PartitionedDataset(dataset, tuple(map(tuple, shards)), scheme.describe())
    for _ in range(PARTITION_RETRIES):
        if scheme.kind == SCHEME_DIRICHLET:
            shards = _attempt_dirichlet(labels, n_clients, scheme.alpha, rng)
        else:
            shards = _attempt_step(labels, n_clients, scheme.step_remainder, rng)
        if all(shards):
            return PartitionedDataset(dataset, tuple(map(tuple, shards)), scheme.describe())
    raise PartitionError(
        f"no draw of {scheme.describe()} filled all {n_clients} shards "
        f"within {PARTITION_RETRIES} retries"
    )


def _smoothed(hist: np.ndarray) -> np.ndarray:
    return (hist + KL_SMOOTHING) / (hist.sum() + hist.size * KL_SMOOTHING)


def _symmetrized_kl(p: np.ndarray, q: np.ndarray) -> float:
    forward = float(np.sum(p * np.log(p / q)))
    backward = float(np.sum(q * np.log(q / p)))
    return 0.5 * (forward + backward)


def heterogeneity(partitioned: PartitionedDataset, dataset: LabeledDataset) -> PartitionStats:
    """Class histograms per client and mean pairwise symmetrized KL.

    Distributions are smoothed additively (1e-6 per class before
    renormalizing) so disjoint supports stay finite. A single client has no
    pairs; its divergence is 0.
    """
    labels = dataset.labels_array()
    class_ids = dataset.class_ids
    column = {c: i for i, c in enumerate(class_ids)}
    hists = np.zeros((partitioned.n_clients, len(class_ids)), dtype=np.int64)
    for client, shard in enumerate(partitioned.shards):
        for i in shard:
            hists[client, column[labels[i]]] += 1
    smoothed = [_smoothed(h.astype(np.float64)) for h in hists]
    divergences = [
        _symmetrized_kl(smoothed[a], smoothed[b])
        for a in range(len(smoothed))
        for b in range(a + 1, len(smoothed))
    ]
    avg = float(np.mean(divergences)) if divergences else 0.0
    return PartitionStats(hists, avg)

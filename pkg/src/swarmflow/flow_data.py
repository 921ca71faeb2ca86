"""Labeled network-flow datasets: ingestion, preservation, scaling, splitting.

Flow records arrive as CSV (one flow per row, header, numeric features plus
a binary label column). Upstream flow extraction from packet captures is an
external concern; this module starts from the extracted CSV, keeps a SHA-256
preservation manifest of every input it touches, and prepares train/test
material for the classifier.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DataError

MinMax = tuple[float, float]


@dataclass(frozen=True)
class FlowRecord:
    """A single labeled flow: feature vector plus binary class (1 = attack)."""

    features: tuple[float, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")


class FlowDataset:
    """Immutable column-oriented store of labeled flow records.

    Features are float64, shape (n_records, n_features); labels are 0/1.
    `normalization` records the per-feature (min, max) pairs of the affine
    scaling that produced the stored values, or None for raw data. Arrays
    are frozen after construction so datasets can be shared across workers.
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        feature_names: Sequence[str],
        normalization: Sequence[MinMax] | None = None,
        label_mapping: dict[str, int] | None = None,
    ):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise DataError(
                f"labels shape {labels.shape} does not match {features.shape[0]} records"
            )
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must contain only 0 and 1")
        if len(feature_names) != features.shape[1]:
            raise DataError(
                f"{len(feature_names)} feature names for {features.shape[1]} features"
            )
        if normalization is not None:
            normalization = tuple((float(lo), float(hi)) for lo, hi in normalization)
            if len(normalization) != features.shape[1]:
                raise DataError("normalization stats do not match feature count")
            if features.size and (features.min() < 0.0 or features.max() > 1.0):
                raise DataError("normalized dataset has values outside [0, 1]")
        features.setflags(write=False)
        labels.setflags(write=False)
        self.features = features
        self.labels = labels
        self.feature_names = tuple(str(n) for n in feature_names)
        self.normalization = normalization
        self.label_mapping = dict(label_mapping) if label_mapping else None

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __getitem__(self, i: int) -> FlowRecord:
        return FlowRecord(tuple(float(v) for v in self.features[i]), int(self.labels[i]))

    def iter_records(self) -> Iterator[FlowRecord]:
        for i in range(len(self)):
            yield self[i]

    def class_counts(self) -> tuple[int, int]:
        """(n_normal, n_attack) record counts."""
        n_attack = int(self.labels.sum())
        return len(self) - n_attack, n_attack

    def replace(self, **kwargs) -> "FlowDataset":
        args = dict(
            features=self.features,
            labels=self.labels,
            feature_names=self.feature_names,
            normalization=self.normalization,
            label_mapping=self.label_mapping,
        )
        args.update(kwargs)
        return FlowDataset(**args)


@dataclass(frozen=True)
class ManifestEntry:
    """Digest of one evidence file: enough to re-verify its integrity."""

    source: str
    sha256: str
    bytes: int
    timestamp: str

    def __post_init__(self):
        if len(self.sha256) != 64 or any(c not in "0123456789abcdef" for c in self.sha256):
            raise DataError("sha256 must be 64 lowercase hex characters")
        if self.bytes < 0:
            raise DataError("byte length must be nonnegative")


@dataclass
class PreservationManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def add(self, entry: ManifestEntry) -> None:
        self.entries.append(entry)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(
                    json.dumps(
                        {
                            "source": e.source,
                            "sha256": e.sha256,
                            "bytes": e.bytes,
                            "timestamp": e.timestamp,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "PreservationManifest":
        manifest = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                manifest.add(
                    ManifestEntry(
                        source=obj["source"],
                        sha256=obj["sha256"],
                        bytes=obj["bytes"],
                        timestamp=obj["timestamp"],
                    )
                )
        return manifest


@dataclass(frozen=True)
class SplitSpec:
    """Train/test partitioning parameters. Stratified by default: flow data
    in this domain is extremely imbalanced and an unlucky split can leave a
    partition without any normal records."""

    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(
                f"train_fraction must be strictly between 0 and 1, got {self.train_fraction}"
            )


def digest_file(path: str | Path) -> ManifestEntry:
    """SHA-256 digest of the exact bytes of `path`, with size and UTC time."""
    h = hashlib.sha256()
    size = 0
    try:
        with open(path, "rb") as fh:
            while True:
                chunk = fh.read(1 << 20)
                if not chunk:
                    break
                h.update(chunk)
                size += len(chunk)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return ManifestEntry(
        source=str(path),
        sha256=h.hexdigest(),
        bytes=size,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def _map_labels(raw: list[str], positive_label: str | None) -> tuple[np.ndarray, dict[str, int]]:
    distinct = sorted(set(raw))
    if positive_label is not None:
        if positive_label not in distinct:
            raise DataError(
                f"positive label {positive_label!r} not found in label column "
                f"(values: {distinct})"
            )
        if len(distinct) > 2:
            raise DataError(f"label column has {len(distinct)} distinct values, expected 2")
        mapping = {v: (1 if v == positive_label else 0) for v in distinct}
    elif all(v in ("0", "1") for v in distinct):
        mapping = {v: int(v) for v in distinct}
    elif len(distinct) == 2:
        # Lexicographically smaller value maps to 0. Pass positive_label
        # explicitly when the convention does not match the data.
        mapping = {distinct[0]: 0, distinct[1]: 1}
    else:
        raise DataError(
            f"label column has {len(distinct)} distinct values, expected 2 "
            f"(or pass an explicit positive label)"
        )
    labels = np.fromiter((mapping[v] for v in raw), dtype=np.int64, count=len(raw))
    return labels, mapping


def load_csv(
    path: str | Path, label_column: str = "label", positive_label: str | None = None
) -> FlowDataset:
    """Parse a flow CSV into an (unnormalized) dataset.

    All non-label columns must parse as finite real numbers; parse failures
    report the 1-based data row and the column name. Labels are mapped to
    {0, 1}; the mapping used is recorded on the returned dataset.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        n_cols = len(header)

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != n_cols:
                raise DataError(
                    f"{path}: row {row_no}: expected {n_cols} columns, found {len(row)}"
                )
            raw_labels.append(row[label_idx].strip())
            cells = row[:label_idx] + row[label_idx + 1 :]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                values = None
            if values is None or not all(math.isfinite(v) for v in values):
                for col, cell in zip(feature_names, cells):
                    try:
                        ok = math.isfinite(float(cell))
                    except ValueError:
                        ok = False
                    if not ok:
                        raise DataError(
                            f"{path}: row {row_no}, column {col!r}: "
                            f"could not parse {cell!r} as a finite number"
                        ) from None
                raise DataError(f"{path}: row {row_no}: unparseable row")  # pragma: no cover
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no data rows")
    labels, mapping = _map_labels(raw_labels, positive_label)
    features = np.array(rows, dtype=np.float64)
    return FlowDataset(features, labels, feature_names, label_mapping=mapping)


def save_csv(dataset: FlowDataset, path: str | Path, label_column: str = "label") -> None:
    """Write a dataset back to CSV with round-trip exact float formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [label_column])
        for feats, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in feats] + [int(label)])


def min_max_normalize(dataset: FlowDataset) -> FlowDataset:
    """Scale every feature to [0, 1] by its observed min/max.

    Constant features map to 0 (their stored (min, max) pair is degenerate,
    and `denormalize` restores the constant). The fitted stats are stored
    on the result so the identical map can be replayed on held-out data.
    """
    if len(dataset) == 0:
        raise DataError("cannot normalize an empty dataset")
    if dataset.normalization is not None:
        raise DataError("dataset is already normalized")
    mins = dataset.features.min(axis=0)
    maxs = dataset.features.max(axis=0)
    span = maxs - mins
    safe = np.where(span > 0.0, span, 1.0)
    scaled = (dataset.features - mins) / safe
    scaled[:, span == 0.0] = 0.0
    stats = tuple((float(lo), float(hi)) for lo, hi in zip(mins, maxs))
    return dataset.replace(features=scaled, normalization=stats)


def apply_normalization(dataset: FlowDataset, stats: Sequence[MinMax]) -> FlowDataset:
    """Replay previously fitted min/max scaling; out-of-range values clip to [0, 1]."""
    if dataset.normalization is not None:
        raise DataError("dataset is already normalized")
    stats = tuple((float(lo), float(hi)) for lo, hi in stats)
    if len(stats) != dataset.n_features:
        raise DataError(
            f"normalization stats have {len(stats)} entries for "
            f"{dataset.n_features} features"
        )
    mins = np.array([lo for lo, _ in stats])
    span = np.array([hi - lo for lo, hi in stats])
    safe = np.where(span > 0.0, span, 1.0)
    scaled = (dataset.features - mins) / safe
    scaled[:, span == 0.0] = 0.0
    scaled = np.clip(scaled, 0.0, 1.0)
    return dataset.replace(features=scaled, normalization=stats)


def denormalize(dataset: FlowDataset) -> FlowDataset:
    """Invert stored min/max scaling (exact for non-constant, non-clipped values)."""
    if dataset.normalization is None:
        raise DataError("dataset has no normalization to invert")
    mins = np.array([lo for lo, _ in dataset.normalization])
    span = np.array([hi - lo for lo, hi in dataset.normalization])
    raw = dataset.features * span + mins
    return dataset.replace(features=raw, normalization=None)


def _stratified_counts(labels: np.ndarray, n_train: int, frac: float) -> dict[int, int]:
    # Largest-remainder apportionment: per-class train counts sum to n_train
    # while staying within one record of frac * class size.
    classes = sorted(int(c) for c in np.unique(labels))
    sizes = {c: int((labels == c).sum()) for c in classes}
    base = {c: int(math.floor(frac * sizes[c])) for c in classes}
    remainder = {c: frac * sizes[c] - base[c] for c in classes}
    seats = n_train - sum(base.values())
    order = sorted(classes, key=lambda c: (-remainder[c], c))
    for c in order[:seats]:
        base[c] += 1
    return base


def split(dataset: FlowDataset, spec: SplitSpec) -> tuple[FlowDataset, FlowDataset]:
    """Partition into (train, test); deterministic under `spec.seed`."""
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_train = round(spec.train_fraction * n)
    if n_train == 0 or n_train == n:
        raise DataError(
            f"train_fraction {spec.train_fraction} yields an empty partition for {n} records"
        )
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        counts = _stratified_counts(dataset.labels, n_train, spec.train_fraction)
        train_parts, test_parts = [], []
        for c in sorted(counts):
            idx = np.flatnonzero(dataset.labels == c)
            perm = rng.permutation(idx)
            train_parts.append(perm[: counts[c]])
            test_parts.append(perm[counts[c] :])
        train_idx = rng.permutation(np.concatenate(train_parts))
        test_idx = rng.permutation(np.concatenate(test_parts))
    else:
        perm = rng.permutation(n)
        train_idx, test_idx = perm[:n_train], perm[n_train:]

    def take(idx: np.ndarray) -> FlowDataset:
        return dataset.replace(
            features=dataset.features[idx], labels=dataset.labels[idx]
        )

    return take(train_idx), take(test_idx)


def generate_synthetic(
    n: int,
    attack_fraction: float,
    feature_count: int,
    separation: float,
    seed: int,
) -> FlowDataset:
    """Gaussian two-class stand-in for real flow data.

    Both classes are unit-variance Gaussians; the attack-class mean sits at
    Euclidean distance `separation` from the normal-class mean (offset split
    evenly across features). separation=0 makes the classes indistinguishable.
    """
    if n < 2:
        raise DataError("need at least 2 records")
    if not 0.0 < attack_fraction < 1.0:
        raise DataError("attack_fraction must be strictly between 0 and 1")
    if feature_count < 1:
        raise DataError("feature_count must be positive")
    if separation < 0.0:
        raise DataError("separation must be nonnegative")
    n_attack = round(attack_fraction * n)
    if n_attack == 0 or n_attack == n:
        raise DataError(
            f"attack_fraction {attack_fraction} leaves a class empty for n={n}"
        )
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_attack] = 1
    rng.shuffle(labels)
    features = rng.standard_normal((n, feature_count))
    offset = separation / math.sqrt(feature_count)
    features += offset * labels[:, None]
    names = [f"f{i + 1:02d}" for i in range(feature_count)]
    return FlowDataset(features, labels, names)


def save_normalization(
    dataset: FlowDataset, path: str | Path, threshold: float | None = None
) -> None:
    """Persist fitted scaling stats (plus label mapping) as JSON."""
    if dataset.normalization is None:
        raise DataError("dataset has no normalization stats to save")
    payload = {
        "feature_names": list(dataset.feature_names),
        "min_max": [[lo, hi] for lo, hi in dataset.normalization],
        "label_mapping": dataset.label_mapping,
    }
    if threshold is not None:
        payload["threshold"] = threshold
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_normalization(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read normalization stats {path}: {exc}") from exc
    if "min_max" not in payload:
        raise DataError(f"{path}: not a normalization stats file")
    payload["min_max"] = [(float(lo), float(hi)) for lo, hi in payload["min_max"]]
    return payload

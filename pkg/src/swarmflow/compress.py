"""Reduce a flow dataset to one feature via Gaussian densities.

Each feature value is replaced by the density of a normal distribution
fitted to that feature on training data, the densities are combined as a
weighted sum, and the sum is min-max scaled to [0,1]. The weight of feature
j is the mean of row j of the Pearson correlation matrix (diagonal
included), so features that co-vary with many others dominate the sum; a
``global_mean`` mode that collapses the matrix to one scalar weight is kept
as a documented alternative.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .flow_data import FlowDataset

STD_EPS = 1e-9
WEIGHT_MODES = ("row_mean", "global_mean")


@dataclass(frozen=True)
class CompressionModel:
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray
    output_range: tuple[float, float]
    weight_mode: str

    def __post_init__(self):
        for name in ("means", "stds", "weights"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.means.shape == self.stds.shape == self.weights.shape):
            raise DataError("means, stds and weights must have matching shapes")
        if self.means.ndim != 1 or self.means.size == 0:
            raise DataError("compression parameters must be nonempty vectors")
        if np.any(self.stds <= 0):
            raise DataError("standard deviations must be strictly positive")
        if self.weight_mode not in WEIGHT_MODES:
            raise DataError(f"weight_mode must be one of {WEIGHT_MODES}")

    @property
    def n_features(self) -> int:
        return self.means.size


def _correlation_matrix(features: np.ndarray) -> np.ndarray:
    """Pearson correlations with constant features decoupled.

    A constant feature has undefined correlations; its off-diagonal entries
    are set to 0 and the diagonal stays 1.
    """
    d = features.shape[1]
    constant = features.std(axis=0) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        corr = np.atleast_2d(np.corrcoef(features, rowvar=False))
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    corr[np.diag_indices(d)] = 1.0
    return corr


def _weighted_density_sum(model: CompressionModel, features: np.ndarray) -> np.ndarray:
    z = (features - model.means) / model.stds
    pdf = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * model.stds)
    return pdf @ model.weights


def fit_compression(train_set: FlowDataset, weight_mode: str = "row_mean") -> CompressionModel:
    """Fit per-feature Gaussians and correlation weights on training data.

    Standard deviations are population (1/n) estimates, floored at 1e-9 so a
    constant feature still has a defined density. The output range is the
    min/max of the weighted density sums over the fitting data itself.
    """
    if weight_mode not in WEIGHT_MODES:
        raise DataError(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")
    if len(train_set) < 2:
        raise DataError("fitting compression requires at least 2 records")
    x = train_set.features
    means = x.mean(axis=0)
    stds = np.maximum(x.std(axis=0), STD_EPS)
    corr = _correlation_matrix(x)
    if weight_mode == "row_mean":
        weights = corr.mean(axis=1)
    else:
        weights = np.full(x.shape[1], corr.mean())
    model = CompressionModel(
        means=means,
        stds=stds,
        weights=weights,
        output_range=(0.0, 1.0),
        weight_mode=weight_mode,
    )
    raw = _weighted_density_sum(model, x)
    return CompressionModel(
        means=means,
        stds=stds,
        weights=weights,
        output_range=(float(raw.min()), float(raw.max())),
        weight_mode=weight_mode,
    )


def compress(model: CompressionModel, dataset: FlowDataset) -> FlowDataset:
    """Collapse all features of `dataset` into one [0,1] feature.

    Values outside the fitted output range (possible on unseen data) clip to
    the endpoints; on the fitting data itself 0 and 1 are attained exactly.
    Labels and record order are preserved.
    """
    if dataset.n_features != model.n_features:
        raise DataError(
            f"dataset has {dataset.n_features} features, "
            f"compression model expects {model.n_features}"
        )
    raw = _weighted_density_sum(model, dataset.features)
    lo, hi = model.output_range
    if hi > lo:
        scaled = (raw - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(raw)
    scaled = np.clip(scaled, 0.0, 1.0)
    return FlowDataset(
        features=scaled[:, None],
        labels=dataset.labels,
        feature_names=("compressed",),
        normalization=((lo, hi),),
        label_mapping=dataset.label_mapping,
    )


def save_compression(model: CompressionModel, path: str | Path) -> None:
    """Persist in the decimal-text style used for network model files."""
    lines = [
        "swarmflow-compress 1",
        f"features {model.n_features}",
        f"weight_mode {model.weight_mode}",
        f"output_range {model.output_range[0]!r} {model.output_range[1]!r}",
    ]
    for name in ("means", "stds", "weights"):
        values = getattr(model, name)
        lines.append(name)
        lines.append(" ".join(repr(float(v)) for v in values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_compression(path: str | Path) -> CompressionModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read compression model {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        if lines[0] != "swarmflow-compress 1":
            raise ValueError("bad header")
        n = int(lines[1].split()[1])
        weight_mode = lines[2].split()[1]
        _, lo, hi = lines[3].split()
        blocks: dict[str, np.ndarray] = {}
        i = 4
        while i < len(lines):
            name = lines[i]
            values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
            if values.size != n:
                raise ValueError(f"{name}: expected {n} values, got {values.size}")
            blocks[name] = values
            i += 2
        return CompressionModel(
            means=blocks["means"],
            stds=blocks["stds"],
            weights=blocks["weights"],
            output_range=(float(lo), float(hi)),
            weight_mode=weight_mode,
        )
    except (ValueError, IndexError, KeyError) as exc:
        raise DataError(f"{path}: not a valid compression model file ({exc})") from exc

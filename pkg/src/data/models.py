from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import DataError, DimensionError


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with ±1 labels"""

    features: np.ndarray  # n x L
    labels: np.ndarray  # n, entries in {-1, +1}
    feature_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {features.shape}")
        n, n_features = features.shape
        if n < 1 or n_features < 1:
            raise DataError(f"dataset needs at least one row and one column, got shape {features.shape}")
        if labels.shape != (n,):
            raise DataError(f"labels must have shape ({n},), got {labels.shape}")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        if not np.all((labels == 1) | (labels == -1)):
            raise DataError("every label must be exactly -1 or +1")
        if self.feature_names is not None and len(self.feature_names) != n_features:
            raise DimensionError("feature_names", n_features, len(self.feature_names))

        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels.astype(np.int64))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.feature_names)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.feature_names)

    def class_counts(self) -> Dict[int, int]:
        return {1: int(np.sum(self.labels == 1)), -1: int(np.sum(self.labels == -1))}


@dataclass(frozen=True)
class NormalizationParams:
    """Per-column mean and population standard deviation of a training set"""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise DataError(f"mean and std must be vectors of equal length, got {mean.shape} and {std.shape}")
        if np.any(std <= 0):
            raise DataError(f"std must be positive, column {int(np.argmin(std))} is {std.min()}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def __len__(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizationParams":
        return cls(mean=np.asarray(data["mean"]), std=np.asarray(data["std"]))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = field(default=0)

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise DataError(f"seed must be non-negative, got {self.seed}")

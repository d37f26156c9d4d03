from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.errors import DataError
from src.features.models import FeatureMap


@dataclass(frozen=True)
class NoiseSpec:
    """Laplace scale lambda, privacy level beta and the seed of the noise draw"""

    scale: float
    beta: float
    seed: Optional[int] = None

    def __post_init__(self):
        if self.scale < 0:
            raise DataError(f"noise scale must be non-negative, got {self.scale}")
        if self.beta <= 0:
            raise DataError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class PrivateRelease:
    """The only artifact that crosses the privacy boundary.

    It holds the perturbed weights, the noise scale, the privacy level and the
    public feature-map parameters. It never holds w* nor the noise seed:
    either would let anyone recover the private weights.
    """

    weights: np.ndarray
    noise: NoiseSpec
    feature_map: FeatureMap

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.shape != (self.feature_map.output_dim,):
            raise DataError(f"released weights must have shape ({self.feature_map.output_dim},), got {weights.shape}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def scale(self) -> float:
        return self.noise.scale

    @property
    def beta(self) -> float:
        return self.noise.beta

    def to_dict(self) -> Dict[str, Any]:
        return {
            "w_tilde": self.weights.tolist(),
            "lambda": self.noise.scale,
            "beta": self.noise.beta,
            "feature_map": self.feature_map.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PrivateRelease":
        try:
            return cls(
                weights=np.asarray(data["w_tilde"], dtype=np.float64),
                noise=NoiseSpec(scale=float(data["lambda"]), beta=float(data["beta"])),
                feature_map=FeatureMap.from_dict(data["feature_map"]),
            )
        except KeyError as e:
            raise DataError(f"release document is missing field {e}") from e


@dataclass(frozen=True)
class DpCheckReport:
    """Outcome of the empirical density-ratio check on a neighboring pair"""

    beta: float
    scale: float
    samples: int
    max_log_ratio: float  # worst |log p1(v) - log p2(v)| over the samples
    weight_shift_l1: float
    tolerance: float = 1e-9
    violations: List[Tuple[int, float]] = field(default_factory=list)  # (sample index, log ratio)

    @property
    def max_ratio(self) -> float:
        return float(np.exp(min(self.max_log_ratio, 700.0)))

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": self.beta,
            "lambda": self.scale,
            "samples": self.samples,
            "max_log_ratio": self.max_log_ratio,
            "log_bound": self.beta + float(np.log1p(self.tolerance)),
            "weight_shift_l1": self.weight_shift_l1,
            "passed": self.passed,
            "violations": [{"sample": i, "log_ratio": r} for i, r in self.violations],
        }

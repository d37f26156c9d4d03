from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import DataError
from src.privacy.models import PrivateRelease
from src.privacy.services import laplace_sample


class Method(str, Enum):
    NONROBUST_CLOSED_FORM = "nonrobust_closed_form"
    NONROBUST_BISECTION = "nonrobust_bisection"
    ROBUST_CONE_PROJECTION = "robust_cone_projection"
    ROBUST_BISECTION = "robust_bisection"

    @property
    def is_robust(self) -> bool:
        return self in (Method.ROBUST_CONE_PROJECTION, Method.ROBUST_BISECTION)


class Distance(str, Enum):
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class UncertaintyModel:
    """What the public knows about w*: the released location and the noise scale"""

    location: np.ndarray
    scale: float

    def __post_init__(self):
        if self.scale < 0:
            raise DataError(f"scale must be non-negative, got {self.scale}")
        object.__setattr__(self, "location", np.asarray(self.location, dtype=np.float64))

    @classmethod
    def from_release(cls, release: PrivateRelease) -> "UncertaintyModel":
        return cls(location=release.weights, scale=release.scale)

    def sample(self, trials: int, seed: int, start: int = 0) -> np.ndarray:
        """Rows xi = w~ + mu with i.i.d. Lap(0, lambda) coordinates; row t uses stream indices t*F .. t*F + F - 1"""
        n_features = self.location.shape[0]
        noise = laplace_sample(self.scale, trials * n_features, seed, start=start * n_features)
        return self.location + noise.reshape(trials, n_features)


@dataclass(frozen=True)
class ExplanationRequest:
    instance: np.ndarray
    label: int  # the released classifier's own prediction for the instance
    confidence: float = 0.9

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise DataError(f"label must be -1 or +1, got {self.label}")
        if not 0.5 <= self.confidence < 1.0:
            raise DataError(f"confidence p must lie in [1/2, 1), got {self.confidence}")
        instance = np.array(self.instance, dtype=np.float64)
        if instance.ndim != 1:
            raise DataError(f"instance must be a vector, got shape {instance.shape}")
        object.__setattr__(self, "instance", instance)
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class BisectionConfig:
    epsilon: float = 1e-3  # stop once ||x_ub - x_lb|| <= epsilon
    max_iter: int = 200
    return_midpoint: bool = False  # return the last midpoint instead of the feasible upper bound

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DataError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be positive, got {self.max_iter}")


@dataclass(frozen=True)
class BisectionStep:
    iteration: int
    width: float  # ||x_ub - x_lb|| after the step
    g_midpoint: float
    g_upper: float  # g at x_ub after the step, always negative


@dataclass(frozen=True)
class PrototypeSet:
    """Confidently classified representatives of class +1 and class -1"""

    z_plus: np.ndarray
    z_minus: np.ndarray

    def __post_init__(self):
        z_plus = np.asarray(self.z_plus, dtype=np.float64)
        z_minus = np.asarray(self.z_minus, dtype=np.float64)
        if z_plus.ndim != 1 or z_plus.shape != z_minus.shape:
            raise DataError(f"prototypes must be vectors of equal length, got {z_plus.shape} and {z_minus.shape}")
        object.__setattr__(self, "z_plus", z_plus)
        object.__setattr__(self, "z_minus", z_minus)

    def for_class(self, label: int) -> np.ndarray:
        return self.z_plus if label == 1 else self.z_minus

    def to_dict(self) -> Dict[str, Any]:
        return {"z_plus": self.z_plus.tolist(), "z_minus": self.z_minus.tolist()}


@dataclass(frozen=True)
class Explanation:
    point: np.ndarray
    instance: np.ndarray
    label: int
    confidence: float
    method: Method
    distance: float
    g_value: float  # feasibility margin; <= 0 means the constraint holds
    iterations: int = 0
    segment_fraction: Optional[float] = None  # position on [x', z] for bisection
    origin_only: bool = False  # the robust cone is {0}
    trace: Tuple[BisectionStep, ...] = field(default=(), repr=False)
    metric: Distance = Distance.EUCLIDEAN

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x": self.point.tolist(),
            "x_prime": self.instance.tolist(),
            "y_prime": self.label,
            "p": self.confidence,
            "method": self.method.value,
            "distance": self.distance,
            "g_value": self.g_value,
            "iterations": self.iterations,
            "origin_only": self.origin_only,
        }

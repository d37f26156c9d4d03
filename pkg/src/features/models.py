from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from src.errors import DataError


class FeatureKind(str, Enum):
    IDENTITY = "identity"
    RANDOM_FOURIER = "random_fourier"


@dataclass(frozen=True)
class FeatureMap:
    """A finite-dimensional feature mapping phi: R^L -> R^F.

    The parameters are public: a random Fourier map is fully determined by
    (seed, gamma, L, F), so only those are serialized and the frequencies and
    phases are regenerated on load.
    """

    kind: FeatureKind
    input_dim: int
    output_dim: int
    gamma: Optional[float] = None
    seed: Optional[int] = None
    frequencies: Optional[np.ndarray] = field(default=None, repr=False, compare=False)  # F x L
    phases: Optional[np.ndarray] = field(default=None, repr=False, compare=False)  # F

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if self.input_dim < 1 or self.output_dim < 1:
            raise DataError(f"feature map dimensions must be positive, got L={self.input_dim} F={self.output_dim}")

        if self.kind is FeatureKind.IDENTITY:
            if self.output_dim != self.input_dim:
                raise DataError(f"identity map needs F = L, got F={self.output_dim} L={self.input_dim}")
            return

        if self.gamma is None or self.gamma <= 0:
            raise DataError(f"random Fourier map needs gamma > 0, got {self.gamma}")
        if self.frequencies is None or self.phases is None:
            raise DataError("random Fourier map needs frequencies and phases")
        frequencies = np.array(self.frequencies, dtype=np.float64)
        phases = np.array(self.phases, dtype=np.float64)
        if frequencies.shape != (self.output_dim, self.input_dim):
            raise DataError(f"frequencies must have shape ({self.output_dim}, {self.input_dim}), got {frequencies.shape}")
        if phases.shape != (self.output_dim,):
            raise DataError(f"phases must have shape ({self.output_dim},), got {phases.shape}")
        if np.any(phases < 0) or np.any(phases >= 2 * np.pi):
            raise DataError("phases must lie in [0, 2*pi)")
        frequencies.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "frequencies", frequencies)
        object.__setattr__(self, "phases", phases)

    @property
    def is_identity(self) -> bool:
        return self.kind is FeatureKind.IDENTITY

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "L": self.input_dim,
            "F": self.output_dim,
            "gamma": self.gamma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureMap":
        from .services import make_identity, make_random_fourier

        kind = FeatureKind(data["kind"])
        if kind is FeatureKind.IDENTITY:
            return make_identity(int(data["L"]))
        if data.get("seed") is None:
            raise DataError("random Fourier map document has no seed; frequencies cannot be regenerated")
        return make_random_fourier(int(data["L"]), int(data["F"]), float(data["gamma"]), int(data["seed"]))


@dataclass(frozen=True)
class MapBounds:
    """kappa bounds ||phi(x)||, phi_max bounds every |phi_i(x)|"""

    kappa: float
    phi_max: float

    def __post_init__(self):
        if self.kappa <= 0 or self.phi_max <= 0:
            raise DataError(f"map bounds must be positive, got kappa={self.kappa} phi_max={self.phi_max}")

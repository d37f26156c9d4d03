from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from src.errors import DataError
from src.features.models import FeatureMap


@dataclass(frozen=True)
class SvmConfig:
    """Hyperparameters of the bias-free hinge-loss SVM"""

    C: float = 1.0
    tol: float = 1e-6  # max per-coordinate KKT violation at convergence
    max_iter: int = 10_000  # sweeps over all coordinates
    shuffle: bool = False  # random coordinate order per sweep
    seed: int = 0

    def __post_init__(self):
        if self.C < 0:
            raise DataError(f"C must be non-negative, got {self.C}")
        if self.tol <= 0:
            raise DataError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be positive, got {self.max_iter}")

    def to_dict(self) -> Dict[str, Any]:
        return {"C": self.C, "tol": self.tol, "max_iter": self.max_iter, "shuffle": self.shuffle, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SvmConfig":
        return cls(
            C=float(data["C"]),
            tol=float(data["tol"]),
            max_iter=int(data.get("max_iter", 10_000)),
            shuffle=bool(data.get("shuffle", False)),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class SvmModel:
    """Trained weights w* = sum_i alpha_i y_i phi(x_i) and the dual solution behind them.

    This is private: it must never leave the data owner. Only a
    PrivateRelease crosses the privacy boundary.
    """

    weights: np.ndarray
    alphas: np.ndarray
    config: SvmConfig
    feature_map: FeatureMap
    sweeps: int = 0
    kkt_violation: float = 0.0
    dual_objective: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        alphas = np.array(self.alphas, dtype=np.float64)
        if weights.shape != (self.feature_map.output_dim,):
            raise DataError(f"weights must have shape ({self.feature_map.output_dim},), got {weights.shape}")
        weights.setflags(write=False)
        alphas.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "alphas", alphas)

    @property
    def n_samples(self) -> int:
        return self.alphas.shape[0]

    def to_dict(self, include_alphas: bool = False) -> Dict[str, Any]:
        data = {
            "weights": self.weights.tolist(),
            "C": self.config.C,
            "tol": self.config.tol,
            "config": self.config.to_dict(),
            "feature_map": self.feature_map.to_dict(),
            "n_samples": self.n_samples,
            "sweeps": self.sweeps,
            "kkt_violation": self.kkt_violation,
        }
        if include_alphas:
            data["alphas"] = self.alphas.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SvmModel":
        alphas = data.get("alphas")
        if alphas is None:
            # without the audit trail only n is known; the release needs nothing more
            alphas = np.zeros(int(data["n_samples"]))
        return cls(
            weights=np.asarray(data["weights"]),
            alphas=np.asarray(alphas),
            config=SvmConfig.from_dict(data["config"]),
            feature_map=FeatureMap.from_dict(data["feature_map"]),
            sweeps=int(data.get("sweeps", 0)),
            kkt_violation=float(data.get("kkt_violation", 0.0)),
        )

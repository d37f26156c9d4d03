import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class FeatureMapOut(BaseModel):
    kind: str
    L: int
    F: int
    gamma: Optional[float] = None
    seed: Optional[int] = None


class ReleaseOut(BaseModel):
    w_tilde: List[float]
    lambda_: float = Field(alias="lambda")
    beta: float
    feature_map: FeatureMapOut

    model_config = ConfigDict(populate_by_name=True)


class PrototypesIn(BaseModel):
    z_plus: List[float]
    z_minus: List[float]


class ExplanationCreate(BaseModel):
    instance: List[float] = Field(min_length=1)
    p: float = Field(0.9, ge=0.5, lt=1.0)
    method: Literal["robust", "nonrobust"] = "robust"
    prototypes: Optional[PrototypesIn] = None
    epsilon: float = Field(1e-3, gt=0.0)


class ExplanationOut(BaseModel):
    x: List[float]
    x_prime: List[float]
    y_prime: int
    p: float
    method: str
    distance: float
    g_value: float
    iterations: int
    origin_only: bool = False
    segment_fraction: Optional[float] = None
    feature_deltas: List[Optional[float]]


class ValidationCreate(BaseModel):
    point: List[float] = Field(min_length=1)
    label: Literal[-1, 1]
    trials: int = Field(10_000, ge=1, le=1_000_000)
    seed: int = Field(0, ge=0)


class ValidationOut(BaseModel):
    probability: float
    trials: int
    label: int

    @classmethod
    def build(cls, probability: float, request: ValidationCreate) -> "ValidationOut":
        return cls(probability=probability, trials=request.trials, label=request.label)


def explanation_payload(explanation: Any, deltas: Any) -> Dict[str, Any]:
    payload = explanation.to_dict()
    payload["segment_fraction"] = explanation.segment_fraction
    payload["feature_deltas"] = [None if math.isnan(d) else float(d) for d in deltas]
    return payload

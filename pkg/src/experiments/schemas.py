import json
import sys
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator

from src.errors import UsageError
from src.features.models import FeatureKind

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_BETA_GRID = [0.01, 0.0316227766, 0.1, 0.316227766, 1.0, 3.16227766, 10.0, 31.6227766, 100.0]
DEFAULT_P_GRID = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]


class SplitSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train_fraction: float = Field(0.7, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)


class SvmSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    C: float = Field(1.0, ge=0.0)
    tol: float = Field(1e-6, gt=0.0)
    max_iter: int = Field(10_000, ge=1)


class FeatureMapSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: FeatureKind = FeatureKind.RANDOM_FOURIER
    dim: int = Field(100, ge=1)  # F; ignored by the identity map
    gamma: Optional[float] = Field(None, gt=0.0)  # None means 1/L
    seed: int = Field(0, ge=0)


class BisectionSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(1e-3, gt=0.0)
    max_iter: int = Field(200, ge=1)


class ExperimentConfig(BaseModel):
    """Everything a sweep depends on; two runs with equal configs emit identical bytes"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    dataset_path: Optional[Path] = None  # None: the WDBC copy bundled with scikit-learn
    split: SplitSettings = SplitSettings()
    svm: SvmSettings = SvmSettings()
    feature_map: FeatureMapSettings = Field(default_factory=FeatureMapSettings, alias="map")
    bisection: BisectionSettings = BisectionSettings()
    beta_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_BETA_GRID))
    p_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_P_GRID))
    noise_realizations: int = Field(200, ge=1)
    p_default: float = 0.9
    # fixed beta of the distance-vs-p sweep
    beta_default: float = Field(5.0, gt=0.0)
    master_seed: int = Field(0, ge=0)
    sample_size: Optional[int] = Field(None, ge=1)  # test instances explained per cell; None means all
    prototype_retries: int = Field(1000, ge=1)
    validation_trials: int = Field(100_000, ge=1)

    @field_validator("beta_grid")
    @classmethod
    def check_beta_grid(cls, value: List[float]) -> List[float]:
        _check_grid("beta_grid", value)
        if value[0] <= 0.0:
            raise ValueError("beta values must be positive")
        return value

    @field_validator("p_grid")
    @classmethod
    def check_p_grid(cls, value: List[float]) -> List[float]:
        _check_grid("p_grid", value)
        if value[0] < 0.5 or value[-1] >= 1.0:
            raise ValueError("p values must lie in [1/2, 1)")
        return value

    @field_validator("p_default")
    @classmethod
    def check_p_default(cls, value: float) -> float:
        if not 0.5 <= value < 1.0:
            raise ValueError("p_default must lie in [1/2, 1)")
        return value

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Apply CLI flag overrides; None means the flag was not given"""
        data = self.model_dump(by_alias=False)
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise UsageError(f"invalid flag value: {_first_error(e)}") from e


def _check_grid(name: str, value: List[float]) -> None:
    if not value:
        raise ValueError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(value, value[1:])):
        raise ValueError(f"{name} must be sorted ascending without repeats")


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Read an ExperimentConfig from a .json or .toml file; no path gives the defaults"""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"{path}: cannot read config: {e}") from e

    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text)
        elif path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            raise UsageError(f"{path}: config must be a .json or .toml file")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise UsageError(f"{path}: cannot parse config: {e}") from e

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise UsageError(f"{path}: invalid config: {_first_error(e)}") from e


class SweepRecordOut(BaseModel):
    """One row of an emitted sweep table"""

    model_config = ConfigDict(extra="forbid")

    beta: float
    p: float
    realization: int = Field(ge=-1)  # -1 marks an aggregate row
    metric_name: str
    value: float


sweep_table_adapter = TypeAdapter(List[SweepRecordOut])

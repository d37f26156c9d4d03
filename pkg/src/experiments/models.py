from dataclasses import asdict, dataclass
from typing import Iterable

import pandas as pd

from src.data.models import Dataset, NormalizationParams
from src.svm.models import SvmModel

RECORD_COLUMNS = ("beta", "p", "realization", "metric_name", "value")
AGGREGATE = -1  # realization index of rows summarizing all realizations


@dataclass(frozen=True)
class SweepRecord:
    beta: float
    p: float
    realization: int
    metric_name: str
    value: float


def records_to_frame(records: Iterable[SweepRecord]) -> pd.DataFrame:
    """Tidy table with one metric value per row and a stable column order"""
    frame = pd.DataFrame([asdict(r) for r in records], columns=list(RECORD_COLUMNS))
    return frame.astype({"beta": "float64", "p": "float64", "realization": "int64", "value": "float64"})


@dataclass(frozen=True)
class PreparedExperiment:
    """Normalized split, trained private model and the domain radius used for identity-map kappa"""

    train: Dataset
    test: Dataset
    normalizer: NormalizationParams
    model: SvmModel
    domain_radius: float

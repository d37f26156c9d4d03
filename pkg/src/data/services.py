from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from src.errors import DataError, DataFormatError, DimensionError

from .models import Dataset, NormalizationParams, SplitSpec

logger = structlog.get_logger(__name__)

_WDBC_BASES = (
    "radius",
    "texture",
    "perimeter",
    "area",
    "smoothness",
    "compactness",
    "concavity",
    "concave_points",
    "symmetry",
    "fractal_dimension",
)

# UCI column order: ten means, ten standard errors, ten worst values
WDBC_FEATURE_NAMES = tuple(f"{base}_{kind}" for kind in ("mean", "se", "worst") for base in _WDBC_BASES)

WDBC_LABELS = {"M": 1, "B": -1}


def load_wdbc(path: Union[str, Path]) -> Dataset:
    """Parse a UCI ``wdbc.data`` file: ``id,diagnosis,30 reals`` per row, no header.

    Malignant (M) maps to +1 and benign (B) to -1. The id column is validated
    and discarded. Parsing is strict: any malformed row is an error naming it.
    """
    path = Path(path)
    n_columns = 2 + len(WDBC_FEATURE_NAMES)
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            na_values=[],
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except FileNotFoundError as e:
        raise DataFormatError("file not found", path=str(path)) from e
    except pd.errors.EmptyDataError as e:
        raise DataFormatError("file is empty", path=str(path)) from e
    except pd.errors.ParserError as e:
        raise DataFormatError(f"malformed row: {e}", path=str(path)) from e
    except OSError as e:
        raise DataFormatError(f"cannot read file: {e}", path=str(path)) from e

    if frame.shape[1] != n_columns:
        raise DataFormatError(f"expected {n_columns} fields, found {frame.shape[1]}", path=str(path), row=1)

    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        row = int(np.argmax(missing)) + 1
        raise DataFormatError(f"expected {n_columns} fields", path=str(path), row=row)

    ids = pd.to_numeric(frame[0], errors="coerce")
    if ids.isna().any():
        row = int(np.argmax(ids.isna().to_numpy())) + 1
        raise DataFormatError(f"invalid id {frame.iat[row - 1, 0]!r}", path=str(path), row=row)

    diagnosis = frame[1].str.strip()
    unknown = ~diagnosis.isin(list(WDBC_LABELS))
    if unknown.any():
        row = int(np.argmax(unknown.to_numpy())) + 1
        raise DataFormatError(f"unknown diagnosis {diagnosis.iat[row - 1]!r}", path=str(path), row=row)
    labels = diagnosis.map(WDBC_LABELS).to_numpy(dtype=np.int64)

    values = frame.iloc[:, 2:].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        row, column = (int(i) for i in np.argwhere(bad)[0])
        raise DataFormatError(
            f"feature {WDBC_FEATURE_NAMES[column]} is not a finite number: {frame.iat[row, column + 2]!r}",
            path=str(path),
            row=row + 1,
        )

    dataset = Dataset(values, labels, WDBC_FEATURE_NAMES)
    logger.info("WDBC loaded", path=str(path), n=dataset.n_samples, classes=dataset.class_counts())
    return dataset


def load_bundled_wdbc() -> Dataset:
    """The WDBC copy shipped with scikit-learn, in the load_wdbc label convention"""
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    # scikit-learn encodes malignant as 0 and benign as 1
    labels = np.where(bunch.target == 0, 1, -1)
    dataset = Dataset(np.asarray(bunch.data, dtype=np.float64), labels, WDBC_FEATURE_NAMES)
    logger.info("Bundled WDBC loaded", n=dataset.n_samples, classes=dataset.class_counts())
    return dataset


def make_gaussian_blobs(n_per_class: int, seed: int = 0, variance: float = 0.1) -> Dataset:
    """Two bivariate Gaussian classes: mean [0, 0] labeled -1, mean [1, 1] labeled +1"""
    if n_per_class < 1:
        raise DataError(f"n_per_class must be positive, got {n_per_class}")
    if variance <= 0:
        raise DataError(f"variance must be positive, got {variance}")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(variance)
    negatives = rng.normal(0.0, scale, size=(n_per_class, 2))
    positives = rng.normal(1.0, scale, size=(n_per_class, 2))
    features = np.vstack([negatives, positives])
    labels = np.concatenate([-np.ones(n_per_class, dtype=np.int64), np.ones(n_per_class, dtype=np.int64)])
    return Dataset(features, labels, ("x1", "x2"))


def fit_normalizer(train: Dataset) -> NormalizationParams:
    """Per-column mean and population (ddof=0) standard deviation"""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    constant = np.flatnonzero(std == 0.0)
    if constant.size:
        column = int(constant[0])
        name = f" ({train.feature_names[column]})" if train.feature_names else ""
        raise DataError(f"column {column}{name} is constant; cannot normalize")
    return NormalizationParams(mean=mean, std=std)


def apply_normalizer(data: Dataset, params: NormalizationParams) -> Dataset:
    if data.n_features != len(params):
        raise DimensionError("normalization parameters", data.n_features, len(params))
    return data.with_features((data.features - params.mean) / params.std)


def invert_points(points: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Map normalized rows (or a single point) back to raw units"""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[-1] != len(params):
        raise DimensionError("point", len(params), points.shape[-1])
    return points * params.std + params.mean


def invert_normalizer(data: Dataset, params: NormalizationParams) -> Dataset:
    return data.with_features(invert_points(data.features, params))


def split_indices(n: int, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffled, unstratified train/test index sets; train size is round(fraction * n)"""
    n_train = int(np.floor(spec.train_fraction * n + 0.5))
    if n_train < 1 or n_train >= n:
        raise DataError(
            f"split of {n} rows with train_fraction={spec.train_fraction} leaves an empty "
            f"{'training' if n_train < 1 else 'test'} set"
        )
    permutation = np.random.default_rng(spec.seed).permutation(n)
    return permutation[:n_train], permutation[n_train:]


def split(data: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(data.n_samples, spec)
    logger.debug("Dataset split", train=train_idx.size, test=test_idx.size, seed=spec.seed)
    return data.subset(train_idx), data.subset(test_idx)


def to_csv(data: Dataset, path: Union[str, Path], header: bool = True, names: Optional[Tuple[str, ...]] = None) -> Path:
    """Write features plus a ``label`` column"""
    path = Path(path)
    columns = list(names or data.feature_names or [f"x{i}" for i in range(data.n_features)])
    frame = pd.DataFrame(data.features, columns=columns)
    frame["label"] = data.labels
    try:
        frame.to_csv(path, index=False, header=header, float_format="%.17g")
    except OSError as e:
        raise DataError(f"{path}: cannot write dataset: {e}") from e
    return path

import math
from typing import Optional, Tuple, Union

import numpy as np
import structlog

from src.data.models import Dataset
from src.errors import DataError
from src.features.models import FeatureMap
from src.features.services import bounds
from src.svm.models import SvmConfig, SvmModel
from src.svm.services import train_dual
from src.utils.rng import indexed_uniforms

from .models import DpCheckReport, NoiseSpec, PrivateRelease

logger = structlog.get_logger(__name__)


def laplace_from_uniform(u: Union[float, np.ndarray], scale: float) -> Union[float, np.ndarray]:
    """Inverse CDF of Lap(0, scale): -scale * sign(u - 1/2) * ln(1 - 2|u - 1/2|)"""
    centered = np.asarray(u, dtype=np.float64) - 0.5
    values = -scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))
    return float(values) if values.ndim == 0 else values


def laplace_sample(scale: float, count: int, seed: int, start: int = 0) -> np.ndarray:
    """i.i.d. Lap(0, scale) draws ``start .. start + count - 1`` of the stream ``seed``.

    Draws are indexed, so generating a range in pieces gives the same values
    as generating it at once.
    """
    if scale < 0:
        raise DataError(f"Laplace scale must be non-negative, got {scale}")
    if count < 0:
        raise DataError(f"count must be non-negative, got {count}")
    if scale == 0:
        return np.zeros(count)
    return laplace_from_uniform(indexed_uniforms(seed, start, count), scale)


def calibrate_lambda(C: float, kappa: float, n_features: int, beta: float, n_samples: int) -> float:
    """Smallest Laplace scale giving beta-differential privacy: 4 C kappa sqrt(F) / (beta n)"""
    for name, value in (("C", C), ("kappa", kappa), ("F", n_features), ("beta", beta), ("n", n_samples)):
        if value <= 0:
            raise DataError(f"{name} must be positive, got {value}")
    return 4.0 * C * kappa * math.sqrt(n_features) / (beta * n_samples)


def usefulness_max_lambda(epsilon: float, delta: float, phi_max: float, n_features: int) -> float:
    """Largest scale for which sup_x |f(x, w~) - f(x, w*)| <= epsilon holds with probability >= 1 - delta"""
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise DataError(f"delta must lie in (0, 1), got {delta}")
    if phi_max <= 0 or n_features < 1:
        raise DataError(f"phi_max and F must be positive, got phi_max={phi_max} F={n_features}")
    return epsilon / (2.0 * phi_max * (n_features - math.log(delta)))


def privatize(model: SvmModel, beta: float, seed: int, domain_radius: Optional[float] = None) -> PrivateRelease:
    """Release w~ = w* + mu with mu_i ~ Lap(0, lambda) and lambda calibrated for beta.

    ``domain_radius`` bounds ||x|| over the data domain and is required for
    the identity map only.
    """
    if beta <= 0:
        raise DataError(f"beta must be positive, got {beta}")
    feature_map = model.feature_map
    kappa = bounds(feature_map, domain_radius).kappa
    scale = calibrate_lambda(model.config.C, kappa, feature_map.output_dim, beta, model.n_samples)
    noise = laplace_sample(scale, feature_map.output_dim, seed)
    logger.debug("Weights privatized", beta=beta, scale=scale, F=feature_map.output_dim)
    return PrivateRelease(
        weights=model.weights + noise,
        noise=NoiseSpec(scale=scale, beta=beta, seed=seed),
        feature_map=feature_map,
    )


def flip_label(data: Dataset, index: int) -> Dataset:
    """Neighboring dataset: the same tuples with one label flipped"""
    labels = data.labels.copy()
    labels[index] = -labels[index]
    return Dataset(data.features, labels, data.feature_names)


def _differing_rows(first: Dataset, second: Dataset) -> np.ndarray:
    if first.features.shape != second.features.shape:
        raise DataError(
            f"neighboring datasets must have equal shape, got {first.features.shape} and {second.features.shape}"
        )
    differs = np.any(first.features != second.features, axis=1) | (first.labels != second.labels)
    return np.flatnonzero(differs)


def dp_inequality_check(
    beta: float,
    scale: float,
    dataset_pair: Tuple[Dataset, Dataset],
    config: SvmConfig,
    feature_map: FeatureMap,
    trials: int = 1000,
    seed: int = 0,
    tolerance: float = 1e-9,
) -> DpCheckReport:
    """Spot-check Pr[M(D1) in S] <= exp(beta) Pr[M(D2) in S] on a neighboring pair.

    Both releases have product Laplace densities centered at the respective
    w*, so the log density ratio at a sample v is
    (||v - w2||_1 - ||v - w1||_1) / lambda. Samples are drawn around both
    centers. This is a diagnostic, not a proof.
    """
    if scale <= 0:
        raise DataError(f"Laplace scale must be positive, got {scale}")
    if trials < 1:
        raise DataError(f"trials must be positive, got {trials}")
    first, second = dataset_pair
    differing = _differing_rows(first, second)
    if differing.size > 1:
        raise DataError(f"datasets differ in {differing.size} tuples; neighbors differ in at most one")

    w1 = train_dual(first, feature_map, config).weights
    w2 = train_dual(second, feature_map, config).weights

    n_features = feature_map.output_dim
    noise = laplace_sample(scale, trials * n_features, seed).reshape(trials, n_features)
    centers = np.where((np.arange(trials) % 2 == 0)[:, None], w1, w2)
    samples = centers + noise

    log_ratio = (np.abs(samples - w2).sum(axis=1) - np.abs(samples - w1).sum(axis=1)) / scale
    worst = np.abs(log_ratio)
    log_bound = beta + math.log1p(tolerance)
    violations = [(int(i), float(log_ratio[i])) for i in np.flatnonzero(worst > log_bound)]

    report = DpCheckReport(
        beta=beta,
        scale=scale,
        samples=trials,
        max_log_ratio=float(worst.max()),
        weight_shift_l1=float(np.abs(w1 - w2).sum()),
        tolerance=tolerance,
        violations=violations,
    )
    if violations:
        logger.warning("Density ratio exceeds exp(beta)", beta=beta, scale=scale, violations=len(violations))
    else:
        logger.info("Density ratio within exp(beta)", beta=beta, scale=scale, max_log_ratio=report.max_log_ratio)
    return report

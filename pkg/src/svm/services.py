from typing import Callable, Optional, Union

import numpy as np
import structlog

from src.config import settings
from src.data.models import Dataset
from src.errors import ConvergenceError, DimensionError
from src.features.models import FeatureMap
from src.features.services import apply

from .models import SvmConfig, SvmModel

logger = structlog.get_logger(__name__)

SweepCallback = Callable[[int, np.ndarray], None]


def _signed_features(data: Dataset, feature_map: FeatureMap) -> np.ndarray:
    # rows y_i phi(x_i)
    return apply(feature_map, data.features) * data.labels[:, None]


def dual_objective(alphas: np.ndarray, data: Dataset, feature_map: FeatureMap) -> float:
    """sum_i alpha_i - 1/2 || sum_i alpha_i y_i phi(x_i) ||^2"""
    alphas = np.asarray(alphas, dtype=np.float64)
    weights = _signed_features(data, feature_map).T @ alphas
    return float(alphas.sum() - 0.5 * weights @ weights)


def train_dual(
    data: Dataset,
    feature_map: FeatureMap,
    config: Optional[SvmConfig] = None,
    callback: Optional[SweepCallback] = None,
    gram_max_points: Optional[int] = None,
) -> SvmModel:
    """Solve the box-constrained SVM dual by exact coordinate ascent.

    The model has no intercept, so the dual has no equality constraint and
    every coordinate can be maximized on its own and clipped to [0, C/n].
    Each coordinate step is an exact maximization, so the dual objective never
    decreases between sweeps. Training stops once the largest projected
    gradient seen during a sweep is at most ``tol``.
    """
    config = config or SvmConfig()
    if gram_max_points is None:
        gram_max_points = settings.gram_max_points
    if data.n_features != feature_map.input_dim:
        raise DimensionError("training data", feature_map.input_dim, data.n_features)

    n = data.n_samples
    upper = config.C / n
    signed = _signed_features(data, feature_map)
    alphas = np.zeros(n)

    if upper == 0.0:
        # the box collapses to {0}
        return SvmModel(
            weights=np.zeros(feature_map.output_dim),
            alphas=alphas,
            config=config,
            feature_map=feature_map,
            dual_objective=0.0,
        )

    sq_norms = np.einsum("ij,ij->i", signed, signed)
    gram = signed @ signed.T if n <= gram_max_points else None
    weights = np.zeros(feature_map.output_dim)
    rng = np.random.default_rng(config.seed) if config.shuffle else None
    order = np.arange(n)

    violation = np.inf
    for sweep in range(1, config.max_iter + 1):
        if rng is not None:
            order = rng.permutation(n)
        violation = 0.0
        for i in order:
            if gram is not None:
                gradient = 1.0 - gram[i] @ alphas
            else:
                gradient = 1.0 - signed[i] @ weights
            alpha = alphas[i]
            if alpha <= 0.0:
                projected = max(gradient, 0.0)
            elif alpha >= upper:
                projected = min(gradient, 0.0)
            else:
                projected = gradient
            violation = max(violation, abs(projected))
            if projected == 0.0:
                continue

            if sq_norms[i] > 0.0:
                updated = min(max(alpha + gradient / sq_norms[i], 0.0), upper)
            else:
                # phi(x_i) = 0: the objective is linear in alpha_i with slope 1
                updated = upper
            if updated != alpha:
                alphas[i] = updated
                weights += (updated - alpha) * signed[i]

        if callback is not None:
            callback(sweep, alphas.copy())
        logger.debug("Dual sweep", sweep=sweep, kkt_violation=violation)
        if violation <= config.tol:
            break
    else:
        raise ConvergenceError("dual coordinate ascent did not converge", config.max_iter, violation)

    # recover w* from the final alphas rather than the running sum
    weights = signed.T @ alphas
    objective = float(alphas.sum() - 0.5 * weights @ weights)
    logger.info(
        "SVM trained",
        n=n,
        F=feature_map.output_dim,
        C=config.C,
        sweeps=sweep,
        kkt_violation=violation,
        at_bound=float(np.mean(alphas >= upper)),
    )
    return SvmModel(
        weights=weights,
        alphas=alphas,
        config=config,
        feature_map=feature_map,
        sweeps=sweep,
        kkt_violation=float(violation),
        dual_objective=objective,
    )


def decision_value(weights: np.ndarray, feature_map: FeatureMap, x: np.ndarray) -> Union[float, np.ndarray]:
    """f(x) = phi(x)^T w for one point or a batch of rows"""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (feature_map.output_dim,):
        raise DimensionError("weights", feature_map.output_dim, weights.shape[0] if weights.ndim == 1 else weights.size)
    values = apply(feature_map, x) @ weights
    return float(values) if np.ndim(values) == 0 else values


def classify(weights: np.ndarray, feature_map: FeatureMap, x: np.ndarray) -> Union[int, np.ndarray]:
    """sign of the decision value, with sign(0) = +1"""
    values = decision_value(weights, feature_map, x)
    labels = np.where(np.asarray(values) >= 0.0, 1, -1)
    return int(labels) if labels.ndim == 0 else labels


def accuracy(weights: np.ndarray, feature_map: FeatureMap, data: Dataset) -> float:
    predictions = classify(weights, feature_map, data.features)
    return float(np.mean(predictions == data.labels))

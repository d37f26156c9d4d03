"""Counterfactual explanations for a released (noisy) SVM.

Robustness against the privacy noise is expressed through the deterministic
constraint

    g(x) = y' phi(x)^T w~ + r ||phi(x)|| <= 0,  r = -lambda sqrt(2) ln(2 (1 - p)),

which certifies Pr[y' f(x, xi) <= 0] >= p under the Laplace uncertainty
model of the weights. For p = 1/2 (or lambda = 0) it is the plain
counterfactual constraint y' f(x, w~) <= 0.
"""
import math
from typing import List, Optional, Union

import numpy as np
import structlog

from src.config import settings
from src.data.models import Dataset, NormalizationParams
from src.data.services import invert_points
from src.errors import ConvergenceError, DataError, DimensionError, PreconditionError, PrototypeError
from src.features.services import apply
from src.privacy.models import PrivateRelease
from src.svm.models import SvmModel
from src.svm.services import classify, decision_value
from src.utils.rng import split_range

from .models import (
    BisectionConfig,
    BisectionStep,
    Explanation,
    ExplanationRequest,
    Method,
    PrototypeSet,
    UncertaintyModel,
)

logger = structlog.get_logger(__name__)

SQRT2 = math.sqrt(2.0)


def robust_coefficient(p: float, scale: float) -> float:
    """r = -lambda sqrt(2) ln(2 (1 - p)); zero exactly when p = 1/2 or lambda = 0"""
    if not 0.5 <= p < 1.0:
        raise DataError(f"confidence p must lie in [1/2, 1), got {p}")
    if scale < 0:
        raise DataError(f"noise scale must be non-negative, got {scale}")
    return -scale * SQRT2 * math.log(2.0 * (1.0 - p)) + 0.0


def g(x: np.ndarray, release: PrivateRelease, label: int, p: float) -> Union[float, np.ndarray]:
    """Left-hand side of the robust constraint for one point or a batch of rows"""
    phi = apply(release.feature_map, x)
    r = robust_coefficient(p, release.scale)
    values = label * (phi @ release.weights) + r * np.linalg.norm(phi, axis=-1)
    return float(values) if np.ndim(values) == 0 else values


def make_request(instance: np.ndarray, release: PrivateRelease, p: float = 0.9) -> ExplanationRequest:
    """Request an explanation of the released classifier's own prediction"""
    label = classify(release.weights, release.feature_map, instance)
    return ExplanationRequest(instance=instance, label=label, confidence=p)


def _check_request(request: ExplanationRequest, release: PrivateRelease) -> None:
    if request.instance.shape[0] != release.feature_map.input_dim:
        raise DimensionError("instance", release.feature_map.input_dim, request.instance.shape[0])
    predicted = classify(release.weights, release.feature_map, request.instance)
    if predicted != request.label:
        raise DataError(
            f"request label {request.label:+d} differs from the released classifier's prediction {predicted:+d}"
        )


def _require_linear(release: PrivateRelease) -> None:
    if not release.feature_map.is_identity:
        raise PreconditionError(
            f"closed-form explanations need the identity feature map, got {release.feature_map.kind.value}"
        )
    if not np.any(release.weights):
        raise PreconditionError("released weight vector is zero; the decision boundary is undefined")


def _hyperplane_projection(instance: np.ndarray, label: int, weights: np.ndarray):
    margin = float(instance @ weights)
    norm_sq = float(weights @ weights)
    if label * margin > 0:
        return instance - (margin / norm_sq) * weights, abs(margin) / math.sqrt(norm_sq)
    return instance.copy(), 0.0


def explain_nonrobust_linear(request: ExplanationRequest, release: PrivateRelease) -> Explanation:
    """Orthogonal projection of x' onto the released hyperplane x^T w~ = 0"""
    _require_linear(release)
    _check_request(request, release)
    point, distance = _hyperplane_projection(request.instance, request.label, release.weights)
    return Explanation(
        point=point,
        instance=request.instance,
        label=request.label,
        confidence=0.5,
        method=Method.NONROBUST_CLOSED_FORM,
        distance=distance,
        g_value=float(request.label * point @ release.weights),
    )


def explain_optimal_linear(request: ExplanationRequest, model: SvmModel) -> Explanation:
    """Projection onto the true hyperplane of w*; only the data owner can compute it"""
    if not model.feature_map.is_identity:
        raise PreconditionError("closed-form explanations need the identity feature map")
    if not np.any(model.weights):
        raise PreconditionError("model weight vector is zero; the decision boundary is undefined")
    point, distance = _hyperplane_projection(request.instance, request.label, model.weights)
    return Explanation(
        point=point,
        instance=request.instance,
        label=request.label,
        confidence=0.5,
        method=Method.NONROBUST_CLOSED_FORM,
        distance=distance,
        g_value=float(request.label * point @ model.weights),
    )


def explain_robust_linear(request: ExplanationRequest, release: PrivateRelease) -> Explanation:
    """Exact Euclidean projection of x' onto the robust feasible set of a linear SVM.

    With c = -y' w~ / ||w~|| and a = r / ||w~||, the constraint
    y' x^T w~ + r ||x|| <= 0 reads <x, c> >= a ||x||: a circular cone with
    axis c and half-angle arccos(a). Writing x' = s c + v with v orthogonal
    to c, the projection is x' itself inside the cone, 0 inside the polar
    cone, and otherwise the point on the boundary ray in the plane of c and v.
    """
    _require_linear(release)
    _check_request(request, release)
    instance = request.instance
    weights = release.weights
    r = robust_coefficient(request.confidence, release.scale)

    weight_norm = float(np.linalg.norm(weights))
    axis = -request.label * weights / weight_norm
    cos_angle = r / weight_norm
    along = float(instance @ axis)
    across = instance - along * axis
    across_norm = float(np.linalg.norm(across))

    origin_only = False
    if cos_angle > 1.0:
        # the cone degenerates to {0}
        point = np.zeros_like(instance)
        origin_only = True
    elif along >= cos_angle * float(np.linalg.norm(instance)):
        point = instance.copy()
    else:
        sin_angle = math.sqrt(max(0.0, 1.0 - cos_angle * cos_angle))
        length = cos_angle * along + sin_angle * across_norm
        if length <= 0.0:
            point = np.zeros_like(instance)
        else:
            point = length * (cos_angle * axis + sin_angle * across / across_norm)

    return Explanation(
        point=point,
        instance=instance,
        label=request.label,
        confidence=request.confidence,
        method=Method.ROBUST_CONE_PROJECTION,
        distance=float(np.linalg.norm(point - instance)),
        g_value=g(point, release, request.label, request.confidence),
        origin_only=origin_only,
    )


def _prototype_margins(points: np.ndarray, label: int, release: PrivateRelease, r: float) -> np.ndarray:
    # label * f(z) - r ||phi(z)||; positive means confidently classified as label
    phi = apply(release.feature_map, points)
    return label * (phi @ release.weights) - r * np.linalg.norm(phi, axis=-1)


def check_prototypes(prototypes: PrototypeSet, release: PrivateRelease, p: float) -> None:
    """Raise PrototypeError unless both prototypes are confidently classified"""
    if prototypes.z_plus.shape[0] != release.feature_map.input_dim:
        raise DimensionError("prototype", release.feature_map.input_dim, prototypes.z_plus.shape[0])
    r = robust_coefficient(p, release.scale)
    for label in (1, -1):
        margin = float(_prototype_margins(prototypes.for_class(label), label, release, r))
        if not margin > 0.0:
            raise PrototypeError(label, margin)


def make_prototypes(
    train: Dataset,
    release: PrivateRelease,
    p: float,
    max_retries: int = 1000,
    seed: int = 0,
    perturbation_scale: float = 0.5,
) -> PrototypeSet:
    """Class means, checked against the confidence condition.

    A class mean that is not confidently classified is replaced by the first
    qualifying training point of that class in order of decreasing y f(x),
    then by random perturbations of the class mean.
    """
    r = robust_coefficient(p, release.scale)
    chosen = {}
    for label in (1, -1):
        members = train.features[train.labels == label]
        if members.shape[0] == 0:
            raise DataError(f"training set has no points of class {label:+d}")

        mean = members.mean(axis=0)
        best = float(_prototype_margins(mean, label, release, r))
        if best > 0.0:
            chosen[label] = mean
            continue

        margins = _prototype_margins(members, label, release, r)
        scores = label * decision_value(release.weights, release.feature_map, members)
        qualifying = [i for i in np.argsort(-scores, kind="stable") if margins[i] > 0.0]
        best = max(best, float(margins.max()))
        if qualifying:
            chosen[label] = members[qualifying[0]].copy()
            logger.info("Prototype taken from training set", label=label, margin=float(margins[qualifying[0]]))
            continue

        rng = np.random.default_rng([seed, 0 if label == 1 else 1])
        spread = members.std(axis=0)
        spread = np.where(spread > 0.0, spread, 1.0)
        candidates = mean + perturbation_scale * spread * rng.standard_normal((max_retries, mean.shape[0]))
        margins = _prototype_margins(candidates, label, release, r)
        best = max(best, float(margins.max()))
        passing = np.flatnonzero(margins > 0.0)
        if passing.size == 0:
            raise PrototypeError(label, best)
        chosen[label] = candidates[passing[0]]
        logger.info("Prototype taken from perturbed class mean", label=label, attempts=int(passing[0]) + 1)

    return PrototypeSet(z_plus=chosen[1], z_minus=chosen[-1])


def _bisect(
    request: ExplanationRequest,
    release: PrivateRelease,
    prototypes: PrototypeSet,
    config: BisectionConfig,
    p: float,
    method: Method,
) -> Explanation:
    label = request.label
    instance = request.instance
    target = prototypes.for_class(-label)
    if target.shape != instance.shape:
        raise DimensionError("prototype", instance.shape[0], target.shape[0])

    g_instance = g(instance, release, label, p)
    if not g_instance > 0.0:
        raise PreconditionError(f"g(x') = {g_instance:.6g} must be positive; nothing to explain at p={p}")
    g_target = g(target, release, label, p)
    if not g_target < 0.0:
        raise PreconditionError(f"g(z) = {g_target:.6g} for the class {-label:+d} prototype must be negative")

    # x_lb = x' + t_lb (z - x'), x_ub = x' + t_ub (z - x'); the t are dyadic, so
    # every iterate lies exactly on the segment and widths halve exactly
    direction = target - instance
    initial_width = float(np.linalg.norm(direction))
    t_lb, t_ub = 0.0, 1.0
    width = initial_width
    trace: List[BisectionStep] = []
    midpoint: Optional[np.ndarray] = None
    t_mid = 1.0
    g_upper = g_target
    while width > config.epsilon:
        if len(trace) >= config.max_iter:
            raise ConvergenceError("bisection did not reach epsilon", len(trace), width)
        t_mid = 0.5 * (t_lb + t_ub)
        midpoint = instance + t_mid * direction
        g_mid = g(midpoint, release, label, p)
        if g_mid < 0.0:
            t_ub = t_mid
            g_upper = g_mid
        else:
            t_lb = t_mid
        width = (t_ub - t_lb) * initial_width
        trace.append(BisectionStep(iteration=len(trace) + 1, width=width, g_midpoint=g_mid, g_upper=g_upper))

    if config.return_midpoint and midpoint is not None:
        point, fraction = midpoint, t_mid
    elif t_ub == 1.0:
        point, fraction = target.copy(), 1.0
    else:
        point, fraction = instance + t_ub * direction, t_ub

    logger.debug("Bisection finished", iterations=len(trace), width=width, fraction=fraction)
    return Explanation(
        point=point,
        instance=instance,
        label=label,
        confidence=p,
        method=method,
        distance=float(np.linalg.norm(point - instance)),
        g_value=g(point, release, label, p),
        iterations=len(trace),
        segment_fraction=fraction,
        trace=tuple(trace),
    )


def explain_robust_bisection(
    request: ExplanationRequest,
    release: PrivateRelease,
    prototypes: PrototypeSet,
    config: Optional[BisectionConfig] = None,
) -> Explanation:
    """Bisection on the segment from x' to the opposite-class prototype.

    Returns the final upper bound, which satisfies g < 0, unless
    ``config.return_midpoint`` asks for the last midpoint.
    """
    _check_request(request, release)
    return _bisect(request, release, prototypes, config or BisectionConfig(), request.confidence, Method.ROBUST_BISECTION)


def explain_nonrobust(
    request: ExplanationRequest,
    release: PrivateRelease,
    prototypes: Optional[PrototypeSet] = None,
    config: Optional[BisectionConfig] = None,
) -> Explanation:
    """Closed form for the identity map, bisection with p = 1/2 otherwise"""
    if release.feature_map.is_identity:
        return explain_nonrobust_linear(request, release)
    if prototypes is None:
        raise PreconditionError("non-linear explanations need class prototypes")
    _check_request(request, release)
    return _bisect(request, release, prototypes, config or BisectionConfig(), 0.5, Method.NONROBUST_BISECTION)


def explain_robust(
    request: ExplanationRequest,
    release: PrivateRelease,
    prototypes: Optional[PrototypeSet] = None,
    config: Optional[BisectionConfig] = None,
) -> Explanation:
    """Cone projection for the identity map, bisection otherwise"""
    if release.feature_map.is_identity:
        return explain_robust_linear(request, release)
    if prototypes is None:
        raise PreconditionError("non-linear explanations need class prototypes")
    return explain_robust_bisection(request, release, prototypes, config)


def validate_chance_constraint(
    x: np.ndarray,
    release: PrivateRelease,
    label: int,
    trials: int,
    seed: int,
    chunk_trials: Optional[int] = None,
) -> float:
    """Fraction of weight draws xi = w~ + mu, mu_i ~ Lap(0, lambda), with y' phi(x)^T xi <= 0"""
    if trials < 1:
        raise DataError(f"trials must be positive, got {trials}")
    phi = apply(release.feature_map, x)
    if phi.ndim != 1:
        raise DataError("validate a single point at a time")
    uncertainty = UncertaintyModel.from_release(release)
    if uncertainty.scale == 0.0:
        return 1.0 if label * float(phi @ release.weights) <= 0.0 else 0.0

    satisfied = 0
    for start, size in split_range(trials, chunk_trials or settings.mc_chunk_trials):
        draws = uncertainty.sample(size, seed, start=start)
        satisfied += int(np.count_nonzero(label * (draws @ phi) <= 0.0))
    return satisfied / trials


def feature_deltas(explanation: Explanation, normalizer: Optional[NormalizationParams] = None) -> np.ndarray:
    """Relative change (x_i - x'_i) / x'_i per feature; NaN where x'_i = 0.

    With a ``normalizer`` both points are first mapped back to raw units, so
    the ratios are taken against the measured feature values rather than
    their z-scores.
    """
    point, instance = explanation.point, explanation.instance
    if normalizer is not None:
        point, instance = invert_points(point, normalizer), invert_points(instance, normalizer)
    deltas = np.full(instance.shape, np.nan)
    np.divide(point - instance, instance, out=deltas, where=instance != 0.0)
    return deltas

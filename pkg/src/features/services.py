from typing import Optional

import numpy as np

from src.errors import DataError, DimensionError

from .models import FeatureKind, FeatureMap, MapBounds


def make_identity(input_dim: int) -> FeatureMap:
    """phi(x) = x, the linear SVM"""
    return FeatureMap(kind=FeatureKind.IDENTITY, input_dim=input_dim, output_dim=input_dim)


def make_random_fourier(input_dim: int, output_dim: int, gamma: Optional[float] = None, seed: int = 0) -> FeatureMap:
    """Random Fourier features approximating k(x, y) = exp(-gamma ||x - y||^2).

    phi_i(x) = sqrt(2/F) cos(w_i^T x + b_i) with w_i ~ N(0, 2 gamma I) and
    b_i ~ U[0, 2 pi). For w ~ N(0, s^2 I), E[cos(w^T d)] = exp(-s^2 ||d||^2 / 2),
    so the per-coordinate variance 2 gamma yields the RBF kernel with
    bandwidth gamma. gamma defaults to 1/L.
    """
    if input_dim < 1 or output_dim < 1:
        raise DataError(f"feature map dimensions must be positive, got L={input_dim} F={output_dim}")
    if gamma is None:
        gamma = 1.0 / input_dim
    if gamma <= 0:
        raise DataError(f"gamma must be positive, got {gamma}")

    rng = np.random.default_rng(seed)
    frequencies = rng.normal(0.0, np.sqrt(2.0 * gamma), size=(output_dim, input_dim))
    phases = np.mod(rng.uniform(0.0, 2.0 * np.pi, size=output_dim), 2.0 * np.pi)
    return FeatureMap(
        kind=FeatureKind.RANDOM_FOURIER,
        input_dim=input_dim,
        output_dim=output_dim,
        gamma=float(gamma),
        seed=seed,
        frequencies=frequencies,
        phases=phases,
    )


def apply(feature_map: FeatureMap, x: np.ndarray) -> np.ndarray:
    """phi(x) for a single point (L,) or a batch of rows (n, L)"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != feature_map.input_dim:
        raise DimensionError("feature map input", feature_map.input_dim, x.shape[-1] if x.ndim else 0)

    if feature_map.is_identity:
        return x.copy()
    projection = x @ feature_map.frequencies.T + feature_map.phases
    return np.sqrt(2.0 / feature_map.output_dim) * np.cos(projection)


def bounds(feature_map: FeatureMap, domain_radius: Optional[float] = None) -> MapBounds:
    """kappa and phi_max for the privacy mechanism.

    For the identity map both equal the radius of the data domain, which the
    caller must supply; random Fourier features are bounded by construction.
    """
    if feature_map.is_identity:
        if domain_radius is None or domain_radius <= 0:
            raise DataError(f"identity map bounds need a positive domain radius, got {domain_radius}")
        return MapBounds(kappa=float(domain_radius), phi_max=float(domain_radius))
    return MapBounds(kappa=float(np.sqrt(2.0)), phi_max=float(np.sqrt(2.0 / feature_map.output_dim)))


def max_feature_norm(features: np.ndarray) -> float:
    """Largest row norm; a data-driven stand-in for the domain radius"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise DataError(f"features must be a non-empty matrix, got shape {features.shape}")
    return float(np.max(np.linalg.norm(features, axis=1)))

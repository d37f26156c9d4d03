"""Sweeps behind the accuracy, distance, violation and convergence tables.

Every random quantity is drawn from a seed derived from
(master_seed, stream, grid index, realization), so a table depends only on
its config and cells can be computed in any order. Release noise along a
beta or p grid is one draw per realization, scaled by lambda.
"""
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from src.artifacts import serialize_json
from src.data.models import Dataset, NormalizationParams, SplitSpec
from src.data.services import (
    apply_normalizer,
    fit_normalizer,
    invert_points,
    load_bundled_wdbc,
    load_wdbc,
    make_gaussian_blobs,
    split,
)
from src.errors import DataError, NumericalError, PrototypeError, UsageError
from src.explanations.models import BisectionConfig, BisectionStep, Explanation, PrototypeSet
from src.explanations.services import (
    explain_nonrobust,
    explain_optimal_linear,
    explain_robust,
    explain_robust_bisection,
    feature_deltas,
    g,
    make_prototypes,
    make_request,
    validate_chance_constraint,
)
from src.features.models import FeatureKind, FeatureMap
from src.features.services import bounds, make_identity, make_random_fourier, max_feature_norm
from src.privacy.models import DpCheckReport, PrivateRelease
from src.privacy.services import calibrate_lambda, dp_inequality_check, flip_label, privatize
from src.svm.models import SvmConfig, SvmModel
from src.svm.services import accuracy, classify, decision_value, train_dual
from src.utils.rng import derive_seed

from .models import AGGREGATE, PreparedExperiment, SweepRecord, records_to_frame
from .schemas import ExperimentConfig

logger = structlog.get_logger(__name__)

# seed streams
STREAM_RELEASE_BETA = 0  # shared by the accuracy, distance-vs-beta and violation sweeps
STREAM_RELEASE_P = 1
STREAM_TRACE = 2
STREAM_SAMPLE = 3
STREAM_PROTOTYPES = 4
STREAM_VALIDATION = 5
STREAM_DP_CHECK = 6
STREAM_DEMO = 7
STREAM_BOOTSTRAP = 8

BOOTSTRAP_RESAMPLES = 200

TRACE_COLUMNS = tuple(BisectionStep.__dataclass_fields__)
DEMO_COLUMNS = ("method", "x1", "x2", "distance", "g_value", "true_margin")


@dataclass
class ExplanationBatch:
    """Explanations of a set of test instances under one release, keyed by test index"""

    robust: Dict[int, Explanation] = field(default_factory=dict)
    nonrobust: Dict[int, Explanation] = field(default_factory=dict)
    prototype_distances: Dict[int, float] = field(default_factory=dict)
    excluded_robust: int = 0
    excluded_nonrobust: int = 0


def config_summary(config: ExperimentConfig) -> Dict[str, Any]:
    return {
        "map": config.feature_map.kind.value,
        "F": config.feature_map.dim,
        "gamma": config.feature_map.gamma,
        "C": config.svm.C,
        "split_seed": config.split.seed,
        "master_seed": config.master_seed,
        "realizations": config.noise_realizations,
        "epsilon": config.bisection.epsilon,
    }


def load_experiment_data(config: ExperimentConfig) -> Tuple[Dataset, Dataset, NormalizationParams]:
    """Normalized train and test sets; the normalizer is fitted on the training part only"""
    data = load_wdbc(config.dataset_path) if config.dataset_path is not None else load_bundled_wdbc()
    train, test = split(data, SplitSpec(train_fraction=config.split.train_fraction, seed=config.split.seed))
    params = fit_normalizer(train)
    return apply_normalizer(train, params), apply_normalizer(test, params), params


def build_feature_map(config: ExperimentConfig, input_dim: int) -> FeatureMap:
    settings = config.feature_map
    if settings.kind is FeatureKind.IDENTITY:
        return make_identity(input_dim)
    return make_random_fourier(input_dim, settings.dim, settings.gamma, settings.seed)


def svm_config(config: ExperimentConfig) -> SvmConfig:
    return SvmConfig(C=config.svm.C, tol=config.svm.tol, max_iter=config.svm.max_iter)


def bisection_config(config: ExperimentConfig) -> BisectionConfig:
    return BisectionConfig(epsilon=config.bisection.epsilon, max_iter=config.bisection.max_iter)


def prepare(config: ExperimentConfig) -> PreparedExperiment:
    train, test, params = load_experiment_data(config)
    feature_map = build_feature_map(config, train.n_features)
    model = train_dual(train, feature_map, svm_config(config))
    prepared = PreparedExperiment(
        train=train,
        test=test,
        normalizer=params,
        model=model,
        domain_radius=max_feature_norm(train.features),
    )
    logger.info(
        "Experiment prepared",
        n_train=train.n_samples,
        n_test=test.n_samples,
        baseline_accuracy=accuracy(model.weights, feature_map, test),
        **config_summary(config),
    )
    return prepared


def train_bundle(config: ExperimentConfig) -> Dict[str, Any]:
    """Private model bundle: w*, dual solution, normalizer and domain radius"""
    prepared = prepare(config)
    return {
        "model": prepared.model.to_dict(include_alphas=True),
        "normalizer": prepared.normalizer.to_dict(),
        "domain_radius": prepared.domain_radius,
    }


def privatize_bundle(bundle: Dict[str, Any], beta: float, seed: int) -> PrivateRelease:
    try:
        model = SvmModel.from_dict(bundle["model"])
        radius = float(bundle["domain_radius"])
    except KeyError as e:
        raise DataError(f"model bundle is missing field {e}") from e
    return privatize(model, beta, seed, domain_radius=radius)


def sample_instances(config: ExperimentConfig, test: Dataset) -> np.ndarray:
    """Indices of the test instances explained in every cell"""
    n = test.n_samples
    if config.sample_size is None or config.sample_size >= n:
        return np.arange(n)
    rng = np.random.default_rng(derive_seed(config.master_seed, STREAM_SAMPLE))
    return np.sort(rng.choice(n, size=config.sample_size, replace=False))


def _release(prepared: PreparedExperiment, beta: float, seed: int) -> PrivateRelease:
    return privatize(prepared.model, beta, seed, domain_radius=prepared.domain_radius)


def release_seed(config: ExperimentConfig, realization: int) -> int:
    """Noise seed of one realization of the beta sweeps.

    It does not depend on beta: the inverse-CDF sampler turns one seed into
    lambda times a fixed unit-scale draw, so realization r releases
    w* + lambda(beta) u_r at every beta and the curves are paired comparisons.
    """
    return derive_seed(config.master_seed, STREAM_RELEASE_BETA, realization)


def _prototypes(
    train: Dataset, release: PrivateRelease, p: float, config: ExperimentConfig, seed: int
) -> Optional[PrototypeSet]:
    try:
        return make_prototypes(train, release, p, max_retries=config.prototype_retries, seed=seed)
    except PrototypeError as e:
        logger.warning("Cell has no prototypes", beta=release.beta, p=p, label=e.label, best_margin=e.best_margin)
        return None


def explain_cell(
    prepared: PreparedExperiment,
    release: PrivateRelease,
    instances: np.ndarray,
    p: float,
    config: ExperimentConfig,
    seed: int,
) -> ExplanationBatch:
    """Robust and non-robust explanations of ``instances``; failures are counted, not raised.

    Non-robust explanations always use prototypes checked at p = 1/2, so
    both kinds coincide at p = 1/2.
    """
    robust_prototypes = _prototypes(prepared.train, release, p, config, seed)
    if p == 0.5:
        nonrobust_prototypes = robust_prototypes
    else:
        nonrobust_prototypes = _prototypes(prepared.train, release, 0.5, config, seed)
    bisection = bisection_config(config)

    batch = ExplanationBatch()
    for index in instances:
        index = int(index)
        instance = prepared.test.features[index]
        request = make_request(instance, release, p)
        try:
            batch.robust[index] = explain_robust(request, release, robust_prototypes, bisection)
        except NumericalError as e:
            batch.excluded_robust += 1
            logger.debug("Robust explanation excluded", index=index, error=str(e))
        try:
            batch.nonrobust[index] = explain_nonrobust(request, release, nonrobust_prototypes, bisection)
        except NumericalError as e:
            batch.excluded_nonrobust += 1
            logger.debug("Non-robust explanation excluded", index=index, error=str(e))
        if robust_prototypes is not None:
            target = robust_prototypes.for_class(-request.label)
            batch.prototype_distances[index] = float(np.linalg.norm(target - instance))

    if batch.excluded_robust or batch.excluded_nonrobust:
        logger.warning(
            "Explanations excluded",
            beta=release.beta,
            p=p,
            robust=batch.excluded_robust,
            nonrobust=batch.excluded_nonrobust,
            instances=len(instances),
        )
    return batch


def paired_instances(batches: List[ExplanationBatch]) -> List[int]:
    """Test indices explained, robustly and not, under one and the same label in every batch"""
    common = set.intersection(*(set(batch.robust) & set(batch.nonrobust) for batch in batches))
    return sorted(i for i in common if len({batch.robust[i].label for batch in batches}) == 1)


def _distance_records(cells: List[Tuple[float, float, ExplanationBatch]], realization: int) -> List[SweepRecord]:
    """Distances of one realization across a grid, averaged over the instances paired across the grid.

    An instance whose label changes along the grid asks a different question
    at each end, so it counts as excluded from the curve like an instance
    without an explanation.
    """
    paired = paired_instances([batch for _, _, batch in cells])
    records = []
    for beta, p, batch in cells:
        if paired:
            for metric, explanations in (("distance_robust", batch.robust), ("distance_nonrobust", batch.nonrobust)):
                value = float(np.mean([explanations[i].distance for i in paired]))
                records.append(SweepRecord(beta, p, realization, metric, value))
            if all(i in batch.prototype_distances for i in paired):
                value = float(np.mean([batch.prototype_distances[i] for i in paired]))
                records.append(SweepRecord(beta, p, realization, "distance_prototype", value))
        records.append(SweepRecord(beta, p, realization, "paired_instances", float(len(paired))))
        records.append(SweepRecord(beta, p, realization, "excluded_robust", float(batch.excluded_robust)))
        records.append(SweepRecord(beta, p, realization, "excluded_nonrobust", float(batch.excluded_nonrobust)))
    return records


def _grid_order(records: List[SweepRecord]) -> List[SweepRecord]:
    # stable: realizations and metrics keep their order within a cell
    return sorted(records, key=lambda record: (record.beta, record.p))


def run_accuracy_sweep(config: ExperimentConfig, prepared: Optional[PreparedExperiment] = None) -> pd.DataFrame:
    """Test accuracy of one release per (beta, realization), plus the non-private baseline per beta"""
    prepared = prepared or prepare(config)
    model = prepared.model
    baseline = accuracy(model.weights, model.feature_map, prepared.test)
    logger.info("Accuracy sweep started", betas=len(config.beta_grid), **config_summary(config))

    records = []
    for beta in config.beta_grid:
        records.append(SweepRecord(beta, config.p_default, AGGREGATE, "accuracy_nonprivate", baseline))
        for realization in range(config.noise_realizations):
            release = _release(prepared, beta, release_seed(config, realization))
            value = accuracy(release.weights, release.feature_map, prepared.test)
            records.append(SweepRecord(beta, config.p_default, realization, "accuracy", value))
        logger.debug("Accuracy cell done", beta=beta)
    return records_to_frame(records)


def run_distance_sweep_beta(
    config: ExperimentConfig, prepared: Optional[PreparedExperiment] = None
) -> pd.DataFrame:
    """Mean robust and non-robust explanation distance per (beta, realization) at p_default"""
    prepared = prepared or prepare(config)
    instances = sample_instances(config, prepared.test)
    p = config.p_default
    logger.info("Distance sweep over beta started", instances=len(instances), p=p, **config_summary(config))

    records = []
    for realization in range(config.noise_realizations):
        cells = []
        for beta_index, beta in enumerate(config.beta_grid):
            release = _release(prepared, beta, release_seed(config, realization))
            seed = derive_seed(config.master_seed, STREAM_PROTOTYPES, 0, beta_index, realization)
            cells.append((beta, p, explain_cell(prepared, release, instances, p, config, seed)))
        records.extend(_distance_records(cells, realization))
    return records_to_frame(_grid_order(records))


def run_distance_sweep_p(config: ExperimentConfig, prepared: Optional[PreparedExperiment] = None) -> pd.DataFrame:
    """Mean explanation distances per (p, realization) at beta_default, with the prototype distance as reference.

    Every p sees the same releases, so the curves differ only through p.
    """
    prepared = prepared or prepare(config)
    instances = sample_instances(config, prepared.test)
    beta = config.beta_default
    logger.info("Distance sweep over p started", instances=len(instances), beta=beta, **config_summary(config))

    records = []
    for realization in range(config.noise_realizations):
        release = _release(prepared, beta, derive_seed(config.master_seed, STREAM_RELEASE_P, 0, realization))
        cells = []
        for p_index, p in enumerate(config.p_grid):
            seed = derive_seed(config.master_seed, STREAM_PROTOTYPES, 1, p_index, realization)
            cells.append((beta, p, explain_cell(prepared, release, instances, p, config, seed)))
        records.extend(_distance_records(cells, realization))
    return records_to_frame(_grid_order(records))


def _true_margins(explanations: Dict[int, Explanation], model: SvmModel) -> np.ndarray:
    # y' f(x, w*): positive means the explanation fails for the private classifier
    if not explanations:
        return np.empty(0)
    points = np.stack([e.point for e in explanations.values()])
    labels = np.array([e.label for e in explanations.values()])
    return labels * decision_value(model.weights, model.feature_map, points)


def median_standard_error(groups: List[np.ndarray], seed: int, resamples: int = BOOTSTRAP_RESAMPLES) -> float:
    """Bootstrap standard error of the pooled median, resampling whole groups.

    Values of one realization share the release, so realizations rather than
    single values are the independent units.
    """
    groups = [group for group in groups if group.size]
    if len(groups) < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    medians = [
        np.median(np.concatenate([groups[i] for i in rng.integers(len(groups), size=len(groups))]))
        for _ in range(resamples)
    ]
    return float(np.std(medians, ddof=1))


def _summary_records(beta: float, p: float, prefix: str, groups: List[np.ndarray], seed: int) -> List[SweepRecord]:
    values = np.concatenate(groups) if groups else np.empty(0)
    count = int(values.size)
    records = [SweepRecord(beta, p, AGGREGATE, f"{prefix}_count", float(count))]
    if count == 0:
        return records
    p10, p50, p90 = np.percentile(values, [10, 50, 90])
    sem = float(values.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    summary = (
        ("p10", p10),
        ("p50", p50),
        ("p90", p90),
        ("mean", values.mean()),
        ("sem", sem),
        ("p50_se", median_standard_error(groups, seed)),
    )
    for name, value in summary:
        records.append(SweepRecord(beta, p, AGGREGATE, f"{prefix}_{name}", float(value)))
    return records


def run_violation_stats(config: ExperimentConfig, prepared: Optional[PreparedExperiment] = None) -> pd.DataFrame:
    """Percentiles of the true-classifier margin y' f(x_ex, w*) per beta, pooled over realizations and instances"""
    prepared = prepared or prepare(config)
    instances = sample_instances(config, prepared.test)
    p = config.p_default
    logger.info("Violation statistics started", instances=len(instances), p=p, **config_summary(config))

    records = []
    for beta_index, beta in enumerate(config.beta_grid):
        robust, nonrobust = [], []
        for realization in range(config.noise_realizations):
            release = _release(prepared, beta, release_seed(config, realization))
            seed = derive_seed(config.master_seed, STREAM_PROTOTYPES, 0, beta_index, realization)
            batch = explain_cell(prepared, release, instances, p, config, seed)
            robust.append(_true_margins(batch.robust, prepared.model))
            nonrobust.append(_true_margins(batch.nonrobust, prepared.model))
        for kind, (prefix, groups) in enumerate((("violation_robust", robust), ("violation_nonrobust", nonrobust))):
            seed = derive_seed(config.master_seed, STREAM_BOOTSTRAP, beta_index, kind)
            records.extend(_summary_records(beta, p, prefix, groups, seed))
    return records_to_frame(records)


def _trace_release(config: ExperimentConfig, prepared: PreparedExperiment) -> PrivateRelease:
    return _release(prepared, config.beta_default, derive_seed(config.master_seed, STREAM_TRACE))


def run_convergence_trace(
    config: ExperimentConfig,
    instance_index: Optional[int] = None,
    prepared: Optional[PreparedExperiment] = None,
) -> pd.DataFrame:
    """Per-iteration bisection trace for one test instance at (beta_default, p_default).

    Without ``instance_index`` a test instance the release classifies as +1
    is drawn from the master seed.
    """
    prepared = prepared or prepare(config)
    release = _trace_release(config, prepared)
    test = prepared.test
    if instance_index is None:
        candidates = np.flatnonzero(classify(release.weights, release.feature_map, test.features) == 1)
        if candidates.size == 0:
            raise DataError("the release classifies no test instance as +1")
        rng = np.random.default_rng(derive_seed(config.master_seed, STREAM_TRACE, 1))
        instance_index = int(rng.choice(candidates))
    elif not 0 <= instance_index < test.n_samples:
        raise DataError(f"instance index {instance_index} outside the test set of {test.n_samples} instances")

    p = config.p_default
    prototypes = make_prototypes(
        prepared.train,
        release,
        p,
        max_retries=config.prototype_retries,
        seed=derive_seed(config.master_seed, STREAM_PROTOTYPES, 2),
    )
    request = make_request(test.features[instance_index], release, p)
    explanation = explain_robust_bisection(request, release, prototypes, bisection_config(config))
    logger.info(
        "Convergence trace computed",
        instance_index=instance_index,
        label=request.label,
        iterations=explanation.iterations,
        g_value=explanation.g_value,
        **config_summary(config),
    )
    return pd.DataFrame([asdict(step) for step in explanation.trace], columns=list(TRACE_COLUMNS))


def _test_instance(test: Dataset, index: int) -> np.ndarray:
    if not 0 <= index < test.n_samples:
        raise DataError(f"instance index {index} outside the test set of {test.n_samples} instances")
    return test.features[index]


def _explain_loaded(
    config: ExperimentConfig,
    release: PrivateRelease,
    train: Dataset,
    test: Dataset,
    index: int,
    p: float,
    robust: bool,
) -> Explanation:
    request = make_request(_test_instance(test, index), release, p)
    prototypes = None
    if not release.feature_map.is_identity:
        prototypes = make_prototypes(
            train,
            release,
            p if robust else 0.5,
            max_retries=config.prototype_retries,
            seed=derive_seed(config.master_seed, STREAM_PROTOTYPES, 3),
        )
    if robust:
        return explain_robust(request, release, prototypes, bisection_config(config))
    return explain_nonrobust(request, release, prototypes, bisection_config(config))


def explain_test_instance(
    config: ExperimentConfig,
    release: PrivateRelease,
    index: int,
    p: float,
    robust: bool = True,
) -> Dict[str, Any]:
    """Explanation of test instance ``index`` under a stored release.

    Feature deltas are relative changes in raw units; the points themselves
    are reported both normalized and in raw units.
    """
    train, test, normalizer = load_experiment_data(config)
    explanation = _explain_loaded(config, release, train, test, index, p, robust)

    result = explanation.to_dict()
    result["index"] = index
    result["segment_fraction"] = explanation.segment_fraction
    result["x_raw"] = invert_points(explanation.point, normalizer).tolist()
    result["x_prime_raw"] = invert_points(explanation.instance, normalizer).tolist()
    deltas = feature_deltas(explanation, normalizer)
    result["feature_deltas"] = [None if np.isnan(d) else float(d) for d in deltas]
    return result


def validate_test_instance(
    config: ExperimentConfig, release: PrivateRelease, index: int, p: float, trials: int
) -> Dict[str, Any]:
    """Empirical Pr[y' f(x, xi) <= 0] at the robust and the non-robust explanation of one test instance"""
    train, test, _ = load_experiment_data(config)
    result: Dict[str, Any] = {"index": index, "p": p, "trials": trials}
    seed = derive_seed(config.master_seed, STREAM_VALIDATION, index)
    for robust in (True, False):
        explanation = _explain_loaded(config, release, train, test, index, p, robust)
        probability = validate_chance_constraint(explanation.point, release, explanation.label, trials, seed)
        key = "robust" if robust else "nonrobust"
        result[key] = {"x": explanation.point.tolist(), "distance": explanation.distance, "probability": probability}
    logger.info(
        "Chance constraint validated",
        index=index,
        p=p,
        robust=result["robust"]["probability"],
        nonrobust=result["nonrobust"]["probability"],
    )
    return result


def dp_check(
    config: ExperimentConfig,
    beta: float,
    trials: int = 1000,
    scale_factor: float = 1.0,
) -> DpCheckReport:
    """Density-ratio check on the training set and its neighbor with the largest-norm label flipped.

    ``scale_factor`` < 1 under-calibrates the noise, which the check should catch.
    """
    if scale_factor <= 0:
        raise DataError(f"scale factor must be positive, got {scale_factor}")
    train, _, _ = load_experiment_data(config)
    feature_map = build_feature_map(config, train.n_features)
    index = int(np.argmax(np.linalg.norm(train.features, axis=1)))
    neighbor = flip_label(train, index)

    kappa = bounds(feature_map, max_feature_norm(train.features)).kappa
    scale = scale_factor * calibrate_lambda(config.svm.C, kappa, feature_map.output_dim, beta, train.n_samples)
    logger.info("DP check started", beta=beta, scale=scale, flipped_index=index, trials=trials)
    return dp_inequality_check(
        beta,
        scale,
        (train, neighbor),
        svm_config(config),
        feature_map,
        trials=trials,
        seed=derive_seed(config.master_seed, STREAM_DP_CHECK),
    )


def demo_linear(
    beta: float = 1.0,
    p: float = 0.9,
    n_per_class: int = 50,
    seed: int = 0,
    C: float = 1.0,
) -> pd.DataFrame:
    """Two Gaussian classes in 2-D: the optimal, non-robust and robust explanation of one instance.

    The instance is the point the release classifies +1 most confidently.
    """
    data = make_gaussian_blobs(n_per_class, seed=seed)
    data = apply_normalizer(data, fit_normalizer(data))
    feature_map = make_identity(2)
    model = train_dual(data, feature_map, SvmConfig(C=C))
    release = privatize(model, beta, derive_seed(seed, STREAM_DEMO), domain_radius=max_feature_norm(data.features))

    scores = decision_value(release.weights, feature_map, data.features)
    instance = data.features[int(np.argmax(scores))]
    request = make_request(instance, release, p)

    rows = [("instance", instance, 0.0)]
    rows.append(("optimal",) + _point_and_distance(explain_optimal_linear(request, model)))
    rows.append(("nonrobust",) + _point_and_distance(explain_nonrobust(request, release)))
    rows.append(("robust",) + _point_and_distance(explain_robust(request, release)))

    table = []
    for name, point, distance in rows:
        g_value = g(point, release, request.label, p)
        margin = float(request.label * decision_value(model.weights, feature_map, point))
        table.append((name, float(point[0]), float(point[1]), distance, g_value, margin))
    logger.info("Linear demo computed", beta=beta, p=p, scale=release.scale, label=request.label)
    return pd.DataFrame(table, columns=list(DEMO_COLUMNS))


def _point_and_distance(explanation: Explanation) -> Tuple[np.ndarray, float]:
    return explanation.point, explanation.distance


def emit(table: pd.DataFrame, path: Optional[Union[str, Path]] = None, fmt: str = "csv") -> None:
    """Write a table as CSV or JSON records; ``None`` or ``-`` means stdout"""
    if fmt == "csv":
        text = table.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    elif fmt == "json":
        text = serialize_json(table.to_dict(orient="records"))
    else:
        raise UsageError(f"unknown output format {fmt!r}; use csv or json")

    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise DataError(f"{path}: cannot write table: {e}") from e
    logger.info("Table written", path=str(path), rows=len(table), format=fmt)

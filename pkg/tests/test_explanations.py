"""Tests for robust and non-robust counterfactual explanations."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.data.models import Dataset, NormalizationParams
from src.errors import ConvergenceError, DataError, PreconditionError, PrototypeError
from src.explanations.models import (
    BisectionConfig,
    Explanation,
    ExplanationRequest,
    Method,
    PrototypeSet,
    UncertaintyModel,
)
from src.explanations.services import (
    check_prototypes,
    explain_nonrobust,
    explain_nonrobust_linear,
    explain_optimal_linear,
    explain_robust,
    explain_robust_bisection,
    explain_robust_linear,
    feature_deltas,
    g,
    make_prototypes,
    make_request,
    robust_coefficient,
    validate_chance_constraint,
)
from src.privacy.services import privatize

from .conftest import make_release, scale_for_coefficient


def _bisection_steps(distance: float, epsilon: float) -> int:
    steps = 0
    while distance / 2**steps > epsilon:
        steps += 1
    return steps


class TestRobustCoefficient:
    """Test r = -lambda sqrt(2) ln(2 (1 - p))."""

    def test_half(self):
        """p = 1/2 gives 0 for any lambda."""
        assert robust_coefficient(0.5, 7.0) == 0.0

    def test_closed_form(self):
        """p = 0.9 at lambda = 1 gives 2.27607."""
        assert robust_coefficient(0.9, 1.0) == pytest.approx(2.27607, abs=1e-5)

    def test_no_noise(self):
        """lambda = 0 gives 0."""
        assert robust_coefficient(0.99, 0.0) == 0.0

    @given(st.floats(0.5, 0.999), st.floats(0.5, 0.999), st.floats(0.01, 10.0))
    def test_increasing_in_p(self, p1, p2, scale):
        """r grows with p."""
        low, high = sorted((p1, p2))

        assert robust_coefficient(low, scale) <= robust_coefficient(high, scale)
        assert robust_coefficient(low, scale) >= 0.0

    @pytest.mark.parametrize("p", [0.4, 1.0])
    def test_rejects_p(self, p):
        """p must lie in [1/2, 1)."""
        with pytest.raises(DataError):
            robust_coefficient(p, 1.0)


class TestG:
    """Test the constraint function."""

    def test_plug_in(self):
        """w~ = [1, 0], lambda = 1, p = 0.9, y' = -1, x = [1, 0] gives 1.27607."""
        release = make_release([1.0, 0.0], 1.0)

        assert g(np.array([1.0, 0.0]), release, -1, 0.9) == pytest.approx(1.27607, abs=1e-5)

    def test_origin(self):
        """phi(x) = 0 gives 0."""
        assert g(np.zeros(2), make_release([1.0, 0.0], 1.0), 1, 0.9) == 0.0

    def test_half_is_plain_margin(self):
        """At p = 1/2, g is y' phi(x)^T w~."""
        release = make_release([0.5, -2.0], 3.0)
        x = np.array([1.5, 0.25])

        assert g(x, release, 1, 0.5) == pytest.approx(x @ release.weights)

    def test_batch(self):
        """Rows are evaluated independently."""
        release = make_release([1.0, 2.0], 0.3)
        points = np.array([[1.0, 0.0], [0.0, 1.0]])

        values = g(points, release, -1, 0.8)

        assert values.tolist() == pytest.approx([g(p, release, -1, 0.8) for p in points])


class TestLinearExplanations:
    """Test closed-form explanations for the identity map."""

    def test_hyperplane_projection(self):
        """x' = [2, 1] projects onto [0, 1] at distance 2."""
        release = make_release([1.0, 0.0], 0.1)

        explanation = explain_nonrobust_linear(make_request(np.array([2.0, 1.0]), release), release)

        np.testing.assert_allclose(explanation.point, [0.0, 1.0])
        assert explanation.distance == pytest.approx(2.0)
        assert explanation.method is Method.NONROBUST_CLOSED_FORM

    def test_on_hyperplane(self):
        """A point on the hyperplane is its own explanation."""
        release = make_release([1.0, 0.0], 0.1)

        explanation = explain_nonrobust_linear(make_request(np.array([0.0, 3.0]), release), release)

        np.testing.assert_array_equal(explanation.point, [0.0, 3.0])
        assert explanation.distance == 0.0

    def test_scale_invariant(self):
        """Scaling w~ leaves the projection unchanged."""
        x = np.array([1.0, 2.0])
        first = make_release([1.0, -0.5], 0.1)
        second = make_release([5.0, -2.5], 0.1)

        np.testing.assert_allclose(
            explain_nonrobust_linear(make_request(x, first), first).point,
            explain_nonrobust_linear(make_request(x, second), second).point,
        )

    def test_cone_worked_example(self, cone_release):
        """x' = [0, 2], w~ = [1, 0], r = 0.5 projects to (-sqrt(3)/2, 3/2)."""
        request = make_request(np.array([0.0, 2.0]), cone_release, 0.9)

        explanation = explain_robust_linear(request, cone_release)

        np.testing.assert_allclose(explanation.point, [-math.sqrt(3.0) / 2, 1.5], atol=1e-9)
        assert explanation.distance == pytest.approx(1.0, abs=1e-9)
        assert explanation.g_value == pytest.approx(0.0, abs=1e-9)
        assert explanation.method is Method.ROBUST_CONE_PROJECTION

    def test_origin_only(self):
        """r > ||w~|| leaves the origin as the only feasible point."""
        release = make_release([1.0, 0.0], scale_for_coefficient(1.5, 0.9))

        explanation = explain_robust_linear(make_request(np.array([2.0, 1.0]), release, 0.9), release)

        assert explanation.point.tolist() == [0.0, 0.0]
        assert explanation.origin_only
        assert explanation.to_dict()["origin_only"] is True

    def test_half_collapses_to_hyperplane(self):
        """At p = 1/2 the robust projection equals the closed form."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            release = make_release(rng.normal(size=3), rng.uniform(0.0, 2.0))
            request = make_request(rng.normal(size=3) * 3, release, 0.5)

            robust = explain_robust_linear(request, release)
            plain = explain_nonrobust_linear(request, release)

            np.testing.assert_allclose(robust.point, plain.point, atol=1e-9)

    def test_projection_is_minimal(self):
        """Over 1000 random cones, none of 1000 feasible points is closer to x' than the projection."""
        rng = np.random.default_rng(1)
        for _ in range(1000):
            weights = rng.normal(size=2)
            r = rng.uniform(0.0, 0.95) * np.linalg.norm(weights)
            release = make_release(weights, scale_for_coefficient(r, 0.9))
            request = make_request(rng.normal(size=2) * 2, release, 0.9)
            explanation = explain_robust_linear(request, release)

            feasible = np.empty((0, 2))
            while len(feasible) < 1000:
                candidates = np.concatenate(
                    [
                        request.instance + rng.normal(size=(1000, 2)) * 2,
                        explanation.point + rng.normal(size=(1000, 2)) * 0.05,
                    ]
                )
                feasible = np.concatenate([feasible, candidates[g(candidates, release, request.label, 0.9) <= 0.0]])
            distances = np.linalg.norm(feasible[:1000] - request.instance, axis=1)

            assert explanation.g_value <= 1e-9
            assert np.all(distances >= explanation.distance - 1e-9)

    def test_zero_weights(self):
        """A zero release has no decision boundary."""
        release = make_release([0.0, 0.0], 0.1)

        with pytest.raises(PreconditionError):
            explain_robust_linear(make_request(np.array([1.0, 1.0]), release), release)

    def test_requires_identity(self, rff_model):
        """Closed forms need the identity map."""
        release = privatize(rff_model, 1.0, seed=0)

        with pytest.raises(PreconditionError):
            explain_nonrobust_linear(make_request(np.zeros(2), release), release)

    def test_optimal_uses_true_weights(self, linear_model, blobs):
        """The optimal explanation lies on the hyperplane of w*."""
        release = privatize(linear_model, 1.0, seed=0, domain_radius=5.0)
        request = make_request(blobs.features[0], release)

        explanation = explain_optimal_linear(request, linear_model)

        if explanation.distance > 0:
            assert explanation.point @ linear_model.weights == pytest.approx(0.0, abs=1e-9)


class TestPrototypes:
    """Test prototype selection."""

    def _data(self):
        features = np.array([[1.0, 0.0], [3.0, 0.0], [-1.0, 0.0], [-3.0, 0.0]])
        return Dataset(features, np.array([1, 1, -1, -1]))

    def test_class_means(self):
        """Without noise, correctly classified class means are the prototypes."""
        release = make_release([1.0, 0.0], 0.0)

        prototypes = make_prototypes(self._data(), release, 0.9)

        assert prototypes.z_plus.tolist() == [2.0, 0.0]
        assert prototypes.z_minus.tolist() == [-2.0, 0.0]

    def test_training_point_fallback(self):
        """An unconfident class mean is replaced by a confident training point."""
        features = np.array([[1.0, 0.0], [1.0, 4.0], [-1.0, 0.0], [-3.0, 0.0]])
        release = make_release([1.0, 0.0], scale_for_coefficient(0.5, 0.9))

        prototypes = make_prototypes(Dataset(features, np.array([1, 1, -1, -1])), release, 0.9)

        assert prototypes.z_plus.tolist() == [1.0, 0.0]
        assert prototypes.z_minus.tolist() == [-2.0, 0.0]

    def test_unsatisfiable(self):
        """p close to 1 makes the condition unsatisfiable."""
        release = make_release([1.0, 0.0], 1.0)

        with pytest.raises(PrototypeError) as excinfo:
            make_prototypes(self._data(), release, 0.999, max_retries=50)

        assert excinfo.value.label == 1
        assert excinfo.value.best_margin < 0

    def test_check_rejects(self):
        """A prototype on the wrong side fails the check."""
        release = make_release([1.0, 0.0], 0.0)
        prototypes = PrototypeSet(z_plus=np.array([-1.0, 0.0]), z_minus=np.array([-1.0, 0.0]))

        with pytest.raises(PrototypeError):
            check_prototypes(prototypes, release, 0.9)

    def test_made_prototypes_pass_check(self, rff_model, blobs):
        """make_prototypes returns a set that passes check_prototypes."""
        release = privatize(rff_model, 50.0, seed=1)

        prototypes = make_prototypes(blobs, release, 0.9)

        check_prototypes(prototypes, release, 0.9)


class TestBisection:
    """Test the bisection engine."""

    def _setup(self):
        release = make_release([1.0], 0.0)
        prototypes = PrototypeSet(z_plus=np.array([4.0]), z_minus=np.array([-4.0]))
        return release, prototypes, make_request(np.array([4.0]), release, 0.9)

    def test_iteration_count(self):
        """Distance 8 and epsilon 0.5 take exactly 4 iterations."""
        release, prototypes, request = self._setup()

        explanation = explain_robust_bisection(request, release, prototypes, BisectionConfig(epsilon=0.5))

        assert explanation.iterations == 4 == math.ceil(math.log2(8 / 0.5))
        assert [step.width for step in explanation.trace] == [4.0, 2.0, 1.0, 0.5]

    def test_root_in_one_dimension(self):
        """In 1-D the result is within epsilon of the root of g."""
        release = make_release([1.0], 0.2)
        prototypes = PrototypeSet(z_plus=np.array([4.0]), z_minus=np.array([-4.0]))
        request = make_request(np.array([4.0]), release, 0.9)

        explanation = explain_robust_bisection(request, release, prototypes, BisectionConfig(epsilon=1e-6))

        # g(x) = x + r|x| has its root at 0
        assert -1e-6 <= explanation.point[0] < 0.0
        assert explanation.g_value < 0.0

    def test_random_pairs(self):
        """Iteration count, feasibility and the segment hold on random pairs."""
        rng = np.random.default_rng(2)
        for _ in range(100):
            weights = rng.normal(size=2)
            release = make_release(weights, scale_for_coefficient(0.5 * np.linalg.norm(weights), 0.9))
            request = make_request(rng.normal(size=2), release, 0.9)
            target = -request.label * rng.uniform(0.5, 5.0) * weights / np.linalg.norm(weights)
            prototypes = PrototypeSet(z_plus=target, z_minus=target)
            config = BisectionConfig(epsilon=rng.uniform(1e-4, 1e-1))

            explanation = explain_robust_bisection(request, release, prototypes, config)

            d0 = float(np.linalg.norm(target - request.instance))
            assert explanation.iterations == _bisection_steps(d0, config.epsilon)
            assert explanation.g_value < 0.0
            expected = request.instance + explanation.segment_fraction * (target - request.instance)
            np.testing.assert_allclose(explanation.point, expected, rtol=0, atol=1e-12)

    def test_trace_upper_bound_feasible(self):
        """g at the upper bound is negative after every step."""
        release, prototypes, request = self._setup()

        explanation = explain_robust_bisection(request, release, prototypes, BisectionConfig(epsilon=1e-3))

        assert all(step.g_upper < 0 for step in explanation.trace)

    def test_instance_already_counterfactual(self):
        """g(x') <= 0 leaves nothing to explain."""
        release, prototypes, _ = self._setup()
        request = ExplanationRequest(instance=np.array([0.0]), label=1, confidence=0.9)

        with pytest.raises(PreconditionError):
            explain_robust_bisection(request, release, prototypes)

    def test_infeasible_prototype(self):
        """The opposite prototype must satisfy g < 0."""
        release, _, request = self._setup()
        prototypes = PrototypeSet(z_plus=np.array([4.0]), z_minus=np.array([1.0]))

        with pytest.raises(PreconditionError):
            explain_robust_bisection(request, release, prototypes)

    def test_iteration_cap(self):
        """Hitting max_iter is a convergence error."""
        release, prototypes, request = self._setup()

        with pytest.raises(ConvergenceError):
            explain_robust_bisection(request, release, prototypes, BisectionConfig(epsilon=1e-9, max_iter=3))

    def test_prototype_itself(self):
        """If no midpoint is feasible the prototype is returned."""
        release = make_release([1.0], 0.0)
        prototypes = PrototypeSet(z_plus=np.array([4.0]), z_minus=np.array([-0.1]))
        request = make_request(np.array([4.0]), release, 0.9)

        explanation = explain_robust_bisection(request, release, prototypes, BisectionConfig(epsilon=1.0))

        assert explanation.segment_fraction == 1.0
        assert explanation.point.tolist() == [-0.1]

    def test_return_midpoint(self):
        """The last midpoint can be returned instead of the upper bound."""
        release, prototypes, request = self._setup()

        explanation = explain_robust_bisection(
            request, release, prototypes, BisectionConfig(epsilon=0.5, return_midpoint=True)
        )

        assert explanation.point.tolist() == [-0.5]

    def test_label_must_match_release(self):
        """The request label must be the release's own prediction."""
        release, prototypes, _ = self._setup()
        request = ExplanationRequest(instance=np.array([4.0]), label=-1, confidence=0.9)

        with pytest.raises(DataError):
            explain_robust_bisection(request, release, prototypes)


class TestDispatch:
    """Test the explain_robust and explain_nonrobust dispatchers."""

    def test_identity_uses_cone(self, cone_release):
        """The identity map is solved in closed form."""
        request = make_request(np.array([0.0, 2.0]), cone_release)

        assert explain_robust(request, cone_release).method is Method.ROBUST_CONE_PROJECTION
        assert explain_nonrobust(request, cone_release).method is Method.NONROBUST_CLOSED_FORM

    def test_rff_needs_prototypes(self, rff_model):
        """Non-linear maps need prototypes."""
        release = privatize(rff_model, 50.0, seed=0)

        with pytest.raises(PreconditionError):
            explain_robust(make_request(np.zeros(2), release), release)

    def test_rff_robust_and_nonrobust(self, rff_model, blobs):
        """Bisection answers satisfy their own constraint."""
        release = privatize(rff_model, 50.0, seed=0)
        prototypes = make_prototypes(blobs, release, 0.9)
        request = make_request(blobs.features[0], release, 0.9)

        robust = explain_robust(request, release, prototypes)
        plain = explain_nonrobust(request, release, prototypes)

        assert robust.method is Method.ROBUST_BISECTION
        assert plain.method is Method.NONROBUST_BISECTION
        assert plain.confidence == 0.5
        assert robust.g_value < 0.0
        assert g(plain.point, release, request.label, 0.5) < 0.0

    def test_rff_half_identical(self, rff_model, blobs):
        """At p = 1/2 robust and non-robust bisection coincide."""
        release = privatize(rff_model, 50.0, seed=0)
        prototypes = make_prototypes(blobs, release, 0.5)
        request = make_request(blobs.features[5], release, 0.5)

        robust = explain_robust(request, release, prototypes)
        plain = explain_nonrobust(request, release, prototypes)

        np.testing.assert_array_equal(robust.point, plain.point)


class TestChanceConstraint:
    """Test Monte-Carlo validation of Pr[y' f(x, xi) <= 0]."""

    def test_no_noise(self):
        """lambda = 0 is deterministic."""
        release = make_release([1.0, 0.0], 0.0)

        assert validate_chance_constraint(np.array([-1.0, 0.0]), release, 1, 10, seed=0) == 1.0
        assert validate_chance_constraint(np.array([1.0, 0.0]), release, 1, 10, seed=0) == 0.0

    def test_chunking_does_not_change_result(self):
        """Chunked draws give the same estimate."""
        release = make_release([1.0, -1.0, 0.5], 0.4)
        x = np.array([0.2, 0.4, -0.1])

        whole = validate_chance_constraint(x, release, 1, 5000, seed=3, chunk_trials=5000)
        chunked = validate_chance_constraint(x, release, 1, 5000, seed=3, chunk_trials=333)

        assert whole == chunked

    def test_robust_and_nonrobust(self):
        """Robust explanations reach p; non-robust ones sit near 1/2."""
        rng = np.random.default_rng(4)
        trials = 20_000
        for case in range(5):
            release = make_release(rng.normal(size=4), 0.3)
            request = make_request(rng.normal(size=4) * 2, release, 0.9)

            robust = explain_robust_linear(request, release)
            plain = explain_nonrobust_linear(request, release)

            if not robust.origin_only:
                robust_probability = validate_chance_constraint(robust.point, release, request.label, trials, seed=case)
                assert robust_probability >= 0.9 - 3 * math.sqrt(0.09 / trials)
            plain_probability = validate_chance_constraint(plain.point, release, request.label, trials, seed=case)
            assert abs(plain_probability - 0.5) <= 3 * math.sqrt(0.25 / trials)

    @pytest.mark.slow
    def test_robust_oracle(self):
        """50 random linear releases at p = 0.9, lambda = 0.3 with 10^5 trials."""
        rng = np.random.default_rng(5)
        trials = 100_000
        for case in range(50):
            release = make_release(rng.normal(size=5), 0.3)
            request = make_request(rng.normal(size=5) * 2, release, 0.9)
            robust = explain_robust_linear(request, release)
            plain = explain_nonrobust_linear(request, release)

            plain_probability = validate_chance_constraint(plain.point, release, request.label, trials, seed=case)
            assert abs(plain_probability - 0.5) <= 0.015
            if robust.origin_only:
                continue

            probability = validate_chance_constraint(robust.point, release, request.label, trials, seed=case)

            assert probability >= 0.897

    def test_rejects_no_trials(self):
        """At least one trial is needed."""
        with pytest.raises(DataError):
            validate_chance_constraint(np.zeros(1), make_release([1.0], 0.1), 1, 0, seed=0)


class TestModels:
    """Test request and uncertainty types."""

    @pytest.mark.parametrize("label, p", [(0, 0.9), (1, 1.0), (1, 0.3)])
    def test_request_validation(self, label, p):
        """Labels are +-1 and p lies in [1/2, 1)."""
        with pytest.raises(DataError):
            ExplanationRequest(instance=np.zeros(2), label=label, confidence=p)

    def test_make_request_label(self, cone_release):
        """The label is the release's own prediction."""
        assert make_request(np.array([-1.0, 0.0]), cone_release).label == -1
        assert make_request(np.array([1.0, 0.0]), cone_release).label == 1

    def test_uncertainty_sample(self):
        """Samples are indexed by trial."""
        model = UncertaintyModel(location=np.array([1.0, 2.0]), scale=0.5)

        whole = model.sample(10, seed=1)
        tail = model.sample(4, seed=1, start=6)

        assert whole.shape == (10, 2)
        np.testing.assert_array_equal(whole[6:], tail)

    def test_feature_deltas(self):
        """Relative change per feature, NaN where x'_i = 0."""
        explanation = Explanation(
            point=np.array([1.0, 1.0]),
            instance=np.array([2.0, 0.0]),
            label=1,
            confidence=0.9,
            method=Method.ROBUST_CONE_PROJECTION,
            distance=math.sqrt(2.0),
            g_value=0.0,
        )

        deltas = feature_deltas(explanation)

        assert deltas[0] == -0.5
        assert np.isnan(deltas[1])

    def test_feature_deltas_raw_units(self):
        """With a normalizer the change is relative to the raw feature value."""
        explanation = Explanation(
            point=np.array([1.0, 1.0]),
            instance=np.array([0.0, -1.0]),
            label=1,
            confidence=0.9,
            method=Method.ROBUST_CONE_PROJECTION,
            distance=2.0,
            g_value=0.0,
        )
        normalizer = NormalizationParams(mean=np.array([10.0, 5.0]), std=np.array([2.0, 5.0]))

        deltas = feature_deltas(explanation, normalizer)

        # raw: x = [12, 10], x' = [10, 0]
        assert deltas[0] == pytest.approx(0.2)
        assert np.isnan(deltas[1])

    def test_to_dict(self, cone_release):
        """Explanations serialize to plain values."""
        explanation = explain_robust(make_request(np.array([0.0, 2.0]), cone_release), cone_release)

        data = explanation.to_dict()

        assert set(data) == {
            "x", "x_prime", "y_prime", "p", "method", "distance", "g_value", "iterations", "origin_only"
        }
        assert data["method"] == "robust_cone_projection"

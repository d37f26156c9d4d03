"""Pytest configuration and fixtures for testing privex."""
import math
import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest
from fastapi.testclient import TestClient

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.data.models import Dataset
from src.data.services import apply_normalizer, fit_normalizer, load_bundled_wdbc, make_gaussian_blobs
from src.explanations.deps import get_release
from src.features.services import make_identity, make_random_fourier
from src.main import app
from src.privacy.models import NoiseSpec, PrivateRelease
from src.svm.models import SvmConfig
from src.svm.services import train_dual

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


def make_release(weights, scale: float, feature_map=None, beta: float = 1.0) -> PrivateRelease:
    """Release with chosen weights and scale, bypassing training"""
    weights = np.asarray(weights, dtype=np.float64)
    feature_map = feature_map or make_identity(weights.shape[0])
    return PrivateRelease(weights=weights, noise=NoiseSpec(scale=scale, beta=beta), feature_map=feature_map)


def scale_for_coefficient(r: float, p: float) -> float:
    """lambda giving robust coefficient r at confidence p"""
    return r / (-math.sqrt(2.0) * math.log(2.0 * (1.0 - p)))


def write_uci_wdbc(data: Dataset, path: Path) -> Path:
    """Write a dataset in the UCI wdbc.data layout: id, M/B, 30 reals"""
    lines = []
    for i, (row, label) in enumerate(zip(data.features, data.labels)):
        values = ",".join(repr(float(v)) for v in row)
        lines.append(f"{842302 + i},{'M' if label == 1 else 'B'},{values}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def two_point_data():
    """The 1-D training pair {(-1, -1), (+1, +1)}."""
    return Dataset(np.array([[-1.0], [1.0]]), np.array([-1, 1]))


@pytest.fixture
def blobs():
    """Two normalized 2-D Gaussian classes."""
    data = make_gaussian_blobs(30, seed=0)
    return apply_normalizer(data, fit_normalizer(data))


@pytest.fixture
def linear_model(blobs):
    """Linear SVM trained on the blobs."""
    return train_dual(blobs, make_identity(2), SvmConfig(C=1.0))


@pytest.fixture
def rff_model(blobs):
    """SVM with a 20-dimensional random Fourier map trained on the blobs."""
    return train_dual(blobs, make_random_fourier(2, 20, gamma=0.5, seed=3), SvmConfig(C=1.0))


@pytest.fixture
def cone_release():
    """Identity release with w~ = [1, 0] and robust coefficient 0.5 at p = 0.9."""
    return make_release([1.0, 0.0], scale_for_coefficient(0.5, 0.9))


@pytest.fixture(scope="session")
def wdbc_file(tmp_path_factory):
    """The scikit-learn copy of WDBC written in UCI format."""
    path = tmp_path_factory.mktemp("data") / "wdbc.data"
    return write_uci_wdbc(load_bundled_wdbc(), path)


@pytest.fixture
def release_file(tmp_path, cone_release):
    """The cone release written as the public release JSON."""
    from src.artifacts import write_json

    return write_json(tmp_path / "release.json", cone_release.to_dict())


@pytest.fixture(scope="function")
def client(cone_release):
    """Provide a test client serving the cone release."""
    app.dependency_overrides[get_release] = lambda: cone_release

    with TestClient(app) as test_client:
        yield test_client

    # Clean up dependency overrides
    app.dependency_overrides.clear()

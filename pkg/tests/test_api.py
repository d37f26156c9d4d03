"""API tests for the release and explanation endpoints."""
import math

import pytest

from src.config import settings
from src.main import app


class TestHealth:
    """Test service metadata endpoints."""

    def test_health(self, client):
        """Health reports the configured release path."""
        response = client.get("/health")

        assert response.status_code == 200
        assert response.json()["status"] == "healthy"

    def test_root(self, client):
        """The root endpoint answers."""
        assert client.get("/").status_code == 200


class TestRelease:
    """Test the public release endpoint."""

    def test_get_release(self, client, cone_release):
        """The release exposes w~, lambda, beta and the feature map only."""
        response = client.get("/api/v1/release")

        assert response.status_code == 200
        data = response.json()
        assert set(data) == {"w_tilde", "lambda", "beta", "feature_map"}
        assert data["w_tilde"] == [1.0, 0.0]
        assert data["lambda"] == pytest.approx(cone_release.scale)
        assert data["feature_map"]["kind"] == "identity"

    def test_release_from_file(self, release_file, monkeypatch):
        """Without an override the release is read from the configured path."""
        from fastapi.testclient import TestClient

        monkeypatch.setattr(settings, "release_path", str(release_file))
        with TestClient(app) as test_client:
            response = test_client.get("/api/v1/release")

        assert response.status_code == 200
        assert response.json()["w_tilde"] == [1.0, 0.0]

    def test_missing_release(self, tmp_path, monkeypatch):
        """A missing release file makes the service unavailable."""
        from fastapi.testclient import TestClient

        monkeypatch.setattr(settings, "release_path", str(tmp_path / "none.json"))
        with TestClient(app) as test_client:
            response = test_client.post("/api/v1/explanations", json={"instance": [0.0, 2.0]})

        assert response.status_code == 503

    def test_unreadable_release(self, tmp_path, monkeypatch):
        """A corrupt release file makes the service unavailable."""
        from fastapi.testclient import TestClient

        path = tmp_path / "release.json"
        path.write_text('{"w_tilde": [1.0]}')
        monkeypatch.setattr(settings, "release_path", str(path))
        with TestClient(app) as test_client:
            response = test_client.get("/api/v1/release")

        assert response.status_code == 503
        assert "lambda" in response.json()["detail"]


class TestExplanations:
    """Test explanation requests."""

    def test_robust(self, client):
        """The cone example through the API."""
        response = client.post("/api/v1/explanations", json={"instance": [0.0, 2.0], "p": 0.9})

        assert response.status_code == 200
        data = response.json()
        assert data["x"] == pytest.approx([-math.sqrt(3.0) / 2, 1.5], abs=1e-9)
        assert data["distance"] == pytest.approx(1.0, abs=1e-9)
        assert data["method"] == "robust_cone_projection"
        assert data["y_prime"] == 1
        assert data["feature_deltas"][0] is None
        assert data["origin_only"] is False

    def test_nonrobust(self, client):
        """Non-robust explanations project onto the hyperplane."""
        response = client.post("/api/v1/explanations", json={"instance": [2.0, 1.0], "method": "nonrobust"})

        assert response.status_code == 200
        data = response.json()
        assert data["x"] == pytest.approx([0.0, 1.0])
        assert data["p"] == 0.5
        assert data["feature_deltas"] == pytest.approx([-1.0, 0.0])

    def test_dimension_mismatch(self, client):
        """An instance of the wrong length is a bad request."""
        response = client.post("/api/v1/explanations", json={"instance": [1.0, 2.0, 3.0]})

        assert response.status_code == 400
        assert "dimension" in response.json()["detail"]

    def test_bad_prototypes(self, client):
        """Prototypes failing the confidence condition are a bad request."""
        body = {"instance": [2.0, 1.0], "prototypes": {"z_plus": [-1.0, 0.0], "z_minus": [-1.0, 0.0]}}

        response = client.post("/api/v1/explanations", json=body)

        assert response.status_code == 400
        assert "prototype" in response.json()["detail"]

    @pytest.mark.parametrize(
        "body",
        [
            {"instance": []},
            {"instance": [1.0, 0.0], "p": 1.0},
            {"instance": [1.0, 0.0], "p": 0.2},
            {"instance": [1.0, 0.0], "method": "optimal"},
            {"instance": [1.0, 0.0], "epsilon": 0.0},
        ],
    )
    def test_invalid_body(self, client, body):
        """Schema violations are rejected before reaching the solver."""
        assert client.post("/api/v1/explanations", json=body).status_code == 422


class TestValidate:
    """Test Monte-Carlo validation requests."""

    def test_robust_point(self, client):
        """The robust explanation of the cone example reaches p."""
        point = [-math.sqrt(3.0) / 2, 1.5]

        response = client.post(
            "/api/v1/explanations/validate", json={"point": point, "label": 1, "trials": 20000, "seed": 1}
        )

        assert response.status_code == 200
        data = response.json()
        assert data["trials"] == 20000
        assert data["probability"] >= 0.9 - 3 * math.sqrt(0.09 / 20000)

    def test_deterministic(self, client):
        """The same seed gives the same estimate."""
        body = {"point": [0.0, 1.0], "label": 1, "trials": 1000, "seed": 5}

        first = client.post("/api/v1/explanations/validate", json=body).json()
        second = client.post("/api/v1/explanations/validate", json=body).json()

        assert first == second

    def test_dimension_mismatch(self, client):
        """A point of the wrong length is a bad request."""
        body = {"point": [0.0], "label": 1}

        assert client.post("/api/v1/explanations/validate", json=body).status_code == 400

    def test_bad_label(self, client):
        """Labels are -1 or +1."""
        body = {"point": [0.0, 1.0], "label": 0}

        assert client.post("/api/v1/explanations/validate", json=body).status_code == 422

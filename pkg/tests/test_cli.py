"""Tests for the privex command line."""
import json

import pytest

from src.artifacts import read_json
from src.cli import main
from src.experiments.schemas import sweep_table_adapter

SMALL = {
    "map": {"kind": "random_fourier", "dim": 20, "seed": 1},
    "beta_grid": [1.0, 100.0],
    "p_grid": [0.5, 0.9],
    "noise_realizations": 2,
    "sample_size": 3,
    "prototype_retries": 200,
}


@pytest.fixture
def config_file(tmp_path):
    """A small experiment config on disk."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


class TestExitCodes:
    """Test the mapping of failures to exit codes."""

    def test_no_command(self):
        """A missing subcommand is a usage error."""
        assert main([]) == 1

    def test_unknown_flag(self):
        """Unknown flags are usage errors."""
        assert main(["sweep-accuracy", "--bogus"]) == 1

    @pytest.mark.parametrize(
        "args",
        [
            ["train"],
            ["privatize", "--model", "model.json", "--beta", "1"],
            ["explain", "--release", "release.json", "--index", "0"],
            ["validate", "--release", "release.json", "--index", "0"],
            ["dp-check", "--beta", "1"],
        ],
    )
    def test_format_only_for_tables(self, args):
        """Commands that write JSON documents reject --format."""
        assert main(args + ["--format", "json"]) == 1

    def test_help(self, capsys):
        """--help exits cleanly."""
        assert main(["--help"]) == 0
        assert "sweep-distance-p" in capsys.readouterr().out

    def test_missing_config(self, tmp_path):
        """An unreadable config is a usage error."""
        assert main(["sweep-accuracy", "--config", str(tmp_path / "none.json")]) == 1

    def test_bad_override(self, config_file):
        """An out-of-range flag value is a usage error."""
        assert main(["sweep-distance-beta", "--config", config_file, "--p", "1.5"]) == 1

    def test_missing_dataset(self, tmp_path, config_file):
        """A missing dataset is a data error."""
        assert main(["sweep-accuracy", "--config", config_file, "--dataset", str(tmp_path / "none.data")]) == 2

    def test_malformed_dataset(self, tmp_path, config_file):
        """A malformed dataset is a data error."""
        path = tmp_path / "bad.data"
        path.write_text("1,X,2.0\n")

        assert main(["sweep-accuracy", "--config", config_file, "--dataset", str(path)]) == 2

    def test_numerical_failure(self, tmp_path):
        """A bisection that cannot reach epsilon is a numerical failure."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({**SMALL, "bisection": {"epsilon": 1e-12, "max_iter": 1}}))

        assert main(["trace-convergence", "--config", str(path), "--out", str(tmp_path / "t.csv")]) == 3

    def test_unknown_release(self, tmp_path, config_file):
        """A missing release file is a data error."""
        args = ["explain", "--config", config_file, "--release", str(tmp_path / "none.json"), "--index", "0"]

        assert main(args) == 2


class TestSweepCommands:
    """Test sweep output."""

    def test_byte_identical(self, tmp_path, config_file):
        """Two runs with the same config and seed write identical bytes."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"

        assert main(["sweep-accuracy", "--config", config_file, "--seed", "4", "--out", str(first)]) == 0
        assert main(["sweep-accuracy", "--config", config_file, "--seed", "4", "--out", str(second)]) == 0

        assert first.read_bytes() == second.read_bytes()

    def test_json_format(self, tmp_path, config_file):
        """--format json writes sweep records."""
        path = tmp_path / "p.json"

        assert main(["sweep-distance-p", "--config", config_file, "--format", "json", "--out", str(path)]) == 0

        rows = sweep_table_adapter.validate_json(path.read_text())
        assert {row.p for row in rows} == {0.5, 0.9}

    def test_trace_json_format(self, tmp_path, config_file):
        """The convergence trace still takes --format."""
        path = tmp_path / "trace.json"

        assert main(["trace-convergence", "--config", config_file, "--format", "json", "--out", str(path)]) == 0

        assert isinstance(json.loads(path.read_text()), list)

    def test_stdout(self, capsys, config_file):
        """Without --out the table goes to stdout."""
        assert main(["violation-stats", "--config", config_file, "--realizations", "1"]) == 0

        out = capsys.readouterr().out
        assert out.startswith("beta,p,realization,metric_name,value\n")

    def test_demo_linear(self, capsys):
        """The linear demo writes four rows."""
        assert main(["demo-linear", "--n-per-class", "20"]) == 0

        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "method,x1,x2,distance,g_value,true_margin"
        assert len(lines) == 5


class TestReleasePipeline:
    """Test train, privatize, explain and validate end to end."""

    def test_pipeline(self, tmp_path, config_file):
        """A trained bundle becomes a release that explains and validates test instances."""
        bundle, release = tmp_path / "model.json", tmp_path / "release.json"
        explanation, validation = tmp_path / "explanation.json", tmp_path / "validation.json"

        assert main(["train", "--config", config_file, "--out", str(bundle)]) == 0
        assert main(["privatize", "--config", config_file, "--model", str(bundle), "--beta", "100", "--out", str(release)]) == 0
        assert main(
            ["explain", "--config", config_file, "--release", str(release), "--index", "2", "--out", str(explanation)]
        ) == 0
        assert main(
            [
                "validate", "--config", config_file, "--release", str(release),
                "--index", "2", "--trials", "500", "--out", str(validation),
            ]
        ) == 0

        assert set(read_json(release)) == {"w_tilde", "lambda", "beta", "feature_map"}
        assert read_json(explanation)["index"] == 2
        assert 0.0 <= read_json(validation)["robust"]["probability"] <= 1.0

    def test_privatize_requires_beta(self, tmp_path):
        """--beta is required."""
        assert main(["privatize", "--model", str(tmp_path / "model.json")]) == 1

    def test_validate_rejects_trials(self, tmp_path, config_file):
        """--trials must be positive."""
        args = ["validate", "--config", config_file, "--release", str(tmp_path / "r.json"), "--index", "0"]

        assert main(args + ["--trials", "0"]) == 1

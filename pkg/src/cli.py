"""Command-line entry point: ``privex <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Tables go to stdout (or ``--out``); logs go to stderr.
"""
import argparse
import sys
from typing import List, Optional

import structlog
import uvicorn

from src.artifacts import read_json, serialize_json, write_json
from src.config import settings
from src.errors import PrivexError, UsageError
from src.experiments import services
from src.experiments.schemas import ExperimentConfig, load_config
from src.privacy.models import PrivateRelease
from src.utils.log import configure_logging

logger = structlog.get_logger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors with exit code 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(UsageError.exit_code)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment config (.json or .toml)")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", default="-", help="output path, - for stdout")
    parser.add_argument("--dataset", help="path of a wdbc.data file (default: bundled copy)")
    parser.add_argument("--log-level", default=None, help="log level (default from PRIVEX_LOG_LEVEL)")


def _table_format(parser: argparse.ArgumentParser) -> None:
    # only commands that write a table take --format
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")


def _sweep_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--realizations", type=int, help="noise realizations per cell")
    parser.add_argument("--sample-size", type=int, help="test instances explained per cell")
    parser.add_argument("--beta", type=float, help="fixed beta (overrides beta_default)")
    parser.add_argument("--p", type=float, help="fixed confidence p (overrides p_default)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="privex", description="Private SVMs and robust counterfactual explanations")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    command = commands.add_parser("train", help="train the private SVM and write the model bundle")
    _common(command)

    command = commands.add_parser("privatize", help="write the public release of a trained model")
    _common(command)
    command.add_argument("--model", required=True, help="model bundle written by train")
    command.add_argument("--beta", type=float, required=True, help="privacy level")

    command = commands.add_parser("explain", help="explain one test instance under a release")
    _common(command)
    command.add_argument("--release", required=True, help="public release JSON")
    command.add_argument("--index", type=int, required=True, help="test-set index")
    command.add_argument("--p", type=float, help="confidence p")
    command.add_argument("--method", choices=("robust", "nonrobust"), default="robust")

    command = commands.add_parser("validate", help="Monte-Carlo check of the explanations of one test instance")
    _common(command)
    command.add_argument("--release", required=True, help="public release JSON")
    command.add_argument("--index", type=int, required=True, help="test-set index")
    command.add_argument("--p", type=float, help="confidence p")
    command.add_argument("--trials", type=int, help="Monte-Carlo trials")

    for name, text in (
        ("sweep-accuracy", "test accuracy against beta"),
        ("sweep-distance-beta", "explanation distance against beta"),
        ("sweep-distance-p", "explanation distance against p"),
        ("violation-stats", "percentiles of the true-classifier margin at the explanations"),
    ):
        command = commands.add_parser(name, help=text)
        _common(command)
        _sweep_flags(command)
        _table_format(command)

    command = commands.add_parser("trace-convergence", help="per-iteration bisection trace")
    _common(command)
    _sweep_flags(command)
    _table_format(command)
    command.add_argument("--instance-index", type=int, help="test-set index (default: drawn from the seed)")

    command = commands.add_parser("dp-check", help="density-ratio check on a neighboring dataset pair")
    _common(command)
    command.add_argument("--beta", type=float, required=True, help="privacy level")
    command.add_argument("--trials", type=int, default=1000, help="points checked")
    command.add_argument("--scale-factor", type=float, default=1.0, help="multiplier on the calibrated lambda")

    command = commands.add_parser("demo-linear", help="2-D illustration of optimal, non-robust and robust explanations")
    _common(command)
    _table_format(command)
    command.add_argument("--beta", type=float, default=1.0, help="privacy level")
    command.add_argument("--p", type=float, default=0.9, help="confidence p")
    command.add_argument("--n-per-class", type=int, default=50, help="points per class")

    command = commands.add_parser("serve", help="run the explanation API")
    command.add_argument("--host", default=settings.host)
    command.add_argument("--port", type=int, default=settings.port)
    command.add_argument("--log-level", default=None)
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(
        master_seed=args.seed,
        dataset_path=args.dataset,
        noise_realizations=getattr(args, "realizations", None),
        sample_size=getattr(args, "sample_size", None),
        beta_default=getattr(args, "beta", None),
        p_default=getattr(args, "p", None),
    )


def _write_document(data, out: str) -> None:
    if out == "-":
        sys.stdout.write(serialize_json(data))
    else:
        write_json(out, data)


def _train(args, config):
    _write_document(services.train_bundle(config), args.out)


def _privatize(args, config):
    release = services.privatize_bundle(read_json(args.model), args.beta, config.master_seed)
    logger.info("Release written", beta=release.beta, scale=release.scale)
    _write_document(release.to_dict(), args.out)


def _explain(args, config):
    release = PrivateRelease.from_dict(read_json(args.release))
    result = services.explain_test_instance(
        config, release, args.index, config.p_default, robust=args.method == "robust"
    )
    _write_document(result, args.out)


def _validate(args, config):
    trials = args.trials if args.trials is not None else config.validation_trials
    if trials < 1:
        raise UsageError(f"--trials must be positive, got {trials}")
    release = PrivateRelease.from_dict(read_json(args.release))
    _write_document(services.validate_test_instance(config, release, args.index, config.p_default, trials), args.out)


def _sweep(run):
    def command(args, config):
        services.emit(run(config), args.out, args.format)

    return command


def _trace(args, config):
    services.emit(services.run_convergence_trace(config, args.instance_index), args.out, args.format)


def _dp_check(args, config):
    report = services.dp_check(config, args.beta, trials=args.trials, scale_factor=args.scale_factor)
    _write_document(report.to_dict(), args.out)


def _demo_linear(args, config):
    table = services.demo_linear(
        beta=args.beta, p=args.p, n_per_class=args.n_per_class, seed=config.master_seed, C=config.svm.C
    )
    services.emit(table, args.out, args.format)


def _serve(args):
    uvicorn.run("src.main:app", host=args.host, port=args.port, reload=settings.debug)


COMMANDS = {
    "train": _train,
    "privatize": _privatize,
    "explain": _explain,
    "validate": _validate,
    "sweep-accuracy": _sweep(services.run_accuracy_sweep),
    "sweep-distance-beta": _sweep(services.run_distance_sweep_beta),
    "sweep-distance-p": _sweep(services.run_distance_sweep_p),
    "violation-stats": _sweep(services.run_violation_stats),
    "trace-convergence": _trace,
    "dp-check": _dp_check,
    "demo-linear": _demo_linear,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level or settings.log_level, settings.log_json)
    try:
        if args.command == "serve":
            _serve(args)
            return 0
        config = _config(args)
        COMMANDS[args.command](args, config)
    except PrivexError as e:
        logger.error("Command failed", command=args.command, error=str(e), exit_code=e.exit_code)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

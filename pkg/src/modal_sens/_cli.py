"""``modal-sens`` command line: run, sweep and verify."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from . import __version__
from ._bench import emit, export_matrices, prepare, run, stage, sweep
from ._config import RunConfig, _format_from_path, load_config, load_sweep
from ._engines import ENGINES, run_engine
from ._errors import ModalSensError
from ._verification import DEFAULT_STEP, FdConfig, fd_sensitivity, normalized_error

logger = logging.getLogger(__name__)

PROG = "modal-sens"
VERIFY_TOLERANCE = 0.1
VERIFY_MESH = (4, 2)
VERIFY_REFERENCE_DENSITY = 0.5
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _engine_list(text: str) -> tuple[str, ...]:
    names = tuple(name.strip() for name in text.split(",") if name.strip())
    unknown = [name for name in names if name not in ENGINES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(
            f"expected a comma-separated subset of {','.join(ENGINES)}, got {text!r}"
        )
    return names


def _model_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--nx", type=int, help="elements along the plate length")
    parser.add_argument("--ny", type=int, help="elements along the plate height")
    parser.add_argument(
        "--mode", type=int, help="mode number, 1 is the lowest; run needs it"
    )
    parser.add_argument(
        "--char", dest="name", choices=("mac", "mse", "mf"), help="characteristic"
    )
    parser.add_argument("--element", type=int, help="element of the mse characteristic")
    parser.add_argument(
        "--ref-mode-source",
        metavar="auto|FILE",
        help="mac reference: a baseline mode (auto) or a .npy/text vector file",
    )
    parser.add_argument(
        "--ref-mode", type=int, help="mode used by --ref-mode-source auto"
    )
    parser.add_argument(
        "--reference-density",
        type=float,
        help="density factor of --element in the auto MAC reference (default 1)",
    )
    parser.add_argument(
        "--engines", type=_engine_list, help="comma-separated engines to run"
    )
    parser.add_argument(
        "--sqmr-tolerance", type=float, help="SQMR convergence tolerance"
    )


def _output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--reps", dest="repetitions", type=int, help="repetitions")
    parser.add_argument("--out", dest="output", type=Path, help="report file")
    parser.add_argument("--format", choices=("csv", "json"), help="report format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Sensitivities of modal characteristics by five methods.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for solver detail",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="time the engines on one plate")
    _model_arguments(run_parser)
    _output_arguments(run_parser)
    run_parser.add_argument(
        "--export-matrices",
        type=Path,
        metavar="DIR",
        help="also write K.mtx and M.mtx to DIR",
    )

    sweep_parser = commands.add_parser("sweep", help="run a grid of plate meshes")
    sweep_parser.add_argument(
        "--grid", type=Path, required=True, help="TOML sweep configuration"
    )
    _output_arguments(sweep_parser)

    verify_parser = commands.add_parser(
        "verify", help="check the engines against finite differences"
    )
    _model_arguments(verify_parser)
    verify_parser.add_argument(
        "--tolerance",
        type=float,
        default=VERIFY_TOLERANCE,
        help="largest normalized error allowed, in percent (default 0.1)",
    )
    verify_parser.add_argument(
        "--step", type=float, default=DEFAULT_STEP, help="finite-difference step"
    )
    return parser


def _configure_logging(verbosity: int) -> None:
    logging.basicConfig(
        level=LOG_LEVELS[min(verbosity, len(LOG_LEVELS) - 1)],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    with stage("build"):
        base = load_config(args.config) if args.config else RunConfig()
        overrides: dict[str, Any] = {
            key: getattr(args, key, None)
            for key in (
                "nx",
                "ny",
                "mode",
                "name",
                "element",
                "ref_mode_source",
                "ref_mode",
                "reference_density",
                "engines",
                "repetitions",
                "output",
                "format",
            )
        }
        if overrides["output"] is not None and overrides["format"] is None:
            overrides["format"] = _format_from_path(str(overrides["output"]))
        tolerance = getattr(args, "sqmr_tolerance", None)
        if tolerance is not None:
            overrides["sqmr"] = replace(base.sqmr, tolerance=tolerance)
        return base.with_overrides(**overrides)


def _finish(report_ok: bool, what: str) -> int:
    if not report_ok:
        print(f"{PROG}: {what}", file=sys.stderr)
        return 1
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if args.export_matrices is not None:
        export_matrices(config, args.export_matrices)
    report = run(config)
    emit(report, config.format, config.output)
    return _finish(report.all_finite(), "some pairwise errors are not finite")


def _cmd_sweep(args: argparse.Namespace) -> int:
    with stage("build"):
        configs = load_sweep(args.grid)
        overrides = {"repetitions": args.repetitions}
        configs = [config.with_overrides(**overrides) for config in configs]
    output = args.output or configs[0].output
    fmt = args.format or (
        _format_from_path(str(output)) if args.output else configs[0].format
    )
    reports = sweep(configs)
    emit(reports, fmt, output)
    ok = all(report.all_finite() for report in reports)
    return _finish(ok, "some pairwise errors are not finite")


def _cmd_verify(args: argparse.Namespace) -> int:
    if args.config is None:
        args.nx = VERIFY_MESH[0] if args.nx is None else args.nx
        args.ny = VERIFY_MESH[1] if args.ny is None else args.ny
        if args.reference_density is None and args.ref_mode is None:
            # MAC against the unchanged analysed mode has no gradient to check
            args.reference_density = VERIFY_REFERENCE_DENSITY
    config = _config_from_args(args)
    prepared = prepare(config)
    with stage("oracle"):
        reference = fd_sensitivity(
            prepared.model,
            prepared.design,
            prepared.problem.characteristic,
            config.mode,
            FdConfig(step=args.step),
        )
    failed = []
    print(f"{'engine':<6} {'normalized error %':>20}")
    for name in config.engines:
        with stage(f"engine:{name}"):
            values = run_engine(name, prepared.problem, config.sqmr).values
            error = normalized_error(values, reference)
        print(f"{name:<6} {error:>20.6g}")
        if not error <= args.tolerance:
            failed.append(name)
    return _finish(
        not failed,
        f"{', '.join(failed)} exceed {args.tolerance}% against finite differences",
    )


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and args.mode is None and args.config is None:
        parser.error("run needs --mode or a --config file")
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ModalSensError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        logger.debug("command %s failed", args.command, exc_info=True)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

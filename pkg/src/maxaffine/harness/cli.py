# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""The `maxaffine` command.

    maxaffine generate   --config exp.toml --out data.csv
    maxaffine fit        --data data.csv --algorithm gd --out-dir fit/
    maxaffine trace      --config exp.toml --out-dir traces/
    maxaffine phase-grid --config exp.toml --out-dir grid/
    maxaffine diagnose   --config exp.toml --out report.json
    maxaffine trace      --preset noisy-batch-32 --out-dir traces/

Exit status is 0 on success, 2 for bad input, 3 when a fit diverges and 4 when a theory formula
is evaluated outside its domain. Outputs are only written once everything succeeded.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from maxaffine import __version__
from maxaffine.datagen import child_seed, load_dataset, save_dataset
from maxaffine.harness.config import (
    ExperimentConfig,
    InitMethod,
    load_config,
    load_preset,
    parse_config,
    preset_names,
)
from maxaffine.harness.diagnose import diagnose
from maxaffine.harness.experiments import (
    ConvergenceRecord,
    FitTraceRecord,
    GridRecord,
    fit_trace_records,
    make_init,
    make_problem,
    resolve_workers,
    run_convergence,
    run_phase_grid,
    solver_seed,
)
from maxaffine.model import InputError, MaxAffineError
from maxaffine.records import write_records
from maxaffine.solvers import Algorithm, DivergenceError, solve
from maxaffine.theory import FormulaDomainError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3
EXIT_FORMULA_DOMAIN = 4


def _records_text(cls: type, records: Sequence[Any]) -> str:
    buffer = io.StringIO()
    write_records(buffer, cls, records)
    return buffer.getvalue()


def _json_text(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_outputs(outputs: dict[Path, str]) -> None:
    for path, text in outputs.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info("wrote %s", path)


def _config(args: argparse.Namespace) -> ExperimentConfig:
    if args.preset is not None:
        return load_preset(args.preset)
    if args.config is None:
        return parse_config({})
    return load_config(args.config)


def cmd_generate(args: argparse.Namespace) -> None:
    config = _config(args)
    seed = child_seed(config.data.seed)
    problem = make_problem(config, seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    sidecar = save_dataset(
        args.out, problem.data, law=problem.law, seed=config.data.seed, truth=problem.truth
    )
    logger.info("wrote %s and %s", args.out, sidecar)


def cmd_fit(args: argparse.Namespace) -> None:
    config = _config(args)
    loaded = load_dataset(args.data)
    data = loaded.data
    if "data.d" in config.explicit and config.data.d != data.d:
        raise InputError(f"maxaffine: configured d={config.data.d} but the dataset has d={data.d}")
    truth = None if args.ignore_truth else loaded.truth
    if truth is not None:
        k = truth.k
        if "data.k" in config.explicit and config.data.k != k:
            raise InputError(f"maxaffine: configured k={config.data.k} but the truth has k={k}")
    else:
        k = config.data.k
    seed = child_seed(config.data.seed if loaded.seed is None else loaded.seed)
    method = config.init.method
    if truth is None and method is InitMethod.PERTURB and "init.method" not in config.explicit:
        logger.info("no ground truth available, using the moment initialization")
        method = InitMethod.MOMENT
    init = make_init(config, data, k, truth, seed, method)

    algorithm = Algorithm(args.algorithm)
    solver = config.solver.config_for(algorithm, data.d, solver_seed(seed, algorithm))
    run = solve(data, init, solver, truth)
    params = dict(
        algorithm=algorithm.value,
        converged=run.converged,
        iterations_used=run.iterations_used,
        final_loss=run.final_loss,
        params=run.final_params.to_dict(),
    )
    _write_outputs(
        {
            args.out_dir / "params.json": _json_text(params),
            args.out_dir / "trace.csv": _records_text(
                FitTraceRecord, fit_trace_records(run, timing=not args.no_timing)
            ),
        }
    )


def cmd_trace(args: argparse.Namespace) -> None:
    config = _config(args)
    curves = run_convergence(config, resolve_workers(args.workers), timing=not args.no_timing)
    _write_outputs(
        {
            args.out_dir / f"{algorithm.value}.csv": _records_text(ConvergenceRecord, records)
            for algorithm, records in curves.items()
        }
    )


def cmd_phase_grid(args: argparse.Namespace) -> None:
    config = _config(args)
    timing = not args.no_timing
    result = run_phase_grid(config, resolve_workers(args.workers), timing=timing)
    _write_outputs(
        {
            args.out_dir / "grid.csv": _records_text(GridRecord, result.records),
            args.out_dir / "thresholds.json": _json_text(result.summary(config, timing)),
        }
    )


def cmd_diagnose(args: argparse.Namespace) -> None:
    config = _config(args)
    text = _json_text(diagnose(config, timing=not args.no_timing))
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write_outputs({args.out: text})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxaffine", description="Max-affine regression experiments."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="more logging, repeat for debug"
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, summary: str, config_required: bool = True):
        sub = commands.add_parser(name, help=summary)
        sub.set_defaults(handler=handler)
        source = sub.add_mutually_exclusive_group(required=config_required)
        source.add_argument("--config", type=Path, help="experiment TOML file")
        source.add_argument("--preset", choices=preset_names(), help="bundled experiment")
        sub.add_argument(
            "--no-timing",
            action="store_true",
            help="leave timing columns and timestamps empty for byte-reproducible outputs",
        )
        return sub

    generate = command("generate", cmd_generate, "write a synthetic dataset and its sidecar")
    generate.add_argument("--out", type=Path, required=True, help="dataset CSV path")

    fit = command("fit", cmd_fit, "fit one dataset with one algorithm", config_required=False)
    fit.add_argument("--data", type=Path, required=True, help="dataset CSV path")
    fit.add_argument(
        "--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.GD.value
    )
    fit.add_argument("--out-dir", type=Path, required=True)
    fit.add_argument(
        "--ignore-truth", action="store_true", help="do not use a ground truth from the sidecar"
    )

    for name, handler, summary in (
        ("trace", cmd_trace, "median convergence traces over seeded trials"),
        ("phase-grid", cmd_phase_grid, "success rates over an (n, d) or (n, k) grid"),
    ):
        sub = command(name, handler, summary)
        sub.add_argument("--out-dir", type=Path, required=True)
        sub.add_argument(
            "--workers", type=int, help="worker processes, default $MAXAFFINE_WORKERS or CPU count"
        )

    diag = command("diagnose", cmd_diagnose, "theory quantities of the configured ground truth")
    diag.add_argument("--out", type=Path, help="report JSON path, default stdout")
    return parser


def _setup_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    else:
        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    try:
        args.handler(args)
    except FormulaDomainError as e:
        logger.error("%s", e)
        return EXIT_FORMULA_DOMAIN
    except DivergenceError as e:
        logger.error("%s", e)
        return EXIT_DIVERGED
    except (MaxAffineError, OSError) as e:
        logger.error("%s", e)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

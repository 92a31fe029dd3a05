# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Seeded trials, the phase-transition grid and convergence traces.

Every trial is addressed by `(seed, n, d, k, trial)` and derives its ground truth, dataset,
initialization and solver streams from that address alone. Results are therefore identical for
any worker count, up to the floating point determinism of the linked BLAS.
"""
from __future__ import annotations

import bisect
import logging
import math
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, TypeVar

import numpy as np
from scipy import linalg

from maxaffine.datagen import (
    CovariateLaw,
    Seed,
    child_seed,
    gen_dataset,
    gen_truth_orthonormal,
    gen_truth_sphere,
)
from maxaffine.harness.config import ExperimentConfig, InitMethod, TruthKind
from maxaffine.initialize import InitializationError, moment_init, neighborhood, perturb_init
from maxaffine.metrics import relative_error
from maxaffine.model import Dataset, InputError, ModelParams
from maxaffine.records import csvrecord, float64, log10, millis
from maxaffine.solvers import Algorithm, DivergenceError, SolverRun, solve

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WORKERS_ENV = "MAXAFFINE_WORKERS"
# Reported in place of log10(0), the smallest positive double is about 4.9e-324.
LOG10_FLOOR = -324.0

# Child stream keys below a trial seed.
_TRUTH_STREAM = 0
_DATA_STREAM = 1
_INIT_STREAM = 2
_SOLVER_STREAM = 3

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(requested: int | None = None) -> int:
    """Worker count from `requested`, else `$MAXAFFINE_WORKERS`, else the CPU count."""
    if requested is None:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise InputError(
                    f"maxaffine: {WORKERS_ENV} must be an integer, got {env!r}"
                ) from None
        else:
            requested = os.cpu_count() or 1
    if requested < 1:
        raise InputError(f"maxaffine: worker count must be >= 1, got {requested}")
    return requested


def run_tasks(fn: Callable[[T], R], tasks: Sequence[T], workers: int) -> list[R]:
    """`fn` over `tasks` in task order, on a bounded process pool when `workers > 1`."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def clamped_log10(rel_error: float) -> float:
    return math.log10(rel_error) if rel_error > 0 else LOG10_FLOOR


def median_and_p90(values: Iterable[float]) -> tuple[float | None, float | None]:
    """Median and 90th percentile with linear interpolation, `None` for no values.

    `+inf` values rank above everything else. A percentile interpolating towards one is `+inf`.
    """
    array = np.sort(np.asarray(list(values), dtype=np.float64))
    if array.size == 0:
        return None, None
    finite = int(np.count_nonzero(np.isfinite(array)))
    if finite == array.size:
        median, p90 = np.percentile(array, [50, 90])
        return float(median), float(p90)
    return _percentile(array, finite, 50), _percentile(array, finite, 90)


def _percentile(ordered: np.ndarray, finite: int, q: float) -> float:
    position = (ordered.size - 1) * q / 100
    below = math.floor(position)
    above = math.ceil(position)
    if above >= finite:
        return math.inf
    low, high = float(ordered[below]), float(ordered[above])
    return low + (high - low) * (position - below)


def generated_at(timing: bool = True) -> str | None:
    if not timing:
        return None
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def solver_seed(seed: Seed, algorithm: Algorithm) -> int:
    stream = child_seed(seed, _SOLVER_STREAM, list(Algorithm).index(algorithm))
    return int(stream.generate_state(1, np.uint64)[0])


def trial_seed(master: int, n: int, d: int, k: int, trial: int) -> np.random.SeedSequence:
    return child_seed(master, n, d, k, trial)


@dataclass(frozen=True, slots=True, eq=False)
class Problem:
    truth: ModelParams
    law: CovariateLaw
    data: Dataset


def make_problem(
    config: ExperimentConfig,
    seed: Seed,
    *,
    n: int | None = None,
    d: int | None = None,
    k: int | None = None,
) -> Problem:
    """Ground truth and dataset of `config.data`, with `n`, `d` and `k` optionally replaced."""
    data_config = config.data
    n = data_config.n if n is None else n
    d = data_config.d if d is None else d
    k = data_config.k if k is None else k
    if data_config.truth is TruthKind.ORTHONORMAL:
        truth = gen_truth_orthonormal(k, d, child_seed(seed, _TRUTH_STREAM))
    else:
        truth = gen_truth_sphere(k, d, child_seed(seed, _TRUTH_STREAM))
    law = data_config.covariate_law(d)
    data = gen_dataset(truth, law, n, data_config.sigma, child_seed(seed, _DATA_STREAM))
    return Problem(truth, law, data)


def make_init(
    config: ExperimentConfig,
    data: Dataset,
    k: int,
    truth: ModelParams | None,
    seed: Seed,
    method: InitMethod | None = None,
) -> ModelParams:
    method = config.init.method if method is None else method
    if method is InitMethod.MOMENT:
        return moment_init(data, k)
    if truth is None:
        raise InputError("maxaffine: perturbation init needs a ground truth, use method = moment")
    spec = neighborhood(truth, config.init.radius)
    return perturb_init(truth, spec, child_seed(seed, _INIT_STREAM))


@dataclass(frozen=True, slots=True)
class TrialTask:
    config: ExperimentConfig
    master_seed: int
    n: int
    d: int
    k: int
    trial: int

    @property
    def seed(self) -> np.random.SeedSequence:
        return trial_seed(self.master_seed, self.n, self.d, self.k, self.trial)


@dataclass(frozen=True, slots=True)
class TrialOutcome:
    algorithm: Algorithm
    # None when the run diverged or could not be set up.
    log10_rel_error: float | None
    time_ms: float
    iterations: int


def _setup(task: TrialTask) -> tuple[Problem, ModelParams] | None:
    try:
        problem = make_problem(task.config, task.seed, n=task.n, d=task.d, k=task.k)
        init = make_init(task.config, problem.data, task.k, problem.truth, task.seed)
    except (InitializationError, InputError) as e:
        logger.warning("trial %d at n=%d d=%d k=%d not set up: %s", task.trial, *task_cell(task), e)
        return None
    return problem, init


def task_cell(task: TrialTask) -> tuple[int, int, int]:
    return task.n, task.d, task.k


def run_trial(task: TrialTask) -> tuple[TrialOutcome, ...]:
    """All configured algorithms on one shared dataset and initialization."""
    algorithms = task.config.solver.algorithms
    prepared = _setup(task)
    if prepared is None:
        return tuple(TrialOutcome(algorithm, None, 0.0, 0) for algorithm in algorithms)
    problem, init = prepared
    outcomes = []
    for algorithm in algorithms:
        config = task.config.solver.config_for(algorithm, task.d, solver_seed(task.seed, algorithm))
        try:
            run = solve(problem.data, init, config)
        except (DivergenceError, linalg.LinAlgError) as e:
            logger.warning("trial %d %s at %s: %s", task.trial, algorithm.name, task_cell(task), e)
            outcomes.append(TrialOutcome(algorithm, None, 0.0, 0))
            continue
        report = relative_error(run.final_params, problem.truth)
        outcomes.append(
            TrialOutcome(
                algorithm,
                clamped_log10(report.rel_error),
                run.trace[-1].time_ms,
                run.iterations_used,
            )
        )
    return tuple(outcomes)


@dataclass(frozen=True, slots=True)
class ExperimentGrid:
    """The `n` axis crossed with either a `d` or a `k` axis, the other one held fixed."""

    config: ExperimentConfig

    def __post_init__(self) -> None:
        grid = self.config.grid
        if not grid.n_values:
            raise InputError("maxaffine: [grid] n_values must be given")
        for d, k in self.axis_pairs():
            if self.config.data.truth is TruthKind.ORTHONORMAL and k > d:
                raise InputError(f"maxaffine: orthonormal truths need k <= d, got {k=}, {d=}")

    @property
    def axis(self) -> str:
        return "k" if self.config.grid.k_values else "d"

    def axis_pairs(self) -> list[tuple[int, int]]:
        grid, data = self.config.grid, self.config.data
        if grid.k_values:
            return [(data.d, k) for k in grid.k_values]
        return [(d, data.k) for d in grid.d_values or (data.d,)]

    def cells(self) -> list[tuple[int, int, int]]:
        return [(n, d, k) for d, k in self.axis_pairs() for n in self.config.grid.n_values]

    def tasks(self) -> list[TrialTask]:
        grid = self.config.grid
        return [
            TrialTask(self.config, grid.seed, n, d, k, trial)
            for n, d, k in self.cells()
            for trial in range(grid.trials)
        ]


@csvrecord(frozen=True)
class GridRecord:
    n: int
    d: int
    k: int
    algorithm: Algorithm
    trials: int
    median_log10_rel_error: log10 | None
    p90_log10_rel_error: log10 | None
    success_rate: float64
    mean_time_ms: millis | None
    failures: int


@dataclass(frozen=True, slots=True)
class Threshold:
    algorithm: Algorithm
    d: int
    k: int
    # Smallest n reaching the success level, None when no grid n does.
    n_star: int | None

    def to_dict(self) -> dict[str, Any]:
        return dict(algorithm=self.algorithm.value, d=self.d, k=self.k, n_star=self.n_star)


@dataclass(frozen=True, slots=True, eq=False)
class PhaseGridResult:
    axis: str
    records: tuple[GridRecord, ...]
    thresholds: tuple[Threshold, ...]

    def summary(self, config: ExperimentConfig, timing: bool = True) -> dict[str, Any]:
        grid = config.grid
        return dict(
            schema_version=SCHEMA_VERSION,
            generated_at=generated_at(timing),
            axis=self.axis,
            trials=grid.trials,
            seed=grid.seed,
            threshold_log10=grid.threshold_log10,
            success_level=grid.success_level,
            thresholds=[threshold.to_dict() for threshold in self.thresholds],
        )


def aggregate_cell(
    cell: tuple[int, int, int],
    algorithm: Algorithm,
    outcomes: Sequence[TrialOutcome],
    threshold_log10: float,
    timing: bool = True,
) -> GridRecord:
    n, d, k = cell
    errors = [o.log10_rel_error for o in outcomes if o.log10_rel_error is not None]
    # Failed trials rank as the worst possible error.
    median, p90 = median_and_p90([*errors, *[math.inf] * (len(outcomes) - len(errors))])
    successes = sum(1 for error in errors if error <= threshold_log10)
    times = [o.time_ms for o in outcomes if o.log10_rel_error is not None]
    mean_time = float(np.mean(times)) if timing and times else None
    return GridRecord(
        n=n,
        d=d,
        k=k,
        algorithm=algorithm,
        trials=len(outcomes),
        median_log10_rel_error=median,
        p90_log10_rel_error=p90,
        success_rate=successes / len(outcomes) if outcomes else 0.0,
        mean_time_ms=mean_time,
        failures=len(outcomes) - len(errors),
    )


def find_thresholds(records: Iterable[GridRecord], success_level: float) -> tuple[Threshold, ...]:
    """Per `(algorithm, d, k)`, the smallest `n` whose success rate reaches `success_level`."""
    by_line: dict[tuple[Algorithm, int, int], list[GridRecord]] = {}
    for record in records:
        by_line.setdefault((record.algorithm, record.d, record.k), []).append(record)
    thresholds = []
    for (algorithm, d, k), line in by_line.items():
        passing = [r.n for r in line if r.success_rate >= success_level]
        thresholds.append(Threshold(algorithm, d, k, min(passing) if passing else None))
    return tuple(thresholds)


def run_phase_grid(
    config: ExperimentConfig, workers: int = 1, timing: bool = True
) -> PhaseGridResult:
    grid = ExperimentGrid(config)
    tasks = grid.tasks()
    cells = grid.cells()
    logger.info("phase grid: %d cells, %d trials on %d workers", len(cells), len(tasks), workers)
    results = run_tasks(run_trial, tasks, workers)
    by_cell: dict[tuple[int, int, int], list[tuple[TrialOutcome, ...]]] = {}
    for task, outcomes in zip(tasks, results):
        by_cell.setdefault(task_cell(task), []).append(outcomes)

    records = []
    for cell in cells:
        trials = by_cell[cell]
        for index, algorithm in enumerate(config.solver.algorithms):
            outcomes = [trial[index] for trial in trials]
            record = aggregate_cell(cell, algorithm, outcomes, config.grid.threshold_log10, timing)
            if record.failures:
                logger.warning(
                    "%d of %d %s trials failed at n=%d d=%d k=%d",
                    record.failures,
                    record.trials,
                    algorithm.name,
                    *cell,
                )
            records.append(record)
    thresholds = find_thresholds(records, config.grid.success_level)
    return PhaseGridResult(grid.axis, tuple(records), thresholds)


@dataclass(frozen=True, slots=True)
class TraceTask:
    config: ExperimentConfig
    trial: int

    @property
    def seed(self) -> np.random.SeedSequence:
        data = self.config.data
        return trial_seed(self.config.trace.seed, data.n, data.d, data.k, self.trial)


# Per algorithm `(iteration, time_ms, log10 relative error)` points, None when the run failed.
TracePoints = tuple[tuple[int, float, float], ...]


def run_trace_trial(task: TraceTask) -> tuple[TracePoints | None, ...]:
    config = task.config
    algorithms = config.solver.algorithms
    try:
        problem = make_problem(config, task.seed)
        init = make_init(config, problem.data, config.data.k, problem.truth, task.seed)
    except (InitializationError, InputError) as e:
        logger.warning("trace trial %d not set up: %s", task.trial, e)
        return tuple(None for _ in algorithms)
    traces: list[TracePoints | None] = []
    for algorithm in algorithms:
        seed = solver_seed(task.seed, algorithm)
        solver = config.solver.config_for(algorithm, config.data.d, seed)
        try:
            run = solve(problem.data, init, solver, problem.truth)
        except (DivergenceError, linalg.LinAlgError) as e:
            logger.warning("trace trial %d %s: %s", task.trial, algorithm.name, e)
            traces.append(None)
            continue
        traces.append(_trace_points(run))
    return tuple(traces)


def _trace_points(run: SolverRun) -> TracePoints:
    points = []
    for record in run.trace:
        assert record.rel_error is not None
        points.append((record.iteration, record.time_ms, clamped_log10(record.rel_error)))
    return tuple(points)


@csvrecord(frozen=True)
class ConvergenceRecord:
    iteration: int
    mean_time_ms: millis | None
    median_log10_rel_error: log10


def align_traces(traces: Sequence[TracePoints], timing: bool = True) -> list[ConvergenceRecord]:
    """Aggregate traces on the union of their recorded iterations.

    A trace contributes its latest point at or before every iteration, so runs that stopped
    early hold their final values.
    """
    iterations = sorted({point[0] for trace in traces for point in trace})
    records = []
    for t in iterations:
        times, errors = [], []
        for trace in traces:
            at = bisect.bisect_right([point[0] for point in trace], t) - 1
            if at < 0:
                continue
            _, time_ms, error = trace[at]
            times.append(time_ms)
            errors.append(error)
        records.append(
            ConvergenceRecord(
                iteration=t,
                mean_time_ms=float(np.mean(times)) if timing else None,
                median_log10_rel_error=float(np.median(errors)),
            )
        )
    return records


def run_convergence(
    config: ExperimentConfig, workers: int = 1, timing: bool = True
) -> dict[Algorithm, list[ConvergenceRecord]]:
    tasks = [TraceTask(config, trial) for trial in range(config.trace.trials)]
    logger.info("convergence traces: %d trials on %d workers", len(tasks), workers)
    results = run_tasks(run_trace_trial, tasks, workers)
    curves = {}
    for index, algorithm in enumerate(config.solver.algorithms):
        traces = [trial[index] for trial in results if trial[index] is not None]
        failed = len(results) - len(traces)
        if failed:
            logger.warning("%d of %d %s trace trials failed", failed, len(results), algorithm.name)
        curves[algorithm] = align_traces(traces, timing)
    return curves


@csvrecord(frozen=True)
class FitTraceRecord:
    iteration: int
    loss: float64
    time_ms: millis | None
    rel_error_log10: log10 | None


def fit_trace_records(run: SolverRun, timing: bool = True) -> list[FitTraceRecord]:
    return [
        FitTraceRecord(
            iteration=record.iteration,
            loss=record.loss,
            time_ms=record.time_ms if timing else None,
            rel_error_log10=None if record.rel_error is None else clamped_log10(record.rel_error),
        )
        for record in run.trace
    ]

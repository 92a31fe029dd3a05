# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
import io
import math

import pytest

from maxaffine.harness.config import parse_config
from maxaffine.harness.experiments import (
    LOG10_FLOOR,
    WORKERS_ENV,
    ExperimentGrid,
    GridRecord,
    TrialOutcome,
    aggregate_cell,
    align_traces,
    clamped_log10,
    find_thresholds,
    make_problem,
    median_and_p90,
    resolve_workers,
    run_convergence,
    run_phase_grid,
    run_trial,
    trial_seed,
)
from maxaffine.model import InputError
from maxaffine.records import read_records, write_records
from maxaffine.solvers import Algorithm


def grid_config(**grid):
    return parse_config(
        {
            "data": {"k": 2, "d": 3, "sigma": 0.0},
            "init": {"radius": 0.1},
            "solver": {"algorithms": ["am", "gd"], "max_iters": 200},
            "grid": {"n_values": [200, 400], "trials": 2, **grid},
        }
    )


def test_median_and_p90() -> None:
    assert (3.0, 4.6) == pytest.approx(median_and_p90([5, 1, 4, 2, 3]))
    assert (None, None) == median_and_p90([])
    assert (-2.0, -2.0) == median_and_p90([-2.0])
    assert (-5.5, math.inf) == median_and_p90([-8.0, -4.0, math.inf, -7.0])
    assert (math.inf, math.inf) == median_and_p90([math.inf])


def test_clamped_log10() -> None:
    assert LOG10_FLOOR == clamped_log10(0.0)
    assert -3.0 == pytest.approx(clamped_log10(1e-3))


def test_resolve_workers(monkeypatch) -> None:
    assert 3 == resolve_workers(3)
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert 2 == resolve_workers()
    assert 5 == resolve_workers(5)
    monkeypatch.setenv(WORKERS_ENV, "many")
    with pytest.raises(InputError):
        resolve_workers()
    with pytest.raises(InputError):
        resolve_workers(0)
    monkeypatch.delenv(WORKERS_ENV)
    assert 1 <= resolve_workers()


def test_trial_seeds_depend_on_the_cell() -> None:
    config = grid_config()
    first = make_problem(config, trial_seed(0, 200, 3, 2, 0), n=200)
    again = make_problem(config, trial_seed(0, 200, 3, 2, 0), n=200)
    other = make_problem(config, trial_seed(0, 200, 3, 2, 1), n=200)
    assert first.data == again.data and first.truth == again.truth
    assert first.truth != other.truth


def test_grid_cells() -> None:
    grid = ExperimentGrid(grid_config(d_values=[3, 5]))
    assert "d" == grid.axis
    assert [(200, 3, 2), (400, 3, 2), (200, 5, 2), (400, 5, 2)] == grid.cells()
    assert 8 == len(grid.tasks())
    grid = ExperimentGrid(grid_config(k_values=[1, 3]))
    assert "k" == grid.axis
    assert [(200, 3, 1), (400, 3, 1), (200, 3, 3), (400, 3, 3)] == grid.cells()


def test_grid_checks() -> None:
    with pytest.raises(InputError):
        ExperimentGrid(grid_config(k_values=[2, 4]))
    with pytest.raises(InputError):
        ExperimentGrid(parse_config({}))


def test_aggregate_cell() -> None:
    outcomes = [
        TrialOutcome(Algorithm.GD, -8.0, 2.0, 10),
        TrialOutcome(Algorithm.GD, -4.0, 4.0, 10),
        TrialOutcome(Algorithm.GD, None, 0.0, 0),
        TrialOutcome(Algorithm.GD, -7.0, 6.0, 10),
    ]
    record = aggregate_cell((100, 5, 2), Algorithm.GD, outcomes, threshold_log10=-6.0)
    assert 4 == record.trials
    assert 1 == record.failures
    assert 0.5 == record.success_rate
    # The failed trial ranks last: [-8, -7, -4, inf].
    assert -5.5 == record.median_log10_rel_error
    assert math.inf == record.p90_log10_rel_error
    assert 4.0 == record.mean_time_ms
    untimed = aggregate_cell((100, 5, 2), Algorithm.GD, outcomes, -6.0, timing=False)
    assert untimed.mean_time_ms is None


def test_failures_raise_the_median() -> None:
    outcomes = [TrialOutcome(Algorithm.SGD, -9.0, 1.0, 10)]
    outcomes += [TrialOutcome(Algorithm.SGD, None, 0.0, 0)] * 4
    record = aggregate_cell((100, 5, 2), Algorithm.SGD, outcomes, threshold_log10=-6.0)
    assert 0.2 == record.success_rate
    assert math.inf == record.median_log10_rel_error
    assert math.inf == record.p90_log10_rel_error
    assert 1.0 == record.mean_time_ms


def test_aggregate_failed_cell() -> None:
    outcomes = [TrialOutcome(Algorithm.AM, None, 0.0, 0)] * 3
    record = aggregate_cell((10, 5, 2), Algorithm.AM, outcomes, threshold_log10=-6.0)
    assert 3 == record.failures
    assert 0.0 == record.success_rate
    assert math.inf == record.median_log10_rel_error
    assert math.inf == record.p90_log10_rel_error
    assert record.mean_time_ms is None


def test_failed_cells_are_written_as_inf() -> None:
    outcomes = [TrialOutcome(Algorithm.AM, None, 0.0, 0)] * 2
    record = aggregate_cell((10, 5, 2), Algorithm.AM, outcomes, -6.0, timing=False)
    buffer = io.StringIO()
    write_records(buffer, GridRecord, [record])
    assert "10,5,2,am,2,inf,inf,0.0,,2" == buffer.getvalue().splitlines()[1]
    buffer.seek(0)
    assert [record] == list(read_records(buffer, GridRecord))


def record(n: int, rate: float, algorithm: Algorithm = Algorithm.GD) -> GridRecord:
    return GridRecord(n, 5, 2, algorithm, 10, -7.0, -6.0, rate, None, 0)


def test_find_thresholds() -> None:
    records = [
        record(100, 0.0),
        record(200, 0.5),
        record(400, 0.4),
        record(800, 1.0),
        record(100, 0.1, Algorithm.AM),
    ]
    thresholds = {t.algorithm: t.n_star for t in find_thresholds(records, 0.5)}
    assert {Algorithm.GD: 200, Algorithm.AM: None} == thresholds


def test_align_traces() -> None:
    traces = [
        ((0, 0.0, -1.0), (10, 1.0, -3.0)),
        ((0, 0.0, -2.0), (5, 0.5, -4.0)),
    ]
    records = align_traces(traces)
    assert [0, 5, 10] == [r.iteration for r in records]
    assert [-1.5, -2.5, -3.5] == [r.median_log10_rel_error for r in records]
    assert [0.0, 0.25, 0.75] == [r.mean_time_ms for r in records]
    assert all(r.mean_time_ms is None for r in align_traces(traces, timing=False))


@pytest.mark.timeout(120)
def test_phase_grid() -> None:
    config = grid_config()
    result = run_phase_grid(config, workers=1, timing=False)
    assert "d" == result.axis
    assert 4 == len(result.records)
    assert [(200, "am"), (200, "gd"), (400, "am"), (400, "gd")] == [
        (r.n, r.algorithm.value) for r in result.records
    ]
    for r in result.records:
        assert 2 == r.trials
        assert r.mean_time_ms is None
    am = [r for r in result.records if r.algorithm is Algorithm.AM]
    assert all(1.0 == r.success_rate for r in am)
    assert {Algorithm.AM: 200} == {
        t.algorithm: t.n_star for t in result.thresholds if t.algorithm is Algorithm.AM
    }
    summary = result.summary(config, timing=False)
    assert 1 == summary["schema_version"]
    assert summary["generated_at"] is None
    assert "generated_at" in result.summary(config)
    assert result.records == run_phase_grid(config, workers=1, timing=False).records


@pytest.mark.timeout(120)
def test_phase_grid_is_independent_of_workers() -> None:
    config = grid_config()
    serial = run_phase_grid(config, workers=1, timing=False)
    parallel = run_phase_grid(config, workers=2, timing=False)
    assert serial.records == parallel.records
    assert serial.thresholds == parallel.thresholds


@pytest.mark.timeout(120)
def test_convergence_traces() -> None:
    config = parse_config(
        {
            "data": {"k": 2, "d": 3, "n": 500, "truth": "sphere"},
            "solver": {"algorithms": ["gd", "sgd"], "max_iters": 40, "tol": 0, "record_every": 10},
            "trace": {"trials": 3},
        }
    )
    curves = run_convergence(config, workers=1)
    assert [Algorithm.GD, Algorithm.SGD] == list(curves)
    gd = curves[Algorithm.GD]
    assert [0, 10, 20, 30, 40] == [r.iteration for r in gd]
    assert gd[-1].median_log10_rel_error < gd[0].median_log10_rel_error
    assert all(r.mean_time_ms is not None and r.mean_time_ms >= 0 for r in gd)
    assert not math.isnan(curves[Algorithm.SGD][-1].median_log10_rel_error)


@pytest.mark.timeout(120)
def test_adding_trials_keeps_earlier_outcomes() -> None:
    def outcomes(trials: int) -> dict[tuple[int, int], list[tuple]]:
        tasks = ExperimentGrid(grid_config(trials=trials)).tasks()
        return {
            (task.n, task.trial): [
                (o.algorithm, o.log10_rel_error, o.iterations) for o in run_trial(task)
            ]
            for task in tasks
        }

    fewer, more = outcomes(2), outcomes(3)
    assert 6 == len(more)
    assert fewer == {key: value for key, value in more.items() if key[1] < 2}


@pytest.mark.timeout(300)
def test_success_rises_with_the_sample_count() -> None:
    config = parse_config(
        {
            "data": {"k": 2, "d": 3, "sigma": 0.0},
            "init": {"radius": 0.1},
            "solver": {"algorithms": ["gd", "sgd"], "max_iters": 1000},
            "grid": {"n_values": [4, 100, 400], "trials": 4},
        }
    )
    result = run_phase_grid(config, workers=1, timing=False)
    for algorithm in (Algorithm.GD, Algorithm.SGD):
        rates = [r.success_rate for r in result.records if r.algorithm is algorithm]
        assert rates == sorted(rates)
        assert 0.0 == rates[0]
        assert 1.0 == rates[-1]
    n_star = {t.algorithm: t.n_star for t in result.thresholds}
    assert n_star[Algorithm.SGD] <= n_star[Algorithm.GD]

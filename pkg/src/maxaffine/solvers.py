# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Gradient descent, mini-batch SGD and alternating minimization for max-affine regression."""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt
from scipy import linalg
from typing_extensions import Self

from maxaffine.datagen import make_rng
from maxaffine.metrics import relative_error
from maxaffine.model import (
    Dataset,
    FloatArray,
    IndexArray,
    InputError,
    MaxAffineError,
    ModelParams,
    assign_cells,
    check_dimensions,
    check_same_shape,
)
from maxaffine.objective import loss, loss_and_gradient, minibatch_gradient

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
GD_STEP_SIZE = 0.5
DEFAULT_BATCH_SIZE = 64
# Abort once the loss exceeds this multiple of the initial loss.
DIVERGENCE_FACTOR = 1e12


class Algorithm(Enum):
    GD = "gd"
    SGD = "sgd"
    AM = "am"


class DivergenceError(MaxAffineError, ArithmeticError):
    def __init__(self, message: str, last_params: ModelParams, iteration: int) -> None:
        super().__init__(message)
        self.last_params = last_params
        self.iteration = iteration


def sgd_step_size(batch_size: int, d: int) -> float:
    """`(1 ^ m/d) / 2`, the step size adapted to the batch size."""
    return min(1.0, batch_size / d) / 2


@dataclass(frozen=True, slots=True)
class SolverConfig:
    algorithm: Algorithm
    step_size: float = GD_STEP_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_iters: int = 500
    tol: float = DEFAULT_TOL
    seed: int = 0
    # Full-loss trace stride, mostly for SGD where a full loss costs n/m steps.
    record_every: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.algorithm, Algorithm):
            try:
                object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
            except ValueError as e:
                raise InputError(f"maxaffine: unknown algorithm {self.algorithm!r}") from e
        if self.algorithm is not Algorithm.AM and not (
            math.isfinite(self.step_size) and self.step_size > 0
        ):
            raise InputError(f"maxaffine: step size must be positive, got {self.step_size=}")
        if self.batch_size < 1:
            raise InputError(f"maxaffine: batch size must be >= 1, got {self.batch_size=}")
        if self.max_iters < 0:
            raise InputError(f"maxaffine: iteration budget must be >= 0, got {self.max_iters=}")
        if not self.tol >= 0:
            raise InputError(f"maxaffine: tolerance must be >= 0, got {self.tol=}")
        if not 0 <= self.seed < 2**64:
            raise InputError(f"maxaffine: seed must be a 64-bit unsigned integer, got {self.seed=}")
        if self.record_every < 1:
            raise InputError(f"maxaffine: record stride must be >= 1, got {self.record_every=}")

    @classmethod
    def default(
        cls, algorithm: Algorithm | str, d: int, batch_size: int = DEFAULT_BATCH_SIZE, **kwargs
    ) -> Self:
        """Configuration with the step sizes used in the experiments.

        GD uses the constant 0.5, SGD uses `(1 ^ m/d) / 2`, AM has no step size.
        """
        algorithm = Algorithm(algorithm)
        if "step_size" not in kwargs and algorithm is Algorithm.SGD:
            kwargs["step_size"] = sgd_step_size(batch_size, d)
        return cls(algorithm, batch_size=batch_size, **kwargs)

    def replace(self, **changes) -> SolverConfig:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """State after `iteration` updates.

    `time_ms` is the cumulative solver time, trace bookkeeping excluded. `distance` and
    `rel_error` are only known when the ground truth is.
    """

    iteration: int
    loss: float
    time_ms: float
    distance: float | None = None
    rel_error: float | None = None

    @property
    def log10_rel_error(self) -> float | None:
        if self.rel_error is None:
            return None
        return math.log10(self.rel_error) if self.rel_error > 0 else -math.inf


@dataclass(frozen=True, slots=True, eq=False)
class SolverRun:
    algorithm: Algorithm
    final_params: ModelParams
    trace: tuple[TraceRecord, ...]
    converged: bool
    iterations_used: int

    @property
    def final_loss(self) -> float:
        return self.trace[-1].loss


BatchSampler = Callable[[np.random.Generator, int, int], npt.ArrayLike]


def uniform_batches(rng: np.random.Generator, n: int, m: int) -> IndexArray:
    """m indices drawn uniformly from range(n) with replacement."""
    return rng.integers(0, n, size=m)


class _Tracker:
    """Keeps the trace, the solver clock and the divergence guard of one run."""

    def __init__(self, config: SolverConfig, data: Dataset, truth: ModelParams | None) -> None:
        self.config = config
        self.data = data
        self.truth = truth
        self.elapsed_ns = 0
        self.records: list[TraceRecord] = []
        self.initial_loss: float | None = None
        self.last_params: ModelParams | None = None

    @contextmanager
    def timed(self) -> Iterator[None]:
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            self.elapsed_ns += time.perf_counter_ns() - start

    def due(self, t: int) -> bool:
        return t % self.config.record_every == 0 or t == self.config.max_iters

    def record(self, t: int, params: ModelParams, loss_value: float | None = None) -> None:
        if loss_value is None:
            loss_value = loss(params, self.data)
        self.check(t, params, loss_value)
        distance = rel = None
        if self.truth is not None:
            distance = params.distance(self.truth)
            rel = relative_error(params, self.truth).rel_error
        self.records.append(TraceRecord(t, loss_value, self.elapsed_ns / 1e6, distance, rel))
        logger.debug("%s iteration %d loss %.6e", self.config.algorithm.name, t, loss_value)

    def check(self, t: int, params: ModelParams, loss_value: float) -> None:
        if self.initial_loss is None:
            self.initial_loss = loss_value
        limit = DIVERGENCE_FACTOR * max(self.initial_loss, np.finfo(np.float64).tiny)
        if not math.isfinite(loss_value) or loss_value > limit:
            self.diverged(t, f"loss {loss_value:.3e} exceeds {limit:.3e}")
        self.last_params = params

    def step(self, t: int, params: ModelParams, blocks: FloatArray) -> ModelParams:
        if not np.all(np.isfinite(blocks)):
            self.last_params = params
            self.diverged(t, "non-finite iterate")
        return ModelParams(blocks)

    def diverged(self, t: int, reason: str) -> None:
        assert self.last_params is not None
        name = self.config.algorithm.name
        logger.warning("%s diverged at iteration %d: %s", name, t, reason)
        raise DivergenceError(
            f"maxaffine: {name} diverged at iteration {t}: {reason}", self.last_params, t
        )

    def finish(self, params: ModelParams, converged: bool, iterations: int) -> SolverRun:
        if not self.records or self.records[-1].iteration != iterations:
            self.record(iterations, params)
        logger.info(
            "%s %s after %d iterations, loss %.6e",
            self.config.algorithm.name,
            "converged" if converged else "stopped",
            iterations,
            self.records[-1].loss,
        )
        return SolverRun(self.config.algorithm, params, tuple(self.records), converged, iterations)


def _check_inputs(
    algorithm: Algorithm,
    data: Dataset,
    init: ModelParams,
    config: SolverConfig,
    truth: ModelParams | None,
) -> None:
    if config.algorithm is not algorithm:
        raise InputError(f"maxaffine: {config.algorithm.name} settings given to {algorithm.name}")
    check_dimensions(init, data)
    if truth is not None:
        check_same_shape(init, truth)
    if data.n < 1:
        raise InputError("maxaffine: can not fit an empty dataset")


def run_gd(
    data: Dataset, init: ModelParams, config: SolverConfig, truth: ModelParams | None = None
) -> SolverRun:
    """Gradient descent with constant step, `beta <- beta - mu * grad l(beta)`.

    Stops when the step `mu * grad` has norm at most `tol`, a stationary start therefore reports
    convergence after 0 iterations.
    """
    _check_inputs(Algorithm.GD, data, init, config, truth)
    tracker = _Tracker(config, data, truth)
    params = init
    converged = False
    t = 0
    while True:
        with tracker.timed():
            loss_value, grad = loss_and_gradient(params, data)
        if tracker.due(t) or t == 0:
            tracker.record(t, params, loss_value)
        else:
            tracker.check(t, params, loss_value)
        if t >= config.max_iters:
            break
        with tracker.timed():
            delta = config.step_size * grad.blocks
            if float(np.linalg.norm(delta)) <= config.tol:
                converged = True
            else:
                params = tracker.step(t + 1, params, params.blocks - delta)
        if converged:
            break
        t += 1
    return tracker.finish(params, converged, t)


def run_sgd(
    data: Dataset,
    init: ModelParams,
    config: SolverConfig,
    truth: ModelParams | None = None,
    batch_sampler: BatchSampler = uniform_batches,
) -> SolverRun:
    """Mini-batch SGD, each step uses m indices drawn with replacement from the seeded stream."""
    _check_inputs(Algorithm.SGD, data, init, config, truth)
    tracker = _Tracker(config, data, truth)
    rng = make_rng(config.seed)
    params = init
    tracker.record(0, params)
    converged = False
    t = 0
    while t < config.max_iters:
        with tracker.timed():
            batch = batch_sampler(rng, data.n, config.batch_size)
            delta = config.step_size * minibatch_gradient(params, data, batch).blocks
            if float(np.linalg.norm(delta)) <= config.tol:
                converged = True
            else:
                params = tracker.step(t + 1, params, params.blocks - delta)
        if converged:
            break
        t += 1
        if tracker.due(t):
            tracker.record(t, params)
    return tracker.finish(params, converged, t)


def run_am(
    data: Dataset, init: ModelParams, config: SolverConfig, truth: ModelParams | None = None
) -> SolverRun:
    """Alternate between assigning cells and per-cell least squares.

    Cells left empty keep their previous block. Rank deficient cells get the minimum norm
    least-squares solution.
    """
    _check_inputs(Algorithm.AM, data, init, config, truth)
    tracker = _Tracker(config, data, truth)
    lifted = data.lifted()
    params = init
    tracker.record(0, params)
    converged = False
    t = 0
    while t < config.max_iters:
        with tracker.timed():
            partition = assign_cells(params, data)
            blocks = params.blocks.copy()
            for j in range(params.k):
                members = partition.members(j)
                if members.size == 0:
                    continue
                blocks[j] = linalg.lstsq(lifted[members], data.responses[members])[0]
            change = float(np.linalg.norm(blocks - params.blocks))
            params = tracker.step(t + 1, params, blocks)
        t += 1
        converged = change <= config.tol
        if tracker.due(t) or converged:
            tracker.record(t, params)
        if converged:
            break
    return tracker.finish(params, converged, t)


def solve(
    data: Dataset, init: ModelParams, config: SolverConfig, truth: ModelParams | None = None
) -> SolverRun:
    match config.algorithm:
        case Algorithm.GD:
            return run_gd(data, init, config, truth)
        case Algorithm.SGD:
            return run_sgd(data, init, config, truth)
        case Algorithm.AM:
            return run_am(data, init, config, truth)
    raise AssertionError(f"unhandled {config.algorithm=}")

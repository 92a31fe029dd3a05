# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Permutation invariant estimation and prediction errors."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from maxaffine.datagen import CovariateLaw, Seed, make_rng
from maxaffine.model import (
    InputError,
    MaxAffineError,
    ModelParams,
    check_same_shape,
    evaluate,
)

# Largest k for which all k! block matchings are enumerated.
EXHAUSTIVE_MAX_K = 8
SUCCESS_LOG10 = -6.0


class UndefinedRatioError(MaxAffineError, ZeroDivisionError):
    pass


@dataclass(frozen=True, slots=True)
class ErrorReport:
    """`best_permutation[j]` is the estimate block matched with truth block j."""

    rel_error: float
    best_permutation: tuple[int, ...]
    prediction_error: float | None = None

    def __post_init__(self) -> None:
        assert self.rel_error >= 0, f"{self.rel_error=}"

    @property
    def log10_rel_error(self) -> float:
        return math.log10(self.rel_error) if self.rel_error > 0 else -math.inf

    def success(self, threshold_log10: float = SUCCESS_LOG10) -> bool:
        return classify_success(self, threshold_log10)


def block_distances(estimate: ModelParams, truth: ModelParams) -> np.ndarray:
    """k x k matrix of `||beta_hat_i - beta*_j||^2`."""
    check_same_shape(estimate, truth)
    diff = estimate.blocks[:, None, :] - truth.blocks[None, :, :]
    return np.einsum("ijl,ijl->ij", diff, diff)


def squared_distance(
    estimate: ModelParams, truth: ModelParams, permutation: tuple[int, ...]
) -> float:
    cost = block_distances(estimate, truth)
    return float(sum(cost[permutation[j], j] for j in range(truth.k)))


def relative_error(estimate: ModelParams, truth: ModelParams) -> ErrorReport:
    """Minimum over block matchings of the squared error, relative to the squared truth norm."""
    check_same_shape(estimate, truth)
    denominator = float(np.sum(truth.blocks**2))
    if denominator == 0:
        raise UndefinedRatioError("maxaffine: relative error against an all-zero ground truth")
    cost = block_distances(estimate, truth)
    if truth.k <= EXHAUSTIVE_MAX_K:
        best = _exhaustive_matching(cost)
    else:
        rows, cols = linear_sum_assignment(cost)
        best = tuple(int(r) for _, r in sorted(zip(cols, rows)))
    numerator = float(sum(cost[best[j], j] for j in range(truth.k)))
    return ErrorReport(numerator / denominator, best)


def _exhaustive_matching(cost: np.ndarray) -> tuple[int, ...]:
    k = cost.shape[0]
    columns = np.arange(k)
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.intp)
    totals = cost[perms, columns].sum(axis=1)
    return tuple(int(i) for i in perms[int(np.argmin(totals))])


def prediction_error(
    estimate: ModelParams,
    truth: ModelParams,
    law: CovariateLaw,
    mc_samples: int,
    seed: Seed,
) -> float:
    """Monte-Carlo estimate of `E (max_j <xi, beta_hat_j> - max_j <xi, beta*_j>)^2`."""
    check_same_shape(estimate, truth)
    if mc_samples < 1000:
        raise InputError(f"maxaffine: at least 1000 Monte-Carlo samples needed, got {mc_samples=}")
    if law.d != truth.d:
        raise InputError(f"maxaffine: {law.d=} does not match {truth.d=}")
    covariates = law.sample(mc_samples, make_rng(seed))
    gap = evaluate(estimate, covariates) - evaluate(truth, covariates)
    return float(np.mean(gap**2))


def classify_success(report: ErrorReport, threshold_log10: float = SUCCESS_LOG10) -> bool:
    return report.log10_rel_error <= threshold_log10

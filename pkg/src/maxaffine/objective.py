# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Least-squares loss of the max-affine model and its (sub)gradients.

At points where a sample sits on a cell boundary the gradient returned is the subgradient picked
by the smallest-index tie-break of `assign_cells`.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from maxaffine.model import (
    Dataset,
    FloatArray,
    InputError,
    ModelParams,
    cell_scores,
    check_dimensions,
)


@dataclass(frozen=True, slots=True, eq=False)
class Gradient:
    """Gradient with respect to each block `beta_j`, same k x (d+1) layout as `ModelParams`."""

    blocks: FloatArray

    def __post_init__(self) -> None:
        assert self.blocks.ndim == 2

    @property
    def vector(self) -> FloatArray:
        return self.blocks.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.blocks))


def _check_nonempty(data: Dataset) -> None:
    if data.n < 1:
        raise InputError("maxaffine: the loss is undefined on an empty dataset")


def _residuals_and_cells(
    params: ModelParams, covariates: FloatArray, responses: FloatArray
) -> tuple[FloatArray, npt.NDArray[np.intp]]:
    scores = cell_scores(params, covariates)
    cells = np.argmax(scores, axis=1)
    fitted = np.take_along_axis(scores, cells[:, None], axis=1)[:, 0]
    return fitted - responses, cells


def _cell_sums(
    k: int,
    covariates: FloatArray,
    residuals: FloatArray,
    cells: npt.NDArray[np.intp],
) -> FloatArray:
    """Per cell `sum_i r_i [x_i; 1]`, summed cell by cell in a fixed order."""
    d = covariates.shape[1]
    blocks = np.zeros((k, d + 1))
    for j in range(k):
        mask = cells == j
        if not mask.any():
            continue
        r = residuals[mask]
        blocks[j, :d] = (covariates[mask] * r[:, None]).sum(axis=0)
        blocks[j, d] = r.sum()
    return blocks


def loss(params: ModelParams, data: Dataset) -> float:
    """`(1/2n) sum_i (y_i - max_j <xi_i, beta_j>)^2`."""
    check_dimensions(params, data)
    _check_nonempty(data)
    residuals, _ = _residuals_and_cells(params, data.covariates, data.responses)
    return float(0.5 * np.mean(residuals**2))


def gradient(params: ModelParams, data: Dataset) -> Gradient:
    check_dimensions(params, data)
    _check_nonempty(data)
    residuals, cells = _residuals_and_cells(params, data.covariates, data.responses)
    return Gradient(_cell_sums(params.k, data.covariates, residuals, cells) / data.n)


def loss_and_gradient(params: ModelParams, data: Dataset) -> tuple[float, Gradient]:
    """Both quantities from a single evaluation of the piece values."""
    check_dimensions(params, data)
    _check_nonempty(data)
    residuals, cells = _residuals_and_cells(params, data.covariates, data.responses)
    grad = Gradient(_cell_sums(params.k, data.covariates, residuals, cells) / data.n)
    return float(0.5 * np.mean(residuals**2)), grad


def sample_gradient(params: ModelParams, data: Dataset, i: int) -> Gradient:
    """Gradient of `l_i = (1/2)(y_i - max_j <xi_i, beta_j>)^2`, nonzero only in block j(i)."""
    check_dimensions(params, data)
    if not 0 <= i < data.n:
        raise InputError(f"maxaffine: sample index {i=} out of range for n={data.n}")
    return minibatch_gradient(params, data, [i])


def minibatch_gradient(params: ModelParams, data: Dataset, batch: Sequence[int]) -> Gradient:
    """`(1/m) sum_{i in batch} sample_gradient(i)` for a multiset of indices."""
    check_dimensions(params, data)
    batch = np.asarray(batch, dtype=np.intp)
    if batch.ndim != 1 or batch.size == 0:
        raise InputError("maxaffine: the mini-batch must be a nonempty list of indices")
    if batch.min() < 0 or batch.max() >= data.n:
        raise InputError(f"maxaffine: mini-batch indices out of range for n={data.n}")
    # Repeated indices are kept, so each draw counts with its multiplicity.
    covariates = data.covariates[batch]
    residuals, cells = _residuals_and_cells(params, covariates, data.responses[batch])
    return Gradient(_cell_sums(params.k, covariates, residuals, cells) / batch.size)

# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Max-affine model parameters, datasets and partition cells.

The model is `f(x) = max_j (<x, theta_j> + b_j)`. Parameters are kept as a k x (d+1) matrix whose
row j is the block `beta_j = [theta_j; b_j]`, so `<xi, beta_j>` with the lifted covariate
`xi = [x; 1]` is the value of piece j.
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
from typing_extensions import Self

FloatArray = npt.NDArray[np.float64]
IndexArray = npt.NDArray[np.intp]


class MaxAffineError(Exception):
    pass


class InputError(MaxAffineError, ValueError):
    pass


def _frozen(values: Any, ndim: int, what: str) -> FloatArray:
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise InputError(f"maxaffine: {what} must be {ndim}-dimensional, got {array.shape=}")
    if not np.all(np.isfinite(array)):
        raise InputError(f"maxaffine: {what} has non-finite entries")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True)
class ModelParams:
    """Stacked parameters of k affine pieces in dimension d."""

    blocks: FloatArray

    def __post_init__(self) -> None:
        blocks = _frozen(self.blocks, 2, "parameter blocks")
        if blocks.shape[0] < 1 or blocks.shape[1] < 2:
            raise InputError(f"maxaffine: need k >= 1 blocks of length d+1 >= 2, {blocks.shape=}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_parts(cls, slopes: npt.ArrayLike, offsets: npt.ArrayLike | None = None) -> Self:
        slopes = np.atleast_2d(np.asarray(slopes, dtype=np.float64))
        if offsets is None:
            offsets = np.zeros(slopes.shape[0])
        offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 1)
        if offsets.shape[0] != slopes.shape[0]:
            raise InputError(f"maxaffine: {slopes.shape=} does not match {offsets.shape=}")
        return cls(np.hstack([slopes, offsets]))

    @classmethod
    def from_vector(cls, vector: npt.ArrayLike, k: int, d: int) -> Self:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (k * (d + 1),):
            raise InputError(f"maxaffine: stacked vector of {vector.shape=} for {k=}, {d=}")
        return cls(vector.reshape(k, d + 1))

    @property
    def k(self) -> int:
        return self.blocks.shape[0]

    @property
    def d(self) -> int:
        return self.blocks.shape[1] - 1

    @property
    def slopes(self) -> FloatArray:
        return self.blocks[:, :-1]

    @property
    def offsets(self) -> FloatArray:
        return self.blocks[:, -1]

    @property
    def vector(self) -> FloatArray:
        """The stacked parameter vector in R^{k(d+1)}."""
        return self.blocks.reshape(-1)

    def permuted(self, order: Sequence[int]) -> ModelParams:
        """Blocks reordered so that block j of the result is block `order[j]` of this one."""
        order = list(order)
        if sorted(order) != list(range(self.k)):
            raise InputError(f"maxaffine: {order=} is not a permutation of range({self.k})")
        return ModelParams(self.blocks[order])

    def replace_block(self, j: int, block: npt.ArrayLike) -> ModelParams:
        blocks = self.blocks.copy()
        blocks[j] = block
        return ModelParams(blocks)

    def distance(self, other: ModelParams) -> float:
        """Euclidean distance of the stacked vectors, without any block permutation."""
        check_same_shape(self, other)
        return float(np.linalg.norm(self.blocks - other.blocks))

    def to_dict(self) -> dict[str, Any]:
        return dict(k=self.k, d=self.d, blocks=self.blocks.tolist())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Self:
        try:
            params = cls(np.asarray(data["blocks"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"maxaffine: ill-formed parameter mapping: {e}") from e
        for key, value in (("k", params.k), ("d", params.d)):
            if key in data and data[key] != value:
                raise InputError(f"maxaffine: parameter {key}={data[key]} but blocks give {value}")
        return params

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.blocks.shape == other.blocks.shape and bool(
            np.array_equal(self.blocks, other.blocks)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class Dataset:
    """Covariates `x_i` and responses `y_i`.

    The lifted covariate `[x_i; 1]` is never stored, see `lifted()`. `noise` holds the realised
    additive noise when the dataset was generated synthetically and the generator kept it.
    """

    covariates: FloatArray
    responses: FloatArray
    sigma: float = 0.0
    noise: FloatArray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        covariates = _frozen(self.covariates, 2, "covariates")
        responses = _frozen(self.responses, 1, "responses")
        if covariates.shape[0] != responses.shape[0]:
            raise InputError(
                f"maxaffine: {covariates.shape[0]} covariate rows, {responses.shape[0]} responses"
            )
        if covariates.shape[1] < 1:
            raise InputError("maxaffine: covariate dimension must be at least 1")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise InputError(f"maxaffine: noise level must be finite and >= 0, got {self.sigma=}")
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.noise is not None:
            object.__setattr__(self, "noise", _frozen(self.noise, 1, "noise"))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def lifted(self) -> FloatArray:
        """Fresh n x (d+1) matrix of `[x_i; 1]` rows."""
        return np.hstack([self.covariates, np.ones((self.n, 1))])

    def subset(self, indices: npt.ArrayLike) -> Dataset:
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.covariates[indices],
            self.responses[indices],
            self.sigma,
            None if self.noise is None else self.noise[indices],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sigma == other.sigma
            and self.covariates.shape == other.covariates.shape
            and bool(np.array_equal(self.covariates, other.covariates))
            and bool(np.array_equal(self.responses, other.responses))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True, eq=False)
class Partition:
    """Maximising cell index per sample and the cell occupancy counts."""

    assignment: IndexArray
    cell_counts: IndexArray

    def __post_init__(self) -> None:
        assert self.assignment.ndim == 1 and self.cell_counts.ndim == 1
        assert int(self.cell_counts.sum()) == self.assignment.shape[0]

    @property
    def k(self) -> int:
        return self.cell_counts.shape[0]

    def members(self, j: int) -> IndexArray:
        return np.flatnonzero(self.assignment == j)


def check_same_shape(params: ModelParams, other: ModelParams) -> None:
    if params.blocks.shape != other.blocks.shape:
        raise InputError(
            f"maxaffine: parameter shapes differ, {params.blocks.shape} != {other.blocks.shape}"
        )


def check_dimensions(params: ModelParams, data: Dataset) -> None:
    if params.d != data.d:
        raise InputError(f"maxaffine: dimension mismatch, {params.d=} but {data.d=}")


def cell_scores(params: ModelParams, covariates: npt.ArrayLike) -> FloatArray:
    """n x k matrix of the piece values `<xi_i, beta_j>`."""
    covariates = np.asarray(covariates, dtype=np.float64)
    if covariates.ndim != 2 or covariates.shape[1] != params.d:
        raise InputError(f"maxaffine: covariates of {covariates.shape=} for {params.d=}")
    # One product per piece, so a column does not depend on the position of its block.
    columns = [covariates @ params.slopes[j] for j in range(params.k)]
    return np.stack(columns, axis=1) + params.offsets


def predict(params: ModelParams, x: npt.ArrayLike) -> float:
    """Value at one covariate, the same arithmetic as a row of `evaluate`."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d,):
        raise InputError(f"maxaffine: covariate of {x.shape=} for {params.d=}")
    if not np.all(np.isfinite(x)):
        raise InputError("maxaffine: covariate has non-finite entries")
    return float(cell_scores(params, x[np.newaxis, :]).max(axis=1)[0])


def evaluate(params: ModelParams, covariates: npt.ArrayLike) -> FloatArray:
    """`predict` for every row of an n x d matrix."""
    return cell_scores(params, covariates).max(axis=1)


def assign_cells(params: ModelParams, data: Dataset) -> Partition:
    check_dimensions(params, data)
    # argmax reports the first maximum, which is the smallest maximizing index.
    assignment = np.argmax(cell_scores(params, data.covariates), axis=1).astype(np.intp)
    counts = np.bincount(assignment, minlength=params.k).astype(np.intp)
    return Partition(assignment, counts)


def max_residuals(params: ModelParams, data: Dataset) -> FloatArray:
    """`r_i = max_j <xi_i, beta_j> - y_i`."""
    check_dimensions(params, data)
    return evaluate(params, data.covariates) - data.responses

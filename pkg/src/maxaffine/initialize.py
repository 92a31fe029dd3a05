# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Starting points for the solvers.

`perturb_init` draws a point inside the per-block ball of radius `kappa * rho` around a known
ground truth. `moment_init` needs no ground truth, it is a simplified moment-based surrogate for
spectral initialization and comes with no recovery guarantee.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.cluster.vq import kmeans2

from maxaffine.datagen import Seed, kappa, make_rng
from maxaffine.model import Dataset, FloatArray, InputError, MaxAffineError, ModelParams

logger = logging.getLogger(__name__)

MAX_RHO = 0.25
# Partition refinement sweeps inside the slope subspace.
MOMENT_REFINE_SWEEPS = 10


class InitializationError(MaxAffineError, ValueError):
    pass


@dataclass(frozen=True, slots=True)
class NeighborhoodSpec:
    rho: float
    kappa: float

    def __post_init__(self) -> None:
        if not 0 <= self.rho <= MAX_RHO:
            raise InputError(f"maxaffine: neighborhood radius needs 0 <= rho <= 1/4, {self.rho=}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise InputError(f"maxaffine: separation must be finite and >= 0, {self.kappa=}")

    @property
    def per_block_radius(self) -> float:
        return self.kappa * self.rho


def neighborhood(truth: ModelParams, rho: float) -> NeighborhoodSpec:
    return NeighborhoodSpec(rho, kappa(truth))


def in_neighborhood(params: ModelParams, truth: ModelParams, spec: NeighborhoodSpec) -> bool:
    """`max_j ||beta_j - beta*_j||_2 <= kappa * rho`."""
    distances = np.linalg.norm(params.blocks - truth.blocks, axis=1)
    return bool(distances.max() <= spec.per_block_radius)


def perturb_init(truth: ModelParams, spec: NeighborhoodSpec, seed: Seed) -> ModelParams:
    """Every block moved in a uniform random direction by a uniform radius up to `kappa * rho`."""
    radius = spec.per_block_radius
    if radius == 0:
        return truth
    rng = make_rng(seed)
    directions = rng.standard_normal(truth.blocks.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    # Shrunk by a relative 1e-12 so rounding keeps every block inside the ball.
    radii = radius * (1 - 1e-12) * rng.uniform(0.0, 1.0, (truth.k, 1))
    return ModelParams(truth.blocks + radii * directions)


def _least_squares(lifted: FloatArray, responses: FloatArray) -> FloatArray:
    return linalg.lstsq(lifted, responses)[0]


def moment_init(data: Dataset, k: int) -> ModelParams:
    """Slope subspace from response-weighted second moments, then clustered least squares.

    Deterministic given `data`.
    """
    n, d = data.n, data.d
    if k < 1:
        raise InputError(f"maxaffine: need at least one piece, got {k=}")
    if n < k * (d + 1):
        raise InitializationError(f"maxaffine: need n >= k(d+1) = {k * (d + 1)} samples, {n=}")
    x, y = data.covariates, data.responses
    # Slopes live in R^d, so at most d directions are estimated.
    rank = min(k, d)
    if np.linalg.matrix_rank(x - x.mean(axis=0)) < rank:
        raise InitializationError(f"maxaffine: covariates have rank below {rank}")

    lifted = data.lifted()
    if k == 1:
        return ModelParams(_least_squares(lifted, y)[None, :])

    first = x.T @ y / n
    second = (x * y[:, None]).T @ x / n - y.mean() * np.eye(d) + np.outer(first, first)
    eigenvalues, eigenvectors = linalg.eigh((second + second.T) / 2)
    order = np.argsort(-np.abs(eigenvalues), kind="stable")[:rank]
    if np.abs(eigenvalues[order[-1]]) <= np.finfo(np.float64).eps * np.abs(eigenvalues).max():
        raise InitializationError(f"maxaffine: moment matrix has rank below {rank}")
    basis = eigenvectors[:, order]
    logger.debug("moment spectrum %s", eigenvalues[order])

    projected = np.hstack([x @ basis, np.ones((n, 1))])
    features = np.hstack([x @ basis, y[:, None]])
    features = (features - features.mean(axis=0)) / np.maximum(features.std(axis=0), 1e-12)
    _, labels = kmeans2(features, k, minit="++", seed=0)
    reduced = _cluster_fits(projected, y, labels, k)
    for _ in range(MOMENT_REFINE_SWEEPS):
        relabel = np.argmax(projected @ reduced.T, axis=1)
        if np.array_equal(relabel, labels):
            break
        labels = relabel
        reduced = _cluster_fits(projected, y, labels, k, previous=reduced)

    slopes = reduced[:, :-1] @ basis.T
    return ModelParams.from_parts(slopes, reduced[:, -1])


def _cluster_fits(
    design: FloatArray,
    responses: FloatArray,
    labels: np.ndarray,
    k: int,
    previous: FloatArray | None = None,
) -> FloatArray:
    """Per-cluster least squares, too small clusters fall back to the previous or global fit."""
    fallback = _least_squares(design, responses)
    fits = np.empty((k, design.shape[1]))
    for j in range(k):
        members = labels == j
        if members.sum() >= design.shape[1]:
            fits[j] = _least_squares(design[members], responses[members])
        elif previous is not None:
            fits[j] = previous[j]
        else:
            fits[j] = fallback
    return fits

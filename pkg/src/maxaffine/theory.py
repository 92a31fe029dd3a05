# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Closed form quantities of the local convergence guarantees for GD and mini-batch SGD.

The guarantees hold up to absolute constants that are only known to exist. Such constants
(`C`, `C_prime`, `nu`) are therefore always explicit arguments and never defaulted here.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from maxaffine.datagen import GroundTruthGeometry
from maxaffine.model import Dataset, InputError, MaxAffineError

logger = logging.getLogger(__name__)

# Exhaustive subset enumeration is refused above this many samples.
MAX_SUBSET_SAMPLES = 14
FIXED_POINT_MAX_ITERS = 100
FIXED_POINT_RTOL = 1e-12
# Subsets whose Gram matrices are eigensolved in one batch.
_SUBSET_CHUNK = 4096


class FormulaDomainError(MaxAffineError, ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TheoryInputs:
    k: int
    d: int
    n: int
    sigma: float
    delta: float
    pi_min: float
    kappa: float
    zeta: float = 0.5
    gamma: float = 2 / math.pi
    R: float = 1.0

    def __post_init__(self) -> None:
        if self.k < 1 or self.d < 1 or self.n < 1:
            raise InputError(f"maxaffine: need k, d, n >= 1, got {self.k=} {self.d=} {self.n=}")
        if not 0 < self.delta < 1 / math.e:
            raise InputError(f"maxaffine: delta must lie in (0, 1/e), got {self.delta=}")
        if not 0 < self.pi_min <= 1 / self.k:
            raise InputError(f"maxaffine: pi_min must lie in (0, 1/k], got {self.pi_min=}")
        if not self.sigma >= 0:
            raise InputError(f"maxaffine: noise level must be >= 0, got {self.sigma=}")
        if not self.kappa >= 0:
            raise InputError(f"maxaffine: separation must be >= 0, got {self.kappa=}")
        if not (self.zeta > 0 and self.gamma > 0 and self.R > 0):
            raise InputError(
                f"maxaffine: need zeta, gamma, R > 0, got {self.zeta=} {self.gamma=} {self.R=}"
            )

    @property
    def inv_zeta(self) -> float:
        return 1 / self.zeta


def theory_inputs_from_geometry(
    geometry: GroundTruthGeometry,
    *,
    k: int,
    d: int,
    n: int,
    sigma: float,
    delta: float,
    zeta: float = 0.5,
    gamma: float = 2 / math.pi,
    R: float = 1.0,
) -> TheoryInputs:
    return TheoryInputs(
        k=k,
        d=d,
        n=n,
        sigma=sigma,
        delta=delta,
        pi_min=min(geometry.pi_min, 1 / k),
        kappa=geometry.kappa,
        zeta=zeta,
        gamma=gamma,
        R=R,
    )


def compute_rho(inputs: TheoryInputs) -> float:
    """Neighborhood radius multiplier, clamped to 1/4."""
    a = inputs.inv_zeta
    mass = inputs.R * inputs.pi_min ** (a * (1 + a))
    spread = inputs.k**a
    argument = spread / mass
    if argument <= 1:
        raise FormulaDomainError(
            f"maxaffine: rho is undefined, its log argument {argument} is not above 1"
        )
    first = mass / (4 * spread) / math.sqrt(math.log(argument))
    return min(first, 0.25)


def _log_ratio(n: float, d: int) -> float:
    if n <= d:
        raise FormulaDomainError(f"maxaffine: log(n/d) needs n > d, got {n=}, {d=}")
    return math.log(n / d)


def gd_error_bound(
    inputs: TheoryInputs, t: int, init_dist: float, nu: float, C_prime: float
) -> float:
    """`nu^t init_dist + C' sigma k sqrt(k (k d log(n/d) + log(k/delta)) / n)`."""
    if not 0 < nu < 1:
        raise InputError(f"maxaffine: contraction factor must lie in (0, 1), got {nu=}")
    if t < 0:
        raise InputError(f"maxaffine: iteration must be >= 0, got {t=}")
    return nu**t * init_dist + gd_noise_term(inputs, C_prime)


def gd_noise_term(inputs: TheoryInputs, C_prime: float) -> float:
    """The sigma dependent radius the GD iterates converge to."""
    k, d, n = inputs.k, inputs.d, inputs.n
    if inputs.sigma == 0:
        return 0.0
    radicand = k * (k * d * _log_ratio(n, d) + math.log(k / inputs.delta)) / n
    return C_prime * inputs.sigma * k * math.sqrt(radicand)


def sgd_floor_branches(inputs: TheoryInputs, m: int) -> tuple[float, float]:
    """Batch term `(d + log(n/delta))/m` and sample term `(k d log(n/d) + log(1/delta))/n`."""
    if m < 1:
        raise InputError(f"maxaffine: batch size must be >= 1, got {m=}")
    k, d, n = inputs.k, inputs.d, inputs.n
    batch = (d + math.log(n / inputs.delta)) / m
    sample = (k * d * _log_ratio(n, d) + math.log(1 / inputs.delta)) / n
    return batch, sample


def sgd_error_floor(inputs: TheoryInputs, m: int, C_prime: float) -> float:
    """`C' sigma k sqrt(max(batch term, sample term))`, the expected error floor of SGD."""
    if inputs.sigma == 0:
        if m < 1:
            raise InputError(f"maxaffine: batch size must be >= 1, got {m=}")
        return 0.0
    return C_prime * inputs.sigma * inputs.k * math.sqrt(max(sgd_floor_branches(inputs, m)))


def sample_complexity_rhs(inputs: TheoryInputs, C: float, n: float, rho: float) -> float:
    a = inputs.inv_zeta
    k, d, pi = inputs.k, inputs.d, inputs.pi_min
    k_branch = k**1.5 * pi ** -(1 + a)
    noise_branch = inputs.sigma / (inputs.kappa * rho) if inputs.sigma > 0 else 0.0
    scale = C * pi ** (-2 * (1 + a)) * max(k_branch, noise_branch) ** 2
    return scale * (k * d * _log_ratio(n, d) + math.log(k / inputs.delta))


def sample_complexity_gd(inputs: TheoryInputs, C: float) -> float:
    """Sufficient sample count for GD, solved as a fixed point since it depends on log(n/d).

    The iteration starts from `n = k d`, `inputs.n` is not used.
    """
    if C <= 0:
        raise InputError(f"maxaffine: constant must be positive, got {C=}")
    if inputs.sigma > 0 and inputs.kappa == 0:
        raise FormulaDomainError("maxaffine: sample complexity is unbounded for kappa = 0")
    rho = compute_rho(inputs) if inputs.sigma > 0 else math.nan
    # log(n/d) vanishes at n = k d for k = 1, start just above d then.
    n = float(max(inputs.k * inputs.d, inputs.d + 1))
    for iteration in range(FIXED_POINT_MAX_ITERS):
        following = sample_complexity_rhs(inputs, C, n, rho)
        if not math.isfinite(following):
            break
        if abs(following - n) <= FIXED_POINT_RTOL * n:
            logger.debug("sample complexity fixed point %.6e after %d steps", following, iteration)
            return following
        n = following
    raise FormulaDomainError(
        f"maxaffine: sample complexity fixed point did not converge in {FIXED_POINT_MAX_ITERS} "
        f"iterations, last {n=}"
    )


@dataclass(frozen=True, slots=True)
class SubsetEigenvalue:
    """Worst subset minimum eigenvalue, `vacuous` when no subset is large enough."""

    value: float
    subset: tuple[int, ...]
    vacuous: bool = False

    def __float__(self) -> float:
        return self.value


def worst_subset_min_eig(data: Dataset, alpha: float) -> SubsetEigenvalue:
    """Exact `inf_{|I| >= alpha n} lambda_min(sum_{i in I} xi_i xi_i^T)` by enumeration.

    Adding a sample adds a PSD rank-one term, which can only raise the minimum eigenvalue, so only
    subsets of size `ceil(alpha n)` are enumerated.
    """
    n = data.n
    if n > MAX_SUBSET_SAMPLES:
        raise InputError(
            f"maxaffine: exhaustive subset search is limited to n <= {MAX_SUBSET_SAMPLES}, got {n=}"
        )
    if not alpha > 0:
        raise InputError(f"maxaffine: alpha must be positive, got {alpha=}")
    size = math.ceil(alpha * n)
    if size > n:
        return SubsetEigenvalue(math.inf, (), vacuous=True)
    return min_eig_over_subsets(data, size)


def min_eig_over_subsets(data: Dataset, size: int) -> SubsetEigenvalue:
    """Minimum over all subsets of exactly `size` samples."""
    lifted = data.lifted()
    outer = lifted[:, :, None] * lifted[:, None, :]
    best = SubsetEigenvalue(math.inf, ())
    combos = itertools.combinations(range(data.n), size)
    while chunk := list(itertools.islice(combos, _SUBSET_CHUNK)):
        index = np.array(chunk, dtype=np.intp).reshape(len(chunk), size)
        grams = outer[index].sum(axis=1)
        smallest = np.linalg.eigvalsh(grams)[:, 0]
        at = int(np.argmin(smallest))
        if smallest[at] < best.value:
            best = SubsetEigenvalue(float(smallest[at]), chunk[at])
    return best

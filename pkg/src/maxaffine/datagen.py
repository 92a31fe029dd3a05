# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Synthetic ground truths, covariates and responses for max-affine regression.

All randomness flows through numpy `Generator`s over PCG64, seeded from `SeedSequence`s. Child
streams are addressed by spawn keys, so the stream of trial 7 does not depend on how many other
trials exist.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats
from typing_extensions import Self

from maxaffine.model import Dataset, FloatArray, InputError, ModelParams, assign_cells, evaluate

logger = logging.getLogger(__name__)

Seed = int | np.random.SeedSequence

# Simultaneous coverage of the per-cell frequency intervals.
GEOMETRY_CONFIDENCE = 0.99


def child_seed(seed: Seed, *key: int) -> np.random.SeedSequence:
    """Deterministic child stream of `seed` addressed by `key`."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=(*seed.spawn_key, *key), pool_size=seed.pool_size
        )
    if seed < 0:
        raise InputError(f"maxaffine: seeds must be non-negative, got {seed=}")
    return np.random.SeedSequence(seed, spawn_key=key)


def make_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, int) and seed < 0:
        raise InputError(f"maxaffine: seeds must be non-negative, got {seed=}")
    return np.random.Generator(np.random.PCG64(seed))


class CovariateKind(Enum):
    STANDARD_GAUSSIAN = "standard_gaussian"
    UNIFORM_CUBE = "uniform_cube"
    BETA_IID = "beta_iid"


@dataclass(frozen=True, slots=True)
class CovariateLaw:
    """Distribution of the covariates, every coordinate standardised to mean 0, variance 1.

    `zeta` and `gamma` are the anti-concentration constants of the law. They are exact for the
    Gaussian law and nominal for the other two (the one-dimensional small-ball bound of a single
    coordinate), since general directions are not certified.
    """

    kind: CovariateKind
    d: int
    a: float = 2.0
    b: float = 2.0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, CovariateKind):
            object.__setattr__(self, "kind", CovariateKind(self.kind))
        if self.d < 1:
            raise InputError(f"maxaffine: covariate dimension must be >= 1, got {self.d=}")
        if self.kind is CovariateKind.BETA_IID and not (self.a > 0 and self.b > 0):
            raise InputError(f"maxaffine: beta shape parameters must be > 0, {self.a=} {self.b=}")

    @classmethod
    def gaussian(cls, d: int) -> Self:
        return cls(CovariateKind.STANDARD_GAUSSIAN, d)

    @property
    def zeta(self) -> float:
        return 0.5

    @property
    def gamma(self) -> float:
        match self.kind:
            case CovariateKind.STANDARD_GAUSSIAN:
                return 2 / math.pi
            case CovariateKind.UNIFORM_CUBE:
                return 1 / 3
            case CovariateKind.BETA_IID:
                law = stats.beta(self.a, self.b)
                mode = (self.a - 1) / (self.a + self.b - 2) if self.a > 1 and self.b > 1 else 0.5
                return float((2 * law.pdf(mode) * law.std()) ** 2)

    def sample(self, n: int, rng: np.random.Generator) -> FloatArray:
        match self.kind:
            case CovariateKind.STANDARD_GAUSSIAN:
                return rng.standard_normal((n, self.d))
            case CovariateKind.UNIFORM_CUBE:
                return math.sqrt(3) * rng.uniform(-1.0, 1.0, (n, self.d))
            case CovariateKind.BETA_IID:
                law = stats.beta(self.a, self.b)
                raw = rng.beta(self.a, self.b, (n, self.d))
                return (raw - law.mean()) / law.std()

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = dict(kind=self.kind.value, d=self.d)
        if self.kind is CovariateKind.BETA_IID:
            data.update(a=self.a, b=self.b)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        try:
            shape = {key: float(data[key]) for key in ("a", "b") if key in data}
            return cls(CovariateKind(data["kind"]), int(data["d"]), **shape)
        except (KeyError, ValueError) as e:
            raise InputError(f"maxaffine: ill-formed covariate law {data!r}: {e}") from e


@dataclass(frozen=True, slots=True, eq=False)
class GroundTruthGeometry:
    pi_min: float
    pi_max: float
    kappa: float
    mc_samples: int
    ci_halfwidth: float
    cell_counts: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        k = max(len(self.cell_counts), 1)
        assert 0 <= self.pi_min <= 1 / k + 1e-12, f"{self.pi_min=}"
        assert 1 / k - 1e-12 <= self.pi_max <= 1, f"{self.pi_max=}"
        assert self.kappa >= 0

    @property
    def cell_frequencies(self) -> tuple[float, ...]:
        return tuple(count / self.mc_samples for count in self.cell_counts)

    def to_dict(self) -> dict[str, Any]:
        return dict(
            pi_min=self.pi_min,
            pi_max=self.pi_max,
            kappa=self.kappa,
            mc_samples=self.mc_samples,
            ci_halfwidth=self.ci_halfwidth,
            cell_frequencies=list(self.cell_frequencies),
        )


def kappa(truth: ModelParams) -> float:
    """Minimum pairwise distance between slope vectors, 0 for a single piece."""
    if truth.k < 2:
        return 0.0
    return min(
        float(np.linalg.norm(truth.slopes[j] - truth.slopes[l]))
        for j, l in itertools.combinations(range(truth.k), 2)
    )


def gen_truth_orthonormal(k: int, d: int, seed: Seed) -> ModelParams:
    """k random pairwise orthogonal unit slopes with zero offsets."""
    if k < 1 or k > d:
        raise InputError(f"maxaffine: orthonormal slopes need 1 <= k <= d, got {k=}, {d=}")
    gaussian = make_rng(seed).standard_normal((d, k))
    q, r = np.linalg.qr(gaussian)
    # Sign fix makes Q Haar distributed.
    q = q * np.sign(np.diag(r))
    return ModelParams.from_parts(q.T)


def gen_truth_sphere(k: int, d: int, seed: Seed) -> ModelParams:
    """k independent slopes uniform on the unit sphere, zero offsets."""
    if k < 1 or d < 1:
        raise InputError(f"maxaffine: need k >= 1 and d >= 1, got {k=}, {d=}")
    gaussian = make_rng(seed).standard_normal((k, d))
    return ModelParams.from_parts(gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True))


def gen_dataset(
    truth: ModelParams,
    law: CovariateLaw,
    n: int,
    sigma: float,
    seed: Seed,
    keep_noise: bool = False,
) -> Dataset:
    """`y_i = max_j <xi_i, beta_j*> + z_i` with `z_i ~ Normal(0, sigma^2)`."""
    if law.d != truth.d:
        raise InputError(f"maxaffine: {law.d=} does not match {truth.d=}")
    if n < 0:
        raise InputError(f"maxaffine: sample count must be >= 0, got {n=}")
    if not sigma >= 0:
        raise InputError(f"maxaffine: noise level must be >= 0, got {sigma=}")
    rng = make_rng(seed)
    covariates = law.sample(n, rng)
    clean = evaluate(truth, covariates)
    if sigma > 0:
        noise = sigma * rng.standard_normal(n)
        responses = clean + noise
    else:
        noise = np.zeros(n)
        responses = clean
    return Dataset(covariates, responses, sigma, noise if keep_noise else None)


def estimate_geometry(
    truth: ModelParams, law: CovariateLaw, mc_samples: int, seed: Seed
) -> GroundTruthGeometry:
    """Monte-Carlo cell probabilities of the ground truth, together with the exact kappa."""
    if mc_samples < 1000:
        raise InputError(f"maxaffine: at least 1000 Monte-Carlo samples needed, got {mc_samples=}")
    if law.d != truth.d:
        raise InputError(f"maxaffine: {law.d=} does not match {truth.d=}")
    covariates = law.sample(mc_samples, make_rng(seed))
    partition = assign_cells(truth, Dataset(covariates, np.zeros(mc_samples)))
    counts = partition.cell_counts
    freqs = counts / mc_samples
    z = stats.norm.ppf(1 - (1 - GEOMETRY_CONFIDENCE) / (2 * truth.k))
    halfwidth = float(np.max(z * np.sqrt(freqs * (1 - freqs) / mc_samples)))
    geometry = GroundTruthGeometry(
        pi_min=max(float(freqs.min()) - halfwidth, 0.0),
        pi_max=float(freqs.max()),
        kappa=kappa(truth),
        mc_samples=mc_samples,
        ci_halfwidth=halfwidth,
        cell_counts=tuple(int(c) for c in counts),
    )
    logger.debug("estimated geometry %s", geometry.to_dict())
    return geometry


def save_dataset(
    path: Path,
    data: Dataset,
    *,
    law: CovariateLaw | None = None,
    seed: int | None = None,
    truth: ModelParams | None = None,
) -> Path:
    """Write `data` as CSV (columns `x_1..x_d, y`) and its JSON sidecar, returning the sidecar."""
    header = ",".join([*(f"x_{i + 1}" for i in range(data.d)), "y"])
    table = np.hstack([data.covariates, data.responses[:, None]])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
    sidecar = sidecar_path(path)
    meta: dict[str, Any] = dict(
        k=None if truth is None else truth.k,
        d=data.d,
        n=data.n,
        sigma=data.sigma,
        law=None if law is None else law.to_dict(),
        seed=seed,
        truth=None if truth is None else truth.blocks.tolist(),
    )
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


@dataclass(frozen=True, slots=True, eq=False)
class LoadedDataset:
    data: Dataset
    law: CovariateLaw | None
    seed: int | None
    truth: ModelParams | None


def load_dataset(path: Path, sidecar: Path | None = None) -> LoadedDataset:
    path = Path(path)
    try:
        with open(path) as io:
            header = io.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise InputError(f"maxaffine: can not read dataset {str(path)!r}: {e}") from e
    d = len(header) - 1
    if header != [*(f"x_{i + 1}" for i in range(d)), "y"] or table.shape[1] != d + 1:
        raise InputError(f"maxaffine: {str(path)!r} does not have columns x_1..x_d, y")

    sidecar = sidecar_path(path) if sidecar is None else Path(sidecar)
    meta: dict[str, Any] = {}
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
        except ValueError as e:
            raise InputError(f"maxaffine: ill-formed sidecar {str(sidecar)!r}: {e}") from e
    data = Dataset(table[:, :d], table[:, d], float(meta.get("sigma") or 0.0))
    if meta.get("d", d) != d or meta.get("n", data.n) != data.n:
        raise InputError(f"maxaffine: sidecar {str(sidecar)!r} disagrees with the CSV shape")
    truth = None
    if meta.get("truth") is not None:
        truth = ModelParams(np.asarray(meta["truth"], dtype=np.float64))
        if truth.d != d:
            raise InputError(f"maxaffine: sidecar truth has {truth.d=} but data has {d=}")
    law = CovariateLaw.from_dict(meta["law"]) if meta.get("law") else None
    return LoadedDataset(data, law, meta.get("seed"), truth)

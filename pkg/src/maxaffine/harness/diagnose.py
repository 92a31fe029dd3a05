# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Theory diagnostics for one configured ground truth."""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import Any

from maxaffine.datagen import Seed, child_seed, estimate_geometry, gen_dataset
from maxaffine.harness.config import ExperimentConfig
from maxaffine.harness.experiments import SCHEMA_VERSION, generated_at, make_problem
from maxaffine.model import ModelParams
from maxaffine.theory import (
    FormulaDomainError,
    TheoryInputs,
    compute_rho,
    gd_error_bound,
    sample_complexity_gd,
    sgd_error_floor,
    sgd_floor_branches,
    theory_inputs_from_geometry,
    worst_subset_min_eig,
)

logger = logging.getLogger(__name__)

_GEOMETRY_STREAM = 4
_SUBSET_STREAM = 5


def _missing(name: str, what: str) -> None:
    logger.warning("constant %s is not configured, %s is not reported", name, what)


def diagnose(config: ExperimentConfig, timing: bool = True) -> dict[str, Any]:
    """Geometry, neighborhood radius, sample complexity and error bounds as a JSON-ready dict.

    Bounds that need an unconfigured absolute constant are reported as `None`.
    """
    data_config, theory = config.data, config.theory
    seed = child_seed(data_config.seed)
    problem = make_problem(config, seed)
    truth, law = problem.truth, problem.law
    geometry = estimate_geometry(truth, law, theory.mc_samples, child_seed(seed, _GEOMETRY_STREAM))
    if geometry.pi_min <= 0:
        raise FormulaDomainError(
            "maxaffine: the lower confidence bound of the smallest cell probability is 0, "
            "raise mc_samples or check the ground truth"
        )
    inputs = theory_inputs_from_geometry(
        geometry,
        k=truth.k,
        d=truth.d,
        n=data_config.n,
        sigma=data_config.sigma,
        delta=theory.delta,
        zeta=law.zeta,
        gamma=law.gamma,
        R=theory.R,
    )
    rho = compute_rho(inputs)
    logger.info("rho %.6e for pi_min %.4f, kappa %.4f", rho, inputs.pi_min, inputs.kappa)

    report: dict[str, Any] = dict(
        schema_version=SCHEMA_VERSION,
        generated_at=generated_at(timing),
        law=law.to_dict(),
        geometry=geometry.to_dict(),
        inputs=dataclasses.asdict(inputs),
        rho=rho,
        constants=dict(C=theory.C, C_prime=theory.C_prime, nu=theory.nu),
    )
    report["sample_complexity_gd"] = _sample_complexity(inputs, theory.C)
    report["gd_error_bound"] = _gd_curve(config, inputs)
    report["sgd_error_floor"] = _sgd_floors(config, inputs)
    report["worst_subset"] = _worst_subset(config, truth, seed)
    return report


def _sample_complexity(inputs: TheoryInputs, C: float | None) -> float | None:
    if C is None:
        _missing("C", "the GD sample complexity")
        return None
    return sample_complexity_gd(inputs, C)


def _gd_curve(config: ExperimentConfig, inputs: TheoryInputs) -> list[dict[str, Any]] | None:
    theory = config.theory
    if theory.nu is None or theory.C_prime is None:
        _missing("nu" if theory.nu is None else "C_prime", "the GD error bound")
        return None
    # Largest distance a perturbation start can have from the ground truth.
    init_dist = math.sqrt(inputs.k) * config.init.radius * inputs.kappa
    return [
        dict(t=t, bound=gd_error_bound(inputs, t, init_dist, theory.nu, theory.C_prime))
        for t in theory.t_values
    ]


def _sgd_floors(config: ExperimentConfig, inputs: TheoryInputs) -> list[dict[str, Any]] | None:
    C_prime = config.theory.C_prime
    if C_prime is None and inputs.sigma > 0:
        _missing("C_prime", "the SGD error floor")
        return None
    floors = []
    for m in config.theory.m_values:
        entry: dict[str, Any] = dict(m=m, floor=sgd_error_floor(inputs, m, C_prime or 0.0))
        if inputs.n > inputs.d:
            entry["batch_term"], entry["sample_term"] = sgd_floor_branches(inputs, m)
        floors.append(entry)
    return floors


def _worst_subset(config: ExperimentConfig, truth: ModelParams, seed: Seed) -> dict[str, Any]:
    theory, data_config = config.theory, config.data
    law = data_config.covariate_law()
    tiny = gen_dataset(
        truth, law, theory.subset_n, data_config.sigma, child_seed(seed, _SUBSET_STREAM)
    )
    result = worst_subset_min_eig(tiny, theory.alpha)
    return dict(
        n=theory.subset_n,
        alpha=theory.alpha,
        min_eigenvalue=None if result.vacuous else result.value,
        subset=list(result.subset),
        vacuous=result.vacuous,
    )

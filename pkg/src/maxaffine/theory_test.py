# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
import itertools
import math

import numpy as np
import pytest

from maxaffine.datagen import GroundTruthGeometry
from maxaffine.model import Dataset, InputError
from maxaffine.theory import (
    FormulaDomainError,
    TheoryInputs,
    compute_rho,
    gd_error_bound,
    min_eig_over_subsets,
    sample_complexity_gd,
    sample_complexity_rhs,
    sgd_error_floor,
    sgd_floor_branches,
    theory_inputs_from_geometry,
    worst_subset_min_eig,
)


def inputs(**changes) -> TheoryInputs:
    values = dict(k=2, d=10, n=5000, sigma=0.0, delta=0.01, pi_min=0.5, kappa=math.sqrt(2))
    values.update(changes)
    return TheoryInputs(**values)


def test_rho_for_two_balanced_pieces() -> None:
    # zeta = 1/2 makes the exponents 1/zeta = 2 and (1/zeta)(1 + 1/zeta) = 6.
    mass = 0.5**6
    expected = mass / (4 * 2**2) / math.sqrt(math.log(2**2 / mass))
    assert expected == pytest.approx(compute_rho(inputs()))
    assert 4.15e-4 == pytest.approx(compute_rho(inputs()), rel=1e-3)


def test_rho_is_clamped() -> None:
    # The log argument k^2 / (R pi^6) is 1.1 here, which pushes the first term above 1/4.
    assert 0.25 == compute_rho(inputs(R=4 * 64 / 1.1))


def test_rho_domain() -> None:
    with pytest.raises(FormulaDomainError):
        compute_rho(inputs(R=1000.0))
    with pytest.raises(FormulaDomainError):
        compute_rho(inputs(k=1, pi_min=1.0))


@pytest.mark.parametrize(
    "changes",
    [
        dict(delta=0.5),
        dict(delta=0.0),
        dict(pi_min=0.6),
        dict(pi_min=0.0),
        dict(sigma=-1.0),
        dict(zeta=0.0),
        dict(k=0),
    ],
)
def test_inputs_validation(changes) -> None:
    with pytest.raises(InputError):
        inputs(**changes)


def test_inputs_from_geometry() -> None:
    geometry = GroundTruthGeometry(0.49, 0.51, math.sqrt(2), 10_000, 0.01, (4900, 5100))
    result = theory_inputs_from_geometry(geometry, k=2, d=10, n=100, sigma=0.1, delta=0.01)
    assert 0.49 == result.pi_min
    assert math.sqrt(2) == result.kappa
    assert 2 / math.pi == result.gamma


def test_gd_bound_without_noise() -> None:
    assert 0.9**10 * 0.3 == pytest.approx(gd_error_bound(inputs(), 10, 0.3, 0.9, 2.0))
    assert 0.3 == gd_error_bound(inputs(), 0, 0.3, 0.9, 2.0)


def test_gd_bound_with_noise() -> None:
    sigma, k, d, n, delta = 0.1, 2, 10, 5000, 0.01
    noise = 2.0 * sigma * k * math.sqrt(k * (k * d * math.log(n / d) + math.log(k / delta)) / n)
    bound = gd_error_bound(inputs(sigma=sigma), 1000, 0.3, 0.5, 2.0)
    assert noise == pytest.approx(bound)


def test_gd_bound_domain() -> None:
    with pytest.raises(InputError):
        gd_error_bound(inputs(), 1, 0.3, 1.0, 1.0)
    with pytest.raises(InputError):
        gd_error_bound(inputs(), -1, 0.3, 0.5, 1.0)
    with pytest.raises(FormulaDomainError):
        gd_error_bound(inputs(sigma=0.1, n=10), 1, 0.3, 0.5, 1.0)


def test_sgd_floor_without_noise() -> None:
    for m in (1, 16, 256):
        assert 0.0 == sgd_error_floor(inputs(), m, 1.0)


def test_sgd_floor_branches() -> None:
    d, n, delta, k = 10, 5000, 0.01, 2
    batch, sample = sgd_floor_branches(inputs(), 32)
    assert (d + math.log(n / delta)) / 32 == pytest.approx(batch)
    assert (k * d * math.log(n / d) + math.log(1 / delta)) / n == pytest.approx(sample)


def test_sgd_floor_takes_the_larger_branch() -> None:
    noisy = inputs(sigma=0.2)
    small_batch = sgd_error_floor(noisy, 4, 1.5)
    batch, _ = sgd_floor_branches(noisy, 4)
    assert 1.5 * 0.2 * 2 * math.sqrt(batch) == pytest.approx(small_batch)
    huge_batch = sgd_error_floor(noisy, 10**9, 1.5)
    _, sample = sgd_floor_branches(noisy, 10**9)
    assert 1.5 * 0.2 * 2 * math.sqrt(sample) == pytest.approx(huge_batch)
    assert huge_batch < small_batch


def test_sample_complexity_is_a_fixed_point() -> None:
    noiseless = inputs()
    n = sample_complexity_gd(noiseless, 1.0)
    assert n == pytest.approx(sample_complexity_rhs(noiseless, 1.0, n, math.nan), rel=1e-9)
    assert n > noiseless.k * noiseless.d


def test_sample_complexity_grows_with_noise() -> None:
    quiet = sample_complexity_gd(inputs(sigma=1e-3), 1.0)
    loud = sample_complexity_gd(inputs(sigma=1e3), 1.0)
    assert loud > quiet
    rho = compute_rho(inputs(sigma=1e3))
    assert loud == pytest.approx(sample_complexity_rhs(inputs(sigma=1e3), 1.0, loud, rho), rel=1e-9)


def test_sample_complexity_domain() -> None:
    with pytest.raises(InputError):
        sample_complexity_gd(inputs(), 0.0)
    with pytest.raises(FormulaDomainError):
        sample_complexity_gd(inputs(sigma=0.1, kappa=0.0), 1.0)


@pytest.fixture
def tiny() -> Dataset:
    rng = np.random.default_rng(4)
    return Dataset(rng.standard_normal((7, 2)), np.zeros(7))


def brute_force_min_eig(data: Dataset, size: int) -> float:
    lifted = data.lifted()
    return min(
        float(np.linalg.eigvalsh(lifted[list(subset)].T @ lifted[list(subset)])[0])
        for subset in itertools.combinations(range(data.n), size)
    )


@pytest.mark.parametrize("alpha, size", [(0.5, 4), (0.3, 3), (1.0, 7)])
def test_worst_subset_matches_brute_force(tiny: Dataset, alpha: float, size: int) -> None:
    result = worst_subset_min_eig(tiny, alpha)
    assert not result.vacuous
    assert size == len(result.subset)
    assert brute_force_min_eig(tiny, size) == pytest.approx(float(result), abs=1e-12)


def test_full_subset_is_the_gram_matrix(tiny: Dataset) -> None:
    lifted = tiny.lifted()
    expected = np.linalg.eigvalsh(lifted.T @ lifted)[0]
    assert expected == pytest.approx(min_eig_over_subsets(tiny, tiny.n).value)


def test_worst_subset_vacuous(tiny: Dataset) -> None:
    result = worst_subset_min_eig(tiny, 1.5)
    assert result.vacuous
    assert math.inf == result.value


def test_worst_subset_limits(tiny: Dataset) -> None:
    big = Dataset(np.zeros((15, 2)), np.zeros(15))
    with pytest.raises(InputError):
        worst_subset_min_eig(big, 0.5)
    with pytest.raises(InputError):
        worst_subset_min_eig(tiny, 0.0)


def random_inputs(rng: np.random.Generator) -> TheoryInputs:
    k = int(rng.integers(2, 7))
    d = int(rng.integers(1, 50))
    return TheoryInputs(
        k=k,
        d=d,
        n=int(rng.integers(d + 1, 100_000)),
        sigma=float(rng.uniform(0.01, 2.0)),
        delta=float(rng.uniform(1e-4, 0.3)),
        pi_min=float(rng.uniform(0.05, 1.0)) / k,
        kappa=float(rng.uniform(0.1, 2.0)),
        zeta=float(rng.uniform(0.3, 1.0)),
        R=float(rng.uniform(0.5, 2.0)),
    )


def reference_rho(p: TheoryInputs) -> float:
    a = 1 / p.zeta
    numerator = p.R * p.pi_min ** (a + a * a)
    log_term = math.log(p.k**a) - math.log(p.R) - (a + a * a) * math.log(p.pi_min)
    return min(numerator / (4 * p.k**a * math.sqrt(log_term)), 1 / 4)


def test_closed_forms_on_random_inputs() -> None:
    rng = np.random.default_rng(21)
    for _ in range(20):
        p = random_inputs(rng)
        assert reference_rho(p) == pytest.approx(compute_rho(p), rel=1e-12)

        t, init_dist, nu, C_prime = int(rng.integers(0, 200)), rng.uniform(0, 1), 0.7, 1.3
        log_n_d = math.log(p.n) - math.log(p.d)
        noise = math.sqrt(p.k**3 * (p.k * p.d * log_n_d + math.log(p.k / p.delta)) / p.n)
        expected = math.exp(t * math.log(nu)) * init_dist + C_prime * p.sigma * noise
        assert expected == pytest.approx(gd_error_bound(p, t, init_dist, nu, C_prime), rel=1e-12)

        m = int(rng.integers(1, 1024))
        batch = (p.d + math.log(p.n) - math.log(p.delta)) / m
        sample = (p.k * p.d * log_n_d - math.log(p.delta)) / p.n
        expected = C_prime * p.sigma * p.k * math.sqrt(max(batch, sample))
        assert expected == pytest.approx(sgd_error_floor(p, m, C_prime), rel=1e-12)


def test_sample_complexity_solves_its_equation_on_random_inputs() -> None:
    rng = np.random.default_rng(22)
    for _ in range(20):
        p = random_inputs(rng)
        n = sample_complexity_gd(p, 0.5)
        a = 1 / p.zeta
        rho = reference_rho(p)
        branch = max(p.k**1.5 / p.pi_min ** (1 + a), p.sigma / (p.kappa * rho))
        scale = 0.5 * branch**2 / p.pi_min ** (2 + 2 * a)
        expected = scale * (p.k * p.d * math.log(n / p.d) + math.log(p.k / p.delta))
        assert expected == pytest.approx(n, rel=1e-12)


def test_rho_grows_with_the_smallest_cell() -> None:
    values = [compute_rho(inputs(pi_min=pi)) for pi in np.linspace(0.01, 0.5, 25)]
    assert values == sorted(values)


@pytest.mark.parametrize("sigma", [0.0, 0.5])
def test_sample_complexity_falls_with_the_smallest_cell(sigma: float) -> None:
    values = [
        sample_complexity_gd(inputs(sigma=sigma, pi_min=pi), 1.0) for pi in (0.1, 0.2, 0.3, 0.5)
    ]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_sample_complexity_is_about_linear_in_d() -> None:
    for d in (10, 20, 40):
        ratio = sample_complexity_gd(inputs(d=2 * d), 1.0) / sample_complexity_gd(inputs(d=d), 1.0)
        assert 1.8 <= ratio <= 2.2


def test_worst_subset_grows_with_alpha() -> None:
    data = Dataset(np.random.default_rng(8).standard_normal((8, 2)), np.zeros(8))
    values = [worst_subset_min_eig(data, alpha).value for alpha in (0.25, 0.5, 0.75, 1.0)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1] > values[0]

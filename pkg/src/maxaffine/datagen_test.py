# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
import json
import math

import numpy as np
import pytest

from maxaffine.datagen import (
    CovariateKind,
    CovariateLaw,
    child_seed,
    estimate_geometry,
    gen_dataset,
    gen_truth_orthonormal,
    gen_truth_sphere,
    kappa,
    load_dataset,
    make_rng,
    save_dataset,
    sidecar_path,
)
from maxaffine.model import InputError, ModelParams, evaluate


def test_orthonormal_truth() -> None:
    truth = gen_truth_orthonormal(3, 6, seed=0)
    assert np.allclose(np.eye(3), truth.slopes @ truth.slopes.T, atol=1e-12)
    assert [0.0, 0.0, 0.0] == truth.offsets.tolist()
    assert math.sqrt(2) == pytest.approx(kappa(truth))


def test_orthonormal_truth_needs_k_at_most_d() -> None:
    with pytest.raises(InputError):
        gen_truth_orthonormal(4, 3, seed=0)


def test_sphere_truth() -> None:
    truth = gen_truth_sphere(5, 3, seed=1)
    assert np.allclose(1.0, np.linalg.norm(truth.slopes, axis=1))
    assert not truth.offsets.any()


def test_truths_are_seeded() -> None:
    assert gen_truth_sphere(2, 4, seed=5) == gen_truth_sphere(2, 4, seed=5)
    assert gen_truth_sphere(2, 4, seed=5) != gen_truth_sphere(2, 4, seed=6)


def test_kappa() -> None:
    assert 0.0 == kappa(ModelParams(np.array([[1.0, 2.0]])))
    truth = ModelParams.from_parts([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]], [5.0, 0.0, 0.0])
    assert 1.0 == kappa(truth)


def test_child_seeds_are_independent_streams() -> None:
    first = make_rng(child_seed(1, 0)).standard_normal(4)
    again = make_rng(child_seed(1, 0)).standard_normal(4)
    other = make_rng(child_seed(1, 1)).standard_normal(4)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)
    nested = child_seed(child_seed(1, 2), 3)
    assert np.array_equal(
        make_rng(nested).standard_normal(4), make_rng(child_seed(1, 2, 3)).standard_normal(4)
    )


def test_negative_seeds_are_rejected() -> None:
    with pytest.raises(InputError):
        make_rng(-1)
    with pytest.raises(InputError):
        child_seed(-1, 0)


@pytest.mark.parametrize("kind", list(CovariateKind))
def test_laws_are_standardised(kind: CovariateKind) -> None:
    sample = CovariateLaw(kind, 3).sample(50_000, make_rng(0))
    assert (50_000, 3) == sample.shape
    assert np.allclose(0.0, sample.mean(axis=0), atol=0.03)
    assert np.allclose(1.0, sample.var(axis=0), atol=0.05)


def test_law_constants() -> None:
    assert 0.5 == CovariateLaw.gaussian(2).zeta
    assert 2 / math.pi == CovariateLaw.gaussian(2).gamma
    assert 1 / 3 == CovariateLaw(CovariateKind.UNIFORM_CUBE, 2).gamma
    assert 0 < CovariateLaw(CovariateKind.BETA_IID, 2, a=2, b=3).gamma


def test_law_dict() -> None:
    law = CovariateLaw(CovariateKind.BETA_IID, 4, a=3.0, b=2.0)
    assert {"kind": "beta_iid", "d": 4, "a": 3.0, "b": 2.0} == law.to_dict()
    assert law == CovariateLaw.from_dict(law.to_dict())
    assert {"kind": "standard_gaussian", "d": 2} == CovariateLaw.gaussian(2).to_dict()
    with pytest.raises(InputError):
        CovariateLaw.from_dict({"kind": "cauchy", "d": 2})
    with pytest.raises(InputError):
        CovariateLaw(CovariateKind.BETA_IID, 2, a=0.0)


def test_noiseless_dataset() -> None:
    truth = gen_truth_orthonormal(2, 3, seed=0)
    data = gen_dataset(truth, CovariateLaw.gaussian(3), 100, 0.0, seed=1)
    assert (100, 3) == data.covariates.shape
    assert np.array_equal(evaluate(truth, data.covariates), data.responses)
    assert 0.0 == data.sigma


def test_noisy_dataset_keeps_noise() -> None:
    truth = gen_truth_orthonormal(2, 3, seed=0)
    data = gen_dataset(truth, CovariateLaw.gaussian(3), 2000, 0.5, seed=1, keep_noise=True)
    assert np.allclose(data.noise, data.responses - evaluate(truth, data.covariates))
    assert 0.5 == pytest.approx(data.noise.std(), abs=0.05)
    assert gen_dataset(truth, CovariateLaw.gaussian(3), 2000, 0.5, seed=1).noise is None


def test_datasets_are_seeded() -> None:
    truth = gen_truth_orthonormal(2, 3, seed=0)
    law = CovariateLaw.gaussian(3)
    assert gen_dataset(truth, law, 50, 0.1, seed=2) == gen_dataset(truth, law, 50, 0.1, seed=2)
    assert gen_dataset(truth, law, 50, 0.1, seed=2) != gen_dataset(truth, law, 50, 0.1, seed=3)


def test_dataset_input_checks() -> None:
    truth = gen_truth_orthonormal(2, 3, seed=0)
    with pytest.raises(InputError):
        gen_dataset(truth, CovariateLaw.gaussian(4), 10, 0.0, seed=0)
    with pytest.raises(InputError):
        gen_dataset(truth, CovariateLaw.gaussian(3), 10, -1.0, seed=0)


@pytest.mark.timeout(30)
def test_orthonormal_geometry() -> None:
    truth = gen_truth_orthonormal(3, 5, seed=0)
    geometry = estimate_geometry(truth, CovariateLaw.gaussian(5), 60_000, seed=1)
    assert math.sqrt(2) == pytest.approx(geometry.kappa)
    assert 60_000 == sum(geometry.cell_counts)
    assert np.allclose(1 / 3, geometry.cell_frequencies, atol=0.02)
    assert geometry.pi_min < min(geometry.cell_frequencies)
    assert 0 < geometry.ci_halfwidth < 0.02


def test_geometry_needs_enough_samples() -> None:
    truth = gen_truth_orthonormal(2, 3, seed=0)
    with pytest.raises(InputError):
        estimate_geometry(truth, CovariateLaw.gaussian(3), 999, seed=0)


def test_save_and_load_dataset(tmp_path) -> None:
    truth = gen_truth_orthonormal(2, 3, seed=0)
    law = CovariateLaw.gaussian(3)
    data = gen_dataset(truth, law, 25, 0.25, seed=4)
    path = tmp_path / "data.csv"
    sidecar = save_dataset(path, data, law=law, seed=4, truth=truth)
    assert sidecar_path(path) == sidecar
    assert "x_1,x_2,x_3,y" == path.read_text().splitlines()[0]
    meta = json.loads(sidecar.read_text())
    assert {"k": 2, "d": 3, "n": 25, "sigma": 0.25, "seed": 4} == {
        key: meta[key] for key in ("k", "d", "n", "sigma", "seed")
    }

    loaded = load_dataset(path)
    assert data == loaded.data
    assert truth == loaded.truth
    assert law == loaded.law
    assert 4 == loaded.seed


def test_load_dataset_without_sidecar(tmp_path) -> None:
    path = tmp_path / "plain.csv"
    path.write_text("x_1,x_2,y\n1,2,3\n4,5,6\n")
    loaded = load_dataset(path)
    assert 2 == loaded.data.d
    assert [3.0, 6.0] == loaded.data.responses.tolist()
    assert loaded.truth is None and loaded.law is None and loaded.seed is None


@pytest.mark.parametrize(
    "text",
    [
        "a,b,y\n1,2,3\n",
        "x_1,x_2,y\n1,2\n",
        "x_1,y\n1,oops\n",
    ],
)
def test_load_dataset_rejects_bad_files(tmp_path, text: str) -> None:
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(InputError):
        load_dataset(path)


def test_load_dataset_checks_sidecar_shape(tmp_path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("x_1,y\n1,2\n")
    sidecar_path(path).write_text(json.dumps({"d": 2, "n": 1}))
    with pytest.raises(InputError):
        load_dataset(path)

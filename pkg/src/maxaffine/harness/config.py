# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Experiment configuration files.

Configurations are TOML documents. Every section is optional and unknown keys are errors.

    [data]
    k = 3                       # number of affine pieces
    d = 50                      # covariate dimension
    n = 6000                    # sample count
    sigma = 0.0                 # noise standard deviation
    law = "standard_gaussian"   # or "uniform_cube", or { kind = "beta_iid", a = 2, b = 2 }
    truth = "orthonormal"       # or "sphere"
    seed = 0

    [init]
    method = "perturb"          # or "moment"
    radius = 0.1                # per-block radius in units of kappa, at most 1/4

    [solver]
    algorithms = ["gd", "sgd", "am"]
    batch_size = 64
    max_iters = 500
    tol = 1e-12
    record_every = 1
    # step_size = 0.5           # defaults: GD 0.5, SGD (1 ^ m/d) / 2

    [solver.sgd]                # per-algorithm overrides of the keys above
    max_iters = 20000
    record_every = 50

    [trace]
    trials = 50
    seed = 0

    [grid]
    n_values = [500, 1000, 2000]
    d_values = [25, 50, 100]    # or k_values, the other one is taken from [data]
    trials = 50
    seed = 0
    threshold_log10 = -6.0
    success_level = 0.5

    [theory]
    delta = 0.01
    R = 1.0
    mc_samples = 100000
    # C = 1.0, C_prime = 1.0, nu = 0.9   unknown absolute constants, bounds need them
    t_values = [0, 10, 20, 50, 100]
    m_values = [16, 32, 64, 128, 256]
    alpha = 0.5
    subset_n = 10
"""
from __future__ import annotations

import tomllib
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

from maxaffine.datagen import CovariateKind, CovariateLaw
from maxaffine.model import InputError
from maxaffine.solvers import Algorithm, SolverConfig
from maxaffine.theory import MAX_SUBSET_SAMPLES


class ConfigError(InputError):
    pass


class TruthKind(Enum):
    ORTHONORMAL = "orthonormal"
    SPHERE = "sphere"


class InitMethod(Enum):
    PERTURB = "perturb"
    MOMENT = "moment"


@dataclass(frozen=True, slots=True)
class DataConfig:
    k: int = 3
    d: int = 50
    n: int = 6000
    sigma: float = 0.0
    law: CovariateKind | Mapping[str, Any] = CovariateKind.STANDARD_GAUSSIAN
    truth: TruthKind = TruthKind.ORTHONORMAL
    seed: int = 0

    def covariate_law(self, d: int | None = None) -> CovariateLaw:
        d = self.d if d is None else d
        if isinstance(self.law, Mapping):
            return CovariateLaw.from_dict({**self.law, "d": d})
        return CovariateLaw(self.law, d)


@dataclass(frozen=True, slots=True)
class InitConfig:
    method: InitMethod = InitMethod.PERTURB
    radius: float = 0.1


@dataclass(frozen=True, slots=True)
class SolverSection:
    algorithms: tuple[Algorithm, ...] = (Algorithm.GD, Algorithm.SGD, Algorithm.AM)
    batch_size: int = 64
    max_iters: int = 500
    tol: float = 1e-12
    record_every: int = 1
    step_size: float | None = None
    overrides: Mapping[Algorithm, Mapping[str, Any]] = field(default_factory=dict)

    def config_for(self, algorithm: Algorithm, d: int, seed: int = 0) -> SolverConfig:
        settings: dict[str, Any] = dict(
            batch_size=self.batch_size,
            max_iters=self.max_iters,
            tol=self.tol,
            record_every=self.record_every,
        )
        if self.step_size is not None:
            settings["step_size"] = self.step_size
        settings.update(self.overrides.get(algorithm, {}))
        batch_size = settings.pop("batch_size")
        return SolverConfig.default(algorithm, d, batch_size, seed=seed, **settings)


@dataclass(frozen=True, slots=True)
class TraceConfig:
    trials: int = 50
    seed: int = 0


@dataclass(frozen=True, slots=True)
class GridConfig:
    n_values: tuple[int, ...] = ()
    d_values: tuple[int, ...] = ()
    k_values: tuple[int, ...] = ()
    trials: int = 50
    seed: int = 0
    threshold_log10: float = -6.0
    success_level: float = 0.5


@dataclass(frozen=True, slots=True)
class TheoryConfig:
    delta: float = 0.01
    R: float = 1.0
    mc_samples: int = 100_000
    C: float | None = None
    C_prime: float | None = None
    nu: float | None = None
    t_values: tuple[int, ...] = (0, 10, 20, 50, 100)
    m_values: tuple[int, ...] = (16, 32, 64, 128, 256)
    alpha: float = 0.5
    subset_n: int = 10


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    init: InitConfig = field(default_factory=InitConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    trace: TraceConfig = field(default_factory=TraceConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    # "section.key" names set by the configuration file.
    explicit: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        _validate(self)


def _positive_int(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"expected a positive integer, got {value!r}")
    return value


def _nonnegative_int(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValueError(f"expected a non-negative integer, got {value!r}")
    return value


def _number(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def _int_list(value: Any) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise ValueError(f"expected a list of integers, got {value!r}")
    return tuple(_positive_int(v) for v in value)


def _law(value: Any) -> CovariateKind | Mapping[str, Any]:
    if isinstance(value, Mapping):
        CovariateLaw.from_dict({**value, "d": 1})
        return dict(value)
    return CovariateKind(value)


def _algorithms(value: Any) -> tuple[Algorithm, ...]:
    if not isinstance(value, list) or not value:
        raise ValueError(f"expected a nonempty list of algorithms, got {value!r}")
    return tuple(Algorithm(v) for v in value)


_SOLVER_KEYS: dict[str, Callable[[Any], Any]] = dict(
    batch_size=_positive_int,
    max_iters=_nonnegative_int,
    tol=_number,
    record_every=_positive_int,
    step_size=_number,
)

_SECTIONS: dict[str, tuple[type, dict[str, Callable[[Any], Any]]]] = dict(
    data=(
        DataConfig,
        dict(
            k=_positive_int,
            d=_positive_int,
            n=_positive_int,
            sigma=_number,
            law=_law,
            truth=TruthKind,
            seed=_nonnegative_int,
        ),
    ),
    init=(InitConfig, dict(method=InitMethod, radius=_number)),
    solver=(SolverSection, dict(algorithms=_algorithms, **_SOLVER_KEYS)),
    trace=(TraceConfig, dict(trials=_positive_int, seed=_nonnegative_int)),
    grid=(
        GridConfig,
        dict(
            n_values=_int_list,
            d_values=_int_list,
            k_values=_int_list,
            trials=_positive_int,
            seed=_nonnegative_int,
            threshold_log10=_number,
            success_level=_number,
        ),
    ),
    theory=(
        TheoryConfig,
        dict(
            delta=_number,
            R=_number,
            mc_samples=_positive_int,
            C=_number,
            C_prime=_number,
            nu=_number,
            t_values=lambda v: tuple(_nonnegative_int(t) for t in v),
            m_values=_int_list,
            alpha=_number,
            subset_n=_positive_int,
        ),
    ),
)


def _parse_section(name: str, values: Any) -> Any:
    cls, converters = _SECTIONS[name]
    if not isinstance(values, Mapping):
        raise ConfigError(f"maxaffine: [{name}] must be a table")
    kwargs: dict[str, Any] = {}
    overrides: dict[Algorithm, dict[str, Any]] = {}
    for key, value in values.items():
        if name == "solver" and isinstance(value, Mapping):
            overrides[_convert(name, key, key, Algorithm)] = {
                sub: _convert(f"solver.{key}", sub, v, _SOLVER_KEYS.get(sub))
                for sub, v in value.items()
            }
            continue
        kwargs[key] = _convert(name, key, value, converters.get(key))
    if overrides:
        kwargs["overrides"] = overrides
    return cls(**kwargs)


def _convert(section: str, key: str, value: Any, converter: Callable[[Any], Any] | None) -> Any:
    if converter is None:
        raise ConfigError(f"maxaffine: unknown key {key!r} in [{section}]")
    try:
        return converter(value)
    except (TypeError, ValueError, InputError) as e:
        raise ConfigError(f"maxaffine: bad value for {key!r} in [{section}]: {e}") from e


def parse_config(document: Mapping[str, Any]) -> ExperimentConfig:
    unknown = set(document) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"maxaffine: unknown configuration sections {sorted(unknown)}")
    sections = {name: _parse_section(name, values) for name, values in document.items()}
    explicit = frozenset(f"{name}.{key}" for name in sections for key in document[name])
    return ExperimentConfig(**sections, explicit=explicit)


def load_config(path: Path | str) -> ExperimentConfig:
    try:
        with open(path, "rb") as io:
            document = tomllib.load(io)
    except OSError as e:
        raise ConfigError(f"maxaffine: can not read configuration {str(path)!r}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"maxaffine: ill-formed configuration {str(path)!r}: {e}") from e
    return parse_config(document)


def preset_names() -> list[str]:
    presets = resources.files(__package__) / "presets"
    return sorted(
        entry.name.removesuffix(".toml")
        for entry in presets.iterdir()
        if entry.name.endswith(".toml")
    )


def load_preset(name: str) -> ExperimentConfig:
    """One of the configurations shipped in `maxaffine/harness/presets`."""
    if name not in preset_names():
        raise ConfigError(f"maxaffine: unknown preset {name!r}, choose from {preset_names()}")
    text = (resources.files(__package__) / "presets" / f"{name}.toml").read_text()
    return parse_config(tomllib.loads(text))


def _validate(config: ExperimentConfig) -> None:
    data = config.data
    if data.truth is TruthKind.ORTHONORMAL and data.k > data.d:
        raise ConfigError(f"maxaffine: orthonormal truths need k <= d, got {data.k=}, {data.d=}")
    if not data.sigma >= 0:
        raise ConfigError(f"maxaffine: [data] sigma must be >= 0, got {data.sigma}")
    if not 0 <= config.init.radius <= 0.25:
        raise ConfigError(f"maxaffine: [init] radius must lie in [0, 1/4], {config.init.radius=}")
    grid = config.grid
    if grid.d_values and grid.k_values:
        raise ConfigError("maxaffine: [grid] takes d_values or k_values, not both")
    if not 0 < grid.success_level <= 1:
        raise ConfigError(f"maxaffine: [grid] success_level not in (0, 1], {grid.success_level=}")
    theory = config.theory
    if theory.nu is not None and not 0 < theory.nu < 1:
        raise ConfigError(f"maxaffine: [theory] nu must lie in (0, 1), got {theory.nu}")
    if theory.subset_n > MAX_SUBSET_SAMPLES:
        raise ConfigError(
            f"maxaffine: [theory] subset_n is limited to {MAX_SUBSET_SAMPLES}, {theory.subset_n=}"
        )
    # Solver settings are checked by building them once.
    try:
        for algorithm in config.solver.algorithms:
            config.solver.config_for(algorithm, data.d)
        data.covariate_law()
    except InputError as e:
        raise ConfigError(str(e)) from e

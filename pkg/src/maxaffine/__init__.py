# Copyright (c) 2025 Andreas Stenius
# This software is licensed under the MIT License.
# See the LICENSE file for details.
"""Max-affine regression by gradient descent, mini-batch SGD and alternating minimization."""
__version__ = "0.1"

from maxaffine.datagen import (
    CovariateKind,
    CovariateLaw,
    estimate_geometry,
    gen_dataset,
    gen_truth_orthonormal,
    gen_truth_sphere,
)
from maxaffine.initialize import InitializationError, moment_init, neighborhood, perturb_init
from maxaffine.metrics import ErrorReport, classify_success, prediction_error, relative_error
from maxaffine.model import (
    Dataset,
    InputError,
    MaxAffineError,
    ModelParams,
    Partition,
    assign_cells,
    evaluate,
    predict,
)
from maxaffine.objective import Gradient, gradient, loss, minibatch_gradient, sample_gradient
from maxaffine.solvers import (
    Algorithm,
    DivergenceError,
    SolverConfig,
    SolverRun,
    run_am,
    run_gd,
    run_sgd,
    solve,
)
from maxaffine.theory import FormulaDomainError

__all__ = [
    "Algorithm",
    "CovariateKind",
    "CovariateLaw",
    "Dataset",
    "DivergenceError",
    "ErrorReport",
    "FormulaDomainError",
    "Gradient",
    "InitializationError",
    "InputError",
    "MaxAffineError",
    "ModelParams",
    "Partition",
    "SolverConfig",
    "SolverRun",
    "assign_cells",
    "classify_success",
    "estimate_geometry",
    "evaluate",
    "gen_dataset",
    "gen_truth_orthonormal",
    "gen_truth_sphere",
    "gradient",
    "loss",
    "minibatch_gradient",
    "moment_init",
    "neighborhood",
    "perturb_init",
    "predict",
    "prediction_error",
    "relative_error",
    "run_am",
    "run_gd",
    "run_sgd",
    "sample_gradient",
    "solve",
]

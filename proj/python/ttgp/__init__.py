"""Tensor-train completion with Gaussian-process initialization."""

import json as _json

from ._ttgp import (
    ConfigError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    Error,
    EvaluationError,
    FitError,
    GpModel,
    IoError,
    ObservationSet,
    ParseError,
    ShapeError,
    SizeError,
    StageError,
    TensorTrain,
    complete,
    cross,
    fit_gp,
    gp_init,
    mse,
    mse_rel,
    objective,
    random_init,
    sample_gp_function,
)
from ._ttgp import run_experiment as _run_experiment

__version__ = "0.1.0"


def run_experiment(config):
    """Run an experiment grid. `config` is a dict in the JSON config format."""
    return _run_experiment(_json.dumps(config))


__all__ = [name for name in dir() if not name.startswith("_")]

"""Weak-form latent space dynamics identification with greedy sampling (numpy)."""

from .config import ExperimentConfig, preset
from .data import Dataset, DataSource, ParamSpace, assemble, load_dataset, load_model
from .errors import (ConfigError, DomainError, FormatError, InstabilityError, NumericalError,
                     SolverError, TrainingError, WglasdiError)
from .fom import FomProblem, Grid, TimeGrid, solve
from .latentdi import LibrarySpec
from .net import NetSpec
from .rom import RomModel, error_indicator, max_relative_error, predict
from .trainer import TrainConfig, Trainer, greedy_loop, train

__version__ = "0.1.0"

"""Physics-informed operator learning from arbitrarily discretized input functions.

Input functions sampled at per-realization sensor locations are embedded via a
learned dictionary of sinusoidal basis functions; an MLP operator maps
(embedding, coordinate) to the PDE solution, trained by finite-difference
residuals on structured collocation grids with hard-constrained boundary and
initial conditions.
"""

__version__ = "0.1.0"

from .encoder import (Dictionary, Embedding, SirenBasis, fit_dictionary,
                      load_dictionary, save_dictionary)
from .errors import (ConfigError, DomainError, EvaluationError, GraphError,
                     NumericalError, ResopError, ShapeError, TrainingDiverged,
                     TrainingError, UnsupportedConfigError)
from .fields import GrfConfig, PointCloudSample, sample_grf, subsample_multires
from .nn import AdamState, MlpParams, adam_step, mlp_forward, xavier_init
from .operator import (CollocationGrid, ConstraintRecipe, OperatorModel,
                       TrainSchedule, assemble_loss, build_grid,
                       constrained_forward, predict, train)
from .oracles import (oracle_antiderivative, oracle_biot1d, oracle_poisson2d,
                      terzaghi_series)
from .residuals import ResidualSpec, fd_derivatives
from .tape import Tape, Var, backward, grad

__all__ = [
    "AdamState", "CollocationGrid", "ConfigError", "ConstraintRecipe",
    "Dictionary", "DomainError", "Embedding", "EvaluationError", "GraphError",
    "GrfConfig", "MlpParams", "NumericalError", "OperatorModel",
    "PointCloudSample", "ResidualSpec", "ResopError", "ShapeError", "SirenBasis",
    "Tape", "TrainSchedule", "TrainingDiverged", "TrainingError",
    "UnsupportedConfigError", "Var", "adam_step", "assemble_loss", "backward",
    "build_grid", "constrained_forward", "fd_derivatives", "fit_dictionary",
    "grad", "load_dictionary", "mlp_forward", "oracle_antiderivative",
    "oracle_biot1d", "oracle_poisson2d", "predict", "sample_grf",
    "save_dictionary", "subsample_multires", "terzaghi_series", "train",
    "xavier_init",
]

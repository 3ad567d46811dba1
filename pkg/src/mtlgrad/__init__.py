"""Gradient combiners for multi-task learning, with brute-force oracles and a toy-study harness."""

from .combiners import (
    CombinerSpec, combine, combine_cagrad, combine_cagrad_fast, combine_mean, combine_mgda, combine_pcgrad,
)
from .errors import DomainError, InvalidInputError, NumericalDegeneracyError
from .gradcore import CombineResult, SimplexWeights, TaskGradients, average_gradient, conflict_measure
from .solvers import SolverSettings, pareto_stationarity, primal_oracle

__version__ = "0.1.0"

"""Adjoint sensitivities for method-of-lines ODEs with cotangent-lifted integrators."""

from .adjoint import AdjointSystem, VariationalSystem, form_adjoint, form_variational
from .diagrams import DiagramReport
from .errors import ConfigError, ConvergenceError, DimensionError, SingularMatrixError
from .gradients import CostFunction, SensitivityResult, discrete_gradient, fd_gradient_oracle
from .integrators import (ODE, AdaptiveEuler, TrajectoryBundle, backpropagate, get_method,
                          integrate_forward, integrate_variational)
from .pairings import DualityPairing, PairingKind
from .semidisc import EvolutionProblem, SemiDiscreteODE, assemble_galerkin, build_ode

__version__ = "0.1.0"

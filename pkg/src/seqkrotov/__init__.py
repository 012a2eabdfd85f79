"""Sequential-update (Krotov-style) optimal control for piecewise-constant fields."""

from seqkrotov.operators import (
    Eigendecomposition,
    eig_skew_hermitian,
    gamma,
    step_propagator,
)
from seqkrotov.propagation import ControlSystem, PropagationCache, TimeGrid, propagate
from seqkrotov.objectives import (
    DensityObservableFinal,
    DensityObservableIntegrated,
    DensityTrajectory,
    GateModulus,
    GateReal,
    GradientMethod,
    PureObservableFinal,
    PureObservableIntegrated,
    PureState,
    PureStateModulus,
    StateTrajectory,
    fidelity,
    gradient,
    gradient_overlap,
)
from seqkrotov.estimators import ControlProblem, PKKrotov, SequentialOptimizer
from seqkrotov.rates import RateModel, fit_rate_model
from seqkrotov.problems import Problem1Config, build_problem1, problem1
from seqkrotov.studies import StudyReport, full_config, reduced_config

__version__ = "0.1.0"

__all__ = [
    "ControlProblem",
    "ControlSystem",
    "DensityObservableFinal",
    "DensityObservableIntegrated",
    "DensityTrajectory",
    "Eigendecomposition",
    "GateModulus",
    "GateReal",
    "GradientMethod",
    "PKKrotov",
    "Problem1Config",
    "PropagationCache",
    "PureObservableFinal",
    "PureObservableIntegrated",
    "PureState",
    "PureStateModulus",
    "RateModel",
    "SequentialOptimizer",
    "StateTrajectory",
    "StudyReport",
    "TimeGrid",
    "build_problem1",
    "eig_skew_hermitian",
    "fidelity",
    "fit_rate_model",
    "full_config",
    "gamma",
    "gradient",
    "gradient_overlap",
    "problem1",
    "propagate",
    "reduced_config",
    "step_propagator",
]

"""Context-aware Markov prediction of statechart execution and resource demand."""

from .errors import StatePredictError
from .predictor import TransitionMatrix, build_matrix, one_hot, predict, propagate
from .resources import ProfileTable, ResourceProfile, envelope
from .statechart import StateId, Statechart, build_statechart
from .worldstore import ParameterSet, WorldState, WorldStore

__version__ = "0.1.0"

__all__ = [
    "ParameterSet",
    "ProfileTable",
    "ResourceProfile",
    "StateId",
    "StatePredictError",
    "Statechart",
    "TransitionMatrix",
    "WorldState",
    "WorldStore",
    "build_matrix",
    "build_statechart",
    "envelope",
    "one_hot",
    "predict",
    "propagate",
]

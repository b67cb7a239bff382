"""Learned adaptive time-stepping for compressible blast flows.

A classical finite-volume solver produces training data, one network learns
the step size from the flow state, and a step-conditioned surrogate advances
the state by that step.
"""

from .estimators import NeuralCFL, NeuralSolver
from .exceptions import ShockcastError

__all__ = ["NeuralCFL", "NeuralSolver", "ShockcastError"]
__version__ = "0.1.0"

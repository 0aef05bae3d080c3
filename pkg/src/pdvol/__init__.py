"""Toolkit for the EWMA path-dependent volatility model."""
from .errors import (AllPathsDiscarded, DomainError, InputError, NoFeasibleControl,
                     NumericalError, PdvError, ValidationError)
from .model import (ModelParams, TaylorConstants, drift_b, expansion_coefficients, sigma,
                    sigma_tilde, taylor_constants, y_singular)

__version__ = "0.1.0"

__all__ = [
    "AllPathsDiscarded", "DomainError", "InputError", "NoFeasibleControl", "NumericalError",
    "PdvError", "ValidationError", "ModelParams", "TaylorConstants", "drift_b",
    "expansion_coefficients", "sigma", "sigma_tilde", "taylor_constants", "y_singular",
]

"""Numerical laboratory for diffusions with form-bounded drift.

Submodules: ``drift_fields`` (drift families, mollification, weights),
``form_bound`` (form-bound constants), ``orlicz`` (gauge norm of cosh - 1),
``parabolic`` (IMEX semigroup, resolvent and certificates), ``degiorgi``
(iteration and regularity diagnostics), ``sde`` (Euler-Maruyama ensembles)
and ``cli`` (``lab`` command).
"""

from ._kernels import BACKEND
from .drift_fields import DriftSpec, eval_drift, mollify, sample_drift
from .errors import (ConfigurationError, IterationError, LabError, ParameterError,
                     ResolutionError, SingularityError, SolverError)
from .grid import Grid, GridScalarField, GridVectorField

__version__ = "0.1.0"

__all__ = ["BACKEND", "DriftSpec", "eval_drift", "mollify", "sample_drift", "Grid",
           "GridScalarField", "GridVectorField", "LabError", "ParameterError",
           "ConfigurationError", "SingularityError", "ResolutionError", "IterationError",
           "SolverError"]

"""Reduced-order models of parametric structures via two-stage POD.

Offline, snapshots of displacements and averaged stiffness matrices are
compressed twice: once for the displacement field, once for the family of
reduced inverse operators. A regressor learns the map from parameters (and,
for path-dependent problems, the walk through time) to the operator
coefficients, so the online phase never touches a full-order matrix.
"""

__version__ = "0.1.0"

from .doe import ParameterPoint, ParameterSpace, chebyshev_grid, corner_points, latin_hypercube
from .errors import DataValidationError, NumericalError, RomforgeError, UsageError
from .pod import MatrixModeBasis, ReducedBasis, pod_basis
from .runtime import (
    RomModel,
    TrainConfig,
    load_model,
    predict_linear,
    run_online,
    save_model,
    train_offline,
)

__all__ = [
    "__version__",
    "DataValidationError",
    "NumericalError",
    "RomforgeError",
    "UsageError",
    "MatrixModeBasis",
    "ParameterPoint",
    "ParameterSpace",
    "ReducedBasis",
    "RomModel",
    "TrainConfig",
    "chebyshev_grid",
    "corner_points",
    "latin_hypercube",
    "load_model",
    "pod_basis",
    "predict_linear",
    "run_online",
    "save_model",
    "train_offline",
]

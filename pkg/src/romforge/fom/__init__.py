from .plate import LinearSystem, assemble_plate, solve_linear
from .nonlinear import (
    NonlinearTrajectory,
    SpringChain,
    TrussArch,
    run_nonlinear_fom,
    time_grid,
)

__all__ = [
    "LinearSystem",
    "assemble_plate",
    "solve_linear",
    "NonlinearTrajectory",
    "SpringChain",
    "TrussArch",
    "run_nonlinear_fom",
    "time_grid",
]

"""Trajectory and inertial-parameter estimation."""
from .ocp import DynamicsError, LeastSquaresOCP, LinearDynamics, OCPSolution, SolverOptions
from .problem import (CHANNELS, EstimationProblem, EstimationSolution, MeasurementSample,
                      WeightConfig, channel_slices, measure, measurement_residual)
from .pfie import ddp_solve, fddp_solve, objective, pfie_estimate, seed_trajectory

__all__ = [
    "CHANNELS", "DynamicsError", "EstimationProblem", "EstimationSolution", "LeastSquaresOCP",
    "LinearDynamics", "MeasurementSample", "OCPSolution", "SolverOptions", "WeightConfig",
    "channel_slices", "ddp_solve", "fddp_solve", "measure", "measurement_residual",
    "objective", "pfie_estimate", "seed_trajectory",
]

from .baseline import baseline_fixed_contact_estimate, contact_flags, rigid_step  # noqa: E402

__all__ += ["baseline_fixed_contact_estimate", "contact_flags", "rigid_step"]

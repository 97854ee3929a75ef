"""Implicit gradient-flow simulator for an electrostatically actuated
clamped beam suspended above a dielectric layer.

The beam deflection evolves by a time-implicit minimizing-movements
iteration for a fourth-order parabolic obstacle problem.  Each step couples
a constrained energy minimization (primal-dual active set) to an elliptic
transmission solve for the electrostatic potential on a
deformation-dependent domain.
"""

from memsbeam.config import PhysicalParams, NumericalParams, ValidatedConfig, validate_config
from memsbeam.beam import BeamGrid, BeamState
from memsbeam.dielectric import PermittivityModel, BoundaryDataModel, example55_model
from memsbeam.transmission import CompositeMesh, PotentialSolution, build_mesh, solve_potential
from memsbeam.scheme import SchemeConstants, StepResult, SimulationTrace, lower_bound_constant

__all__ = [
    "PhysicalParams",
    "NumericalParams",
    "ValidatedConfig",
    "validate_config",
    "BeamGrid",
    "BeamState",
    "PermittivityModel",
    "BoundaryDataModel",
    "example55_model",
    "CompositeMesh",
    "PotentialSolution",
    "build_mesh",
    "solve_potential",
    "SchemeConstants",
    "StepResult",
    "SimulationTrace",
    "lower_bound_constant",
]

__version__ = "0.1.0"

"""releq: relative equilibria bifurcating from symmetric Hamiltonian equilibria.

The package finds critical velocities of the augmented Hamiltonian at a
symmetric equilibrium, counts the bifurcating relative equilibria via
topological lower bounds, constructs branches numerically, and verifies
every reported point against the flow of Hamilton's equations.
"""

from .errors import (DimensionMismatch, DomainError, InsufficientSamples,
                     NoConvergence, NoKernel, ParseError, ValidationError)
from .model import (GroupAction, HamiltonianSpec, Model, MomentumForm,
                    SymplecticSpace, Tolerances, build_model, check_invariance,
                    eval_h2, momentum_quadratic, standard_omega, validate_action)
from .systems import BUILTIN_NAMES, make_builtin

__all__ = [
    "BUILTIN_NAMES",
    "DimensionMismatch",
    "DomainError",
    "GroupAction",
    "HamiltonianSpec",
    "InsufficientSamples",
    "Model",
    "MomentumForm",
    "NoConvergence",
    "NoKernel",
    "ParseError",
    "SymplecticSpace",
    "Tolerances",
    "ValidationError",
    "build_model",
    "check_invariance",
    "eval_h2",
    "make_builtin",
    "momentum_quadratic",
    "standard_omega",
    "validate_action",
]

__version__ = "0.1.0"

"""Computable weak shadowing: pseudotrajectories, recurrence at finite scale,
shadowing certificates, almost-invariant networks and invariant measures."""

__version__ = "0.1.0"

from .errors import (
    BudgetExceededError,
    InvalidInputError,
    ResourceError,
    ShadowlabError,
    SingularDerivativeError,
    UnsupportedOperationError,
)
from .space import Grid, SpaceDescriptor, build_grid, distance, verify_epsilon_network
from .systems import SystemSpec, apply_n, is_fixed_point, orbit_segment, parse_system, zoo

__all__ = [
    "BudgetExceededError",
    "Grid",
    "InvalidInputError",
    "ResourceError",
    "ShadowlabError",
    "SingularDerivativeError",
    "SpaceDescriptor",
    "SystemSpec",
    "UnsupportedOperationError",
    "apply_n",
    "build_grid",
    "distance",
    "is_fixed_point",
    "orbit_segment",
    "parse_system",
    "verify_epsilon_network",
    "zoo",
]

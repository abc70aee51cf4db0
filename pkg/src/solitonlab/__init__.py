"""Numerical checks of stability identities for Lagrangian translating solitons."""

from .catalog import (
    CATALOG,
    FLAT_PLANE,
    GRIM_REAPER_CYLINDER,
    GRIM_REAPER_PRODUCT,
    SolitonSpec,
    make_flat_plane,
    make_grim_reaper_cylinder,
    make_grim_reaper_product,
    soliton_residual,
)
from .errors import DegenerateMetricError, HypothesisViolation, SolitonLabError, UnsupportedOperation
from .patch import ANALYTIC, FINITE_DIFFERENCE, AmbientStructure, ImmersedPatch, ParameterGrid, build_patch
from .variation import CheckReport

__version__ = "0.1.0"

"""Viability-kernel solver and negotiation workbench for lake management."""

__version__ = "0.1.0"

from .dynamics import (
    ControlBox,
    DynamicsSpec,
    LakeState,
    ModelParams,
    ParamInterval,
    TycheBox,
    equilibria_inflow,
    eval_vector_field,
    model_blend,
    model_s,
    model_sprime,
    step_discrete,
)
from .grid import Axis, CellSet, Grid, chebyshev_hausdorff
from .solver import (
    DiscreteProblem,
    RegulationMap,
    SolveReport,
    extract_regulation,
    guaranteed_kernel,
    intersect_regulation,
    viability_kernel,
)

__all__ = [
    "Axis",
    "CellSet",
    "ControlBox",
    "DiscreteProblem",
    "DynamicsSpec",
    "Grid",
    "LakeState",
    "ModelParams",
    "ParamInterval",
    "RegulationMap",
    "SolveReport",
    "TycheBox",
    "chebyshev_hausdorff",
    "equilibria_inflow",
    "eval_vector_field",
    "extract_regulation",
    "guaranteed_kernel",
    "intersect_regulation",
    "model_blend",
    "model_s",
    "model_sprime",
    "step_discrete",
    "viability_kernel",
]

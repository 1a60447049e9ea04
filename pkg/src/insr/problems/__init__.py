"""Per-PDE objectives and time-stepping orchestration."""

from .advection import AdvectionProblem, advection_loss
from .base import MaterialParams, TimeStepState, fit_initial, objective_from_builder
from .elastic import (
    ElasticBatch,
    ElasticProblem,
    PositionalConstraint,
    collision_force,
    elastic_loss,
    max_penetration,
    neo_hookean_stress,
    stable_neo_hookean,
)
from .fluid import (
    FluidProblem,
    advect_density_raster,
    fluid_advect_loss,
    fluid_correct_loss,
    fluid_project_loss,
    mean_abs_divergence,
)

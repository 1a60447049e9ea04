"""Shared time-stepping state and initial-condition fitting.

A time step advances the network weights by one optimization solve (or, for
split fluids, three).  ``TimeStepState`` carries the current weights, the
previous step's weights where the integrator needs them, and any auxiliary
networks (advected velocity, pressure).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..autodiff import Tape, backward
from ..field import RecordedField, SirenField
from ..optim import PlateauSchedule, solve

__all__ = ["TimeStepState", "MaterialParams", "fit_initial", "objective_from_builder"]


@dataclass
class TimeStepState:
    current: SirenField
    previous: SirenField | None = None
    aux: dict = dc_field(default_factory=dict)
    n: int = 0
    dt: float = 0.0

    @property
    def time(self) -> float:
        return self.n * self.dt


@dataclass
class MaterialParams:
    """Physical constants shared across the problem objectives."""

    rho0: float = 1.0            # solid density in the reference space
    lam: float = 1.0             # first Lame parameter
    mu: float = 1.0              # second Lame parameter
    body_force: tuple = (0.0, 0.0)
    k_col: float = 1e4           # collision penalty stiffness
    rho_f: float = 1.0           # fluid density (g = 0 in all fluid runs)
    advect_speed: float = 0.25
    lambda_bc: float = 1.0       # boundary penalty weight

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.lambda_bc < 0:
            raise ValueError("lambda_bc must be non-negative")


def objective_from_builder(var_field: SirenField, builder):
    """Adapt a tape-level loss builder to the optimizer's interface.

    ``builder(tape, recorded_field, batch) -> loss node``; the returned
    callable maps (theta, batch) to (loss value, flat gradient).
    """

    def objective(theta: np.ndarray, batch):
        var_field.set_flat(theta)
        tape = Tape()
        rf = RecordedField(tape, var_field)
        loss = builder(tape, rf, batch)
        backward(tape, loss)
        return float(loss.out), rf.grad_flat()

    return objective


def fit_initial(
    field: SirenField,
    target,
    schedule: PlateauSchedule,
    sampler,
    *,
    log_path=None,
) -> SirenField:
    """Fit the field to a given initial condition by least squares over
    stochastic batches: min_theta mean || f_theta(x) - target(x) ||^2.

    ``target`` maps points (N, m) to values (N, d).  Mutates and returns
    ``field``.
    """

    def builder(tape, rf, batch):
        x = batch.interior
        want = np.atleast_2d(np.asarray(target(x), dtype=np.float64))
        if want.ndim == 1:
            want = want[:, None]
        j = rf.jet(x, order=0)
        return tape.mean_sq(tape.sub(tape.jet_value(j), tape.const(want)))

    theta = solve(
        objective_from_builder(field, builder),
        field.get_flat(),
        schedule,
        sampler,
        log_path=log_path,
    )
    field.set_flat(theta)
    return field

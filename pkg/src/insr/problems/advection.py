"""1-d advection: u_t + a u_x = 0 as a per-step optimization.

The midpoint objective penalizes the residual of the implicit midpoint rule
at stochastic collocation points,

    mean || (u1 - u0) / dt + a d/dx ((u1 + u0) / 2) ||^2,

the implicit-Euler variant puts the spatial term on u1 alone, and a
quadratic penalty pins the boundary values to zero.
"""

from __future__ import annotations

import numpy as np

from ..field import SirenField
from ..optim import PlateauSchedule, solve
from ..sampling import Box, SampleBatch
from .base import TimeStepState, objective_from_builder

__all__ = ["advection_loss", "AdvectionProblem"]

SCHEMES = ("midpoint", "implicit_euler")


def advection_loss(
    tape,
    rf,
    prev: SirenField,
    batch: SampleBatch,
    speed: float,
    dt: float,
    scheme: str = "midpoint",
    lambda_bc: float = 1.0,
):
    """Loss node for one advection step; ``rf`` records the new field."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    x = batch.interior
    n = x.shape[0]
    prev_jet = prev.eval_jet(x, order=1)

    j = rf.jet(x, order=1)
    v1 = tape.jet_value(j)
    g1 = tape.reshape(tape.jet_grad(j), (n, 1))
    dudt = tape.scale(tape.sub(v1, tape.const(prev_jet.value)), 1.0 / dt)
    if scheme == "midpoint":
        g0 = prev_jet.grad.reshape(n, 1)
        spatial = tape.scale(tape.add(g1, tape.const(g0)), 0.5 * speed)
    else:
        spatial = tape.scale(g1, speed)
    loss = tape.mean_sq(tape.add(dudt, spatial))

    if batch.boundary is not None and lambda_bc > 0.0:
        jb = rf.jet(batch.boundary, order=0)
        bc = tape.mean_sq(tape.jet_value(jb))
        loss = tape.add(loss, tape.scale(bc, lambda_bc))
    return loss


class AdvectionProblem:
    def __init__(
        self,
        domain: Box,
        speed: float,
        dt: float,
        scheme: str = "midpoint",
        lambda_bc: float = 1.0,
    ):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.domain = domain
        self.speed = float(speed)
        self.dt = float(dt)
        self.scheme = scheme
        self.lambda_bc = float(lambda_bc)

    def objective(self, new_field: SirenField, prev_field: SirenField):
        def builder(tape, rf, batch):
            return advection_loss(
                tape, rf, prev_field, batch, self.speed, self.dt,
                self.scheme, self.lambda_bc,
            )

        return objective_from_builder(new_field, builder)

    def step(
        self,
        state: TimeStepState,
        schedule: PlateauSchedule,
        sampler,
        *,
        log_path=None,
    ) -> TimeStepState:
        """Advance n -> n+1 with one solve, warm-started at the current weights."""
        new_field = state.current.clone()
        theta = solve(
            self.objective(new_field, state.current),
            new_field.get_flat(),
            schedule,
            sampler,
            log_path=log_path,
        )
        new_field.set_flat(theta)
        return TimeStepState(
            current=new_field,
            previous=state.current,
            aux=state.aux,
            n=state.n + 1,
            dt=self.dt,
        )

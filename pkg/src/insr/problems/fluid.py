"""Incompressible Euler flow via Chorin splitting on neural velocity fields.

One time step runs three sequential solves, each over its own network and
each warm-started from that network's previous weights:

  advect    u_adv(x) ~ u_n(x - dt u_n(x))      (backtracked point clamped
                                                 to the domain, evaluated by
                                                 direct network inference)
  project   lap p    ~ div u_adv
  correct   u_{n+1}  ~ u_adv - grad p

Solid walls enter as quadratic penalties on the boundary-normal component
of the velocity (and of grad p for the projection solve).
"""

from __future__ import annotations

import numpy as np

from ..field import SirenField
from ..optim import PlateauSchedule, solve
from ..sampling import Box, SampleBatch
from .base import TimeStepState, objective_from_builder

__all__ = [
    "fluid_advect_loss",
    "fluid_project_loss",
    "fluid_correct_loss",
    "FluidProblem",
    "mean_abs_divergence",
    "advect_density_raster",
]


def _normal_component(tape, values_node, normals: np.ndarray):
    return tape.sum_last(tape.mul(values_node, tape.const(normals)))


def fluid_advect_loss(
    tape, rf, u_prev: SirenField, batch: SampleBatch, dt: float,
    lambda_bc: float, domain: Box,
):
    """Semi-Lagrangian target matching for the advected velocity net."""
    x = batch.interior
    u0 = u_prev(x)
    back = domain.clamp(x - dt * u0)
    target = u_prev(back)

    j = rf.jet(x, order=0)
    loss = tape.mean_sq(tape.sub(tape.jet_value(j), tape.const(target)))
    if batch.boundary is not None and lambda_bc > 0.0:
        jb = rf.jet(batch.boundary, order=0)
        un = _normal_component(tape, tape.jet_value(jb), batch.normals)
        loss = tape.add(loss, tape.scale(tape.mean_sq(un), lambda_bc))
    return loss


def fluid_project_loss(
    tape, rf_p, u_adv: SirenField, batch: SampleBatch, lambda_bc: float
):
    """Pressure Poisson residual: mean (lap p - div u_adv)^2 plus a no-flux
    penalty on the boundary-normal pressure gradient."""
    x = batch.interior
    n = x.shape[0]
    adv_grad = u_adv.eval_jet(x, order=1).grad
    div = adv_grad[0][:, 0] + adv_grad[1][:, 1]

    j = rf_p.jet(x, order=2)
    lap = tape.reshape(tape.jet_laplacian(j), (n,))
    loss = tape.mean_sq(tape.sub(lap, tape.const(div)))
    if batch.boundary is not None and lambda_bc > 0.0:
        jb = rf_p.jet(batch.boundary, order=1)
        gn = _normal_component(tape, tape.jet_grad_scalar(jb), batch.normals)
        loss = tape.add(loss, tape.scale(tape.mean_sq(gn), lambda_bc))
    return loss


def fluid_correct_loss(
    tape, rf_u, u_adv: SirenField, pressure: SirenField,
    batch: SampleBatch, lambda_bc: float,
):
    """Velocity correction: match u_adv - grad p, penalizing wall-normal flow.

    The correction is exactly u_adv - grad p, with no extra dt or density
    factor.
    """
    x = batch.interior
    grad_p = pressure.eval_jet(x, order=1).grad[:, :, 0].T
    target = u_adv(x) - grad_p

    j = rf_u.jet(x, order=0)
    loss = tape.mean_sq(tape.sub(tape.jet_value(j), tape.const(target)))
    if batch.boundary is not None and lambda_bc > 0.0:
        jb = rf_u.jet(batch.boundary, order=0)
        un = _normal_component(tape, tape.jet_value(jb), batch.normals)
        loss = tape.add(loss, tape.scale(tape.mean_sq(un), lambda_bc))
    return loss


class FluidProblem:
    """Chorin-split stepper over (velocity, advected-velocity, pressure) nets.

    ``state.aux`` must hold the persistent auxiliary nets under keys
    ``u_adv`` and ``pressure``; each sub-solve warm-starts from its own net's
    previous weights.
    """

    def __init__(self, domain: Box, dt: float, lambda_bc: float = 1.0):
        self.domain = domain
        self.dt = float(dt)
        self.lambda_bc = float(lambda_bc)

    def step(
        self,
        state: TimeStepState,
        schedule_factory,
        sampler,
        *,
        log_paths=(None, None, None),
    ) -> TimeStepState:
        u_n = state.current
        u_adv: SirenField = state.aux["u_adv"]
        pressure: SirenField = state.aux["pressure"]

        def adv_builder(tape, rf, batch):
            return fluid_advect_loss(
                tape, rf, u_n, batch, self.dt, self.lambda_bc, self.domain
            )

        theta = solve(
            objective_from_builder(u_adv, adv_builder),
            u_adv.get_flat(),
            schedule_factory(),
            sampler,
            log_path=log_paths[0],
        )
        u_adv.set_flat(theta)

        def pro_builder(tape, rf, batch):
            return fluid_project_loss(tape, rf, u_adv, batch, self.lambda_bc)

        theta = solve(
            objective_from_builder(pressure, pro_builder),
            pressure.get_flat(),
            schedule_factory(),
            sampler,
            log_path=log_paths[1],
        )
        pressure.set_flat(theta)

        u_new = u_n.clone()

        def cor_builder(tape, rf, batch):
            return fluid_correct_loss(
                tape, rf, u_adv, pressure, batch, self.lambda_bc
            )

        theta = solve(
            objective_from_builder(u_new, cor_builder),
            u_new.get_flat(),
            schedule_factory(),
            sampler,
            log_path=log_paths[2],
        )
        u_new.set_flat(theta)

        return TimeStepState(
            current=u_new,
            previous=u_n,
            aux={"u_adv": u_adv, "pressure": pressure},
            n=state.n + 1,
            dt=self.dt,
        )


def mean_abs_divergence(field: SirenField, pts: np.ndarray) -> float:
    g = field.eval_jet(pts, order=1).grad
    return float(np.abs(g[0][:, 0] + g[1][:, 1]).mean())


def advect_density_raster(
    density: np.ndarray, domain: Box, velocity: SirenField, dt: float
) -> np.ndarray:
    """Semi-Lagrangian transport of a passive marker raster by a neural
    velocity: d1(x) = d0(clamp(x - dt u(x))), bilinear raster lookup."""
    density = np.asarray(density, dtype=np.float64)
    if density.ndim == 3:
        density = density[:, :, 0]
    h_cells, w_cells = density.shape
    lo, hi = domain.lo, domain.hi
    sx = (hi[0] - lo[0]) / w_cells
    sy = (hi[1] - lo[1]) / h_cells
    xs = lo[0] + (np.arange(w_cells) + 0.5) * sx
    ys = lo[1] + (np.arange(h_cells) + 0.5) * sy
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    back = domain.clamp(pts - dt * velocity(pts))

    fx = np.clip((back[:, 0] - lo[0]) / sx - 0.5, 0.0, w_cells - 1.0)
    fy = np.clip((back[:, 1] - lo[1]) / sy - 0.5, 0.0, h_cells - 1.0)
    i0 = np.clip(np.floor(fx).astype(int), 0, w_cells - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, h_cells - 2)
    tx = fx - i0
    ty = fy - j0
    d = density
    out = (
        d[j0, i0] * (1 - tx) * (1 - ty)
        + d[j0, i0 + 1] * tx * (1 - ty)
        + d[j0 + 1, i0] * (1 - tx) * ty
        + d[j0 + 1, i0 + 1] * tx * ty
    )
    return out.reshape(h_cells, w_cells)

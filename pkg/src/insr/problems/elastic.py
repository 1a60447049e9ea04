"""Elastodynamics on neural displacement fields.

The network stores the displacement d(x); the deformation map is
phi(x) = x + d(x) and the deformation gradient F = I + grad d.  One time
step minimizes the incremental potential

    mean[ (rho0/2) || phid_{n+1} - phid_n ||^2     (dynamic mode only)
          + Psi(F)                                 stable Neo-Hookean
          - rho0 b . phi_{n+1}                     body-force potential
          - rho0 f_col . phi_{n+1} ]               collision penalty force
    + sum_c w_c mean || d(x_b) - dbar(x_b) ||^2    positional constraints

with phid_{n+1} = (phi_{n+1} - phi_n) / dt and phid_n reconstructed from
the two previous weight vectors (zero at the first step).  The collision
force is spring-like, f_col = k_col ((b_c - q_c) . n_c) n_c at penetrating
material points, recomputed from the current iterate each iteration and
treated as a fixed external force inside the solve; its potential carries
the same sign as the body-force potential so that minimization pushes
penetrating points back to the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..field import SirenField
from ..optim import PlateauSchedule, solve
from ..sampling import Box
from .base import MaterialParams, TimeStepState, objective_from_builder

__all__ = [
    "stable_neo_hookean",
    "neo_hookean_stress",
    "collision_force",
    "PositionalConstraint",
    "ElasticBatch",
    "elastic_loss",
    "ElasticProblem",
    "max_penetration",
]


def stable_neo_hookean(F: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Energy density (lam/2) tr^2(Sigma - I) + mu (det F - 1)^2.

    Sigma are the singular values of F; the expression stays finite for any
    finite F, inverted elements included.  Accepts (..., m, m) batches.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim < 2 or F.shape[-1] != F.shape[-2]:
        raise ValueError(f"deformation gradient must be square, got {F.shape}")
    m = F.shape[-1]
    det = np.linalg.det(F)
    if m == 2:
        # sigma1 + sigma2 = sqrt(||F||^2 + 2 |det F|), closed form in 2-d
        fro2 = (F * F).sum(axis=(-2, -1))
        sig_sum = np.sqrt(fro2 + 2.0 * np.abs(det))
    else:
        sig_sum = np.linalg.svd(F, compute_uv=False).sum(axis=-1)
    return 0.5 * lam * (sig_sum - m) ** 2 + mu * (det - 1.0) ** 2


def neo_hookean_stress(F: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """d Psi / d F for 2-d deformation gradients (..., 2, 2)."""
    F = np.asarray(F, dtype=np.float64)
    if F.shape[-2:] != (2, 2):
        raise ValueError("stress is implemented for 2-d gradients")
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    fro2 = (F * F).sum(axis=(-2, -1))
    s = np.sqrt(fro2 + 2.0 * np.abs(det))
    ddet = np.empty_like(F)
    ddet[..., 0, 0] = F[..., 1, 1]
    ddet[..., 0, 1] = -F[..., 1, 0]
    ddet[..., 1, 0] = -F[..., 0, 1]
    ddet[..., 1, 1] = F[..., 0, 0]
    s_safe = np.where(s > 0.0, s, 1.0)
    ds = (F + np.sign(det)[..., None, None] * ddet) / s_safe[..., None, None]
    return (
        lam * (s - 2.0)[..., None, None] * ds
        + 2.0 * mu * (det - 1.0)[..., None, None] * ddet
    )


def collision_force(deformed: np.ndarray, obstacle, k_col: float) -> np.ndarray:
    """Spring-like penalty force at penetrating points, zero elsewhere:
    f = k_col ((b_c - q_c) . n_c) n_c, so ||f|| = k_col * depth."""
    q = np.atleast_2d(deformed)
    f = np.zeros_like(q)
    sdf = obstacle.sdf(q)
    mask = sdf < 0.0
    if np.any(mask):
        surf, nrm = obstacle.closest(q[mask])
        depth = ((surf - q[mask]) * nrm).sum(axis=1)
        f[mask] = k_col * depth[:, None] * nrm
    return f


def max_penetration(deformed: np.ndarray, obstacle) -> float:
    """Deepest overlap of deformed material points with the obstacle."""
    return float(np.maximum(-obstacle.sdf(np.atleast_2d(deformed)), 0.0).max())


@dataclass
class PositionalConstraint:
    """Quadratic penalty pinning sampled boundary points to target
    displacements.  ``sample(n, rng) -> points``; ``target(points) ->
    displacements``."""

    sample: callable
    target: callable
    weight: float = 1.0


@dataclass
class ElasticBatch:
    interior: np.ndarray
    constraint_points: tuple = ()

    @property
    def size(self) -> int:
        return self.interior.shape[0]


def elastic_loss(
    tape,
    rf,
    batch: ElasticBatch,
    params: MaterialParams,
    *,
    dt: float | None,
    prev: SirenField | None,
    prev_prev: SirenField | None,
    constraints=(),
    obstacle=None,
    mode: str = "dynamic",
    frozen_collision_force: np.ndarray | None = None,
):
    """Incremental-potential loss node; ``rf`` records the new displacement
    net.  ``prev``/``prev_prev`` supply phi_n and the previous velocity
    (finite-differenced); both are ignored in quasistatic mode.

    The collision force is normally recomputed from the current iterate;
    ``frozen_collision_force`` substitutes a fixed force array, which is what
    a finite-difference probe of the per-iteration objective must use."""
    if mode not in ("dynamic", "quasistatic"):
        raise ValueError(f"unknown mode {mode!r}")
    x = batch.interior
    n = x.shape[0]

    j = rf.jet(x, order=1)
    v1 = tape.jet_value(j)          # displacement values (N, 2)
    G = tape.jet_jacobian(j)        # (N, 2, 2): G[n, k, i] = d d_k / d x_i

    eye = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    F = tape.add(tape.const(eye), G)
    psi = tape.neo_hookean(F, params.lam, params.mu)
    if not np.all(np.isfinite(psi.out)):
        raise FloatingPointError("non-finite elastic energy density")
    loss = tape.scale(tape.sum(psi), 1.0 / n)

    if mode == "dynamic":
        if dt is None or prev is None:
            raise ValueError("dynamic mode needs dt and the previous field")
        d_prev = prev(x)
        if prev_prev is not None:
            vel_prev = (d_prev - prev_prev(x)) / dt
        else:
            vel_prev = np.zeros_like(d_prev)
        dv = tape.sub(
            tape.scale(tape.sub(v1, tape.const(d_prev)), 1.0 / dt),
            tape.const(vel_prev),
        )
        kinetic = tape.scale(tape.sum(tape.square(dv)), 0.5 * params.rho0 / n)
        loss = tape.add(loss, kinetic)

    body = np.asarray(params.body_force, dtype=np.float64)
    if np.any(body != 0.0):
        b_tiled = np.broadcast_to(body, (n, 2)).copy()
        ext = tape.scale(
            tape.sum(tape.mul(v1, tape.const(b_tiled))), -params.rho0 / n
        )
        loss = tape.add(loss, ext)
        # constant -rho0 b . x part, kept so the loss equals the full potential
        loss = tape.add(
            loss, tape.const(np.float64(-params.rho0 * float((x @ body).mean())))
        )

    if obstacle is not None or frozen_collision_force is not None:
        if frozen_collision_force is not None:
            f_col = frozen_collision_force
        else:
            deformed = x + rf.field(x)
            f_col = collision_force(deformed, obstacle, params.k_col)
        if np.any(f_col != 0.0):
            col = tape.scale(
                tape.sum(tape.mul(v1, tape.const(f_col))), -params.rho0 / n
            )
            loss = tape.add(loss, col)
            loss = tape.add(
                loss,
                tape.const(np.float64(-params.rho0 * float((f_col * x).sum() / n))),
            )

    for constraint, pts in zip(constraints, batch.constraint_points):
        want = np.atleast_2d(np.asarray(constraint.target(pts), dtype=np.float64))
        jb = rf.jet(pts, order=0)
        pen = tape.mean_sq(tape.sub(tape.jet_value(jb), tape.const(want)))
        loss = tape.add(loss, tape.scale(pen, constraint.weight))
    return loss


class ElasticProblem:
    def __init__(
        self,
        domain: Box,
        params: MaterialParams,
        dt: float | None = None,
        mode: str = "dynamic",
        constraints=(),
        obstacle=None,
        constraint_batch: int = 256,
    ):
        if mode == "dynamic" and (dt is None or dt <= 0):
            raise ValueError("dynamic mode needs dt > 0")
        self.domain = domain
        self.params = params
        self.dt = dt
        self.mode = mode
        self.constraints = tuple(constraints)
        self.obstacle = obstacle
        self.constraint_batch = int(constraint_batch)

    def make_sampler(self, batch_size: int, rng):
        def sample():
            pts = self.domain.sample_interior(batch_size, rng)
            cpts = tuple(
                c.sample(self.constraint_batch, rng) for c in self.constraints
            )
            return ElasticBatch(pts, cpts)

        return sample

    def objective(self, new_field: SirenField, prev, prev_prev):
        def builder(tape, rf, batch):
            return elastic_loss(
                tape, rf, batch, self.params,
                dt=self.dt, prev=prev, prev_prev=prev_prev,
                constraints=self.constraints, obstacle=self.obstacle,
                mode=self.mode,
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
        """One dynamic step (or the single quasistatic solve)."""
        new_field = state.current.clone()
        prev = state.current if self.mode == "dynamic" else None
        prev_prev = state.previous if self.mode == "dynamic" else None
        theta = solve(
            self.objective(new_field, prev, prev_prev),
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
            dt=self.dt if self.dt is not None else 0.0,
        )

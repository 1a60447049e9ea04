"""Adam with a reduce-on-plateau learning-rate schedule.

Each time step of a simulation is one call to :func:`solve`: starting from
the warm-start weights, draw a fresh stochastic batch every iteration,
take a bias-corrected Adam step, and lower the learning rate by ``factor``
whenever the batch loss has not improved for ``patience`` iterations.  The
loop stops when the next reduction would fall below ``lr_min`` or after
``iter_max`` iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "PlateauSchedule", "SolverAbort", "adam_step", "solve"]


class SolverAbort(RuntimeError):
    """Raised when a solve hits a non-finite loss or gradient."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), **kw)


def adam_step(
    state: AdamState, lr: float, grads: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state``, returns new weights."""
    if not np.all(np.isfinite(grads)):
        raise SolverAbort("non-finite gradient in Adam step")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    return weights - lr * mhat / (np.sqrt(vhat) + state.eps)


@dataclass
class PlateauSchedule:
    """Reduce-on-plateau schedule; ``lr`` only ever decreases.

    A loss counts as an improvement when it falls below
    ``best * (1 - rel_improvement)``; strict comparison would be too
    noise-sensitive under stochastic batches.
    """

    lr0: float
    factor: float = 0.1
    patience: int = 500
    lr_min: float = 1e-8
    iter_max: int = 20000
    rel_improvement: float = 1e-6
    lr: float = field(init=False)
    best_loss: float = field(init=False, default=math.inf)
    stall: int = field(init=False, default=0)

    def __post_init__(self):
        self.lr = float(self.lr0)

    def observe(self, loss: float) -> bool:
        """Record one iteration's loss.  Returns True when the schedule says
        to stop (the next reduction would undershoot lr_min)."""
        if loss < self.best_loss * (1.0 - self.rel_improvement):
            self.best_loss = loss
            self.stall = 0
            return False
        self.stall += 1
        if self.stall >= self.patience:
            self.stall = 0
            new_lr = self.lr * self.factor
            if new_lr < self.lr_min:
                return True
            self.lr = new_lr
        return False


def solve(
    objective,
    theta_init: np.ndarray,
    schedule: PlateauSchedule,
    sampler,
    *,
    adam: AdamState | None = None,
    log_path=None,
) -> np.ndarray:
    """Minimize ``objective`` starting from ``theta_init``.

    ``objective(theta, batch) -> (loss, grad)`` with grad flat like theta;
    ``sampler()`` draws a fresh batch per iteration.  Returns the final
    weights.  Optionally appends a per-iteration ``iter,lr,loss`` CSV log.
    """
    theta = np.array(theta_init, dtype=np.float64, copy=True)
    state = adam if adam is not None else AdamState.zeros(theta.size)
    log = open(log_path, "w") if log_path is not None else None
    try:
        if log:
            log.write("iter,lr,loss\n")
        for it in range(schedule.iter_max):
            batch = sampler()
            loss, grad = objective(theta, batch)
            loss = float(loss)
            if not math.isfinite(loss):
                raise SolverAbort(f"non-finite loss at iteration {it}", iteration=it)
            if log:
                log.write(f"{it},{schedule.lr!r},{loss!r}\n")
            if schedule.observe(loss):
                break
            try:
                theta = adam_step(state, schedule.lr, grad, theta)
            except SolverAbort as exc:
                raise SolverAbort(str(exc), iteration=it) from exc
    finally:
        if log:
            log.close()
    return theta

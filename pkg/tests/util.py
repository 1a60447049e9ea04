"""Shared helpers: finite-difference oracles and random nets."""

import numpy as np

from insr.field import SirenField, init_siren


def rel_err(got: np.ndarray, want: np.ndarray, floor: float = 1e-12) -> float:
    got = np.asarray(got, dtype=float).ravel()
    want = np.asarray(want, dtype=float).ravel()
    return float(np.linalg.norm(got - want) / max(np.linalg.norm(want), floor))


def random_field(rng: np.random.Generator, m=1, d=1, alpha=2, beta=8, omega0=30.0) -> SirenField:
    return init_siren(m, d, alpha, beta, omega0=omega0, seed=int(rng.integers(2**31)))


def fd_weight_grad(loss_fn, field: SirenField, indices, h=1e-6) -> np.ndarray:
    """Central finite differences of loss_fn(field) over selected flat-weight
    entries.  loss_fn must not mutate the field."""
    theta = field.get_flat()
    out = np.empty(len(indices))
    for k, i in enumerate(indices):
        for sign, slot in ((+1.0, 0), (-1.0, 1)):
            bumped = theta.copy()
            bumped[i] += sign * h
            field.set_flat(bumped)
            val = loss_fn(field)
            if slot == 0:
                plus = val
            else:
                minus = val
        out[k] = (plus - minus) / (2.0 * h)
    field.set_flat(theta)
    return out


def fd_spatial(fn, x, h=1e-5):
    """Central-difference gradient and second derivative (diagonal) of a
    batched vector function fn((N, m)) -> (N, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, m = x.shape
    f0 = fn(x)
    d = f0.shape[1]
    grad = np.empty((n, d, m))
    hess = np.empty((n, d, m))
    for i in range(m):
        xp = x.copy()
        xm = x.copy()
        xp[:, i] += h
        xm[:, i] -= h
        fp = fn(xp)
        fm = fn(xm)
        grad[:, :, i] = (fp - fm) / (2.0 * h)
        hess[:, :, i] = (fp - 2.0 * f0 + fm) / (h * h)
    return grad, hess

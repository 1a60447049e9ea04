"""Spatial domains, stochastic collocation batches, evaluation lattices.

Domains come in two kinds: axis-aligned boxes (the simulation domains) and
signed-distance shapes (circles and half-planes, used as collision geometry
and, via rejection sampling, as sample-able regions).  All randomness flows
through counter-based Philox generators derived from a single experiment
seed, so batches are reproducible independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SampleBatch",
    "Box",
    "Circle",
    "HalfPlane",
    "SdfUnion",
    "eval_grid",
    "derive_rng",
]


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """A Philox generator for stream ``path`` under one experiment seed.

    Distinct paths give statistically independent, reproducible streams,
    e.g. ``derive_rng(seed, timestep, solve_index)``.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SampleBatch:
    """Interior collocation points plus optional boundary points/normals."""

    interior: np.ndarray                 # (N, m)
    boundary: np.ndarray | None = None   # (Nb, m)
    normals: np.ndarray | None = None    # (Nb, m), unit outward

    @property
    def size(self) -> int:
        return self.interior.shape[0]


class Box:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_m, hi_m]."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape or np.any(self.lo >= self.hi):
            raise ValueError(f"invalid box bounds lo={lo}, hi={hi}")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    def clamp(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(pts, self.lo, self.hi)

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("need n >= 1")
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def sample_boundary(
        self, n: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """n points uniform over the boundary measure plus unit outward normals."""
        if n < 1:
            raise ValueError("need n >= 1")
        m = self.dim
        if m == 1:
            side = rng.integers(0, 2, size=n)
            pts = np.where(side[:, None] == 0, self.lo, self.hi)
            normals = np.where(side[:, None] == 0, -1.0, 1.0)
            return pts, normals
        ext = self.hi - self.lo
        # one face pair per axis; face measure = product of the other extents
        face_measure = np.array([np.prod(np.delete(ext, i)) for i in range(m)])
        weights = np.repeat(face_measure, 2)
        weights = weights / weights.sum()
        face = rng.choice(2 * m, size=n, p=weights)
        pts = rng.uniform(self.lo, self.hi, size=(n, m))
        normals = np.zeros((n, m))
        axis = face // 2
        is_hi = face % 2 == 1
        rows = np.arange(n)
        pts[rows, axis] = np.where(is_hi, self.hi[axis], self.lo[axis])
        normals[rows, axis] = np.where(is_hi, 1.0, -1.0)
        return pts, normals


class Circle:
    """Disk of given center/radius; sdf < 0 inside."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.linalg.norm(pts - self.center, axis=1) - self.radius

    def closest(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Closest surface points and unit outward normals."""
        pts = np.atleast_2d(pts)
        rel = pts - self.center
        dist = np.linalg.norm(rel, axis=1)
        safe = np.where(dist > 0.0, dist, 1.0)
        normals = rel / safe[:, None]
        normals[dist == 0.0] = np.eye(self.dim)[0]
        surface = self.center + self.radius * normals
        return surface, normals

    def bounding_box(self) -> Box:
        return Box(self.center - self.radius, self.center + self.radius)

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return _rejection_sample(self, self.bounding_box(), n, rng)

    def sample_boundary(
        self, n: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        if self.dim != 2:
            raise ValueError("boundary sampling only implemented for 2-d circles")
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
        normals = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return self.center + self.radius * normals, normals


class HalfPlane:
    """Half-space n . x <= offset is solid; sdf = n . x - offset."""

    def __init__(self, normal, offset: float):
        normal = np.asarray(normal, dtype=np.float64)
        nrm = np.linalg.norm(normal)
        if nrm == 0:
            raise ValueError("normal must be nonzero")
        self.normal = normal / nrm
        self.offset = float(offset)

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        return np.atleast_2d(pts) @ self.normal - self.offset

    def closest(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(pts)
        d = self.sdf(pts)
        surface = pts - d[:, None] * self.normal
        normals = np.broadcast_to(self.normal, pts.shape).copy()
        return surface, normals


class SdfUnion:
    """Union of solid shapes: sdf = min over parts; closest from the nearest part."""

    def __init__(self, shapes):
        if not shapes:
            raise ValueError("union needs at least one shape")
        self.shapes = list(shapes)

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        return np.min([s.sdf(pts) for s in self.shapes], axis=0)

    def closest(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(pts)
        all_sdf = np.stack([s.sdf(pts) for s in self.shapes])
        pick = np.argmin(all_sdf, axis=0)
        surface = np.empty_like(pts)
        normals = np.empty_like(pts)
        for i, s in enumerate(self.shapes):
            mask = pick == i
            if np.any(mask):
                surf_i, nrm_i = s.closest(pts[mask])
                surface[mask] = surf_i
                normals[mask] = nrm_i
        return surface, normals


def _rejection_sample(shape, bbox: Box, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((n, bbox.dim))
    have = 0
    drawn = 0
    accepted = 0
    while have < n:
        cand = bbox.sample_interior(max(n - have, 64), rng)
        keep = cand[shape.sdf(cand) <= 0.0]
        drawn += cand.shape[0]
        accepted += keep.shape[0]
        if drawn >= 10000 and accepted < drawn * 1e-3:
            raise RuntimeError(
                f"rejection sampling acceptance {accepted / drawn:.2e} below 1e-3; "
                "degenerate shape"
            )
        take = min(keep.shape[0], n - have)
        out[have : have + take] = keep[:take]
        have += take
    return out


def eval_grid(domain: Box, resolution, include_endpoints: bool = True) -> np.ndarray:
    """Row-major uniform lattice over a box.

    ``resolution`` is an int (same along every axis) or one int per axis.
    With ``include_endpoints`` the lattice spans [lo, hi] inclusively;
    without, points sit at cell centers lo + (i + 1/2) h.
    """
    m = domain.dim
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (m,))
    if np.any(res < 2):
        raise ValueError("resolution must be >= 2 per axis")
    axes = []
    for i in range(m):
        if include_endpoints:
            axes.append(np.linspace(domain.lo[i], domain.hi[i], res[i]))
        else:
            h = (domain.hi[i] - domain.lo[i]) / res[i]
            axes.append(domain.lo[i] + (np.arange(res[i]) + 0.5) * h)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)

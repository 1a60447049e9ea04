"""Error metrics, energy diagnostics, raster snapshots, CSV output.

File formats (language-neutral, trivially parseable):

* metrics CSV -- header ``step,time,metric,value,wall_secs``, one row per
  (timestep, metric), flushed per write.
* raster -- one ASCII header line
  ``INSR-RASTER v1 <W> <H> <C> <xlo> <xhi> <ylo> <yhi>``
  followed by row-major little-endian float64 samples of shape (H, W, C).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricsRow",
    "MetricsWriter",
    "field_error",
    "kinetic_energy",
    "write_raster",
    "read_raster",
    "write_metrics",
    "read_metrics",
]

RASTER_MAGIC = "INSR-RASTER"
RASTER_VERSION = "v1"

METRICS_HEADER = "step,time,metric,value,wall_secs"


@dataclass
class MetricsRow:
    step: int
    time: float
    metric: str
    value: float
    wall_secs: float = 0.0


def _evaluate(obj, points: np.ndarray) -> np.ndarray:
    """Accept precomputed sample arrays or anything callable on points."""
    if callable(obj):
        out = np.asarray(obj(points), dtype=np.float64)
    else:
        out = np.asarray(obj, dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != points.shape[0]:
        raise ValueError(
            f"field produced {out.shape[0]} samples for {points.shape[0]} points"
        )
    return out


def field_error(a, b, points: np.ndarray, kind: str = "MAE") -> float:
    """Mean absolute error or mean squared error of a vs b over lattice points.

    MSE of vector fields uses the per-point squared Euclidean norm.
    """
    va = _evaluate(a, points)
    vb = _evaluate(b, points)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    diff = va - vb
    if kind.upper() == "MAE":
        return float(np.abs(diff).mean())
    if kind.upper() == "MSE":
        return float((diff**2).sum(axis=1).mean())
    raise ValueError(f"unknown error kind {kind!r}")


def kinetic_energy(velocity, points: np.ndarray, area: float) -> float:
    """(1/2) * mean ||u||^2 * area(domain), Monte-Carlo/lattice estimate."""
    u = _evaluate(velocity, points)
    return float(0.5 * (u**2).sum(axis=1).mean() * area)


def write_raster(path, data: np.ndarray, xlo, xhi, ylo=0.0, yhi=0.0) -> None:
    """Write samples of shape (H, W) or (H, W, C) in the raster format."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3:
        raise ValueError(f"raster data must be (H, W[, C]), got shape {data.shape}")
    h, w, c = data.shape
    header = (
        f"{RASTER_MAGIC} {RASTER_VERSION} {w} {h} {c} "
        f"{float(xlo)!r} {float(xhi)!r} {float(ylo)!r} {float(yhi)!r}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_raster(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError("raster has no header line")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 9 or parts[0] != RASTER_MAGIC:
        raise ValueError("not a raster file")
    if parts[1] != RASTER_VERSION:
        raise ValueError(f"unsupported raster version {parts[1]!r}")
    w, h, c = (int(p) for p in parts[2:5])
    xlo, xhi, ylo, yhi = (float(p) for p in parts[5:9])
    payload = raw[nl + 1 :]
    if len(payload) != w * h * c * 8:
        raise ValueError("raster payload size mismatch")
    data = np.frombuffer(payload, dtype="<f8").reshape(h, w, c).astype(np.float64)
    return data, {"xlo": xlo, "xhi": xhi, "ylo": ylo, "yhi": yhi}


def write_metrics(path, rows, append: bool = False) -> None:
    """Write (or append) metrics rows; the header is emitted for new files.

    Values are formatted with repr so a re-read reproduces them exactly.
    """
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        if not append:
            fh.write(METRICS_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{int(r.step)},{float(r.time)!r},{r.metric},"
                f"{float(r.value)!r},{float(r.wall_secs)!r}\n"
            )
        fh.flush()


def read_metrics(path) -> list[MetricsRow]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            step, time, metric, value, wall = line.split(",")
            rows.append(
                MetricsRow(int(step), float(time), metric, float(value), float(wall))
            )
    return rows


class MetricsWriter:
    """Incremental per-timestep writer: header once, flush on every emit."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")
        self._fh.write(METRICS_HEADER + "\n")
        self._fh.flush()

    def emit(self, step: int, time: float, metric: str, value: float, wall: float = 0.0):
        self._fh.write(
            f"{int(step)},{float(time)!r},{metric},{float(value)!r},{float(wall)!r}\n"
        )
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

"""Synthetic volcano and vent history used by the demo and the tests."""
from __future__ import annotations

import math

import numpy as np

from .raster import Grid
from .vent_field import VentRecord


def cone_dem(n: int = 101, cellsize: float = 400.0, summit: float = 3300.0,
             decay: float = 7000.0, ridges: int = 7, ridge_amp: float = 0.04,
             nodata: float = -9999.0) -> Grid:
    """Square DEM of a concave volcanic cone centered in the grid.

    Elevation decays exponentially with distance from the summit, so the
    flanks never become flat; ``ridges`` radial ribs (relative amplitude
    ``ridge_amp``) break the rotational symmetry and channel flows.
    """
    c = (n - 1) / 2.0
    rows, cols = np.mgrid[0:n, 0:n]
    dx = (cols - c) * cellsize
    dy = (c - rows) * cellsize
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    z = summit * np.exp(-r / decay)
    z *= 1.0 + ridge_amp * np.sin(ridges * theta) * np.tanh(r / decay)
    return Grid(n, n, 0.0, 0.0, cellsize, nodata, z)


def plane_dem(n: int, cellsize: float = 10.0, slope: float = 0.0, base: float = 100.0,
              nodata: float = -9999.0) -> Grid:
    """Plane dipping southwards (row index increasing) by ``slope`` m/m."""
    rows = np.arange(n, dtype=np.float64)[:, None] * np.ones((1, n))
    z = base + slope * cellsize * (n - 1 - rows)
    return Grid(n, n, 0.0, 0.0, cellsize, nodata, z)


def vent_history(dem: Grid, count: int = 60, seed: int = 2013) -> list[VentRecord]:
    """Historical-vent fixture: clusters along two rifts plus a diffuse flank set.

    Loosely mimics a volcano whose eccentric vents concentrate along a
    north-east and a southern rift zone.
    """
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = dem.extent
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    span = min(x1 - x0, y1 - y0)
    records = []
    rifts = (math.radians(45.0), math.radians(-95.0))
    for _ in range(count):
        u = rng.random()
        if u < 0.8:
            angle = rifts[0] if rng.random() < 0.6 else rifts[1]
            dist = span * (0.04 + 0.16 * rng.random())
            angle += rng.normal(0.0, 0.15)
        else:
            angle = 2 * math.pi * rng.random()
            dist = span * (0.05 + 0.2 * rng.random())
        x = min(max(cx + dist * math.cos(angle), x0), x1)
        y = min(max(cy + dist * math.sin(angle), y0), y1)
        records.append(VentRecord(float(x), float(y), 1.0))
    return records


def history_csv(records) -> bytes:
    lines = ["x,y,weight"]
    lines += [f"{r.x!r},{r.y!r},{r.weight!r}" for r in records]
    return ("\n".join(lines) + "\n").encode("ascii")

"""Color-binned PPM maps of hazard and topographic-change grids."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .raster import Grid

RED = (255, 0, 0)
YELLOW = (255, 255, 0)
GREEN = (0, 170, 0)
BLUE = (0, 0, 255)
LIGHT_GRAY = (211, 211, 211)

_PPM_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s")

#: Absolute elevation-change class ceilings in meters, doubling from 3.125 m.
DEFAULT_BREAKS = (3.125, 6.25, 12.5, 25.0, 50.0)

_ABSOLUTE_COLORS = (
    (255, 255, 178),
    (254, 217, 118),
    (254, 178, 76),
    (253, 141, 60),
    (240, 59, 32),
    (189, 0, 38),
)


@dataclass(frozen=True)
class Palette:
    colors: tuple = (RED, YELLOW, GREEN, BLUE)
    background: tuple = LIGHT_GRAY

    def __post_init__(self):
        if len(self.colors) < 2:
            raise ValueError("a palette needs at least 2 colors")
        for c in (*self.colors, self.background):
            if len(c) != 3 or not all(0 <= v <= 255 for v in c):
                raise ValueError(f"invalid RGB color {c!r}")


LOG_PALETTE = Palette()
ABSOLUTE_PALETTE = Palette(_ABSOLUTE_COLORS)


@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # uint8, (height, width, 3)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.pixels, other.pixels))


def _paint(g: Grid, bins: np.ndarray, pal: Palette) -> Image:
    """``bins`` holds a palette index per cell, or -1 for background."""
    lut = np.array([*pal.colors, pal.background], dtype=np.uint8)
    idx = np.where(bins < 0, len(pal.colors), bins)
    return Image(g.ncols, g.nrows, lut[idx])


def log_bins(g: Grid, n_bins: int) -> np.ndarray:
    """Bin ``k`` = values in ``(max/2**(k+1), max/2**k]``; -1 below the last bin or nodata."""
    valid = g.valid
    vals = np.where(valid, g.data, 0.0)
    top = vals[valid].max() if valid.any() else 0.0
    if not top > 0:
        raise ValueError("cannot render a grid whose maximum is not positive")
    bins = np.full(g.shape, -1, dtype=np.int64)
    for k in range(n_bins - 1, -1, -1):
        bins[vals > top * 2.0 ** -(k + 1)] = k
    bins[~valid] = -1
    return bins


def render_log_relative(g: Grid, pal: Palette = LOG_PALETTE) -> Image:
    """Each color band covers half the value range of the one above it."""
    return _paint(g, log_bins(g, len(pal.colors)), pal)


def render_absolute(g: Grid, breaks=DEFAULT_BREAKS, pal: Palette = ABSOLUTE_PALETTE) -> Image:
    """Fixed class breaks, so colors compare across maps.

    Class ``k`` covers ``(breaks[k-1], breaks[k]]`` (with ``breaks[-1] = 0``);
    values above the last break take the final (overflow) color. Zero,
    negative and nodata cells are background.
    """
    b = np.asarray(breaks, dtype=np.float64)
    if b.ndim != 1 or b.size == 0 or not b[0] > 0 or np.any(np.diff(b) <= 0):
        raise ValueError("breaks must be strictly ascending with the first break > 0")
    if len(pal.colors) < b.size + 1:
        raise ValueError(f"palette needs {b.size + 1} colors for {b.size} breaks")
    valid = g.valid
    bins = np.searchsorted(b, g.data, side="left")
    bins[~valid | (g.data <= 0)] = -1
    return _paint(g, bins, pal)


def write_ppm(img: Image) -> bytes:
    """Binary PPM (P6, maxval 255)."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(img.pixels, dtype=np.uint8).tobytes()


def read_ppm(data: bytes) -> Image:
    """Parse a binary P6 file with maxval 255 (comments not supported)."""
    m = _PPM_HEADER.match(data)
    if m is None:
        raise ValueError("not a binary PPM")
    width, height, maxval = (int(v) for v in m.groups())
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    payload = data[m.end():]
    if len(payload) != 3 * width * height:
        raise ValueError(f"expected {3 * width * height} pixel bytes, got {len(payload)}")
    return Image(width, height, np.frombuffer(payload, dtype=np.uint8))

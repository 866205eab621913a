"""Georeferenced raster grid and ESRI ASCII grid I/O.

Row 0 of a :class:`Grid` is the northernmost row, as in the file format.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


class GridParseError(ValueError):
    pass


@dataclass(eq=False)
class Grid:
    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.nrows}x{self.ncols}")
        if not self.cellsize > 0:
            raise ValueError(f"cellsize must be > 0, got {self.cellsize}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.size != self.ncols * self.nrows:
            raise ValueError(
                f"expected {self.ncols * self.nrows} cells, got {data.size}")
        self.data = data.reshape(self.nrows, self.ncols)
        valid = self.data[self.data != self.nodata]
        if not np.all(np.isfinite(valid)):
            raise ValueError("grid contains non-finite values outside nodata")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def cells(self) -> np.ndarray:
        """Flat row-major view of the cell values."""
        return self.data.reshape(-1)

    @property
    def valid(self) -> np.ndarray:
        """Boolean mask of cells that are not nodata."""
        return self.data != self.nodata

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.xll, self.yll,
                self.xll + self.ncols * self.cellsize,
                self.yll + self.nrows * self.cellsize)

    def like(self, data, nodata: float | None = None) -> "Grid":
        """New grid with the same georeferencing and the given values."""
        return Grid(self.ncols, self.nrows, self.xll, self.yll, self.cellsize,
                    self.nodata if nodata is None else nodata,
                    np.array(data, dtype=np.float64, copy=True))

    def copy(self) -> "Grid":
        return self.like(self.data)

    def same_geometry(self, other: "Grid") -> bool:
        return (self.ncols == other.ncols and self.nrows == other.nrows
                and self.xll == other.xll and self.yll == other.yll
                and self.cellsize == other.cellsize)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.same_geometry(other) and self.nodata == other.nodata
                and np.array_equal(self.data, other.data))

    def allclose(self, other: "Grid", atol: float) -> bool:
        return (self.same_geometry(other) and self.nodata == other.nodata
                and bool(np.all(np.abs(self.data - other.data) <= atol)))


def cell_center(g: Grid, row: int, col: int) -> tuple[float, float]:
    """Map coordinates of the center of cell ``(row, col)``."""
    if not (0 <= row < g.nrows and 0 <= col < g.ncols):
        raise IndexError(f"cell ({row}, {col}) outside {g.nrows}x{g.ncols} grid")
    x = g.xll + (col + 0.5) * g.cellsize
    y = g.yll + (g.nrows - row - 0.5) * g.cellsize
    return x, y


def cell_centers(g: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(x, y)`` of shape ``(nrows, ncols)`` holding every cell center."""
    x = g.xll + (np.arange(g.ncols) + 0.5) * g.cellsize
    y = g.yll + (g.nrows - np.arange(g.nrows) - 0.5) * g.cellsize
    return np.meshgrid(x, y)


def cell_index(g: Grid, x: float, y: float) -> tuple[int, int]:
    """Cell ``(row, col)`` containing the point ``(x, y)``."""
    col = math.floor((x - g.xll) / g.cellsize)
    row = g.nrows - 1 - math.floor((y - g.yll) / g.cellsize)
    if not (0 <= row < g.nrows and 0 <= col < g.ncols):
        raise IndexError(f"point ({x}, {y}) outside grid extent {g.extent}")
    return row, col


def _number(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise GridParseError(f"line {lineno}: non-numeric token {token!r}") from None


def read_ascii_grid(source) -> Grid:
    """Parse an ESRI ASCII grid.

    ``source`` may be bytes, text, a path or an open file.
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("ascii")
    elif isinstance(source, str) and "\n" in source:
        text = source
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("ascii")

    lines = text.splitlines()
    header = {}
    for i, key in enumerate(HEADER_KEYS):
        lineno = i + 1
        if i >= len(lines):
            raise GridParseError(f"line {lineno}: missing header key {key!r}")
        parts = lines[i].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise GridParseError(
                f"line {lineno}: expected header key {key!r}, got {lines[i].strip()!r}")
        header[key] = parts[1]

    ncols_f = _number(header["ncols"], 1)
    nrows_f = _number(header["nrows"], 2)
    if ncols_f != int(ncols_f) or nrows_f != int(nrows_f) or ncols_f < 1 or nrows_f < 1:
        raise GridParseError("line 1: ncols and nrows must be positive integers")
    ncols, nrows = int(ncols_f), int(nrows_f)
    xll = _number(header["xllcorner"], 3)
    yll = _number(header["yllcorner"], 4)
    cellsize = _number(header["cellsize"], 5)
    if not cellsize > 0:
        raise GridParseError("line 5: cellsize must be > 0")
    nodata = _number(header["nodata_value"], 6)

    body = [(n + 7, ln) for n, ln in enumerate(lines[6:]) if ln.strip()]
    if len(body) != nrows:
        raise GridParseError(f"expected {nrows} data rows, got {len(body)}")
    data = np.empty((nrows, ncols), dtype=np.float64)
    for r, (lineno, ln) in enumerate(body):
        tokens = ln.split()
        if len(tokens) != ncols:
            raise GridParseError(
                f"row {r + 1}: expected {ncols} values, got {len(tokens)} (line {lineno})")
        data[r] = [_number(t, lineno) for t in tokens]
    try:
        return Grid(ncols, nrows, xll, yll, cellsize, nodata, data)
    except ValueError as exc:
        raise GridParseError(str(exc)) from None


def _fmt_header(v: float) -> str:
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def _fmt_fixed(values: np.ndarray, precision: int) -> list[str]:
    out = []
    for v in values:
        s = f"{v:.{precision}f}"
        if "." in s:
            s = s.rstrip("0").rstrip(".")
        if s == "-0":
            s = "0"
        out.append(s)
    return out


def write_ascii_grid(g: Grid, precision: int = 6) -> bytes:
    """Serialize ``g`` as an ESRI ASCII grid with ``precision`` decimals."""
    buf = io.StringIO()
    buf.write(f"ncols {g.ncols}\n")
    buf.write(f"nrows {g.nrows}\n")
    buf.write(f"xllcorner {_fmt_header(g.xll)}\n")
    buf.write(f"yllcorner {_fmt_header(g.yll)}\n")
    buf.write(f"cellsize {_fmt_header(g.cellsize)}\n")
    buf.write(f"NODATA_value {_fmt_header(g.nodata)}\n")
    nodata_str = _fmt_header(g.nodata)
    for row in g.data:
        tokens = _fmt_fixed(row, precision)
        for j in np.flatnonzero(row == g.nodata):
            tokens[j] = nodata_str
        buf.write(" ".join(tokens))
        buf.write("\n")
    return buf.getvalue().encode("ascii")


def load_grid(path) -> Grid:
    return read_ascii_grid(os.fspath(path))


def save_grid(path, g: Grid, precision: int = 6) -> None:
    with open(path, "wb") as fh:
        fh.write(write_ascii_grid(g, precision))

"""Vent-opening probability field and the non-uniform grid of hypothetical vents.

Historical vents are smoothed with a Gaussian kernel into a density over
the DEM. The density is cut into danger classes whose ceilings halve from
class to class (class 0 is the most dangerous), and a lattice of
hypothetical vents is laid over each class with a spacing that grows by
sqrt(2) per class, so the areal vent density halves from one class to the
next.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .event_model import AliasTable
from .raster import Grid, cell_center, cell_centers

DEFAULT_CLASSES = 4
AUTO = "auto"

_CHUNK = 1 << 16


@dataclass(frozen=True)
class VentRecord:
    x: float
    y: float
    weight: float = 1.0


@dataclass(frozen=True)
class Vent:
    id: int
    row: int
    col: int
    x: float
    y: float
    cls: int


@dataclass
class ClassMap:
    """Danger-class labels (0 = highest) with the per-class density ceilings."""
    labels: Grid
    n_classes: int
    thresholds: np.ndarray


class VentSet:
    """Hypothetical vents stored column-wise."""

    def __init__(self, rows, cols, x, y, classes, n_classes: int | None = None):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.classes = np.asarray(classes, dtype=np.int64)
        self.ids = np.arange(self.rows.size, dtype=np.int64)
        if n_classes is None:
            n_classes = int(self.classes.max()) + 1 if self.classes.size else 0
        self.n_classes = n_classes

    def __len__(self):
        return self.rows.size

    def __getitem__(self, i) -> Vent:
        return Vent(int(self.ids[i]), int(self.rows[i]), int(self.cols[i]),
                    float(self.x[i]), float(self.y[i]), int(self.classes[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def class_counts(self, n_classes: int | None = None) -> np.ndarray:
        k = self.n_classes if n_classes is None else n_classes
        return np.bincount(self.classes, minlength=k)[:k]

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        buf.write("id,row,col,x,y,class\n")
        for v in self:
            buf.write(f"{v.id},{v.row},{v.col},{v.x!r},{v.y!r},{v.cls}\n")
        return buf.getvalue().encode("ascii")


def read_vent_set(source, n_classes: int | None = None) -> VentSet:
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
            "id", "row", "col", "x", "y", "class"]:
        raise ValueError("vent file must have header id,row,col,x,y,class")
    rows, cols, xs, ys, cls = [], [], [], [], []
    for lineno, rec in enumerate(reader, start=2):
        try:
            if int(rec["id"]) != len(rows):
                raise ValueError(f"line {lineno}: vent ids must be 0..n-1 in order")
            rows.append(int(rec["row"]))
            cols.append(int(rec["col"]))
            xs.append(float(rec["x"]))
            ys.append(float(rec["y"]))
            cls.append(int(rec["class"]))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return VentSet(rows, cols, xs, ys, cls, n_classes)


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read()
    text = source.read()
    return text.decode("utf-8") if isinstance(text, bytes) else text


def read_vent_history(source) -> list[VentRecord]:
    """Parse a historical-vent CSV with header ``x,y`` or ``x,y,weight``."""
    text = _read_text(source)
    lines = [(n + 1, ln) for n, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise ValueError("vent history is empty")
    header = [h.strip().lower() for h in lines[0][1].split(",")]
    if header not in (["x", "y"], ["x", "y", "weight"]):
        raise ValueError(f"line {lines[0][0]}: expected header x,y[,weight], got {lines[0][1]!r}")
    records = []
    for lineno, ln in lines[1:]:
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field in {ln!r}") from None
        if len(values) == 3 and values[2] < 0:
            raise ValueError(f"line {lineno}: negative weight")
        records.append(VentRecord(*values))
    return records


def silverman_bandwidth(records, weights=None) -> tuple[float, float]:
    """Per-axis rule-of-thumb bandwidth for a 2-d Gaussian kernel.

    In two dimensions Silverman's factor (4 / (d + 2)) ** (1 / (d + 4)) is
    exactly one, leaving ``h = sigma * n ** (-1/6)``.
    """
    xy = np.array([(r.x, r.y) for r in records], dtype=np.float64)
    w = np.array([r.weight for r in records], dtype=np.float64) if weights is None else weights
    mean = (w[:, None] * xy).sum(axis=0) / w.sum()
    sigma = np.sqrt((w[:, None] * (xy - mean) ** 2).sum(axis=0) / w.sum())
    if np.any(sigma == 0):
        raise ValueError("vent sample is degenerate along an axis (zero spread); "
                         "pass an explicit bandwidth")
    factor = len(records) ** (-1.0 / 6.0)
    return float(sigma[0] * factor), float(sigma[1] * factor)


def estimate_pdf(records, template: Grid, bandwidth=AUTO) -> Grid:
    """Gaussian kernel density of vent openings, per square meter.

    Parameters
    ----------
    records : sequence of VentRecord
        Historical vents; ``weight`` scales each kernel.
    template : Grid
        Supplies extent, resolution and nodata mask (e.g. the DEM).
    bandwidth : float, (float, float) or "auto"
        Kernel standard deviation in meters, isotropic or per axis.

    Returns
    -------
    Grid
        Density normalized so that ``sum(cells) * cellsize**2 == 1`` over
        the valid cells; nodata cells keep the template's sentinel.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError(f"need at least 2 vent records, got {len(records)}")
    w = np.array([r.weight for r in records], dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("vent weights must be nonnegative")
    if not w.sum() > 0:
        raise ValueError("vent weights sum to zero")
    x0, y0, x1, y1 = template.extent
    for r in records:
        if not (x0 <= r.x <= x1 and y0 <= r.y <= y1):
            raise ValueError(f"vent ({r.x}, {r.y}) lies outside the DEM extent")

    if isinstance(bandwidth, str):
        if bandwidth.lower() != AUTO:
            raise ValueError(f"bandwidth must be a number or 'auto', got {bandwidth!r}")
        hx, hy = silverman_bandwidth(records, w)
    elif np.isscalar(bandwidth):
        hx = hy = float(bandwidth)
    else:
        hx, hy = (float(b) for b in bandwidth)
    if not (hx > 0 and hy > 0):
        raise ValueError("bandwidth must be positive")

    valid = template.valid
    cx, cy = cell_centers(template)
    px, py = cx[valid], cy[valid]
    vx = np.array([r.x for r in records])
    vy = np.array([r.y for r in records])
    wn = w / w.sum()
    norm = 1.0 / (2.0 * math.pi * hx * hy)
    dens = np.empty(px.size)
    for start in range(0, px.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        dx = (px[sl, None] - vx[None, :]) / hx
        dy = (py[sl, None] - vy[None, :]) / hy
        dens[sl] = norm * (np.exp(-0.5 * (dx * dx + dy * dy)) @ wn)
    area = template.cellsize ** 2
    total = dens.sum() * area
    if not total > 0:
        raise ValueError("kernel density underflows to zero on the grid; increase bandwidth")
    out = np.full(template.shape, template.nodata, dtype=np.float64)
    out[valid] = dens / total
    return template.like(out)


def classify_density(density: Grid, n_classes: int = DEFAULT_CLASSES) -> ClassMap:
    """Label cells by halving density bands anchored at the grid maximum.

    Class ``k < K-1`` holds densities in ``(pmax / 2**(k+1), pmax / 2**k]``;
    the last class absorbs everything below.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    valid = density.valid
    d = density.data[valid]
    pmax = d.max() if d.size else 0.0
    if not pmax > 0:
        raise ValueError("density is zero everywhere")
    thresholds = pmax * np.ldexp(1.0, -np.arange(n_classes))
    # number of band floors the value sits at or below
    labels = np.zeros(d.shape, dtype=np.int64)
    for k in range(n_classes - 1):
        labels += d <= thresholds[k + 1]
    out = np.full(density.shape, density.nodata, dtype=np.float64)
    out[valid] = labels
    return ClassMap(density.like(out), n_classes, thresholds)


def generate_vent_grid(cm: ClassMap, base_spacing: float, dem: Grid) -> VentSet:
    """Lay class-dependent square lattices of vents over the class map.

    Class ``k`` gets spacing ``base_spacing * sqrt(2)**k``; every lattice
    starts at the center of the lower-left cell. Points snap to the cell
    that contains them and are kept only where that cell has class ``k``
    and valid elevation.
    """
    g = cm.labels
    if not g.same_geometry(dem):
        raise ValueError("class map and DEM differ in geometry")
    if base_spacing < g.cellsize:
        raise ValueError(f"base_spacing {base_spacing} is smaller than cellsize {g.cellsize}")
    ok = g.valid & dem.valid
    labels = np.where(ok, g.data, -1).astype(np.int64)
    x0 = g.xll + 0.5 * g.cellsize
    y0 = g.yll + 0.5 * g.cellsize
    width = g.ncols * g.cellsize
    height = g.nrows * g.cellsize
    taken: dict[tuple[int, int], int] = {}
    for k in range(cm.n_classes):
        s = base_spacing * math.sqrt(2.0) ** k
        i = np.arange(int(math.floor((width - 0.5 * g.cellsize) / s)) + 1)
        j = np.arange(int(math.floor((height - 0.5 * g.cellsize) / s)) + 1)
        cols = np.floor((x0 + i * s - g.xll) / g.cellsize).astype(np.int64)
        rows = g.nrows - 1 - np.floor((y0 + j * s - g.yll) / g.cellsize).astype(np.int64)
        cols = cols[(cols >= 0) & (cols < g.ncols)]
        rows = rows[(rows >= 0) & (rows < g.nrows)]
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        hit = labels[rr, cc] == k
        for r, c in zip(rr[hit].tolist(), cc[hit].tolist()):
            if (r, c) not in taken or taken[(r, c)] > k:
                taken[(r, c)] = k
    keys = sorted(taken, key=lambda rc: (taken[rc], rc[0], rc[1]))
    rows = [rc[0] for rc in keys]
    cols = [rc[1] for rc in keys]
    centers = [cell_center(g, r, c) for r, c in keys]
    return VentSet(rows, cols, [p[0] for p in centers], [p[1] for p in centers],
                   [taken[rc] for rc in keys], cm.n_classes)


def class_weights(vs: VentSet, n_classes: int | None = None) -> np.ndarray:
    """Halving class weights ``2**-(k+1)``, renormalized over populated classes."""
    k = vs.n_classes if n_classes is None else n_classes
    counts = vs.class_counts(k)
    w = np.where(counts > 0, np.ldexp(1.0, -(np.arange(k) + 1)), 0.0)
    if not w.sum() > 0:
        raise ValueError("vent set is empty")
    return w / w.sum()


def vent_probabilities(vs: VentSet, n_classes: int | None = None) -> np.ndarray:
    """Per-vent activation probability: class weight split evenly within the class."""
    w = class_weights(vs, n_classes)
    counts = vs.class_counts(len(w))
    return w[vs.classes] / counts[vs.classes]


class VentSampler:
    """Two-stage vent die: pick a class by halving weight, then a vent uniformly in it."""

    def __init__(self, vs: VentSet, n_classes: int | None = None):
        if len(vs) == 0:
            raise ValueError("vent set is empty")
        self.weights = class_weights(vs, n_classes)
        self.class_table = AliasTable(self.weights)
        order = np.argsort(vs.classes, kind="stable")
        counts = vs.class_counts(len(self.weights))
        self.members = order
        self.offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.counts = counts

    def sample(self, rng: np.random.Generator, size=None):
        """Vent index (or array of indices) into the vent set."""
        k = self.class_table.sample(rng, size)
        if size is None:
            return int(self.members[self.offsets[k] + rng.integers(self.counts[k])])
        j = np.floor(rng.random(size) * self.counts[k]).astype(np.int64)
        return self.members[self.offsets[k] + j]


def sample_vent(vs: VentSet, n_classes: int, rng: np.random.Generator) -> Vent:
    return vs[VentSampler(vs, n_classes).sample(rng)]

"""Cellular-automaton lava flow on a DEM.

Each step, every cell whose lava thickness exceeds the adherence hands
its mobile lava to lower Moore neighbours with the minimization-of-
differences rule: heads that are already above the running average are
eliminated until the set is stable, and each surviving neighbour is
filled towards the common average. Updates are synchronous (read the old
buffer, write the new one). When the vent has stopped emitting and the
largest per-cell outflow drops below ``halt_flux``, all lava solidifies in
place and becomes the topographic change.

There is no thermal model; adherence alone stops the flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .event_model import EventRealization
from .raster import Grid



@dataclass(frozen=True)
class CaParams:
    """Flow-model parameters. The defaults are uncalibrated placeholders.

    ``max_steps=None`` means ``20 * n_emit`` for each flow.
    """
    adherence: float = 0.8          # m
    relaxation: float = 0.5
    step_dt: float = 0.25           # days
    halt_flux: float = 1e-4         # m
    max_steps: int | None = None
    invasion_threshold: float = 0.01  # m

    def __post_init__(self):
        if not self.adherence >= 0:
            raise ValueError("adherence must be >= 0")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must be in (0, 1]")
        if not self.step_dt > 0:
            raise ValueError("step_dt must be > 0")
        if not self.halt_flux > 0:
            raise ValueError("halt_flux must be > 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if not self.invasion_threshold > 0:
            raise ValueError("invasion_threshold must be > 0")


@dataclass
class FlowResult:
    invaded: np.ndarray       # bool, (nrows, ncols)
    thickness: Grid           # solidified lava, m
    volume_emitted: float     # m^3
    volume_on_ground: float   # m^3
    steps_run: int
    halted: bool
    uphill_flows: int = 0

    @property
    def delta_z(self) -> Grid:
        return self.thickness

    @property
    def invaded_count(self) -> int:
        return int(self.invaded.sum())


@numba.njit(cache=True, nogil=True)
def _distribute(u0, m, heads, n, relaxation, flows, src_head):
    """Minimization of differences for one cell.

    ``heads[:n]`` are the neighbour total heads; writes ``flows[:n]`` and
    returns their sum. Neighbours at or above ``src_head`` are always
    eliminated, so rounding in the average cannot open an uphill path.
    """
    keep0 = True
    keep = np.ones(n, dtype=np.bool_)
    for i in range(n):
        flows[i] = 0.0
    if m <= 0.0 or n == 0:
        return 0.0
    while True:
        s = m
        cnt = 0
        if keep0:
            s += u0
            cnt += 1
        for i in range(n):
            if keep[i]:
                s += heads[i]
                cnt += 1
        if cnt == 0:
            return 0.0
        avg = s / cnt
        changed = False
        if keep0 and u0 >= avg:
            keep0 = False
            changed = True
        for i in range(n):
            if keep[i] and (heads[i] >= avg or heads[i] >= src_head):
                keep[i] = False
                changed = True
        if not changed:
            break
    total = 0.0
    for i in range(n):
        if keep[i]:
            flows[i] = relaxation * (avg - heads[i])
            total += flows[i]
    return total


@numba.njit(cache=True, nogil=True)
def _run(z, h, maxh, valid, vr, vc, q, n_emit, adherence, relaxation,
         halt_flux, max_steps, mass_trace):
    nrows, ncols = z.shape
    h_new = h.copy()
    heads = np.empty(8)
    flows = np.empty(8)
    tr = np.empty(8, dtype=np.int64)
    tc = np.empty(8, dtype=np.int64)
    dr = np.array([-1, -1, -1, 0, 0, 1, 1, 1])
    dc = np.array([-1, 0, 1, -1, 1, -1, 0, 1])
    # bounding box of cells that may hold lava
    r0 = vr
    r1 = vr
    c0 = vc
    c1 = vc
    uphill = 0
    step = 0
    halted = False
    tracing = mass_trace.shape[0] > 0
    while step < max_steps:
        if step < n_emit:
            h[vr, vc] += q
            h_new[vr, vc] += q
        lo_r = max(r0 - 1, 0)
        hi_r = min(r1 + 1, nrows - 1)
        lo_c = max(c0 - 1, 0)
        hi_c = min(c1 + 1, ncols - 1)
        max_out = 0.0
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                hc = h[r, c]
                if hc <= adherence or not valid[r, c]:
                    continue
                zc = z[r, c]
                n = 0
                for k in range(8):
                    rr = r + dr[k]
                    cc = c + dc[k]
                    if rr < 0 or rr >= nrows or cc < 0 or cc >= ncols or not valid[rr, cc]:
                        continue
                    heads[n] = z[rr, cc] + h[rr, cc]
                    tr[n] = rr
                    tc[n] = cc
                    n += 1
                src_head = zc + hc
                out = _distribute(zc + adherence, hc - adherence, heads, n, relaxation, flows,
                                  src_head)
                if out <= 0.0:
                    continue
                for i in range(n):
                    f = flows[i]
                    if f > 0.0:
                        if heads[i] > src_head:
                            uphill += 1
                        h_new[tr[i], tc[i]] += f
                h_new[r, c] -= out
                if out > max_out:
                    max_out = out
        # commit and grow the box to wherever lava now sits
        nr0 = r0
        nr1 = r1
        nc0 = c0
        nc1 = c1
        for r in range(lo_r, hi_r + 1):
            for c in range(lo_c, hi_c + 1):
                v = h_new[r, c]
                h[r, c] = v
                if v > maxh[r, c]:
                    maxh[r, c] = v
                if v > 0.0:
                    if r < nr0:
                        nr0 = r
                    if r > nr1:
                        nr1 = r
                    if c < nc0:
                        nc0 = c
                    if c > nc1:
                        nc1 = c
        r0 = nr0
        r1 = nr1
        c0 = nc0
        c1 = nc1
        if tracing:
            s = 0.0
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    s += h[r, c]
            mass_trace[step] = s
        step += 1
        if step >= n_emit and max_out < halt_flux:
            halted = True
            break
    return step, halted, uphill


def outflows(center_z: float, center_h: float, neighbor_heads, p: CaParams):
    """Flows from one cell to each neighbour and the thickness it keeps.

    ``neighbor_heads`` are elevation + lava thickness of the valid Moore
    neighbours.
    """
    heads = np.asarray(neighbor_heads, dtype=np.float64)
    flows = np.zeros(heads.size)
    m = max(center_h - p.adherence, 0.0)
    u0 = center_z + min(p.adherence, center_h)
    total = _distribute(u0, m, heads, heads.size, p.relaxation, flows, center_z + center_h)
    return flows.tolist(), center_h - total


def emission_steps(ev: EventRealization, p: CaParams) -> int:
    return max(1, math.ceil(ev.duration / p.step_dt))


def simulate_flow(base: Grid, vent: tuple[int, int], ev: EventRealization, p: CaParams,
                  mass_trace: np.ndarray | None = None) -> FlowResult:
    """Erupt ``ev.volume`` at ``vent`` over ``ev.duration`` days on ``base``.

    Parameters
    ----------
    base : Grid
        Topography the flow runs on; not modified.
    vent : (row, col)
        Vent cell.
    ev : EventRealization
    p : CaParams
    mass_trace : ndarray, optional
        If given (length >= max steps), receives the lava volume in
        thickness-meters summed over the grid after every step.
    """
    row, col = vent
    if not (0 <= row < base.nrows and 0 <= col < base.ncols):
        raise IndexError(f"vent {vent} outside the grid")
    valid = base.valid
    if not valid[row, col]:
        raise ValueError(f"vent {vent} is on a nodata cell")
    if not ev.volume > 0:
        raise ValueError("event volume must be > 0")
    n_emit = emission_steps(ev, p)
    max_steps = p.max_steps if p.max_steps is not None else 20 * n_emit
    area = base.cellsize ** 2
    q = ev.volume / (n_emit * area)
    z = np.where(valid, base.data, 0.0)
    h = np.zeros(base.shape)
    maxh = np.zeros(base.shape)
    trace = np.zeros(0) if mass_trace is None else mass_trace
    steps, halted, uphill = _run(z, h, maxh, valid, row, col, q, n_emit, p.adherence,
                                 p.relaxation, p.halt_flux, max_steps, trace)
    h[~valid] = 0.0
    thickness = np.where(valid, h, base.nodata)
    return FlowResult(
        invaded=maxh > p.invasion_threshold,
        thickness=base.like(thickness),
        volume_emitted=float(ev.volume),
        volume_on_ground=float(h.sum() * area),
        steps_run=int(steps),
        halted=bool(halted),
        uphill_flows=int(uphill),
    )

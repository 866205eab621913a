"""Monte Carlo and exhaustive lava-invasion hazard.

A Monte Carlo run resets the topography, draws the number of activations
from the Poisson die, then for each activation picks a vent and an event
class, simulates the flow on the current topography and keeps the
solidified lava for the next one. A cell counts as invaded in a run if any
of its flows covered it. Runs are independent and each has its own random
stream, so the result does not depend on how runs are scheduled.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .event_model import (ACTIVATION_RATE_PER_YEAR, EventRealization, EventTable,
                          RealizationMode, realize_event, sample_poisson)
from .lava_ca import CaParams, simulate_flow
from .raster import Grid
from .vent_field import VentSampler, VentSet, vent_probabilities

#: Cached first-activation flows are dropped beyond this many stored cells.
CACHE_CELL_BUDGET = 50_000_000

_BATCH = 256


@dataclass(frozen=True)
class ScenarioConfig:
    """One forecast horizon.

    ``poisson_mean == 0`` means exactly one activation per run.
    """
    label: str
    poisson_mean: float
    repeats: int
    seed: int = 0
    realization_mode: RealizationMode = RealizationMode.MIDPOINT
    time_years: float | None = None

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError(f"scenario {self.label!r}: repeats must be >= 1")
        if not self.poisson_mean >= 0:
            raise ValueError(f"scenario {self.label!r}: poisson_mean must be >= 0")
        object.__setattr__(self, "realization_mode",
                           RealizationMode.parse(self.realization_mode))


@dataclass
class Activation:
    vent: int
    event_class: int
    event: EventRealization


@dataclass
class RunOutcome:
    invaded: np.ndarray
    delta_z: np.ndarray
    activations: list[Activation] = field(default_factory=list)
    not_halted: int = 0


@dataclass
class HazardResult:
    invasion_prob: Grid
    mean_delta_z: Grid
    max_prob: float
    runs: int
    config: ScenarioConfig | None = None
    activations_total: int = 0
    activations_min: int = 0
    activations_max: int = 0
    flows_not_halted: int = 0

    def metadata(self) -> dict:
        cfg = self.config
        meta = {}
        if cfg is not None:
            meta.update(label=cfg.label, seed=cfg.seed, repeats=cfg.repeats,
                        poisson_mean=repr(float(cfg.poisson_mean)),
                        realization=cfg.realization_mode.value)
            if cfg.time_years is not None:
                meta["time_years"] = repr(float(cfg.time_years))
        meta.update(runs=self.runs, activations_total=self.activations_total,
                    activations_min=self.activations_min,
                    activations_max=self.activations_max,
                    flows_not_halted=self.flows_not_halted,
                    max_prob=repr(float(self.max_prob)))
        return meta


def run_stream(seed: int, run_index: int) -> np.random.Generator:
    """Random stream of one Monte Carlo run.

    The stream is keyed on ``(seed, run_index)`` through numpy's
    ``SeedSequence`` hashing, so any run can be reproduced on its own and
    runs can execute in any order.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(int(run_index),))
    return np.random.Generator(np.random.PCG64(ss))


class _FlowCache:
    """Flows on the untouched base topography, keyed by (vent, class)."""

    def __init__(self, budget: int = CACHE_CELL_BUDGET):
        self.budget = budget
        self.used = 0
        self.items: dict[tuple[int, int], tuple] = {}
        self.lock = threading.Lock()

    def get(self, key):
        return self.items.get(key)

    def put(self, key, invaded, thickness, halted):
        rows = np.flatnonzero(invaded.any(axis=1) | (thickness > 0).any(axis=1))
        cols = np.flatnonzero(invaded.any(axis=0) | (thickness > 0).any(axis=0))
        if rows.size == 0:
            box = (slice(0, 0), slice(0, 0))
        else:
            box = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
        entry = (box, invaded[box].copy(), thickness[box].copy(), halted)
        with self.lock:
            if key not in self.items and self.used + entry[1].size <= self.budget:
                self.items[key] = entry
                self.used += entry[1].size


class _Simulator:
    def __init__(self, base: Grid, vs: VentSet, table: EventTable,
                 params: CaParams, n_classes: int | None):
        self.base = base
        self.valid = base.valid
        self.vs = vs
        self.table = table
        self.params = params
        self.vents = VentSampler(vs, n_classes)
        self.cache = _FlowCache()

    def run(self, cfg: ScenarioConfig, run_index: int) -> RunOutcome:
        rng = run_stream(cfg.seed, run_index)
        if cfg.poisson_mean == 0:
            n = 1
        else:
            n = sample_poisson(cfg.poisson_mean, rng)
        base = self.base
        invaded = np.zeros(base.shape, dtype=bool)
        topo = np.array(base.data, copy=True)
        outcome = RunOutcome(invaded, np.zeros(base.shape))
        pristine = True
        for _ in range(n):
            v = self.vents.sample(rng)
            k = self.table.sampler.sample(rng)
            ev = realize_event(self.table[k], cfg.realization_mode, rng, class_id=k)
            outcome.activations.append(Activation(v, k, ev))
            vent = (int(self.vs.rows[v]), int(self.vs.cols[v]))
            cacheable = pristine and cfg.realization_mode is RealizationMode.MIDPOINT
            hit = self.cache.get((v, k)) if cacheable else None
            if hit is None:
                flow = simulate_flow(base.like(topo), vent, ev, self.params)
                thick = np.where(self.valid, flow.thickness.data, 0.0)
                if cacheable:
                    self.cache.put((v, k), flow.invaded, thick, flow.halted)
                invaded |= flow.invaded
                topo += thick
                halted = flow.halted
            else:
                box, inv, thick, halted = hit
                invaded[box] |= inv
                topo[box] += thick
            outcome.not_halted += not halted
            pristine = False
        outcome.delta_z = np.where(self.valid, topo - base.data, 0.0)
        return outcome


def run_once(base: Grid, vs: VentSet, table: EventTable, cfg: ScenarioConfig,
             run_index: int, params: CaParams | None = None,
             n_classes: int | None = None) -> RunOutcome:
    """Simulate one Monte Carlo run of a scenario."""
    sim = _Simulator(base, vs, table, params or CaParams(), n_classes)
    return sim.run(cfg, run_index)


def run_scenario(base: Grid, vs: VentSet, table: EventTable, cfg: ScenarioConfig,
                 params: CaParams | None = None, n_classes: int | None = None,
                 threads: int = 1) -> HazardResult:
    """Invasion probability and mean topographic change over ``cfg.repeats`` runs.

    Per-run outcomes are reduced in run-index order whatever the thread
    count, so the result is bit-identical for any ``threads``.
    """
    sim = _Simulator(base, vs, table, params or CaParams(), n_classes)
    counts = np.zeros(base.shape, dtype=np.int64)
    dz_sum = np.zeros(base.shape)
    acts = []
    not_halted = 0

    def reduce(outcome: RunOutcome):
        nonlocal dz_sum, not_halted
        counts[outcome.invaded] += 1
        dz_sum += outcome.delta_z
        acts.append(len(outcome.activations))
        not_halted += outcome.not_halted

    if threads <= 1:
        for i in range(cfg.repeats):
            reduce(sim.run(cfg, i))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for start in range(0, cfg.repeats, _BATCH):
                idx = range(start, min(start + _BATCH, cfg.repeats))
                for outcome in pool.map(lambda i: sim.run(cfg, i), idx):
                    reduce(outcome)

    valid = base.valid
    prob = np.where(valid, counts / cfg.repeats, base.nodata)
    mean_dz = np.where(valid, dz_sum / cfg.repeats, base.nodata)
    return HazardResult(
        invasion_prob=base.like(prob),
        mean_delta_z=base.like(mean_dz),
        max_prob=float(prob[valid].max()),
        runs=cfg.repeats,
        config=cfg,
        activations_total=int(sum(acts)),
        activations_min=int(min(acts)),
        activations_max=int(max(acts)),
        flows_not_halted=not_halted,
    )


def exhaustive_hazard(base: Grid, vs: VentSet, table: EventTable,
                      params: CaParams | None = None, class_weights=None,
                      n_classes: int | None = None) -> HazardResult:
    """Deterministic hazard: every vent erupts every event class once.

    Each flow starts from ``base`` and is weighted by
    ``P(vent) * p(class)``, where ``P(vent)`` is the vent's class weight
    split evenly among the vents of that class. ``class_weights``
    overrides the default halving weights.
    """
    params = params or CaParams()
    if class_weights is None:
        pv = vent_probabilities(vs, n_classes)
    else:
        w = np.asarray(class_weights, dtype=np.float64)
        counts = vs.class_counts(w.size)
        w = np.where(counts > 0, w, 0.0)
        w = w / w.sum()
        pv = w[vs.classes] / counts[vs.classes]
    pc = table.probabilities
    valid = base.valid
    prob = np.zeros(base.shape)
    dz = np.zeros(base.shape)
    not_halted = 0
    for v in range(len(vs)):
        vent = (int(vs.rows[v]), int(vs.cols[v]))
        for k in range(len(table)):
            ev = realize_event(table[k], RealizationMode.MIDPOINT, class_id=k)
            flow = simulate_flow(base, vent, ev, params)
            weight = pv[v] * pc[k]
            prob[flow.invaded] += weight
            dz += weight * np.where(valid, flow.thickness.data, 0.0)
            not_halted += not flow.halted
    n = len(vs) * len(table)
    prob = np.where(valid, prob, base.nodata)
    dz = np.where(valid, dz, base.nodata)
    return HazardResult(
        invasion_prob=base.like(prob),
        mean_delta_z=base.like(dz),
        max_prob=float(prob[valid].max()),
        runs=n,
        activations_total=n,
        activations_min=1,
        activations_max=1,
        flows_not_halted=not_halted,
    )


def relative_scale(g: Grid) -> Grid:
    """Divide a grid by its own maximum (nodata untouched)."""
    valid = g.valid
    top = g.data[valid].max() if valid.any() else 0.0
    if not top > 0:
        raise ValueError("cannot scale a grid whose maximum is not positive")
    return g.like(np.where(valid, g.data / top, g.nodata))


def fit_cubic(times, max_probs) -> np.ndarray:
    """Coefficients ``c0..c3`` of the cubic through four (time, probability) points.

    The Vandermonde system is solved in time scaled to [-1, 1]-ish units
    and mapped back, which keeps it well conditioned for times in years.
    """
    t = np.asarray(times, dtype=np.float64)
    p = np.asarray(max_probs, dtype=np.float64)
    if t.shape != (4,) or p.shape != (4,):
        raise ValueError("exactly 4 horizons required")
    if np.unique(t).size != 4:
        raise ValueError("horizon times must be distinct")
    scale = float(np.abs(t).max()) or 1.0
    s = t / scale
    a = np.linalg.solve(np.vander(s, 4, increasing=True), p)
    return a / scale ** np.arange(4)


def eval_cubic(coeffs, t):
    c0, c1, c2, c3 = coeffs
    return c0 + t * (c1 + t * (c2 + t * c3))


def expected_time_years(poisson_mean: float) -> float:
    """Years spanned by ``poisson_mean`` activations at the historical rate.

    A mean of zero (one activation) maps to the mean inter-arrival time.
    """
    n = 1.0 if poisson_mean == 0 else poisson_mean
    return n / ACTIVATION_RATE_PER_YEAR


def binomial_bound(p, repeats: int):
    return 3.0 * np.sqrt(p * (1.0 - p) / repeats) + 0.01


__all__ = [
    "ScenarioConfig", "HazardResult", "RunOutcome", "Activation", "run_stream",
    "run_once", "run_scenario", "exhaustive_hazard", "relative_scale",
    "fit_cubic", "eval_cubic", "expected_time_years", "binomial_bound",
]

"""Eruption event classes, the weighted event die and the Poisson activation die.

The shipped table (``data/event_classes.csv``) holds the 41 non-empty
duration x volume classes of Etna flank eruptions with their occurrence
probabilities. Blank cells of the original table have probability zero and
are simply absent.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

#: Probabilities must sum to one within this tolerance; the printed table sums to 1.00002.
SUM_TOLERANCE = 2e-3

#: 52 flank activations in 396 years.
ACTIVATION_RATE_PER_YEAR = 52 / 396

#: Largest mean for which Knuth's multiplication method is used.
KNUTH_MAX_MEAN = 30.0

_COLUMNS = ("dur_lo", "dur_hi", "vol_lo", "vol_hi", "probability")


class EventTableError(ValueError):
    pass


class RealizationMode(enum.Enum):
    MIDPOINT = "midpoint"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, value) -> "RealizationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown realization mode {value!r}; use 'midpoint' or 'uniform'") from None


@dataclass(frozen=True)
class EventClass:
    """One duration x volume bin. Durations in days, volumes in 10^6 m^3."""
    duration_lo: float
    duration_hi: float
    volume_lo: float
    volume_hi: float
    probability: float

    def __post_init__(self):
        if not self.duration_lo < self.duration_hi:
            raise EventTableError(f"empty duration bin [{self.duration_lo}, {self.duration_hi})")
        if not self.volume_lo < self.volume_hi:
            raise EventTableError(f"empty volume bin [{self.volume_lo}, {self.volume_hi})")
        if not self.probability > 0:
            raise EventTableError(f"class probability must be > 0, got {self.probability}")

    def overlaps(self, other: "EventClass") -> bool:
        return (self.duration_lo < other.duration_hi and other.duration_lo < self.duration_hi
                and self.volume_lo < other.volume_hi and other.volume_lo < self.volume_hi)


@dataclass(frozen=True)
class EventRealization:
    duration: float  # days
    volume: float    # m^3
    class_id: int


class AliasTable:
    """Walker/Vose alias table for O(1) draws from a discrete distribution.

    Parameters
    ----------
    weights : array_like
        Nonnegative weights, not necessarily normalized.
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d sequence")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if not total > 0:
            raise ValueError("weights sum to zero")
        outcomes = np.flatnonzero(w > 0)
        n = outcomes.size
        scaled = w[outcomes] * (n / total)
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = outcomes[alias]
        self.outcomes = outcomes
        self.probabilities = w / total

    def __len__(self):
        return self.probabilities.size

    def sample(self, rng: np.random.Generator, size=None):
        """Draw one index (``size=None``) or an array of indices."""
        n = self.prob.size
        if size is None:
            i = int(rng.integers(n))
            return int(self.outcomes[i] if rng.random() < self.prob[i] else self.alias[i])
        i = rng.integers(n, size=size)
        u = rng.random(size=size)
        return np.where(u < self.prob[i], self.outcomes[i], self.alias[i])


class EventTable:
    """Immutable list of event classes plus its alias sampler."""

    def __init__(self, classes):
        self.classes = tuple(classes)
        if not self.classes:
            raise EventTableError("event table is empty")
        total = sum(c.probability for c in self.classes)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise EventTableError(f"table not normalized: probabilities sum to {total:.6f}")
        for i, a in enumerate(self.classes):
            for j in range(i + 1, len(self.classes)):
                if a.overlaps(self.classes[j]):
                    raise EventTableError(f"overlapping bins in rows {i + 1} and {j + 1}")
        self.total = total
        self.sampler = AliasTable([c.probability for c in self.classes])

    def __len__(self):
        return len(self.classes)

    def __getitem__(self, i) -> EventClass:
        return self.classes[i]

    @property
    def probabilities(self) -> np.ndarray:
        """Class probabilities normalized to sum exactly to one."""
        return self.sampler.probabilities


def load_event_table(source) -> EventTable:
    """Read an event table CSV with columns ``dur_lo,dur_hi,vol_lo,vol_hi,probability``.

    ``source`` may be bytes, a path or an open text file. Lines starting
    with ``#`` are ignored.
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    lines = [(n + 1, ln) for n, ln in enumerate(text.splitlines())
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise EventTableError("event table is empty")
    reader = csv.reader(io.StringIO("\n".join(ln for _, ln in lines)))
    header = [h.strip().lower() for h in next(reader)]
    if tuple(header) != _COLUMNS:
        raise EventTableError(
            f"line {lines[0][0]}: expected columns {','.join(_COLUMNS)}, got {','.join(header)}")
    classes = []
    for (lineno, _), row in zip(lines[1:], reader):
        if len(row) != len(_COLUMNS):
            raise EventTableError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError:
            raise EventTableError(f"line {lineno}: non-numeric field in {row}") from None
        try:
            classes.append(EventClass(*values))
        except EventTableError as exc:
            raise EventTableError(f"line {lineno}: {exc}") from None
    return EventTable(classes)


def default_event_table() -> EventTable:
    """The shipped Etna flank-eruption table (41 classes)."""
    data = resources.files("lavahazard").joinpath("data", "event_classes.csv").read_bytes()
    return load_event_table(data)


def sample_event(table: EventTable, rng: np.random.Generator) -> int:
    """Index of a class drawn with probability proportional to its weight."""
    return table.sampler.sample(rng)


def sample_poisson(mean: float, rng: np.random.Generator, size=None):
    """Poisson-distributed activation count(s).

    Knuth's multiplication method for ``mean <= 30``; larger means fall
    back to numpy's generator.
    """
    if not mean >= 0:
        raise ValueError(f"Poisson mean must be nonnegative, got {mean}")
    if mean > KNUTH_MAX_MEAN:
        return rng.poisson(mean, size=size)
    limit = math.exp(-mean)
    if size is None:
        k = 0
        p = rng.random()
        while p > limit:
            k += 1
            p *= rng.random()
        return k
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    counts = np.zeros(n, dtype=np.int64)
    p = rng.random(n)
    active = np.flatnonzero(p > limit)
    while active.size:
        counts[active] += 1
        p[active] *= rng.random(active.size)
        active = active[p[active] > limit]
    return counts.reshape(shape)


def _uniform_in(lo: float, hi: float, u: float) -> float:
    v = lo + (hi - lo) * u
    # rounding can land exactly on the open upper edge
    return v if v < hi else math.nextafter(hi, lo)


def realize_event(c: EventClass, mode, rng: np.random.Generator | None = None,
                  class_id: int = -1) -> EventRealization:
    """Concrete duration (days) and volume (m^3) for an event class."""
    mode = RealizationMode.parse(mode)
    if mode is RealizationMode.MIDPOINT:
        duration = 0.5 * (c.duration_lo + c.duration_hi)
        volume = 0.5 * (c.volume_lo + c.volume_hi)
    else:
        if rng is None:
            raise ValueError("uniform realization needs a random generator")
        duration = _uniform_in(c.duration_lo, c.duration_hi, rng.random())
        volume = _uniform_in(c.volume_lo, c.volume_hi, rng.random())
    return EventRealization(duration, volume * 1e6, class_id)

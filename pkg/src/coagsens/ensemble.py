"""Labeled particle populations for a pair of coupled merge processes.

A :class:`CoupledState` holds one particle system whose particles carry
one of three labels: PLUS (present only in the plus system), COMMON
(present in both), MINUS (only in the minus system).  The plus system
is the union COMMON + PLUS, the minus system COMMON + MINUS.  Weighted
pair sampling uses the factorized majorant: per label class and per
distinct factor component we keep a Fenwick tree over per-particle
weights, so class rates are O(1) reads and pair draws are O(log n).

Storage is slot-based with tombstones: removing a particle frees its
slot (weights zeroed in place) and a per-class free list recycles
slots, so live slot ids are stable across unrelated events.  A
per-mass doubly linked list per class supports the O(1) annihilation
lookup (``cleanup``): whenever a plus-only and a minus-only particle
share a mass, the pair collapses to one common particle.  That keeps
the three classes in canonical form: no mass is ever present in both
the PLUS and MINUS multisets, hence the common class is the pointwise
minimum of the two systems.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _engine
from .kernels import FactorizedMajorant

__all__ = [
    "Label",
    "EVENT_NAMES",
    "EVENT_CODES",
    "EVENT_SLOTS",
    "ClassCounts",
    "ClassRates",
    "MeasureSnapshot",
    "CoupledState",
    "make_stream",
]


class Label(enum.IntEnum):
    PLUS = 0
    COMMON = 1
    MINUS = 2


EVENT_NAMES = ("1a", "1b", "1c", "2a", "2b", "2c", "3a", "3b", "fictitious")
EVENT_CODES = {name: code for code, name in enumerate(EVENT_NAMES)}

# label pattern of the slots each event consumes, in argument order
EVENT_SLOTS = {
    "1a": (Label.COMMON, Label.COMMON),
    "1b": (Label.COMMON, Label.COMMON),
    "1c": (Label.COMMON, Label.COMMON),
    "2a": (Label.PLUS, Label.COMMON, Label.MINUS),
    "2b": (Label.PLUS, Label.COMMON),
    "2c": (Label.MINUS, Label.COMMON),
    "3a": (Label.PLUS, Label.PLUS),
    "3b": (Label.MINUS, Label.MINUS),
}


def make_stream(seed: int) -> np.ndarray:
    """Seed a fresh xoshiro256++ state vector (see coagsens.seeding)."""
    state = np.zeros(4, dtype=np.uint64)
    _engine.rng_seed(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), state)
    return state


@dataclass(frozen=True)
class ClassCounts:
    plus: int
    common: int
    minus: int


@dataclass(frozen=True)
class ClassRates:
    """Majorant class rates; same-class values include the diagonal
    surplus that the sampler later rejects as fictitious."""

    common_pair: float
    plus_common: float
    minus_common: float
    plus_pair: float
    minus_pair: float

    @property
    def total(self) -> float:
        return (self.common_pair + self.plus_common + self.minus_common
                + self.plus_pair + self.minus_pair)


@dataclass(frozen=True)
class MeasureSnapshot:
    """Histogram of one system (+ or -) at a fixed time, scale-aware."""

    t: float
    system: str
    n_scale: float
    counts: dict[int, int]

    def number(self, mass: int) -> int:
        return self.counts.get(mass, 0)

    def density(self, mass: int) -> float:
        return self.counts.get(mass, 0) / self.n_scale

    def total_number(self) -> int:
        return sum(self.counts.values())

    def total_mass(self) -> int:
        return sum(m * c for m, c in self.counts.items())

    def density_array(self, x_max: int) -> np.ndarray:
        """Densities for masses 0..x_max (index = mass; entry 0 unused)."""
        out = np.zeros(x_max + 1, dtype=np.float64)
        for m, c in self.counts.items():
            if m <= x_max:
                out[m] = c / self.n_scale
        return out

    def overflow_number(self, x_max: int) -> int:
        return sum(c for m, c in self.counts.items() if m > x_max)


class CoupledState:
    """One labeled population plus its sampling structures."""

    def __init__(self, majorant: FactorizedMajorant, n_scale: float,
                 capacity: int, max_mass: int):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        if max_mass < 1:
            raise ValueError("max_mass must be positive")
        coef, expo, term_f, term_g = majorant.component_tables()
        self.majorant = majorant
        self.n_scale = float(n_scale)
        self.capacity = int(capacity)
        self.max_mass = int(max_mass)
        self._coef = coef
        self._expo = expo
        self._term_f = term_f
        self._term_g = term_g
        ncomp = coef.shape[0]
        cap = self.capacity
        self.mass = np.zeros((3, cap), dtype=np.int64)
        self.leaf = np.zeros((3, ncomp, cap), dtype=np.float64)
        self.bit = np.zeros((3, ncomp, cap + 1), dtype=np.float64)
        self.totals = np.zeros((3, ncomp), dtype=np.float64)
        self.n_live = np.zeros(3, dtype=np.int64)
        self.top = np.zeros(3, dtype=np.int64)
        self.free = np.zeros((3, cap), dtype=np.int64)
        self.free_top = np.zeros(3, dtype=np.int64)
        self.head = np.full((3, self.max_mass + 1), -1, dtype=np.int64)
        self.nxt = np.full((3, cap), -1, dtype=np.int64)
        self.prv = np.full((3, cap), -1, dtype=np.int64)
        # regs: [clock, pending waiting time]
        self.regs = np.zeros(2, dtype=np.float64)
        # iregs: [events since rebuild, plus-system mass, minus-system mass,
        #         total applied events]
        self.iregs = np.zeros(4, dtype=np.int64)
        self.counters = np.zeros(len(EVENT_NAMES), dtype=np.int64)
        self.rng = np.zeros(4, dtype=np.uint64)

    # ------------------------------------------------------------------
    @classmethod
    def monodisperse(cls, n: int, majorant: FactorizedMajorant,
                     label: Label = Label.COMMON,
                     n_scale: float | None = None) -> "CoupledState":
        """``n`` unit-mass particles, all carrying ``label``."""
        if n < 2:
            raise ValueError("need at least 2 particles")
        state = cls(majorant, n if n_scale is None else n_scale,
                    capacity=n + 1, max_mass=n)
        _engine.init_monodisperse_class(
            int(label), n, *state._core(), state._coef, state._expo)
        if label in (Label.COMMON, Label.PLUS):
            state.iregs[1] = n
        if label in (Label.COMMON, Label.MINUS):
            state.iregs[2] = n
        return state

    @classmethod
    def from_particles(cls, majorant: FactorizedMajorant, n_scale: float,
                       particles: Iterable[tuple[int, Label]]) -> "CoupledState":
        parts = [(int(m), Label(lb)) for m, lb in particles]
        if not parts:
            raise ValueError("empty particle list")
        if any(m < 1 for m, _ in parts):
            raise ValueError("masses must be positive integers")
        mass_plus = sum(m for m, lb in parts if lb != Label.MINUS)
        mass_minus = sum(m for m, lb in parts if lb != Label.PLUS)
        state = cls(majorant, n_scale, capacity=len(parts) + 1,
                    max_mass=max(mass_plus, mass_minus, 1))
        for m, lb in parts:
            _engine.class_add(int(lb), m, *state._core(),
                              state._coef, state._expo)
        state.iregs[1] = mass_plus
        state.iregs[2] = mass_minus
        return state

    # ------------------------------------------------------------------
    def _core(self):
        return (self.mass, self.leaf, self.bit, self.totals, self.n_live,
                self.top, self.free, self.free_top, self.head, self.nxt,
                self.prv)

    def _tables(self):
        return (self._coef, self._expo, self._term_f, self._term_g)

    @property
    def t(self) -> float:
        return float(self.regs[0])

    def class_counts(self) -> ClassCounts:
        return ClassCounts(int(self.n_live[0]), int(self.n_live[1]),
                           int(self.n_live[2]))

    def system_count(self, system: str) -> int:
        side = Label.PLUS if system == "+" else Label.MINUS
        return int(self.n_live[Label.COMMON]) + int(self.n_live[side])

    def system_mass(self, system: str) -> int:
        return int(self.iregs[1] if system == "+" else self.iregs[2])

    def masses(self, label: Label) -> np.ndarray:
        row = self.mass[int(label), :int(self.top[int(label)])]
        return row[row > 0].copy()

    def live_slots(self, label: Label) -> list[int]:
        c = int(label)
        row = self.mass[c, :int(self.top[c])]
        return [int(s) for s in np.nonzero(row > 0)[0]]

    def slots_with_mass(self, label: Label, m: int) -> list[int]:
        c = int(label)
        out = []
        s = int(self.head[c, m]) if m <= self.max_mass else -1
        while s >= 0:
            out.append(s)
            s = int(self.nxt[c, s])
        return out

    # ------------------------------------------------------------------
    def class_rates(self) -> ClassRates:
        rates = np.empty(5, dtype=np.float64)
        _engine.class_rates(self.totals, self.n_live, self._term_f,
                            self._term_g, self.n_scale, rates)
        return ClassRates(*(float(r) for r in rates))

    def sample_pair(self, label_i: Label, label_j: Label,
                    stream: np.ndarray) -> tuple[int, int] | None:
        """Majorant-weighted ordered pair draw; None on a self-draw
        (the fictitious outcome for same-class requests)."""
        if self.n_live[int(label_i)] == 0 or self.n_live[int(label_j)] == 0:
            raise ValueError("requested class is empty")
        i, j = _engine.sample_pair(int(label_i), int(label_j), self.mass,
                                   self.leaf, self.bit, self.totals,
                                   self.n_live, self.top, self._term_f,
                                   self._term_g, stream)
        if i < 0:
            return None
        return int(i), int(j)

    def apply_event(self, name: str, slots: Sequence[int]) -> None:
        """Apply one named non-fictitious event to the given slots
        (ordered per EVENT_SLOTS), then re-canonicalize by annihilation."""
        if name not in EVENT_SLOTS:
            raise ValueError(f"unknown or fictitious event {name!r}")
        pattern = EVENT_SLOTS[name]
        if len(slots) != len(pattern):
            raise ValueError(f"event {name} needs {len(pattern)} slots")
        seen: set[tuple[int, int]] = set()
        for lb, s in zip(pattern, slots):
            c = int(lb)
            if not (0 <= s < self.top[c]) or self.mass[c, s] == 0:
                raise ValueError(f"slot {s} is not live in class {lb.name}")
            if (c, s) in seen:
                raise ValueError("event slots must be distinct particles")
            seen.add((c, s))
        s1 = int(slots[0])
        s2 = int(slots[1])
        s3 = int(slots[2]) if len(slots) > 2 else -1
        _engine.apply_event(EVENT_CODES[name], s1, s2, s3, *self._core(),
                            self._coef, self._expo, self.iregs)

    def cleanup(self, touched_masses: Iterable[int]) -> int:
        """Annihilate opposite-label particles at the given masses;
        returns the number of pairs collapsed to COMMON."""
        merged = 0
        for m in touched_masses:
            if 1 <= m <= self.max_mass:
                merged += _engine.cleanup_mass(int(m), *self._core(),
                                               self._coef, self._expo,
                                               self.iregs)
        return merged

    def snapshot(self, system: str, t: float | None = None) -> MeasureSnapshot:
        if system not in ("+", "-"):
            raise ValueError("system must be '+' or '-'")
        side = Label.PLUS if system == "+" else Label.MINUS
        masses = np.concatenate([self.masses(Label.COMMON),
                                 self.masses(side)])
        values, counts = np.unique(masses, return_counts=True)
        return MeasureSnapshot(
            t=self.t if t is None else float(t),
            system=system,
            n_scale=self.n_scale,
            counts={int(v): int(c) for v, c in zip(values, counts)},
        )

    # ------------------------------------------------------------------
    def consistency_error(self) -> float:
        """Worst relative drift between maintained sums and a fresh
        recomputation from the particle weights."""
        worst = 0.0
        for c in range(3):
            top = int(self.top[c])
            for k in range(self._coef.shape[0]):
                fresh = float(self.leaf[c, k, :top].sum())
                stored = float(self.totals[c, k])
                tree = float(_engine._fw_prefix(self.bit[c, k], self.capacity))
                scale = max(abs(fresh), 1.0)
                worst = max(worst, abs(stored - fresh) / scale,
                            abs(tree - fresh) / scale)
        return worst

    def validate(self) -> None:
        """Raise ValueError on any structural invariant violation."""
        for c in range(3):
            top = int(self.top[c])
            live = self.mass[c, :top] > 0
            if int(live.sum()) != int(self.n_live[c]):
                raise ValueError("live count mismatch")
            dead_weights = self.leaf[c, :, :top][:, ~live]
            if dead_weights.size and np.any(dead_weights != 0.0):
                raise ValueError("dead slot carries weight")
            # per-mass bucket lists cover exactly the live slots
            seen = set()
            for m in np.unique(self.mass[c, :top][live]):
                for s in self.slots_with_mass(Label(c), int(m)):
                    if self.mass[c, s] != m:
                        raise ValueError("bucket list mass mismatch")
                    if s in seen:
                        raise ValueError("slot linked twice")
                    seen.add(s)
            if len(seen) != int(self.n_live[c]):
                raise ValueError("bucket lists do not cover live slots")
        if self.consistency_error() > 1e-9:
            raise ValueError("sum trees drifted beyond 1e-9")
        # canonical form: no mass in both single-label classes
        plus_masses = set(self.masses(Label.PLUS).tolist())
        minus_masses = set(self.masses(Label.MINUS).tolist())
        overlap = plus_masses & minus_masses
        if overlap:
            raise ValueError(f"annihilation invariant violated at {overlap}")
        # conserved integer masses
        mass_plus = int(self.masses(Label.COMMON).sum()
                        + self.masses(Label.PLUS).sum())
        mass_minus = int(self.masses(Label.COMMON).sum()
                         + self.masses(Label.MINUS).sum())
        if mass_plus != int(self.iregs[1]) or mass_minus != int(self.iregs[2]):
            raise ValueError("system mass registers out of sync")

    def rebuild(self) -> None:
        _engine.rebuild_sums(self.mass, self.leaf, self.bit, self.totals,
                             self.top)

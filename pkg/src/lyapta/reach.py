"""Time-bounded zone-graph reachability and concretization."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .automaton import TimedAutomaton
from .partition import Partition
from .zones import INF, Zone, discrete_step

REF = "ref"


class ReachError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolicState:
    location: str
    zone: Zone


@dataclass
class ReachResult:
    """Locations reachable at some time in ``[t1, t2]``.

    ``states`` keeps every stored symbolic state, so sub-windows can be
    answered with :meth:`at` without re-exploring.
    """

    locations: tuple
    witnesses: dict
    window: tuple
    fingerprint: str = ""
    states: list = field(default_factory=list, repr=False)

    def at(self, t1, t2=None) -> tuple:
        """Locations reachable in a sub-window of the explored one."""
        t2 = t1 if t2 is None else t2
        t1, t2 = Fraction(t1), Fraction(t2)
        if t1 < self.window[0] or t2 > self.window[1]:
            raise ReachError(f"window [{t1}, {t2}] not inside explored [{self.window[0]}, {self.window[1]}]")
        hit = {s.location for s in self.states if _meets(s.zone, t1, t2)}
        return tuple(sorted(hit))

    def ref_breakpoints(self) -> list[Fraction]:
        """Finite bounds of the total-time clock over all stored zones."""
        pts = set()
        for s in self.states:
            lo = s.zone.lower(REF)[0]
            hi = s.zone.upper(REF)[0]
            for v in (lo, hi):
                if v not in (INF, -INF):
                    pts.add(Fraction(v))
        return sorted(pts)

    def to_dict(self) -> dict:
        return {"window": [str(self.window[0]), str(self.window[1])],
                "locations": list(self.locations), "fingerprint": self.fingerprint}


def _meets(zone: Zone, t1, t2) -> bool:
    z = zone.copy()
    r = z.index(REF)
    z.constrain(r, 0, (Fraction(t2), 1))
    z.constrain(0, r, (-Fraction(t1), 1))
    return not z.is_empty()


def initial_zone(ta: TimedAutomaton, loc: str, mode: str = "zero") -> Zone:
    """Start zone for ``loc``.

    ``"zero"`` starts all clocks at 0.  ``"anywhere"`` lets every clock
    start anywhere in ``[0, u]`` (``u`` its invariant bound in ``loc``, or
    unbounded), modelling a start somewhere inside the cell rather than on
    its entry level set.  The total-time clock starts at 0 either way.
    """
    names = tuple(ta.clocks) + (REF,)
    if mode == "zero":
        return Zone.zero(names)
    if mode != "anywhere":
        raise ValueError(f"unknown initial mode {mode!r}")
    z = Zone.nonnegative(names)
    r = z.index(REF)
    z.constrain(r, 0, (Fraction(0), 1))
    return z.apply(ta.invariants[loc])


def reach(ta: TimedAutomaton, initial: Iterable[str] | None = None, t1=0, t2=0,
          initial_mode: str = "zero") -> ReachResult:
    """Breadth-first zone-graph exploration up to total time ``t2``.

    A location is reported when one of its zones meets ``t1 <= ref <= t2``.
    With ``initial_mode="anywhere"`` discrete steps need ``ref > 0``: a
    start point inside a cell needs positive time to reach its exit.
    A new zone is dropped when a stored zone of the same location contains
    it; stored zones it contains are discarded.
    """
    t1, t2 = Fraction(t1), Fraction(t2)
    if not 0 <= t1 <= t2:
        raise ReachError(f"need 0 <= t1 <= t2, got [{t1}, {t2}]")
    L0 = sorted(ta.initial if initial is None else initial)
    unknown = set(L0) - set(ta.locations)
    if unknown:
        raise ReachError(f"unknown initial locations {sorted(unknown)}")

    passed: dict = {l: [] for l in ta.locations}
    waiting: deque = deque()

    def settle(loc, z):
        z.up().apply(ta.invariants[loc])
        z.constrain(z.index(REF), 0, (t2, 1))
        if z.is_empty():
            return
        store = passed[loc]
        if any(old.includes(z) for old in store):
            return
        store[:] = [old for old in store if not z.includes(old)]
        store.append(z)
        waiting.append((loc, z))

    for l0 in L0:
        z = initial_zone(ta, l0, initial_mode)
        if not z.is_empty():
            settle(l0, z)
    strict = initial_mode == "anywhere"
    while waiting:
        loc, z = waiting.popleft()
        if not any(s is z for s in passed[loc]):
            continue  # superseded by a larger zone
        if strict:
            z = z.copy()
            z.constrain(0, z.index(REF), (Fraction(0), 0))
            if z.is_empty():
                continue
        for tr in ta.outgoing(loc):
            nz = discrete_step(z, tr.guard, tr.resets, ta.invariants[tr.target])
            if not nz.is_empty():
                settle(tr.target, nz)

    states = [SymbolicState(l, z) for l in ta.locations for z in passed[l]]
    witnesses = {}
    for s in states:
        if s.location not in witnesses and _meets(s.zone, t1, t2):
            witnesses[s.location] = s.zone
    return ReachResult(tuple(sorted(witnesses)), witnesses, (t1, t2), ta.fingerprint, states)


def concretize(result: ReachResult | Iterable[str], partition: Partition, fingerprint: str | None = None) -> np.ndarray:
    """Grid mask of the union of the regions named in ``result``."""
    if isinstance(result, ReachResult):
        fp = result.fingerprint
        locs = result.locations
    else:
        fp = fingerprint
        locs = list(result)
    if fp and fp != partition.fingerprint:
        raise ReachError(f"reach result belongs to partition {fp}, not {partition.fingerprint}")
    return partition.mask(locs)


def concretized_volume(result, partition: Partition) -> float:
    return float(concretize(result, partition).sum()) * partition.cell_volume

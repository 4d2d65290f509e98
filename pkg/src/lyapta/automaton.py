"""Timed automata built from slice families and partitions."""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .bounds import SliceBounds
from .partition import CORE, EXTERIOR, Partition, adjacency, cell_id, initial_locations

log = logging.getLogger(__name__)

OPS = ("<=", "<", "==", ">", ">=")
RESOLUTION = 10 ** 9


class AutomatonError(ValueError):
    pass


def rational(t: float, direction: str = "nearest", resolution: int = RESOLUTION) -> Fraction:
    """Round ``t`` onto the grid ``1/resolution``.

    ``"down"`` and ``"up"`` round outward, except that values within 1e-12
    (relative) of a grid point snap to it, so float noise does not
    perturb exact constants such as 1/4.
    """
    if not math.isfinite(t):
        raise AutomatonError(f"non-finite clock constant {t}")
    scaled = t * resolution
    near = round(scaled)
    if direction == "nearest" or abs(scaled - near) <= 1e-12 * max(1.0, abs(scaled)):
        return Fraction(near, resolution)
    if direction == "down":
        return Fraction(math.floor(scaled), resolution)
    if direction == "up":
        return Fraction(math.ceil(scaled), resolution)
    raise ValueError(direction)


@dataclass(frozen=True, order=True)
class Atom:
    """``clock - other op value`` (``other`` empty for a plain clock bound)."""

    clock: str
    op: str
    value: Fraction
    other: str = ""

    def __post_init__(self):
        if self.op not in OPS:
            raise AutomatonError(f"unknown comparison {self.op!r}")
        object.__setattr__(self, "value", Fraction(self.value))

    def clocks(self):
        return (self.clock,) if not self.other else (self.clock, self.other)

    def __str__(self):
        lhs = self.clock if not self.other else f"{self.clock} - {self.other}"
        return f"{lhs} {self.op} {self.value}"

    def holds(self, v: Mapping[str, Fraction]) -> bool:
        x = v[self.clock] - (v[self.other] if self.other else 0)
        return {"<=": x <= self.value, "<": x < self.value, "==": x == self.value,
                ">": x > self.value, ">=": x >= self.value}[self.op]


@dataclass(frozen=True)
class ClockConstraint:
    """Conjunction of atoms; the empty conjunction is ``true``."""

    atoms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(sorted(set(self.atoms))))

    @classmethod
    def true(cls) -> "ClockConstraint":
        return cls(())

    def __and__(self, other: "ClockConstraint") -> "ClockConstraint":
        return ClockConstraint(self.atoms + other.atoms)

    def __bool__(self):
        return bool(self.atoms)

    def clocks(self) -> set:
        return {c for a in self.atoms for c in a.clocks()}

    def upper(self, clock: str) -> Fraction | None:
        vals = [a.value for a in self.atoms if a.clock == clock and not a.other and a.op in ("<=", "<", "==")]
        return min(vals) if vals else None

    def lower(self, clock: str) -> Fraction | None:
        vals = [a.value for a in self.atoms if a.clock == clock and not a.other and a.op in (">=", ">", "==")]
        return max(vals) if vals else None

    def holds(self, v) -> bool:
        return all(a.holds(v) for a in self.atoms)

    def renamed(self, mapping: Mapping[str, str]) -> "ClockConstraint":
        return ClockConstraint(tuple(dataclasses.replace(a, clock=mapping.get(a.clock, a.clock),
                                                         other=mapping.get(a.other, a.other))
                                     for a in self.atoms))

    def scaled(self, factor) -> "ClockConstraint":
        return ClockConstraint(tuple(dataclasses.replace(a, value=a.value * factor) for a in self.atoms))

    def __str__(self):
        return " && ".join(map(str, self.atoms)) if self.atoms else "true"


def le(clock, value) -> ClockConstraint:
    return ClockConstraint((Atom(clock, "<=", Fraction(value)),))


def ge(clock, value) -> ClockConstraint:
    return ClockConstraint((Atom(clock, ">=", Fraction(value)),))


@dataclass(frozen=True)
class Transition:
    source: str
    guard: ClockConstraint
    symbol: str
    resets: frozenset
    target: str

    def key(self):
        return (self.source, str(self.guard), self.symbol, tuple(sorted(self.resets)), self.target)


@dataclass(frozen=True, eq=False)
class TimedAutomaton:
    """(L, L0, C, Sigma, I, Delta) plus per-location metadata.

    ``info`` maps a location to a dict that may hold ``kind``
    (cell/core/exterior/slice), ``band`` and ``volume``.
    """

    locations: tuple
    initial: frozenset
    clocks: tuple
    alphabet: tuple
    invariants: Mapping[str, ClockConstraint]
    transitions: tuple
    info: Mapping[str, dict] = field(default_factory=dict)
    fingerprint: str = ""

    def __post_init__(self):
        locs = set(self.locations)
        if len(locs) != len(self.locations):
            raise AutomatonError("duplicate location")
        if not set(self.initial) <= locs:
            raise AutomatonError(f"initial locations {set(self.initial) - locs} not in L")
        clocks = set(self.clocks)
        inv = {l: self.invariants.get(l, ClockConstraint.true()) for l in self.locations}
        for l, c in inv.items():
            if not c.clocks() <= clocks:
                raise AutomatonError(f"invariant of {l} uses undeclared clocks {c.clocks() - clocks}")
        for t in self.transitions:
            if t.source not in locs or t.target not in locs:
                raise AutomatonError(f"transition {t.source}->{t.target} uses unknown location")
            if not t.guard.clocks() <= clocks or not set(t.resets) <= clocks:
                raise AutomatonError(f"transition {t.source}->{t.target} uses undeclared clocks")
            if t.symbol not in self.alphabet:
                raise AutomatonError(f"symbol {t.symbol} not in alphabet")
        object.__setattr__(self, "invariants", inv)
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "transitions", tuple(sorted(self.transitions, key=Transition.key)))

    def outgoing(self, loc: str) -> list[Transition]:
        table = self.__dict__.get("_out")
        if table is None:
            table = {l: [] for l in self.locations}
            for t in self.transitions:
                table[t.source].append(t)
            object.__setattr__(self, "_out", table)
        return table[loc]

    def with_initial(self, initial: Iterable[str]) -> "TimedAutomaton":
        return dataclasses.replace(self, initial=frozenset(initial))

    def constants(self) -> list[Fraction]:
        vals = [a.value for c in self.invariants.values() for a in c.atoms]
        vals += [a.value for t in self.transitions for a in t.guard.atoms]
        return vals

    def scaled(self, factor) -> "TimedAutomaton":
        """Multiply every clock constant by ``factor``."""
        factor = Fraction(factor)
        return dataclasses.replace(
            self,
            invariants={l: c.scaled(factor) for l, c in self.invariants.items()},
            transitions=tuple(dataclasses.replace(t, guard=t.guard.scaled(factor)) for t in self.transitions),
        )

    def structure(self):
        """Hashable summary used to compare automata."""
        return (tuple(sorted(self.locations)), tuple(sorted(self.initial)), tuple(sorted(self.clocks)),
                tuple(sorted(self.alphabet)),
                tuple(sorted((l, str(c)) for l, c in self.invariants.items())),
                tuple(t.key() for t in self.transitions))


def integer_scale(ta: TimedAutomaton) -> Fraction:
    """Time unit that makes every constant an integer: 1 / lcm(denominators)."""
    den = 1
    for v in ta.constants():
        den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(1, den)


def is_deterministic(ta: TimedAutomaton) -> bool:
    """No location has two outgoing transitions with the same symbol."""
    seen = set()
    for t in ta.transitions:
        if (t.source, t.symbol) in seen:
            return False
        seen.add((t.source, t.symbol))
    return True


def clock_name(family_index: int) -> str:
    return f"c{family_index}"


def symbol_name(family_index: int) -> str:
    return f"sigma{family_index}"


def slice_name(g: int) -> str:
    return f"S{g}"


def _bound_table(bounds: Sequence[SliceBounds]):
    return {b.slice: b for b in bounds}


def _guard_inv(b: SliceBounds, clock: str, resolution: int):
    if b.exact:
        t = rational(b.t_lower, "nearest", resolution)
        lo = hi = t
    else:
        lo = rational(b.t_lower, "down", resolution)
        hi = rational(b.t_upper, "up", resolution)
    if lo > hi:
        raise AutomatonError(f"guard {lo} exceeds invariant {hi} on slice {b.slice}")
    return ge(clock, lo), le(clock, hi)


def build_slice_automaton(family, bounds: Sequence[SliceBounds], resolution: int = RESOLUTION) -> TimedAutomaton:
    """One-clock automaton over the slices of a family plus core and exterior."""
    table = _bound_table(bounds)
    m = family.n_slices
    missing = [g for g in range(1, m + 1) if g not in table]
    if missing:
        raise AutomatonError(f"missing bounds for slices {missing} of family {family.index}")
    c, s = clock_name(family.index), symbol_name(family.index)
    locs = [CORE] + [slice_name(g) for g in range(1, m + 1)] + [EXTERIOR]
    inv = {CORE: ClockConstraint.true(), EXTERIOR: ClockConstraint.true()}
    trans = []
    for g in range(1, m + 1):
        guard, inv[slice_name(g)] = _guard_inv(table[g], c, resolution)
        if family.orientation == "decreasing":
            tgt = CORE if g == 1 else slice_name(g - 1)
        else:
            tgt = EXTERIOR if g == m else slice_name(g + 1)
        trans.append(Transition(slice_name(g), guard, s, frozenset({c}), tgt))
    info = {CORE: {"kind": "core", "band": 0}, EXTERIOR: {"kind": "exterior", "band": m + 1}}
    info.update({slice_name(g): {"kind": "slice", "band": g} for g in range(1, m + 1)})
    return TimedAutomaton(tuple(locs), frozenset(), (c,), (s,), inv, tuple(trans), info)


PRODUCT_SEP = "|"


def parallel_compose(automata: Sequence[TimedAutomaton]) -> TimedAutomaton:
    """Interleaving product of automata with disjoint alphabets and clocks."""
    automata = list(automata)
    if not automata:
        raise AutomatonError("nothing to compose")
    clocks, alpha = [], []
    for a in automata:
        if set(a.clocks) & set(clocks):
            raise AutomatonError(f"clock collision: {set(a.clocks) & set(clocks)}")
        if set(a.alphabet) & set(alpha):
            raise AutomatonError(f"alphabet collision: {set(a.alphabet) & set(alpha)}")
        clocks += a.clocks
        alpha += a.alphabet
    name = PRODUCT_SEP.join
    locs, inv, info = [], {}, {}
    for combo in itertools.product(*[a.locations for a in automata]):
        l = name(combo)
        locs.append(l)
        c = ClockConstraint.true()
        for a, li in zip(automata, combo):
            c = c & a.invariants[li]
        inv[l] = c
        info[l] = {"components": list(combo)}
    trans = []
    for pos, a in enumerate(automata):
        for t in a.transitions:
            others = [b.locations for b in automata]
            others[pos] = [None]
            for combo in itertools.product(*others):
                src = list(combo)
                tgt = list(combo)
                src[pos], tgt[pos] = t.source, t.target
                trans.append(dataclasses.replace(t, source=name(src), target=name(tgt)))
    initial = {name(c) for c in itertools.product(*[sorted(a.initial) for a in automata])}
    return TimedAutomaton(tuple(locs), frozenset(initial), tuple(clocks), tuple(alpha), inv,
                          tuple(trans), info)


def absorb_exterior(product: TimedAutomaton) -> TimedAutomaton:
    """Collapse product locations with any exterior component into one
    absorbing exterior location."""
    def rename(l):
        parts = l.split(PRODUCT_SEP)
        if EXTERIOR in parts:
            return EXTERIOR
        if all(p == CORE for p in parts):
            return CORE
        return l

    locs = []
    for l in product.locations:
        r = rename(l)
        if r not in locs:
            locs.append(r)
    inv = {rename(l): c for l, c in product.invariants.items() if rename(l) not in (EXTERIOR,)}
    inv[EXTERIOR] = ClockConstraint.true()
    trans = {dataclasses.replace(t, source=rename(t.source), target=rename(t.target))
             for t in product.transitions if rename(t.source) != EXTERIOR}
    return TimedAutomaton(tuple(locs), frozenset(rename(l) for l in product.initial), product.clocks,
                          product.alphabet, inv, tuple(trans))


def build_cell_automaton(partition: Partition, bounds: Mapping[int, Sequence[SliceBounds]],
                         initial: Iterable[str] = (), resolution: int = RESOLUTION,
                         fingerprint: str | None = None) -> TimedAutomaton:
    """Automaton whose locations are the cells of ``partition`` plus core and exterior.

    ``bounds`` maps a family index to its slice bounds.  A cell in band
    tuple ``g`` fires ``sigma_i`` to every cell of the neighboring band
    (one step along family ``i``'s orientation) that touches it on the grid.
    """
    fams = partition.families
    tables = {}
    for f in fams:
        if f.index not in bounds:
            raise AutomatonError(f"missing bounds for family {f.index}")
        tables[f.index] = _bound_table(bounds[f.index])
        missing = [g for g in range(1, f.n_slices + 1) if g not in tables[f.index]]
        if missing:
            raise AutomatonError(f"missing bounds for slices {missing} of family {f.index}")
    gi = {}
    for f in fams:
        for g in range(1, f.n_slices + 1):
            gi[f.index, g] = _guard_inv(tables[f.index][g], clock_name(f.index), resolution)

    ids = partition.location_ids
    by_band = {g: [c.id for c in cs] for g, cs in partition.cells.items()}
    adj = adjacency(partition)
    clocks = tuple(clock_name(f.index) for f in fams)
    alphabet = tuple(symbol_name(f.index) for f in fams)
    inv = {CORE: ClockConstraint.true(), EXTERIOR: ClockConstraint.true()}
    info = {CORE: {"kind": "core", "volume": partition.volume([CORE])},
            EXTERIOR: {"kind": "exterior", "volume": partition.volume([EXTERIOR])}}
    trans = []
    for g, cells in partition.cells.items():
        for cell in cells:
            src = cell.id
            c = ClockConstraint.true()
            for pos, f in enumerate(fams):
                if 1 <= g[pos] <= f.n_slices:
                    c = c & gi[f.index, g[pos]][1]
            inv[src] = c
            info[src] = {"kind": "cell", "band": list(g), "volume": float(len(cell.grid_mask)) * partition.cell_volume}
            for pos, f in enumerate(fams):
                gp = g[pos]
                if not 1 <= gp <= f.n_slices:
                    continue
                step = -1 if f.orientation == "decreasing" else 1
                tg = list(g)
                tg[pos] = gp + step
                tg = tuple(tg)
                guard = gi[f.index, gp][0]
                reset = frozenset({clock_name(f.index)})
                sym = symbol_name(f.index)
                if tg[pos] == f.n_slices + 1:
                    targets = [EXTERIOR]
                elif all(v == 0 for v in tg):
                    targets = [CORE]
                else:
                    targets = by_band.get(tg, [])
                if targets and targets != [EXTERIOR]:
                    si = partition.location_index(src)
                    touching = [t for t in targets if (si, partition.location_index(t)) in adj]
                    if not touching:
                        log.warning("cell %s has no grid neighbor in band %s; linking all of its cells", src, tg)
                        if not targets:
                            raise AutomatonError(f"band {tg} reachable from {src} is empty on the grid")
                    else:
                        targets = touching
                if not targets:
                    raise AutomatonError(f"band {tg} reachable from {src} is empty on the grid")
                for t in targets:
                    trans.append(Transition(src, guard, sym, reset, t))
    locs = tuple(ids)
    for t in trans:
        _check_guard_within_invariant(t, inv[t.source])
    return TimedAutomaton(locs, frozenset(initial), clocks, alphabet, inv, tuple(trans), info,
                          fingerprint if fingerprint is not None else partition.fingerprint)


def _check_guard_within_invariant(t: Transition, invariant: ClockConstraint):
    for a in t.guard.atoms:
        hi = invariant.upper(a.clock)
        if hi is not None and a.value > hi:
            raise AutomatonError(f"guard {a} on {t.source}->{t.target} exceeds invariant {hi}")


def quotient(ta: TimedAutomaton, mapping: Mapping[str, str]) -> TimedAutomaton:
    """Merge locations with equal image under ``mapping``.

    Merged locations must share their invariant.  Transitions are
    deduplicated.
    """
    locs = []
    inv = {}
    for l in ta.locations:
        r = mapping.get(l, l)
        if r not in inv:
            locs.append(r)
            inv[r] = ta.invariants[l]
        elif inv[r] != ta.invariants[l]:
            raise AutomatonError(f"locations merged into {r} have different invariants")
    trans = {dataclasses.replace(t, source=mapping.get(t.source, t.source),
                                 target=mapping.get(t.target, t.target)) for t in ta.transitions}
    info = {}
    for l, d in ta.info.items():
        r = mapping.get(l, l)
        cur = info.setdefault(r, {k: v for k, v in d.items() if k != "volume"})
        if "volume" in d:
            cur["volume"] = cur.get("volume", 0.0) + d["volume"]
    return TimedAutomaton(tuple(locs), frozenset(mapping.get(l, l) for l in ta.initial), ta.clocks,
                          ta.alphabet, inv, tuple(trans), info, ta.fingerprint)


def extended_mapping(partition: Partition) -> dict:
    """Cell id -> extended-cell id."""
    m = {CORE: CORE, EXTERIOR: EXTERIOR}
    for g, cells in partition.cells.items():
        for c in cells:
            m[c.id] = cell_id(g)
    return m


def build_extended_automaton(partition: Partition, bounds, initial=(), resolution: int = RESOLUTION) -> TimedAutomaton:
    """Cell automaton quotiented by component index."""
    cell_ta = build_cell_automaton(partition, bounds, initial, resolution)
    return quotient(cell_ta, extended_mapping(partition))


def product_to_extended(product_loc: str, families) -> str:
    """Map a product location name such as ``S2|core`` to an extended-cell id."""
    parts = product_loc.split(PRODUCT_SEP)
    if EXTERIOR in parts:
        return EXTERIOR
    band = [0 if p == CORE else int(p[1:]) for p in parts]
    if all(b == 0 for b in band):
        return CORE
    return cell_id(band)


def initial_cells(partition: Partition, box) -> list[str]:
    return initial_locations(partition, box)

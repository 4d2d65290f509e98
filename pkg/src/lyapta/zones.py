"""Difference-bound matrices with exact rational entries.

Index 0 is the constant-zero clock.  Entry ``D[i][j] = (value, closed)``
bounds ``x_i - x_j``: ``<= value`` when ``closed`` is 1, ``< value`` when
0.  Tuples compare in the right order (strict sorts below non-strict at
equal value), and ``(inf, 0)`` means no bound.
"""

from __future__ import annotations

import math
from fractions import Fraction

INF = math.inf
LE_ZERO = (Fraction(0), 1)
UNBOUNDED = (INF, 0)


def add(a, b):
    if a[0] == INF or b[0] == INF:
        return UNBOUNDED
    return (a[0] + b[0], min(a[1], b[1]))


class Zone:
    """A convex set of clock valuations; kept in canonical form."""

    __slots__ = ("names", "D", "_key")

    def __init__(self, names, D, canonical=False):
        self.names = tuple(names)
        self.D = [list(row) for row in D]
        self._key = None
        if not canonical:
            self.close()

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, clocks) -> "Zone":
        """Every clock equal to 0."""
        names = ("0",) + tuple(clocks)
        n = len(names)
        return cls(names, [[LE_ZERO] * n for _ in range(n)], canonical=True)

    @classmethod
    def nonnegative(cls, clocks) -> "Zone":
        """Every clock >= 0, otherwise unconstrained."""
        names = ("0",) + tuple(clocks)
        n = len(names)
        D = [[UNBOUNDED] * n for _ in range(n)]
        for i in range(n):
            D[i][i] = LE_ZERO
            D[0][i] = LE_ZERO
        return cls(names, D, canonical=True)

    def copy(self) -> "Zone":
        return Zone(self.names, self.D, canonical=True)

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, clock: str) -> int:
        return self.names.index(clock)

    # core algorithms ----------------------------------------------------
    def close(self) -> "Zone":
        """Floyd-Warshall shortest-path closure (in place)."""
        D = self.D
        n = len(D)
        for k in range(n):
            Dk = D[k]
            for i in range(n):
                dik = D[i][k]
                if dik[0] == INF:
                    continue
                Di = D[i]
                for j in range(n):
                    dkj = Dk[j]
                    if dkj[0] == INF:
                        continue
                    s = (dik[0] + dkj[0], min(dik[1], dkj[1]))
                    if s < Di[j]:
                        Di[j] = s
        if self.is_empty():
            D[0][0] = (Fraction(-1), 1)
        self._key = None
        return self

    def is_empty(self) -> bool:
        return any(self.D[i][i] < LE_ZERO for i in range(len(self.D)))

    def constrain(self, i: int, j: int, bound) -> "Zone":
        """Intersect with ``x_i - x_j`` bounded by ``bound`` (in place, re-closed).

        Uses the O(n^2) incremental closure.
        """
        D = self.D
        if bound >= D[i][j]:
            return self
        if add(bound, D[j][i]) < LE_ZERO:
            D[0][0] = (Fraction(-1), 1)
            self._key = None
            return self
        D[i][j] = bound
        n = len(D)
        for a in range(n):
            dai = D[a][i]
            if dai[0] == INF:
                continue
            via = add(dai, bound)
            for b in range(n):
                cand = add(via, D[j][b])
                if cand < D[a][b]:
                    D[a][b] = cand
        self._key = None
        return self

    def apply(self, constraint) -> "Zone":
        """Intersect with a :class:`~lyapta.automaton.ClockConstraint`."""
        for a in constraint.atoms:
            if self.is_empty():
                break
            i = self.index(a.clock)
            j = self.index(a.other) if a.other else 0
            v = Fraction(a.value)
            if a.op in ("<=", "<", "=="):
                self.constrain(i, j, (v, 0 if a.op == "<" else 1))
            if a.op in (">=", ">", "=="):
                self.constrain(j, i, (-v, 0 if a.op == ">" else 1))
        return self

    def up(self) -> "Zone":
        """Let time elapse: drop every upper bound ``x_i - 0``."""
        for i in range(1, len(self.D)):
            self.D[i][0] = UNBOUNDED
        self._key = None
        return self

    def reset(self, clock: str, value=Fraction(0)) -> "Zone":
        x = self.index(clock)
        D = self.D
        v = Fraction(value)
        for j in range(len(D)):
            D[x][j] = add((v, 1), D[0][j])
            D[j][x] = add(D[j][0], (-v, 1))
        D[x][x] = LE_ZERO
        self._key = None
        return self

    # queries --------------------------------------------------------------
    def includes(self, other: "Zone") -> bool:
        """``other`` is a subset of ``self`` (both canonical)."""
        if other.is_empty():
            return True
        if self.is_empty():
            return False
        return all(o <= s for rs, ro in zip(self.D, other.D) for s, o in zip(rs, ro))

    def upper(self, clock: str):
        return self.D[self.index(clock)][0]

    def lower(self, clock: str):
        """``(value, closed)`` with ``clock >= value`` (or ``>`` when open)."""
        b = self.D[0][self.index(clock)]
        return (-b[0], b[1]) if b[0] != INF else (-INF, 0)

    def contains(self, valuation) -> bool:
        """Membership of a concrete valuation (dict clock -> number)."""
        if self.is_empty():
            return False
        vals = [0] + [Fraction(valuation[c]) for c in self.names[1:]]
        for i, row in enumerate(self.D):
            for j, (b, closed) in enumerate(row):
                if b == INF:
                    continue
                d = vals[i] - vals[j]
                if d > b or (d == b and not closed):
                    return False
        return True

    def key(self):
        if self._key is None:
            self._key = "empty" if self.is_empty() else tuple(tuple(r) for r in self.D)
        return self._key

    def __eq__(self, other):
        return isinstance(other, Zone) and self.names == other.names and self.key() == other.key()

    def __hash__(self):
        return hash((self.names, self.key()))

    def __repr__(self):
        if self.is_empty():
            return "Zone(empty)"
        parts = []
        for i in range(len(self.D)):
            for j in range(len(self.D)):
                if i == j:
                    continue
                b, closed = self.D[i][j]
                if b == INF:
                    continue
                lhs = self.names[i] if j == 0 else (f"-{self.names[j]}" if i == 0 else f"{self.names[i]}-{self.names[j]}")
                parts.append(f"{lhs}{'<=' if closed else '<'}{b}")
        return "Zone(" + ", ".join(parts) + ")"


def canonicalize(zone: Zone) -> Zone:
    """Closed copy of ``zone``."""
    return Zone(zone.names, zone.D)


def successor(zone: Zone, invariant) -> Zone:
    """Time successors of ``zone`` that stay inside ``invariant``."""
    return zone.copy().up().apply(invariant)


def discrete_step(zone: Zone, guard, resets, target_invariant) -> Zone:
    """Take a transition: guard, resets, then the target invariant."""
    z = zone.copy().apply(guard)
    if z.is_empty():
        return z
    for c in sorted(resets):
        z.reset(c)
    return z.apply(target_invariant)

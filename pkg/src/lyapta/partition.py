"""Slice families, extended cells and their grid-connected cells.

Every grid point of the domain box gets a *band* per slice family:
``0`` below the innermost level (the family's core band), ``g`` for
``psi`` in ``[a_{g-1}, a_g)`` (the top slice is closed), and ``m + 1``
above the outermost level.  A point is in the *core* when all bands are 0,
in the *exterior* when any band is ``m + 1``, and otherwise in the extended
cell named by its band tuple.  Extended cells are split into cells by
2n-neighbor flood fill.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .system import QuadraticLyapunov, eval_psi, grid_points

log = logging.getLogger(__name__)

CORE = "core"
EXTERIOR = "exterior"
CORE_INDEX = 0
EXTERIOR_INDEX = 1


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class SliceFamily:
    """Levels ``a_0 < ... < a_m`` of one quadratic form.

    Slice ``g`` (1-based) is ``psi^{-1}([a_{g-1}, a_g])``.  ``orientation``
    is the sign of psi' on the slices: trajectories move to lower levels
    when 'decreasing' and to higher ones when 'increasing'.
    """

    lyap: QuadraticLyapunov
    levels: tuple
    orientation: str = "decreasing"

    def __post_init__(self):
        levels = tuple(float(a) for a in self.levels)
        if len(levels) < 2:
            raise PartitionError("a slice family needs at least two levels")
        if levels[0] <= 0:
            raise PartitionError("levels must be positive")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise PartitionError(f"levels must be strictly increasing: {levels}")
        if self.orientation not in ("decreasing", "increasing"):
            raise PartitionError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "levels", levels)

    @property
    def index(self) -> int:
        return self.lyap.index

    @property
    def n_slices(self) -> int:
        return len(self.levels) - 1

    def slice_range(self, g: int) -> tuple[float, float]:
        return self.levels[g - 1], self.levels[g]

    def exit_level(self, g: int) -> float:
        """Level through which trajectories leave slice ``g``."""
        return self.levels[g - 1] if self.orientation == "decreasing" else self.levels[g]

    def bands(self, psi: np.ndarray) -> np.ndarray:
        lv = np.asarray(self.levels)
        b = np.searchsorted(lv, psi, side="right")
        b[(b == len(lv)) & (psi == lv[-1])] = len(lv) - 1
        return b


def refine(family: SliceFamily, rule="bisect") -> SliceFamily:
    """Insert levels into a family.

    ``rule="bisect"`` inserts the geometric midpoint of every gap; otherwise
    ``rule`` is an iterable of new levels, each strictly inside a gap.
    """
    old = list(family.levels)
    if isinstance(rule, str):
        if rule != "bisect":
            raise ValueError(f"unknown refinement rule {rule!r}")
        new = [math.sqrt(a * b) for a, b in zip(old, old[1:])]
    else:
        new = [float(v) for v in rule]
        if len(set(new)) != len(new):
            raise PartitionError("duplicate inserted level")
        for v in new:
            if v in old:
                raise PartitionError(f"level {v} already present")
            if not old[0] < v < old[-1]:
                raise PartitionError(f"level {v} is outside ({old[0]}, {old[-1]})")
    return dataclasses.replace(family, levels=tuple(sorted(old + new)))


@dataclass(frozen=True, eq=False)
class Cell:
    extended_index: tuple
    component_index: int
    grid_mask: np.ndarray
    representative: np.ndarray

    @property
    def id(self) -> str:
        return cell_id(self.extended_index, self.component_index)


def cell_id(g: Sequence[int], h: int | None = None) -> str:
    base = "e" + "_".join(str(int(v)) for v in g)
    return base if h is None else f"{base}h{h}"


@dataclass(frozen=True, eq=False)
class Partition:
    families: tuple
    domain_box: tuple
    grid_step: float
    shape: tuple
    points: np.ndarray          # (N, n) grid coordinates, C order
    psi: np.ndarray             # (N, k) form values
    bands: np.ndarray           # (N, k)
    location: np.ndarray        # (N,) index into location_ids
    cells: dict                 # band tuple -> [Cell]
    location_ids: tuple
    thin: tuple = ()
    box_clips_domain: bool = False

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def k(self) -> int:
        return len(self.families)

    @property
    def cell_volume(self) -> float:
        return self.grid_step ** self.dim

    @property
    def fingerprint(self) -> str:
        return partition_fingerprint(self.families, self.domain_box, self.grid_step)

    def location_index(self, loc_id: str) -> int:
        return self._index()[loc_id]

    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {l: i for i, l in enumerate(self.location_ids)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def band_of_location(self, loc_id: str) -> tuple | None:
        """Band tuple of a cell location; None for core and exterior."""
        if loc_id in (CORE, EXTERIOR):
            return None
        return self.cell_by_id(loc_id).extended_index

    def cell_by_id(self, loc_id: str) -> Cell:
        for cells in self.cells.values():
            for c in cells:
                if c.id == loc_id:
                    return c
        raise KeyError(loc_id)

    def mask(self, loc_ids: Iterable[str]) -> np.ndarray:
        """Boolean grid mask of the union of the named regions."""
        want = np.zeros(len(self.location_ids), dtype=bool)
        for l in loc_ids:
            want[self.location_index(l)] = True
        return want[self.location]

    def volume(self, loc_ids: Iterable[str]) -> float:
        return float(self.mask(loc_ids).sum()) * self.cell_volume

    def merged(self, indices: Iterable[tuple] | None = None) -> "Partition":
        """Copy where the listed extended cells are single (possibly disconnected) cells."""
        indices = set(self.cells) if indices is None else {tuple(g) for g in indices}
        cells = {}
        for g, cs in self.cells.items():
            if g in indices and len(cs) > 1:
                mask = np.sort(np.concatenate([c.grid_mask for c in cs]))
                cells[g] = [Cell(g, 0, mask, cs[0].representative)]
            else:
                cells[g] = cs
        return _assemble(self, cells)

    def with_cells(self, cells: dict) -> "Partition":
        """Copy with a replaced cell table (masks must stay disjoint)."""
        return _assemble(self, cells)


def _assemble(part: Partition, cells: dict) -> Partition:
    location = np.full(len(part.points), -1, dtype=np.int64)
    b = part.bands
    tops = np.array([f.n_slices + 1 for f in part.families])
    ext = np.any(b == tops, axis=1)
    core = np.all(b == 0, axis=1)
    location[core] = CORE_INDEX
    location[ext] = EXTERIOR_INDEX
    ids = [CORE, EXTERIOR]
    for g in sorted(cells):
        for c in cells[g]:
            location[c.grid_mask] = len(ids)
            ids.append(c.id)
    if np.any(location < 0):
        raise PartitionError("cell table does not cover every grid point")
    out = dataclasses.replace(part, cells=dict(sorted(cells.items())), location=location,
                              location_ids=tuple(ids))
    out.__dict__.pop("_idx", None)
    return out


def partition_fingerprint(families, domain_box, grid_step) -> str:
    doc = {
        "families": [{"P": f.lyap.P.tolist(), "subspace": list(f.lyap.subspace),
                      "levels": list(f.levels), "orientation": f.orientation} for f in families],
        "box": [list(map(float, b)) for b in domain_box],
        "grid_step": float(grid_step),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def default_grid_step(domain_box) -> float:
    return float(np.linalg.norm([hi - lo for lo, hi in domain_box])) / 256.0


def build_partition(families: Sequence[SliceFamily], domain_box, grid_step: float | None = None) -> Partition:
    """Label every grid point of ``domain_box`` with its region and split
    extended cells into connected cells."""
    families = tuple(families)
    if not families:
        raise PartitionError("need at least one slice family")
    domain_box = tuple((float(lo), float(hi)) for lo, hi in domain_box)
    n = len(domain_box)
    for f in families:
        if f.lyap.dim != n:
            raise PartitionError(f"family {f.index} has dimension {f.lyap.dim}, box has {n}")
    if len({f.index for f in families}) != len(families):
        raise PartitionError("family indices must be distinct")
    if any(hi <= lo for lo, hi in domain_box):
        raise PartitionError("empty domain box")
    if grid_step is None:
        grid_step = default_grid_step(domain_box)
    grid_step = float(grid_step)
    if grid_step <= 0:
        raise PartitionError("grid step must be positive")

    points = grid_points(domain_box, grid_step)
    shape = tuple(int(np.floor((hi - lo) / grid_step + 1e-9)) + 1 for lo, hi in domain_box)
    psi = np.stack([eval_psi(f.lyap, points) for f in families], axis=1)
    bands = np.stack([f.bands(psi[:, i]) for i, f in enumerate(families)], axis=1)

    for i, f in enumerate(families):
        present = np.bincount(bands[:, i], minlength=f.n_slices + 2)
        for g in range(1, f.n_slices + 1):
            if present[g] == 0:
                raise PartitionError(
                    f"slice {g} of family {f.index} ({f.levels[g-1]:g} <= psi < {f.levels[g]:g}) "
                    f"contains no grid point; grid step {grid_step:g} is too coarse")

    radix = np.array([f.n_slices + 2 for f in families])
    weights = np.concatenate([[1], np.cumprod(radix[::-1])[:-1]])[::-1]
    codes = bands @ weights
    tops = radix - 1
    ext = np.any(bands == tops, axis=1)
    core = np.all(bands == 0, axis=1)
    codes = np.where(ext | core, -1, codes)
    labels = _kernels.label_components(codes, shape)

    cells: dict = {}
    thin = []
    active = np.flatnonzero(labels >= 0)
    if active.size:
        order = np.argsort(labels[active], kind="stable")
        lab_sorted = labels[active][order]
        splits = np.flatnonzero(np.diff(lab_sorted)) + 1
        for chunk in np.split(active[order], splits):
            chunk = np.sort(chunk)
            g = tuple(int(v) for v in bands[chunk[0]])
            h = len(cells.setdefault(g, []))
            mid = chunk[len(chunk) // 2]
            cell = Cell(g, h, chunk, points[mid].copy())
            cells[g].append(cell)
            if len(chunk) < 3 ** n:
                thin.append(cell.id)
    if thin:
        log.warning("components thinner than 3 grid cells (unreliable): %s", ", ".join(thin))

    boundary = np.zeros(shape, dtype=bool)
    for d in range(n):
        idx = [slice(None)] * n
        idx[d] = 0
        boundary[tuple(idx)] = True
        idx[d] = -1
        boundary[tuple(idx)] = True
    clips = bool(np.any(~ext[boundary.reshape(-1)]))

    part = Partition(families, domain_box, grid_step, shape, points, psi, bands,
                     np.zeros(len(points), dtype=np.int64), {}, (), tuple(thin), clips)
    return _assemble(part, cells)


# --------------------------------------------------------------------------
# point location
# --------------------------------------------------------------------------

def region_bands(partition: Partition, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    psi = np.stack([eval_psi(f.lyap, X) for f in partition.families], axis=1)
    return np.stack([f.bands(psi[:, i]) for i, f in enumerate(partition.families)], axis=1)


def locate_many(partition: Partition, X, outside: str = "error") -> np.ndarray:
    """Location index for each row of ``X``.

    The band tuple comes from the form values; the component from the
    nearest grid point of the same extended cell (searching up to two grid
    steps away).  Returns -1 where no such grid point exists.  Points
    outside the domain box raise unless ``outside="exterior"``, in which
    case they map to the exterior if their bands say so and -2 otherwise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = partition.dim
    if X.shape[1] != n:
        raise ValueError(f"points have dimension {X.shape[1]}, partition has {n}")
    lo = np.array([b[0] for b in partition.domain_box])
    hi = np.array([b[1] for b in partition.domain_box])
    tol = 1e-9 * partition.grid_step
    inside = np.all((X >= lo - tol) & (X <= hi + tol), axis=1)
    if outside == "error" and not np.all(inside):
        bad = X[~inside][0]
        raise ValueError(f"point {bad} lies outside the domain box")

    bands = region_bands(partition, X)
    tops = np.array([f.n_slices + 1 for f in partition.families])
    ext = np.any(bands == tops, axis=1)
    core = np.all(bands == 0, axis=1)
    out = np.full(len(X), -1, dtype=np.int64)
    out[core] = CORE_INDEX
    out[ext] = EXTERIOR_INDEX
    out[~inside & ~ext] = -2

    todo = np.flatnonzero(inside & ~ext & ~core)
    if todo.size == 0:
        return out
    shape = np.array(partition.shape)
    h = partition.grid_step
    rel = (X[todo] - lo) / h
    base = np.clip(np.rint(rel).astype(np.int64), 0, shape - 1)
    want = bands[todo]
    best = np.full(len(todo), np.inf)
    res = np.full(len(todo), -1, dtype=np.int64)
    for radius in (0, 1, 2):
        pending = np.isinf(best)
        if not pending.any():
            break
        offs = [np.zeros(n, dtype=np.int64)] if radius == 0 else [
            o for o in np.array(np.meshgrid(*[np.arange(-radius, radius + 1)] * n,
                                            indexing="ij")).reshape(n, -1).T
            if np.abs(o).max() == radius]
        for o in offs:
            idx = base[pending] + o
            valid = np.all((idx >= 0) & (idx < shape), axis=1)
            flat = np.zeros(len(idx), dtype=np.int64)
            flat[valid] = np.ravel_multi_index(idx[valid].T, partition.shape)
            same = valid & np.all(partition.bands[flat] == want[pending], axis=1)
            d = np.linalg.norm(rel[pending] - idx, axis=1)
            pidx = np.flatnonzero(pending)
            better = same & (d < best[pidx])
            best[pidx[better]] = d[better]
            res[pidx[better]] = partition.location[flat[better]]
    out[todo] = res
    return out


def locate(partition: Partition, x) -> str:
    """Location id (cell, core or exterior) of a single point."""
    idx = int(locate_many(partition, np.asarray(x, dtype=float).reshape(1, -1))[0])
    if idx < 0:
        raise LookupError(f"no grid point of the extended cell of {x} within two grid steps")
    return partition.location_ids[idx]


# --------------------------------------------------------------------------
# partition predicates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DeterminismResult:
    passed: bool
    witness_cell: str | None = None
    witness_family: int | None = None
    components: int = 0

    def __bool__(self):
        return self.passed


def _count_components(flat_idx: np.ndarray, shape, full: bool = True) -> int:
    if flat_idx.size == 0:
        return 0
    multi = np.array(np.unravel_index(flat_idx, shape)).T
    lo = multi.min(axis=0)
    local_shape = tuple(int(v) for v in multi.max(axis=0) - lo + 1)
    codes = np.full(int(np.prod(local_shape)), -1, dtype=np.int64)
    codes[np.ravel_multi_index((multi - lo).T, local_shape)] = 0
    labels = _kernels.label_components(codes, local_shape, full=full)
    return int(labels.max()) + 1


def exit_collar(partition: Partition, cell: Cell, family_pos: int) -> np.ndarray | None:
    """Grid points of ``cell`` within one grid step of its exit level set
    for the family at position ``family_pos``; None if the family has no
    exit from this cell."""
    f = partition.families[family_pos]
    g = cell.extended_index[family_pos]
    if not 1 <= g <= f.n_slices:
        return None
    a = f.exit_level(g)
    pts = partition.points[cell.grid_mask]
    grad = np.linalg.norm(f.lyap.gradient(pts), axis=1)
    dist = np.abs(partition.psi[cell.grid_mask, family_pos] - a) / np.where(grad > 0, grad, np.inf)
    return cell.grid_mask[dist <= partition.grid_step]


def check_determinism(partition: Partition) -> DeterminismResult:
    """Every cell meets each exit level set in one connected piece."""
    for g, cells in partition.cells.items():
        for cell in cells:
            for i in range(partition.k):
                collar = exit_collar(partition, cell, i)
                if collar is None:
                    continue
                nc = _count_components(collar, partition.shape)
                if nc > 1:
                    return DeterminismResult(False, cell.id, partition.families[i].index, nc)
    return DeterminismResult(True)


def check_bisimilarity_condition(partition: Partition) -> bool:
    """Within each extended cell, either every cell touches a family's exit
    level set or none does."""
    for g, cells in partition.cells.items():
        for i in range(partition.k):
            touch = set()
            for cell in cells:
                collar = exit_collar(partition, cell, i)
                if collar is None:
                    continue
                touch.add(collar.size > 0)
            if len(touch) > 1:
                return False
    return True


def check_refinable_precondition(partition: Partition) -> bool:
    """A refinable abstraction needs one slice family per state dimension."""
    return partition.k == partition.dim


def initial_locations(partition: Partition, box) -> list[str]:
    """Regions covering the grid points of ``box``; the box must be a union of regions."""
    box = np.asarray(box, dtype=float)
    if box.shape != (partition.dim, 2):
        raise PartitionError(f"initial box must have shape ({partition.dim}, 2)")
    tol = 1e-9
    inside = np.all((partition.points >= box[:, 0] - tol) & (partition.points <= box[:, 1] + tol), axis=1)
    if not inside.any():
        raise PartitionError("initial box contains no grid point")
    locs = np.unique(partition.location[inside])
    covered = np.isin(partition.location, locs)
    if np.any(covered & ~inside):
        spill = sorted({partition.location_ids[l] for l in partition.location[covered & ~inside]})
        raise PartitionError(f"initial box is not a union of cells; it cuts {', '.join(spill)}")
    return [partition.location_ids[l] for l in locs]


def adjacency(partition: Partition) -> set:
    """Ordered pairs of location indices whose grid masks touch (2n-neighbors)."""
    loc = partition.location.reshape(partition.shape)
    pairs = set()
    for d in range(partition.dim):
        a = np.moveaxis(loc, d, 0)
        x, y = a[:-1].reshape(-1), a[1:].reshape(-1)
        diff = x != y
        if diff.any():
            uv = np.unique(np.stack([x[diff], y[diff]], axis=1), axis=0)
            for u, v in uv:
                pairs.add((int(u), int(v)))
                pairs.add((int(v), int(u)))
    return pairs


def dump_partition(partition: Partition) -> str:
    """Run-length encoded location label per grid point (C order)."""
    lines = [
        f"# lyapta partition {partition.fingerprint}",
        f"shape {' '.join(map(str, partition.shape))}",
        f"grid_step {partition.grid_step!r}",
        "box " + " ".join(f"{lo!r} {hi!r}" for lo, hi in partition.domain_box),
        "locations " + " ".join(partition.location_ids),
    ]
    loc = partition.location
    change = np.flatnonzero(np.diff(loc)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(loc)]])
    lines.append("rle " + " ".join(f"{int(loc[s])}x{int(e - s)}" for s, e in zip(starts, ends)))
    return "\n".join(lines) + "\n"

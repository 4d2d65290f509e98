"""Numerical ground truth: flows, Monte-Carlo soundness, exact-time completeness,
and refinement experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from . import _kernels
from ._kernels import DIVERGENCE_NORM, FlowDivergence
from .automaton import TimedAutomaton, build_cell_automaton
from .bounds import exact_transit_time, slice_bounds
from .partition import (EXTERIOR, Partition, PartitionError, build_partition, check_refinable_precondition,
                        initial_locations, locate_many, refine)
from .reach import concretized_volume, reach
from .system import QuadraticLyapunov, VectorField, completeness_ratio, eval_psi

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# flows
# --------------------------------------------------------------------------

def _guard(X, t):
    if not np.all(np.isfinite(X)) or np.abs(X).max(initial=0.0) > DIVERGENCE_NORM:
        raise FlowDivergence(f"state norm exceeded {DIVERGENCE_NORM:g} at t={t:g}")
    return X


def flow_many(field: VectorField, X0, times, dt: float = 1e-3, method: str | None = None) -> np.ndarray:
    """States at each of ``times`` for every row of ``X0``: shape ``(T, B, n)``.

    Linear fields use the matrix exponential unless ``method="rk4"``;
    polynomial fields always use fixed-step RK4.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("flow times must be nonnegative")
    if method is None:
        method = "expm" if field.kind == "linear" else "rk4"
    if method == "expm":
        if field.kind != "linear":
            raise ValueError("matrix exponential needs a linear field")
        out = np.empty((len(times),) + X0.shape)
        for k, t in enumerate(times):
            out[k] = _guard(X0 @ scipy.linalg.expm(field.A * t).T, t)
        return out
    order = np.argsort(times, kind="stable")
    res = _kernels.rk4_integrate(X0, times[order], dt, *field.as_terms())
    out = np.empty_like(res)
    out[order] = res
    return out


def flow(field: VectorField, x0, t: float, dt: float = 1e-3, method: str | None = None) -> np.ndarray:
    """phi(t, x0); accepts a single state or a batch."""
    x0 = np.asarray(x0, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = flow_many(field, x0.reshape(-1, field.dim), [t], dt, method)[0]
    return out.reshape(x0.shape)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    regions: list
    skipped: bool = False


def simulate(field: VectorField, x0, t_end: float, dt: float, partition: Partition | None = None,
             adjacent: set | None = None) -> Trajectory:
    """Sample a trajectory on a uniform grid; optionally label regions.

    ``skipped`` is set when consecutive samples land in regions that are
    not grid neighbors (``dt`` too coarse).
    """
    n_steps = int(np.ceil(t_end / dt - 1e-12))
    times = np.minimum(np.arange(n_steps + 1) * dt, t_end)
    states = flow_many(field, np.asarray(x0, dtype=float).reshape(1, -1), times, dt)[:, 0, :]
    regions, skipped = [], False
    if partition is not None:
        idx = locate_many(partition, states, outside="exterior")
        regions = [partition.location_ids[i] if i >= 0 else None for i in idx]
        if adjacent is not None:
            for a, b in zip(idx, idx[1:]):
                if a != b and a >= 0 and b >= 0 and (a, b) not in adjacent:
                    skipped = True
    return Trajectory(times, states, regions, skipped)


def transit_times(field: VectorField, lyap: QuadraticLyapunov, X0, a_target: float, t_max: float = 50.0,
                  dt: float = 1e-3, chunk: float = 0.25, points: int = 250) -> np.ndarray:
    """First time each trajectory from the rows of ``X0`` hits ``psi = a_target``.

    Marches forward in chunks so unstable flows are never integrated far
    past their crossing; each crossing is refined with Brent's method.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    s0 = np.sign(eval_psi(lyap, X0) - a_target)
    out = np.where(s0 == 0, 0.0, np.nan)
    todo = np.flatnonzero(s0 != 0)
    X, t = X0[todo], 0.0
    while todo.size and t < t_max:
        h = min(chunk, t_max - t)
        grid = np.linspace(0.0, h, points + 1)
        try:
            states = flow_many(field, X, grid, dt)
        except FlowDivergence:
            break
        vals = np.sign(eval_psi(lyap, states.reshape(-1, X.shape[1])).reshape(states.shape[:2]) - a_target)
        crossed = vals != s0[todo][None, :]
        hit = crossed.any(axis=0)
        for b in np.flatnonzero(hit):
            k = int(np.argmax(crossed[:, b]))
            x = X[b]
            g = lambda u: eval_psi(lyap, flow(field, x, u, dt)) - a_target
            out[todo[b]] = t + scipy.optimize.brentq(g, grid[k - 1], grid[k], xtol=1e-13, rtol=1e-13)
        keep = ~hit
        todo, X, t = todo[keep], states[-1][keep], t + h
    if np.isnan(out).any():
        raise ValueError(f"level {a_target} not reached within {t_max}")
    return out


def transit_time(field: VectorField, lyap: QuadraticLyapunov, x0, a_target: float, t_max: float = 50.0,
                 dt: float = 1e-3) -> float:
    """First time the trajectory from ``x0`` hits ``psi = a_target``."""
    return float(transit_times(field, lyap, np.asarray(x0, dtype=float).reshape(1, -1), a_target, t_max, dt)[0])


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def sample_regions(partition: Partition, loc_ids: Sequence[str], N: int, rng: np.random.Generator,
                   batch: int = 4096) -> np.ndarray:
    """Uniform samples from the union of regions, by rejection from the
    bounding box of their grid masks."""
    loc_ids = list(loc_ids)
    if N == 0:
        return np.zeros((0, partition.dim))
    mask = partition.mask(loc_ids)
    if not mask.any():
        raise ValueError("sampling region is empty")
    pts = partition.points[mask]
    h = partition.grid_step
    lo = np.maximum(pts.min(axis=0) - 0.5 * h, [b[0] for b in partition.domain_box])
    hi = np.minimum(pts.max(axis=0) + 0.5 * h, [b[1] for b in partition.domain_box])
    want = {partition.location_index(l) for l in loc_ids}
    out = []
    have = 0
    for _ in range(10_000):
        X = lo + (hi - lo) * rng.random((batch, partition.dim))
        ok = np.isin(locate_many(partition, X), list(want))
        out.append(X[ok])
        have += int(ok.sum())
        if have >= N:
            break
    else:  # pragma: no cover
        raise RuntimeError("rejection sampling did not converge")
    return np.concatenate(out)[:N]


def sample_level_set(lyap: QuadraticLyapunov, a: float, M: int, rng: np.random.Generator,
                     scale: float = 1.0) -> np.ndarray:
    """Random points with psi = a (radial projection of Gaussian samples)."""
    sub = list(lyap.subspace)
    out = []
    while sum(len(o) for o in out) < M:
        X = rng.standard_normal((2 * M, lyap.dim)) * scale
        psi = eval_psi(lyap, X)
        ok = np.sign(psi) == np.sign(a)
        X, psi = X[ok], psi[ok]
        X[:, sub] *= np.sqrt(a / psi)[:, None]
        out.append(X)
    return np.concatenate(out)[:M]


# --------------------------------------------------------------------------
# soundness
# --------------------------------------------------------------------------

@dataclass
class Violation:
    sample: int
    x0: list
    time: float
    actual: str
    allowed: list


@dataclass
class SoundnessReport:
    seed: int
    samples: int
    checks: int
    violations: int
    witnesses: list = field(default_factory=list)
    gaps: int = 0
    unresolved: int = 0
    query_times: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "check": "soundness",
            "passed": self.passed,
            "seed": self.seed,
            "samples": self.samples,
            "checks": self.checks,
            "violations": self.violations,
            "modeling_gaps": self.gaps,
            "unresolved": self.unresolved,
            "query_times": [round(t, 12) for t in self.query_times],
            "witnesses": [w.__dict__ for w in self.witnesses],
        }


def query_times(horizon: float, count: int, breakpoints=(), eps: float = 1e-4) -> np.ndarray:
    """Uniform times on ``[0, horizon]`` plus ``b +- eps`` for each breakpoint."""
    t = list(np.linspace(0.0, horizon, count)) if count > 1 else ([0.0] if count == 1 else [])
    for b in breakpoints:
        for v in (float(b) - eps, float(b) + eps):
            if 0.0 <= v <= horizon:
                t.append(v)
    return np.unique(np.round(t, 12))


def mc_soundness_check(field: VectorField, partition: Partition, ta: TimedAutomaton, X0_cells: Sequence[str],
                       horizon: float, N: int = 1000, dt: float = 1e-3, times_per_traj: int = 20,
                       seed: int = 0, eps: float = 1e-4, initial_mode: str = "anywhere",
                       max_witnesses: int = 20) -> SoundnessReport:
    """Check that simulated states stay inside the automaton's reach set.

    Draws ``N`` uniform starts in the initial cells and, at every query
    time ``t``, asserts that the region of ``phi(t, x0)`` is among
    ``Reach_[t,t]``.
    """
    X0_cells = sorted(X0_cells)
    if ta.initial and set(ta.initial) != set(X0_cells):
        raise ValueError(f"X0 cells {X0_cells} differ from the automaton's L0 {sorted(ta.initial)}")
    if N == 0:
        return SoundnessReport(seed, 0, 0, 0)
    rng = np.random.default_rng(seed)
    X0 = sample_regions(partition, X0_cells, N, rng)
    res = reach(ta, X0_cells, 0, Fraction(horizon).limit_denominator(10 ** 12), initial_mode)
    times = query_times(horizon, times_per_traj, res.ref_breakpoints(), eps)
    states = flow_many(field, X0, times, dt)
    has_ext = EXTERIOR in ta.locations
    checks = violations = gaps = unresolved = 0
    witnesses = []
    for k, t in enumerate(times):
        allowed_ids = res.at(Fraction(float(t)))
        allowed = np.zeros(len(partition.location_ids) + 2, dtype=bool)
        for l in allowed_ids:
            allowed[partition.location_index(l)] = True
        idx = locate_many(partition, states[k], outside="exterior")
        gap = (idx == -2) | ((idx == partition.location_index(EXTERIOR)) & ~has_ext)
        unres = idx == -1
        ok = ~gap & ~unres
        bad = ok & ~allowed[np.where(idx >= 0, idx, len(allowed) - 1)]
        checks += int(ok.sum())
        gaps += int(gap.sum())
        unresolved += int(unres.sum())
        violations += int(bad.sum())
        for s in np.flatnonzero(bad):
            witnesses.append(Violation(int(s), X0[s].tolist(), float(t),
                                       partition.location_ids[idx[s]], list(allowed_ids)))
    witnesses.sort(key=lambda w: (w.sample, w.time))
    if unresolved:
        log.warning("%d states could not be assigned a cell", unresolved)
    return SoundnessReport(seed, len(X0), checks, violations, witnesses[:max_witnesses], gaps,
                           unresolved, [float(t) for t in times])


# --------------------------------------------------------------------------
# completeness
# --------------------------------------------------------------------------

@dataclass
class CompletenessReport:
    ran: bool
    passed: bool
    alpha: float | None = None
    max_rel_deviation: float = float("nan")
    samples: int = 0
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__, check="completeness")


def completeness_check(field: VectorField, lyap: QuadraticLyapunov, levels: Sequence[float], M: int = 50,
                       seed: int = 0, rtol: float = 1e-6) -> CompletenessReport:
    """Flow samples of every entering level set for the exact transit time and
    check they land on the next level."""
    if field.kind != "linear":
        return CompletenessReport(False, False, reason="not complete-form (nonlinear field)")
    alpha = completeness_ratio(lyap, field)
    if alpha is None:
        return CompletenessReport(False, False, reason="not complete-form")
    rng = np.random.default_rng(seed)
    levels = sorted(float(a) for a in levels)
    worst = 0.0
    total = 0
    for lo, hi in zip(levels, levels[1:]):
        a_from, a_to = (hi, lo) if alpha < 0 else (lo, hi)
        t = exact_transit_time(alpha, a_from, a_to)
        X = sample_level_set(lyap, a_from, M, rng)
        Y = flow(field, X, t)
        dev = np.abs(eval_psi(lyap, Y) - a_to) / a_to
        worst = max(worst, float(dev.max()))
        total += len(X)
    return CompletenessReport(True, worst < rtol, alpha, worst, total)


# --------------------------------------------------------------------------
# refinement
# --------------------------------------------------------------------------

@dataclass
class RefinementResult:
    depths: list
    level_counts: list
    volumes: list
    mc_floor: float

    @property
    def non_increasing(self) -> bool:
        return all(b <= a + 1e-12 for a, b in zip(self.volumes, self.volumes[1:]))

    @property
    def above_floor(self) -> bool:
        return all(v >= self.mc_floor - 1e-12 for v in self.volumes)

    def table(self) -> str:
        rows = ["depth  levels  volume"]
        rows += [f"{d:5d}  {c:6d}  {v:.6f}" for d, c, v in zip(self.depths, self.level_counts, self.volumes)]
        rows.append(f"mc-floor        {self.mc_floor:.6f}")
        return "\n".join(rows)


def true_reach_volume(field: VectorField, partition: Partition, X0_cells, horizon: float, N: int = 1000,
                      n_times: int = 400, dt: float = 1e-3, seed: int = 0) -> float:
    """Monte-Carlo lower estimate of the reach-set volume: grid points hit by
    sampled trajectories on ``[0, horizon]`` (including the start set)."""
    rng = np.random.default_rng(seed)
    X0 = sample_regions(partition, X0_cells, N, rng)
    times = np.linspace(0.0, horizon, n_times) if horizon > 0 else np.array([0.0])
    states = flow_many(field, X0, times, dt).reshape(-1, partition.dim)
    lo = np.array([b[0] for b in partition.domain_box])
    idx = np.rint((states - lo) / partition.grid_step).astype(np.int64)
    shape = np.array(partition.shape)
    ok = np.all((idx >= 0) & (idx < shape), axis=1)
    hit = np.zeros(len(partition.points), dtype=bool)
    hit[np.ravel_multi_index(idx[ok].T, partition.shape)] = True
    hit |= partition.mask(X0_cells)
    return float(hit.sum()) * partition.cell_volume


def refinement_experiment(field: VectorField, families, domain_box, X0_box, horizon: float,
                          depths: Sequence[int] = (0, 1, 2), grid_step: float | None = None,
                          mc_samples: int = 1000, seed: int = 0, dt: float = 1e-3) -> RefinementResult:
    """Concretized reach volume over ``[0, horizon]`` at each refinement depth."""
    families = list(families)
    base = build_partition(families, domain_box, grid_step)
    if not check_refinable_precondition(base):
        raise PartitionError(f"refinable-pre = no: {base.k} slice families in dimension {base.dim}")
    vols, counts = [], []
    for depth in depths:
        fams = families
        for _ in range(depth):
            fams = [refine(f) for f in fams]
        part = build_partition(fams, domain_box, base.grid_step)
        bounds = {f.index: slice_bounds(f, field, part) for f in fams}
        L0 = initial_locations(part, X0_box)
        ta = build_cell_automaton(part, bounds, L0)
        res = reach(ta, L0, 0, Fraction(horizon).limit_denominator(10 ** 12), "anywhere")
        vols.append(concretized_volume(res, part))
        counts.append(len(fams[0].levels))
    floor = true_reach_volume(field, base, initial_locations(base, X0_box), horizon, mc_samples, dt=dt, seed=seed)
    return RefinementResult(list(depths), counts, vols, floor)

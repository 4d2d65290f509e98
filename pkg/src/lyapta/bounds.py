"""Ranges of |psi'| over slices and the transit-time bounds they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .partition import Partition, SliceFamily
from .system import QuadraticLyapunov, VectorField, completeness_ratio, eval_psi_dot, lyapunov_map


class BoundsError(ValueError):
    pass


NOT_SIGN_DEFINITE = "ψ̇ not sign-definite on slice"
VANISHES = "ψ̇ vanishes on slice"


@dataclass(frozen=True)
class SliceBounds:
    family: int
    slice: int
    psidot_abs_min: float
    psidot_abs_max: float
    t_lower: float
    t_upper: float
    method: str
    exact: bool = False

    def __post_init__(self):
        if self.psidot_abs_min > self.psidot_abs_max:
            raise BoundsError("psidot_abs_min > psidot_abs_max")
        if self.t_lower > self.t_upper:
            raise BoundsError("t_lower > t_upper")
        if self.exact and self.t_lower != self.t_upper:
            raise BoundsError("exact bounds need t_lower == t_upper")


def pencil_eigenvalues(P, A, subspace=None) -> np.ndarray:
    """Eigenvalues mu of ``det(Q - mu P) = 0`` with ``Q = A^T P + P A``,
    restricted to the form's subspace."""
    P = np.asarray(P, dtype=float)
    Q = lyapunov_map(A, P)
    n = P.shape[0]
    sub = list(range(n)) if subspace is None else list(subspace)
    outside = np.ones((n, n), dtype=bool)
    outside[np.ix_(sub, sub)] = False
    if np.any(np.abs(Q[outside]) > 1e-12 * max(1.0, np.abs(Q).max())):
        raise BoundsError("psi' depends on coordinates outside the form's subspace; use sampled bounds")
    Pb, Qb = P[np.ix_(sub, sub)], Q[np.ix_(sub, sub)]
    if np.any(np.linalg.eigvalsh(Pb) <= 0):
        raise BoundsError("pencil bounds need P positive definite on its subspace")
    return scipy.linalg.eigh(Qb, Pb, eigvals_only=True)


def psidot_range_pencil(P, A, a_lo: float, a_hi: float, subspace=None) -> tuple[float, float]:
    """Exact min and max of |psi'| over ``{a_lo <= x^T P x <= a_hi}``.

    On the level set ``x^T P x = a`` psi' ranges over ``[a mu_min, a mu_max]``.
    """
    if not 0 < a_lo <= a_hi:
        raise BoundsError(f"need 0 < a_lo <= a_hi, got ({a_lo}, {a_hi})")
    mu = pencil_eigenvalues(P, A, subspace)
    if not (np.all(mu < 0) or np.all(mu > 0)):
        raise BoundsError(NOT_SIGN_DEFINITE)
    amu = np.abs(mu)
    return a_lo * float(amu.min()), a_hi * float(amu.max())


def psidot_range_points(lyap: QuadraticLyapunov, field: VectorField, points, padding: float = 0.1):
    """|psi'| range over sample points, min deflated and max inflated by ``padding``."""
    pts = np.atleast_2d(points)
    if len(pts) == 0:
        raise BoundsError("no sample points")
    pd = eval_psi_dot(lyap, field, pts)
    if np.any(pd == 0):
        raise BoundsError(VANISHES)
    if not (np.all(pd < 0) or np.all(pd > 0)):
        raise BoundsError(NOT_SIGN_DEFINITE)
    a = np.abs(pd)
    return float(a.min()) * (1 - padding), float(a.max()) * (1 + padding)


def psidot_range_sampled(lyap: QuadraticLyapunov, field: VectorField, partition: Partition,
                         family_pos: int, g: int, padding: float = 0.1, min_points: int = 100):
    """Padded |psi'| range over the grid points of slice ``g`` (0 = core band)."""
    f = partition.families[family_pos]
    mask = partition.bands[:, family_pos] == g
    if g == f.n_slices:
        mask |= partition.psi[:, family_pos] == f.levels[-1]
    if mask.sum() < min_points:
        raise BoundsError(f"slice {g} of family {f.index} has {int(mask.sum())} grid points, "
                          f"need {min_points} for sampled bounds")
    return psidot_range_points(lyap, field, partition.points[mask], padding)


def transit_time_bounds(a_prev: float, a_g: float, psidot_range) -> tuple[float, float]:
    """Shortest and longest time to cross a slice ``[a_prev, a_g]``."""
    lo, hi = psidot_range
    width = a_g - a_prev
    if width < 0:
        raise BoundsError("levels out of order")
    if width == 0:
        return 0.0, 0.0
    if lo <= 0:
        raise BoundsError(VANISHES)
    return width / hi, width / lo


def exact_transit_time(alpha: float, a_from: float, a_to: float) -> float:
    """Travel time between levels when psi = alpha psi' (psi grows like e^{t/alpha})."""
    if alpha == 0 or a_from <= 0 or a_to <= 0:
        raise BoundsError("need alpha != 0 and positive levels")
    if (alpha < 0) != (a_to < a_from) or a_to == a_from:
        raise BoundsError(f"flow with alpha={alpha} cannot go from level {a_from} to {a_to}")
    return abs(alpha * math.log(a_from / a_to))


def slice_bounds(family: SliceFamily, field: VectorField, partition: Partition | None = None,
                 mode: str = "sound", padding: float = 0.1) -> list[SliceBounds]:
    """Bounds for every slice of a family.

    ``mode="sound"`` uses pencil ranges for linear fields and padded grid
    ranges otherwise.  ``mode="complete"`` needs psi = alpha psi' and gives
    exact transit times.
    """
    lyap = family.lyap
    out = []
    if mode == "complete":
        if field.kind != "linear":
            raise BoundsError("complete mode needs a linear field")
        alpha = completeness_ratio(lyap, field)
        if alpha is None:
            raise BoundsError(f"family {family.index} is not complete-form (psi != alpha psi')")
        for g in range(1, family.n_slices + 1):
            lo, hi = family.slice_range(g)
            a_from, a_to = (hi, lo) if family.orientation == "decreasing" else (lo, hi)
            t = exact_transit_time(alpha, a_from, a_to)
            r = abs(1 / alpha)
            out.append(SliceBounds(family.index, g, lo * r, hi * r, t, t, "exact", True))
        return out
    if mode != "sound":
        raise ValueError(f"unknown mode {mode!r}")

    use_pencil = field.kind == "linear"
    if use_pencil:
        try:
            pencil_eigenvalues(lyap.P, field.A, lyap.subspace)
        except BoundsError as exc:
            if NOT_SIGN_DEFINITE in str(exc):
                raise
            use_pencil = False
    for g in range(1, family.n_slices + 1):
        lo, hi = family.slice_range(g)
        if use_pencil:
            rng = psidot_range_pencil(lyap.P, field.A, lo, hi, lyap.subspace)
            method = "pencil"
        else:
            if partition is None:
                raise BoundsError("sampled bounds need a partition grid")
            pos = [f.index for f in partition.families].index(family.index)
            rng = psidot_range_sampled(lyap, field, partition, pos, g, padding)
            method = "sampled"
        tl, tu = transit_time_bounds(lo, hi, rng)
        out.append(SliceBounds(family.index, g, rng[0], rng[1], tl, tu, method))
    return out


def infer_orientation(lyap: QuadraticLyapunov, field: VectorField, levels=None, partition=None,
                      box=None, grid_step=None) -> str:
    """Sign of psi' on the analysed region: 'decreasing' or 'increasing'."""
    if field.kind == "linear":
        try:
            mu = pencil_eigenvalues(lyap.P, field.A, lyap.subspace)
        except BoundsError as exc:
            if "subspace" not in str(exc) and "positive definite" not in str(exc):
                raise
        else:
            if np.all(mu < 0):
                return "decreasing"
            if np.all(mu > 0):
                return "increasing"
            raise BoundsError(NOT_SIGN_DEFINITE)
    from .system import verify_lyapunov

    if box is None:
        raise BoundsError("cannot infer orientation without a sampling box")
    rep = verify_lyapunov(lyap, field, box, grid_step or 0.01)
    if not rep.passed:
        raise BoundsError(f"{NOT_SIGN_DEFINITE} (witness {rep.witness})")
    return rep.orientation

"""Vector fields, quadratic Lyapunov functions and the checks on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import _kernels


class DimensionError(ValueError):
    pass


class LyapunovError(ValueError):
    """Raised when a matrix equation has no (valid) solution."""


@dataclass(frozen=True, eq=False)
class VectorField:
    """Right-hand side ``f`` of an autonomous ODE ``x' = f(x)``.

    Build with :meth:`linear` or :meth:`polynomial`.  Polynomial fields are
    stored as flat term arrays: term ``t`` contributes
    ``coef[t] * prod(x ** exps[t])`` to coordinate ``coord[t]``.
    """

    kind: str
    dim: int
    A: np.ndarray | None = None
    coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exps: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))
    coord: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def linear(cls, A) -> "VectorField":
        A = np.array(A, dtype=float, ndmin=2)
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        A.setflags(write=False)
        coef, exps, coord = _linear_terms(A)
        return cls("linear", A.shape[0], A, coef, exps, coord)

    @classmethod
    def polynomial(cls, terms: Sequence[Sequence[tuple]]) -> "VectorField":
        """``terms[j]`` lists ``(coefficient, exponent_vector)`` pairs of f^j."""
        n = len(terms)
        if n == 0:
            raise DimensionError("polynomial field needs at least one coordinate")
        coef, exps, coord = [], [], []
        for j, comp in enumerate(terms):
            for c, e in comp:
                e = [int(v) for v in e]
                if len(e) != n:
                    raise DimensionError(f"exponent vector {e} in f^{j} has length {len(e)}, expected {n}")
                if min(e, default=0) < 0:
                    raise ValueError("negative exponents are not polynomial")
                coef.append(float(c))
                exps.append(e)
                coord.append(j)
        coef = np.asarray(coef, dtype=float)
        exps = np.asarray(exps, dtype=np.int64).reshape(len(coef), n)
        coord = np.asarray(coord, dtype=np.int64)
        for a in (coef, exps, coord):
            a.setflags(write=False)
        return cls("polynomial", n, None, coef, exps, coord)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.dim:
            raise DimensionError(f"state has dimension {X.shape[1]}, field has {self.dim}")
        if self.kind == "linear":
            out = X @ self.A.T
        else:
            out = _kernels.poly_eval(X, self.coef, self.exps, self.coord)
        return out[0] if single else out

    def as_terms(self):
        return self.coef, self.exps, self.coord

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"A": self.A.tolist()}
        terms = [[] for _ in range(self.dim)]
        for c, e, j in zip(self.coef, self.exps, self.coord):
            terms[j].append([float(c), [int(v) for v in e]])
        return {"polynomial": terms}


def _linear_terms(A):
    n = A.shape[0]
    coef, exps, coord = [], [], []
    for j in range(n):
        for k in range(n):
            if A[j, k] != 0.0:
                e = np.zeros(n, dtype=np.int64)
                e[k] = 1
                coef.append(A[j, k])
                exps.append(e)
                coord.append(j)
    return (np.asarray(coef, dtype=float),
            np.asarray(exps, dtype=np.int64).reshape(len(coef), n),
            np.asarray(coord, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class QuadraticLyapunov:
    """A quadratic form ``psi(x) = x^T P x`` labelling slice family ``index``.

    ``subspace`` lists the coordinates the form lives on.  ``P`` must vanish
    outside that block and be nonsingular on it; by default the form covers
    all coordinates and ``P`` itself must be nonsingular.
    """

    P: np.ndarray
    index: int = 0
    subspace: tuple = ()

    def __init__(self, P, index: int = 0, subspace: Sequence[int] | None = None):
        P = np.array(P, dtype=float, ndmin=2)
        n = P.shape[0]
        if P.shape != (n, n):
            raise DimensionError(f"P must be square, got {P.shape}")
        if not np.allclose(P, P.T, rtol=0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise ValueError("P must be symmetric")
        # keep the upper triangle as the source of truth
        P = np.triu(P) + np.triu(P, 1).T
        sub = tuple(range(n)) if subspace is None else tuple(sorted(int(i) for i in subspace))
        if not sub or len(set(sub)) != len(sub) or sub[0] < 0 or sub[-1] >= n:
            raise ValueError(f"invalid subspace {subspace} for dimension {n}")
        outside = np.ones((n, n), dtype=bool)
        outside[np.ix_(sub, sub)] = False
        if np.any(P[outside] != 0.0):
            raise ValueError("P has entries outside its declared subspace")
        block = P[np.ix_(sub, sub)]
        if np.linalg.matrix_rank(block) < len(sub):
            raise LyapunovError("P is singular on its subspace")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "index", int(index))
        object.__setattr__(self, "subspace", sub)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def is_full(self) -> bool:
        return len(self.subspace) == self.dim

    @property
    def block(self) -> np.ndarray:
        return self.P[np.ix_(self.subspace, self.subspace)]

    def __call__(self, x) -> np.ndarray | float:
        return eval_psi(self, x)

    def gradient(self, X) -> np.ndarray:
        return 2.0 * np.atleast_2d(X) @ self.P

    def with_index(self, index: int) -> "QuadraticLyapunov":
        return QuadraticLyapunov(self.P, index, self.subspace)


@dataclass(frozen=True)
class LyapunovReport:
    passed: bool
    orientation: str | None
    sign_violations: int
    alpha_bound: float
    samples_checked: int
    max_psidot_at_noncritical: float
    witness: np.ndarray | None = None


def _check_dim(n: int, X: np.ndarray):
    if X.shape[-1] != n:
        raise DimensionError(f"state has dimension {X.shape[-1]}, expected {n}")


def eval_psi(lyap: QuadraticLyapunov, x):
    """``x^T P x``; accepts one point or an ``(m, n)`` batch."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1)
    _check_dim(lyap.dim, X)
    if X.ndim == 1:
        return float(X @ lyap.P @ X)
    return np.einsum("pi,ij,pj->p", X, lyap.P, X)


def lyapunov_map(A, P) -> np.ndarray:
    """``A^T P + P A``: the quadratic form of psi' along ``x' = A x``."""
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    return A.T @ P + P @ A


def eval_psi_dot(lyap: QuadraticLyapunov, field: VectorField, x):
    """Derivative of psi along the field, ``grad psi(x) . f(x)``."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1)
    _check_dim(lyap.dim, X)
    if field.dim != lyap.dim:
        raise DimensionError(f"field dimension {field.dim} != form dimension {lyap.dim}")
    if field.kind == "linear":
        Q = lyapunov_map(field.A, lyap.P)
        if X.ndim == 1:
            return float(X @ Q @ X)
        return np.einsum("pi,ij,pj->p", X, Q, X)
    Xb = np.atleast_2d(X)
    val = np.einsum("pi,pi->p", lyap.gradient(Xb), field(Xb))
    return float(val[0]) if X.ndim == 1 else val


def is_hurwitz(A) -> bool:
    return bool(np.all(np.linalg.eigvals(np.asarray(A, dtype=float)).real < 0))


def solve_lyapunov_equation(A, Q, index: int = 0) -> QuadraticLyapunov:
    """Solve ``A^T P + P A = Q`` for symmetric ``P``.

    ``A`` must be Hurwitz.  With ``Q`` negative definite the solution is
    positive definite.
    """
    A = np.array(A, dtype=float, ndmin=2)
    Q = np.array(Q, dtype=float, ndmin=2)
    if A.shape[0] != A.shape[1] or Q.shape != A.shape:
        raise DimensionError(f"A {A.shape} and Q {Q.shape} must be square of equal size")
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    if not is_hurwitz(A):
        raise LyapunovError("A is not Hurwitz; the Lyapunov equation is not uniquely solvable")
    P = scipy.linalg.solve_continuous_lyapunov(A.T, Q)
    P = 0.5 * (P + P.T)
    return QuadraticLyapunov(P, index)


def orientation_of(values) -> str | None:
    """'decreasing' if all values < 0, 'increasing' if all > 0, else None."""
    values = np.asarray(values)
    if values.size and np.all(values < 0):
        return "decreasing"
    if values.size and np.all(values > 0):
        return "increasing"
    return None


def grid_points(box, step: float) -> np.ndarray:
    axes = [np.round(lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1), 12)
            for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def verify_lyapunov(lyap: QuadraticLyapunov, field: VectorField, domain_box, grid_step: float,
                    critical_tol: float | None = None) -> LyapunovReport:
    """Sample psi' on a grid and check it is sign-definite off the critical set.

    The critical set is where ``P x`` vanishes (only the origin for a
    nonsingular form).  The expected sign is taken from the samples nearest
    the critical set; any sample of the opposite sign (or zero) is a
    violation.  The reported witness is the violating sample at median
    distance from the critical set.
    """
    X = grid_points(domain_box, grid_step)
    _check_dim(lyap.dim, X)
    tol = 0.5 * grid_step if critical_tol is None else critical_tol
    # distance to the critical set {P x = 0}: norm of the subspace part
    dist = np.linalg.norm(X[:, list(lyap.subspace)], axis=1)
    noncrit = dist > tol
    Xs, ds = X[noncrit], dist[noncrit]
    pd = eval_psi_dot(lyap, field, Xs) if len(Xs) else np.zeros(0)
    if len(Xs) == 0:
        return LyapunovReport(False, None, 0, 0.0, 0, 0.0)
    near = ds <= np.quantile(ds, 0.1)
    orient = orientation_of(pd[near])
    if orient is None:
        s = np.sign(pd[near].sum())
        orient = "decreasing" if s < 0 else "increasing"
    bad = pd >= 0 if orient == "decreasing" else pd <= 0
    n_bad = int(bad.sum())
    alpha = float(np.min(np.abs(pd[near]) / ds[near]))
    witness = None
    if n_bad:
        order = np.argsort(ds[bad], kind="stable")
        witness = Xs[bad][order[len(order) // 2]]
    passed = n_bad == 0 and alpha > 0
    return LyapunovReport(passed, orient if passed else None, n_bad, alpha, int(len(Xs)),
                          float(np.max(np.abs(pd))), witness)


def check_transversal_pair(lyap_i: QuadraticLyapunov, lyap_j: QuadraticLyapunov, level_a: float,
                           samples: int = 720, angle_tol: float = 1e-6, seed: int = 0) -> bool:
    """Do the level sets ``psi_i = a`` and ``psi_j = a`` cross transversally?

    Intersection points are found along great circles of the unit sphere:
    scaling a direction ``u`` onto ``psi_i = a`` lands on ``psi_j = a`` exactly
    where ``u^T (P_j - P_i) u = 0``.  At each intersection the gradients must
    make an angle above ``angle_tol``.  An empty intersection is vacuously
    transversal.
    """
    if level_a == 0:
        raise ValueError("level must be nonzero")
    if lyap_i.dim != lyap_j.dim:
        raise DimensionError("forms of different dimension")
    n = lyap_i.dim
    Pi, Pj = lyap_i.P, lyap_j.P
    D = Pj - Pi
    if n == 1:
        planes = [np.array([[1.0]])]
    else:
        rng = np.random.default_rng(seed)
        planes = [np.eye(n)[:, [a, b]] for a in range(n) for b in range(a + 1, n)]
        extra = max(0, 3 * (n - 2))
        for _ in range(extra):
            Qm, _ = np.linalg.qr(rng.standard_normal((n, 2)))
            planes.append(Qm)

    def angle_ok(x):
        gi, gj = Pi @ x, Pj @ x
        ni, nj = np.linalg.norm(gi), np.linalg.norm(gj)
        if ni == 0 or nj == 0:
            return False
        c = min(1.0, abs(gi @ gj) / (ni * nj))
        return np.arccos(c) > angle_tol

    def on_level(u):
        q = u @ Pi @ u
        if q == 0 or np.sign(q) != np.sign(level_a):
            return None
        return u * np.sqrt(level_a / q)

    scale = max(np.abs(D).max(), np.abs(Pi).max(), np.abs(Pj).max())
    for B in planes:
        if B.shape[1] == 1:
            dirs = np.array([B[:, 0], -B[:, 0]])
        else:
            th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
            dirs = np.cos(th)[:, None] * B[:, 0] + np.sin(th)[:, None] * B[:, 1]
        h = np.einsum("pi,ij,pj->p", dirs, D, dirs)
        zero = np.abs(h) <= 1e-12 * scale
        for k in range(len(dirs)):
            if zero[k]:
                x = on_level(dirs[k])
                if x is not None and not angle_ok(x):
                    return False
                continue
            k2 = (k + 1) % len(dirs)
            if zero[k2] or np.sign(h[k]) == np.sign(h[k2]) or B.shape[1] == 1:
                continue
            # bisect the sign change of h along the arc
            t0 = 2 * np.pi * k / samples
            t1 = t0 + 2 * np.pi / samples
            f = lambda t: (lambda u: u @ D @ u)(np.cos(t) * B[:, 0] + np.sin(t) * B[:, 1])
            f0 = f(t0)
            for _ in range(60):
                tm = 0.5 * (t0 + t1)
                fm = f(tm)
                if np.sign(fm) == np.sign(f0):
                    t0, f0 = tm, fm
                else:
                    t1 = tm
            u = np.cos(0.5 * (t0 + t1)) * B[:, 0] + np.sin(0.5 * (t0 + t1)) * B[:, 1]
            x = on_level(u)
            if x is not None and not angle_ok(x):
                return False
    return True


def completeness_ratio(lyap: QuadraticLyapunov, field: VectorField, rtol: float = 1e-9) -> float | None:
    """The ``alpha`` with ``psi = alpha * psi'`` everywhere, if one exists."""
    if field.kind != "linear":
        raise ValueError("completeness_ratio needs a linear field")
    Qf = lyapunov_map(field.A, lyap.P)
    denom = float(np.sum(Qf * Qf))
    if denom == 0.0:
        return None
    alpha = float(np.sum(lyap.P * Qf)) / denom
    resid = np.abs(lyap.P - alpha * Qf).max() / np.abs(lyap.P).max()
    return alpha if resid < rtol else None

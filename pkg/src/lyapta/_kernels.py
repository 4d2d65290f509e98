"""Hot loops: grid connected-component labeling and polynomial RK4.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one.
The numba path is used when numba imports and ``LYAPTA_DISABLE_NUMBA``
is unset (or ``0``).  Both paths return identical results; the numpy
path exists for environments without a JIT and as a cross-check.
"""

from __future__ import annotations

import itertools
import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("LYAPTA_DISABLE_NUMBA", "0") in ("", "0")

DIVERGENCE_NORM = 1e9


class FlowDivergence(RuntimeError):
    """State norm exceeded the divergence guard during integration."""


def neighbor_offsets(ndim: int, full: bool = False) -> np.ndarray:
    """Offsets of the 2n-neighborhood, or the full 3^n - 1 one."""
    if full:
        offs = [o for o in itertools.product((-1, 0, 1), repeat=ndim) if any(o)]
    else:
        offs = []
        for d in range(ndim):
            for s in (-1, 1):
                o = [0] * ndim
                o[d] = s
                offs.append(o)
    return np.asarray(offs, dtype=np.int64)


# --------------------------------------------------------------------------
# connected-component labeling
# --------------------------------------------------------------------------

def _label_numpy(codes: np.ndarray, shape: tuple, offsets: np.ndarray) -> np.ndarray:
    """Min-label propagation with pointer jumping.

    Points with ``code < 0`` are background and get label -1.  Components
    are numbered by their smallest flat index.
    """
    codes = np.asarray(codes, dtype=np.int64).reshape(shape)
    n_pts = codes.size
    active = codes >= 0
    lab = np.where(active, np.arange(n_pts).reshape(shape), n_pts)

    pairs = []
    for off in offsets:
        src, dst = [], []
        for o, size in zip(off, shape):
            if o >= 0:
                src.append(slice(0, size - o))
                dst.append(slice(o, size))
            else:
                src.append(slice(-o, size))
                dst.append(slice(0, size + o))
        src, dst = tuple(src), tuple(dst)
        same = active[src] & active[dst] & (codes[src] == codes[dst])
        pairs.append((src, dst, same))

    flat = lab.reshape(-1)
    while True:
        new = lab.copy()
        for src, dst, same in pairs:
            cand = np.where(same, lab[dst], n_pts)
            np.minimum(new[src], cand, out=new[src])
        flat_new = new.reshape(-1)
        # pointer jumping: a label is a flat index inside the same component
        while True:
            idx = np.where(flat_new < n_pts, flat_new, 0)
            jumped = np.where(flat_new < n_pts, flat_new[idx], n_pts)
            if np.array_equal(jumped, flat_new):
                break
            flat_new = jumped
        new = flat_new.reshape(shape)
        if np.array_equal(new, lab):
            break
        lab = new
    flat = lab.reshape(-1)
    out = np.full(n_pts, -1, dtype=np.int64)
    roots = np.unique(flat[flat < n_pts])
    if roots.size:
        out[flat < n_pts] = np.searchsorted(roots, flat[flat < n_pts])
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _label_numba_impl(codes, shape, offsets):
        n_pts = codes.size
        ndim = shape.size
        strides = np.ones(ndim, np.int64)
        for d in range(ndim - 2, -1, -1):
            strides[d] = strides[d + 1] * shape[d + 1]
        labels = np.full(n_pts, -1, np.int64)
        queue = np.empty(n_pts, np.int64)
        coord = np.empty(ndim, np.int64)
        n_off = offsets.shape[0]
        nxt = 0
        for s in range(n_pts):
            if labels[s] >= 0 or codes[s] < 0:
                continue
            code = codes[s]
            labels[s] = nxt
            head = 0
            tail = 1
            queue[0] = s
            while head < tail:
                p = queue[head]
                head += 1
                rem = p
                for d in range(ndim):
                    coord[d] = rem // strides[d]
                    rem -= coord[d] * strides[d]
                for k in range(n_off):
                    q = 0
                    ok = True
                    for d in range(ndim):
                        c = coord[d] + offsets[k, d]
                        if c < 0 or c >= shape[d]:
                            ok = False
                            break
                        q += c * strides[d]
                    if ok and labels[q] < 0 and codes[q] == code:
                        labels[q] = nxt
                        queue[tail] = q
                        tail += 1
            nxt += 1
        return labels


def _label_numba(codes: np.ndarray, shape: tuple, offsets: np.ndarray) -> np.ndarray:
    return _label_numba_impl(
        np.ascontiguousarray(codes, dtype=np.int64).reshape(-1),
        np.asarray(shape, dtype=np.int64),
        np.ascontiguousarray(offsets, dtype=np.int64),
    )


def label_components(codes, shape, full: bool = False, backend: str | None = None) -> np.ndarray:
    """Label connected components of equal-code grid points.

    Parameters
    ----------
    codes : array of int, flattened in C order over ``shape``
        Region code per grid point; negative codes are background.
    shape : tuple of int
    full : bool
        Use the 3^n - 1 neighborhood instead of the 2n one.
    backend : {"numba", "numpy", None}
        ``None`` follows the module default.

    Returns
    -------
    labels : int64 array, component id per point (-1 on background),
        numbered by smallest flat index.
    """
    offsets = neighbor_offsets(len(shape), full)
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend == "numba":
        return _label_numba(codes, shape, offsets)
    return _label_numpy(codes, shape, offsets)


# --------------------------------------------------------------------------
# polynomial vector fields
# --------------------------------------------------------------------------

def _poly_eval_numpy(X, coef, exps, coord):
    X = np.atleast_2d(X)
    mon = np.prod(X[:, None, :] ** exps[None, :, :], axis=2)
    out = np.zeros_like(X, dtype=float)
    np.add.at(out.T, coord, (mon * coef).T)
    return out


def _rk4_numpy(X0, t_out, dt, coef, exps, coord):
    X = np.array(X0, dtype=float, copy=True)
    out = np.empty((len(t_out),) + X.shape)
    t = 0.0
    f = lambda Y: _poly_eval_numpy(Y, coef, exps, coord)
    for k, target in enumerate(t_out):
        while t < target:
            h = min(dt, target - t)
            k1 = f(X)
            k2 = f(X + 0.5 * h * k1)
            k3 = f(X + 0.5 * h * k2)
            k4 = f(X + h * k3)
            X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = target if target - t <= dt else t + h
            if not np.all(np.isfinite(X)) or np.abs(X).max(initial=0.0) > DIVERGENCE_NORM:
                raise FlowDivergence(f"state norm exceeded {DIVERGENCE_NORM:g} at t={t:g}")
        out[k] = X
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _poly_eval_nb(x, coef, exps, coord, out):
        n = x.size
        for j in range(n):
            out[j] = 0.0
        for t in range(coef.size):
            m = coef[t]
            for j in range(n):
                e = exps[t, j]
                if e != 0:
                    m *= x[j] ** e
            out[coord[t]] += m

    @njit(cache=True)
    def _rk4_nb_impl(X0, t_out, dt, coef, exps, coord, limit):
        B, n = X0.shape
        out = np.empty((t_out.size, B, n))
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        for b in range(B):
            x = X0[b].copy()
            t = 0.0
            for k in range(t_out.size):
                target = t_out[k]
                while t < target:
                    h = min(dt, target - t)
                    _poly_eval_nb(x, coef, exps, coord, k1)
                    for j in range(n):
                        tmp[j] = x[j] + 0.5 * h * k1[j]
                    _poly_eval_nb(tmp, coef, exps, coord, k2)
                    for j in range(n):
                        tmp[j] = x[j] + 0.5 * h * k2[j]
                    _poly_eval_nb(tmp, coef, exps, coord, k3)
                    for j in range(n):
                        tmp[j] = x[j] + h * k3[j]
                    _poly_eval_nb(tmp, coef, exps, coord, k4)
                    big = 0.0
                    for j in range(n):
                        x[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                        a = abs(x[j])
                        if not a < np.inf:
                            big = np.inf
                        elif a > big:
                            big = a
                    if target - t <= dt:
                        t = target
                    else:
                        t += h
                    if big > limit:
                        return out, b, t
                out[k, b] = x
        return out, -1, 0.0


def _rk4_numba(X0, t_out, dt, coef, exps, coord):
    out, bad, t = _rk4_nb_impl(
        np.ascontiguousarray(X0, dtype=np.float64),
        np.ascontiguousarray(t_out, dtype=np.float64),
        float(dt),
        np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(exps, dtype=np.int64),
        np.ascontiguousarray(coord, dtype=np.int64),
        DIVERGENCE_NORM,
    )
    if bad >= 0:
        raise FlowDivergence(f"state norm exceeded {DIVERGENCE_NORM:g} at t={t:g} (sample {bad})")
    return out


def poly_eval(X, coef, exps, coord) -> np.ndarray:
    """Evaluate a sparse polynomial field at the rows of ``X``."""
    return _poly_eval_numpy(np.asarray(X, dtype=float), coef, exps, coord)


def rk4_integrate(X0, t_out, dt, coef, exps, coord, backend: str | None = None) -> np.ndarray:
    """Fixed-step RK4 for a batch of initial states.

    ``t_out`` must be sorted and nonnegative.  The last step before each
    output time is shortened to land on it exactly.  Returns an array of
    shape ``(len(t_out), B, n)``.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    t_out = np.asarray(t_out, dtype=float)
    if np.any(np.diff(t_out) < 0) or (t_out.size and t_out[0] < 0):
        raise ValueError("output times must be sorted and nonnegative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    coef = np.asarray(coef, dtype=float)
    exps = np.asarray(exps, dtype=np.int64).reshape(len(coef), X0.shape[1])
    coord = np.asarray(coord, dtype=np.int64)
    if backend == "numba":
        return _rk4_numba(X0, t_out, dt, coef, exps, coord)
    return _rk4_numpy(X0, t_out, dt, coef, exps, coord)

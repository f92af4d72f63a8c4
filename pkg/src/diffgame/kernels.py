"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is selected once at import from the environment variable
``DIFFGAME_BACKEND``:

* ``auto`` (default) - numba if it imports, numpy otherwise
* ``numba``          - require numba, fail loudly if unavailable
* ``numpy``          - force the pure-numpy path

Both backends produce bit-identical results: the numpy fallback accumulates
interpolation corners in the same sequential order as the compiled loops,
and argmax ties resolve to the first (lowest) candidate index in both.
Worker count is capped at 1 unless raised via ``set_threads`` (the CLI
``--threads`` flag); the parallel loop writes disjoint outputs so results
do not depend on the thread count.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import InvalidInputError

_ENV_VAR = "DIFFGAME_BACKEND"
_THREADS_VAR = "DIFFGAME_THREADS"


def build_stencil(nodes, points):
    """Multilinear interpolation stencil for a batch of query points.

    Parameters
    ----------
    nodes : sequence of 1-d arrays
        Strictly increasing node coordinates per dimension.
    points : array (M, ndim)
        Query points; coordinates outside the node range are clamped.

    Returns
    -------
    idx : int64 array (M, 2**ndim)
        Flat indices (C order) of the corners of each containing cell.
    w : float64 array (M, 2**ndim)
        Nonnegative corner weights summing to one per row.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ndim = len(nodes)
    if points.shape[1] != ndim:
        raise InvalidInputError(
            f"points have dimension {points.shape[1]}, grid has {ndim}")
    m = points.shape[0]
    if ndim == 1:
        nd = nodes[0]
        q = np.clip(points[:, 0], nd[0], nd[-1])
        j = np.clip(np.searchsorted(nd, q, side="right") - 1, 0, len(nd) - 2)
        left = nd[j]
        frac = (q - left) / (nd[j + 1] - left)
        idx = np.empty((m, 2), dtype=np.int64)
        idx[:, 0] = j
        idx[:, 1] = j + 1
        w = np.empty((m, 2))
        w[:, 0] = 1.0 - frac
        w[:, 1] = frac
        return idx, w
    shape = [len(n) for n in nodes]
    strides = np.ones(ndim, dtype=np.int64)
    for d in range(ndim - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]

    cell = np.empty((m, ndim), dtype=np.int64)
    frac = np.empty((m, ndim), dtype=float)
    for d in range(ndim):
        nd = nodes[d]
        q = np.clip(points[:, d], nd[0], nd[-1])
        j = np.clip(np.searchsorted(nd, q, side="right") - 1, 0, len(nd) - 2)
        cell[:, d] = j
        frac[:, d] = (q - nd[j]) / (nd[j + 1] - nd[j])

    corners = 1 << ndim
    idx = np.empty((m, corners), dtype=np.int64)
    w = np.empty((m, corners), dtype=float)
    base = cell @ strides
    for s in range(corners):
        offset = 0
        weight = np.ones(m)
        for d in range(ndim):
            if (s >> d) & 1:
                offset += strides[d]
                weight = weight * frac[:, d]
            else:
                weight = weight * (1.0 - frac[:, d])
        idx[:, s] = base + offset
        w[:, s] = weight
    return idx, w


# -- pure numpy backend ------------------------------------------------------

def _interp_numpy(values, idx, w):
    vals = values[idx]
    acc = w[..., 0] * vals[..., 0]
    for s in range(1, idx.shape[-1]):
        acc = acc + w[..., s] * vals[..., s]
    return acc


def _bellman_numpy(values, stage, idx, w, h, beta):
    # cand[c, m] = h*stage[c, m] + beta * interp(values at corner set c, m)
    cand = h * stage + beta * _interp_numpy(values, idx, w)
    return cand.max(axis=0), cand.argmax(axis=0)


NUMPY_KERNELS = {
    "name": "numpy",
    "interp": _interp_numpy,
    "bellman": _bellman_numpy,
}


# -- numba backend -----------------------------------------------------------

def _make_numba_kernels():
    from numba import njit, prange

    @njit(cache=True)
    def interp_nb(values, idx, w):
        m, corners = idx.shape
        out = np.empty(m)
        for i in range(m):
            acc = 0.0
            for s in range(corners):
                acc += w[i, s] * values[idx[i, s]]
            out[i] = acc
        return out

    @njit(cache=True, parallel=True)
    def bellman_nb(values, stage, idx, w, h, beta):
        n_controls, m, corners = idx.shape
        new_values = np.empty(m)
        best = np.empty(m, np.int64)
        for node in prange(m):
            best_val = -np.inf
            best_c = 0
            for c in range(n_controls):
                acc = 0.0
                for s in range(corners):
                    acc += w[c, node, s] * values[idx[c, node, s]]
                cand = h * stage[c, node] + beta * acc
                if cand > best_val:
                    best_val = cand
                    best_c = c
            new_values[node] = best_val
            best[node] = best_c
        return new_values, best

    def interp(values, idx, w):
        flat_idx = idx.reshape(-1, idx.shape[-1])
        flat_w = w.reshape(-1, w.shape[-1])
        out = interp_nb(np.ascontiguousarray(values, dtype=np.float64),
                        np.ascontiguousarray(flat_idx),
                        np.ascontiguousarray(flat_w))
        return out.reshape(idx.shape[:-1])

    def bellman(values, stage, idx, w, h, beta):
        return bellman_nb(np.ascontiguousarray(values, dtype=np.float64),
                          np.ascontiguousarray(stage, dtype=np.float64),
                          np.ascontiguousarray(idx),
                          np.ascontiguousarray(w, dtype=np.float64),
                          float(h), float(beta))

    return {"name": "numba", "interp": interp, "bellman": bellman}


_NUMBA_KERNELS = None
_NUMBA_ERROR = None


def _numba_kernels():
    global _NUMBA_KERNELS, _NUMBA_ERROR
    if _NUMBA_KERNELS is None and _NUMBA_ERROR is None:
        try:
            import numba

            threads = max(1, int(os.environ.get(_THREADS_VAR, "1")))
            numba.set_num_threads(threads)
            _NUMBA_KERNELS = _make_numba_kernels()
        except Exception as exc:  # pragma: no cover - environment dependent
            _NUMBA_ERROR = exc
    if _NUMBA_KERNELS is None:
        raise ImportError(f"numba backend unavailable: {_NUMBA_ERROR}")
    return _NUMBA_KERNELS


def get_backend(name: str) -> dict:
    """Kernel table for an explicit backend name ('numba' or 'numpy')."""
    if name == "numpy":
        return NUMPY_KERNELS
    if name == "numba":
        return _numba_kernels()
    raise InvalidInputError(f"unknown backend '{name}'")


def _select_active():
    choice = os.environ.get(_ENV_VAR, "auto").lower()
    if choice == "numpy":
        return NUMPY_KERNELS
    if choice == "numba":
        return _numba_kernels()
    if choice != "auto":
        raise InvalidInputError(
            f"{_ENV_VAR} must be 'auto', 'numba' or 'numpy', got '{choice}'")
    try:
        return _numba_kernels()
    except ImportError:
        return NUMPY_KERNELS


ACTIVE = _select_active()


def backend_name() -> str:
    return ACTIVE["name"]


def set_threads(count: int) -> None:
    """Cap the numba worker count. No effect on the numpy backend."""
    if count < 1:
        raise InvalidInputError("thread count must be at least 1")
    try:
        import numba

        numba.set_num_threads(count)
    except ImportError:
        pass

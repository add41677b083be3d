"""Hot numeric kernels with numba and pure-numpy implementations.

Each public kernel exists twice: ``<name>_numpy`` and ``<name>_numba``.  The
unsuffixed name is bound to one of them at import time according to
:data:`stlinear._accel.USE_NUMBA`.  Both variants agree to rounding error; the
benchmark in ``benchmarks/bench_backends.py`` compares their speed.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.special import erf

from ._accel import USE_NUMBA, njit, prange

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# -- moving average (replicate padding) --------------------------------------


@lru_cache(maxsize=64)
def averaging_matrix(T, k):
    """Dense T x T operator A with ``trend = A @ x`` under replicate padding."""
    half = (k - 1) // 2
    A = np.zeros((T, T))
    for t in range(T):
        for p in range(t - half, t + half + 1):
            A[t, min(max(p, 0), T - 1)] += 1.0
    A /= k
    A.setflags(write=False)
    return A


def moving_average_rows_numpy(x, k):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x @ averaging_matrix(x.shape[-1], k).T


def moving_average_adjoint_rows_numpy(g, k):
    g = np.ascontiguousarray(g, dtype=np.float64)
    return g @ averaging_matrix(g.shape[-1], k)


@njit(cache=True, parallel=True)
def _ma_rows(x, k):
    # Sliding-window form: interior terms come from a prefix sum, padded
    # terms from how far the window overhangs each edge.
    M, T = x.shape
    half = (k - 1) // 2
    out = np.empty_like(x)
    for m in prange(M):
        csum = np.empty(T + 1)
        csum[0] = 0.0
        for t in range(T):
            csum[t + 1] = csum[t] + x[m, t]
        for t in range(T):
            lo = t - half
            hi = t + half
            s = csum[min(hi, T - 1) + 1] - csum[max(lo, 0)]
            if lo < 0:
                s += -lo * x[m, 0]
            if hi > T - 1:
                s += (hi - T + 1) * x[m, T - 1]
            out[m, t] = s / k
    return out


@njit(cache=True, parallel=True)
def _ma_adjoint_rows(g, k):
    M, T = g.shape
    half = (k - 1) // 2
    out = np.empty_like(g)
    for m in prange(M):
        if T == 1:
            out[m, 0] = g[m, 0]
            continue
        csum = np.empty(T + 1)
        csum[0] = 0.0
        for t in range(T):
            csum[t + 1] = csum[t] + g[m, t]
        for j in range(1, T - 1):
            out[m, j] = (csum[min(j + half, T - 1) + 1] - csum[max(j - half, 0)]) / k
        # edge cells absorb every padded position that clamps onto them
        s0 = 0.0
        for t in range(min(half, T - 1) + 1):
            s0 += g[m, t] * (half - t + 1)
        s1 = 0.0
        for t in range(max(T - 1 - half, 0), T):
            s1 += g[m, t] * (t + half - T + 2)
        out[m, 0] = s0 / k
        out[m, T - 1] = s1 / k
    return out


def _as_rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape(-1, x.shape[-1]), x.shape


def moving_average_rows_numba(x, k):
    rows, shape = _as_rows(x)
    return _ma_rows(rows, k).reshape(shape)


def moving_average_adjoint_rows_numba(g, k):
    rows, shape = _as_rows(g)
    return _ma_adjoint_rows(rows, k).reshape(shape)


# -- GELU (exact erf form) ---------------------------------------------------


def gelu_numpy(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad_numpy(x):
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@njit(cache=True, parallel=True)
def _gelu_flat(x):
    out = np.empty_like(x)
    for i in prange(x.size):
        v = x[i]
        out[i] = 0.5 * v * (1.0 + math.erf(v / 1.4142135623730951))
    return out


@njit(cache=True, parallel=True)
def _gelu_grad_flat(x):
    out = np.empty_like(x)
    for i in prange(x.size):
        v = x[i]
        cdf = 0.5 * (1.0 + math.erf(v / 1.4142135623730951))
        out[i] = cdf + v * 0.3989422804014327 * math.exp(-0.5 * v * v)
    return out


def gelu_numba(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _gelu_flat(x.ravel()).reshape(x.shape)


def gelu_grad_numba(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _gelu_grad_flat(x.ravel()).reshape(x.shape)


# -- per-node affine maps ----------------------------------------------------
# W: (N, out, in), b: (N, out), X: (B, N, in) -> (B, N, out)


def node_affine_numpy(W, b, X):
    return np.einsum("noi,bni->bno", W, X, optimize=True) + b[None]


def node_affine_grad_numpy(X, G):
    """Weight and bias gradients summed over the batch axis."""
    return np.einsum("bno,bni->noi", G, X, optimize=True), G.sum(axis=0)


@njit(cache=True, parallel=True)
def _node_affine(W, b, X):
    B, N, n_in = X.shape
    n_out = W.shape[1]
    out = np.empty((B, N, n_out))
    for n in prange(N):
        for s in range(B):
            for o in range(n_out):
                acc = b[n, o]
                for i in range(n_in):
                    acc += W[n, o, i] * X[s, n, i]
                out[s, n, o] = acc
    return out


@njit(cache=True, parallel=True)
def _node_affine_grad(X, G):
    B, N, n_in = X.shape
    n_out = G.shape[2]
    gW = np.zeros((N, n_out, n_in))
    gb = np.zeros((N, n_out))
    for n in prange(N):
        for s in range(B):
            for o in range(n_out):
                g = G[s, n, o]
                gb[n, o] += g
                for i in range(n_in):
                    gW[n, o, i] += g * X[s, n, i]
    return gW, gb


def node_affine_numba(W, b, X):
    return _node_affine(np.ascontiguousarray(W, dtype=np.float64),
                        np.ascontiguousarray(b, dtype=np.float64),
                        np.ascontiguousarray(X, dtype=np.float64))


def node_affine_grad_numba(X, G):
    return _node_affine_grad(np.ascontiguousarray(X, dtype=np.float64),
                             np.ascontiguousarray(G, dtype=np.float64))


# -- instrumented single-node forward ----------------------------------------


def _counted_forward_py(trend, rem, Wtr, btr, Wre, bre, start, end, WA, bA, WB, bB, Wp, bp):
    # Scalar loops on purpose: every multiply bumps the counter.
    count = 0
    d, T = Wtr.shape
    n_start = start.shape[0]
    n_end = end.shape[0]
    emb = n_start + d + n_end
    y = np.zeros(emb)
    for a in range(n_start):
        y[a] = start[a]
    for a in range(d):
        acc = btr[a] + bre[a]
        for t in range(T):
            acc += Wtr[a, t] * trend[t]
            count += 1
        for t in range(T):
            acc += Wre[a, t] * rem[t]
            count += 1
        y[n_start + a] = acc
    for a in range(n_end):
        y[n_start + d + a] = end[a]

    L, hidden, _ = WA.shape
    h = np.zeros(hidden)
    for l in range(L):
        for j in range(hidden):
            acc = bA[l, j]
            for a in range(emb):
                acc += WA[l, j, a] * y[a]
                count += 1
            h[j] = 0.5 * acc * (1.0 + math.erf(acc / 1.4142135623730951))
        y_next = np.empty(emb)
        for a in range(emb):
            acc = bB[l, a] + y[a]
            for j in range(hidden):
                acc += WB[l, a, j] * h[j]
                count += 1
            y_next[a] = acc
        y = y_next

    T_p = Wp.shape[0]
    out = np.zeros(T_p)
    for p in range(T_p):
        acc = bp[p]
        for a in range(emb):
            acc += Wp[p, a] * y[a]
            count += 1
        out[p] = acc
    return out, count


counted_forward_numpy = _counted_forward_py
counted_forward_numba = njit(cache=True)(_counted_forward_py)


if USE_NUMBA:
    moving_average_rows = moving_average_rows_numba
    moving_average_adjoint_rows = moving_average_adjoint_rows_numba
    gelu = gelu_numba
    gelu_grad = gelu_grad_numba
    node_affine = node_affine_numba
    node_affine_grad = node_affine_grad_numba
    counted_forward = counted_forward_numba
    BACKEND = "numba"
else:
    moving_average_rows = moving_average_rows_numpy
    moving_average_adjoint_rows = moving_average_adjoint_rows_numpy
    gelu = gelu_numpy
    gelu_grad = gelu_grad_numpy
    node_affine = node_affine_numpy
    node_affine_grad = node_affine_grad_numpy
    counted_forward = counted_forward_numpy
    BACKEND = "numpy"

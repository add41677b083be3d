"""Trend/remainder split by a centered moving average."""

from typing import NamedTuple

import numpy as np

from . import kernels


class DecompPair(NamedTuple):
    trend: np.ndarray
    remainder: np.ndarray


def check_kernel(k, length):
    if not isinstance(k, (int, np.integer)) or k < 1 or k % 2 == 0:
        raise ValueError(f"moving-average kernel must be a positive odd integer, got {k!r}")
    if k > 2 * length - 1:
        raise ValueError(f"kernel {k} too large for a window of length {length} (max {2 * length - 1})")


def moving_average(x, k):
    """Centered mean over ``k`` points, edges padded by repeating the end values.

    Works on the last axis, so a batch of windows can be passed at once.
    """
    x = np.asarray(x, dtype=np.float64)
    check_kernel(k, x.shape[-1])
    if k == 1:
        return x.copy()
    return kernels.moving_average_rows(x, int(k))


def moving_average_adjoint(g, k):
    """Transpose of :func:`moving_average` applied to an upstream gradient."""
    g = np.asarray(g, dtype=np.float64)
    check_kernel(k, g.shape[-1])
    if k == 1:
        return g.copy()
    return kernels.moving_average_adjoint_rows(g, int(k))


def decompose(x, k):
    x = np.asarray(x, dtype=np.float64)
    trend = moving_average(x, k)
    return DecompPair(trend, x - trend)


def decompose_adjoint(grad_trend, grad_remainder, k):
    """Gradient w.r.t. the input given gradients on trend and remainder."""
    # remainder = x - trend, so d/dx = g_rem + A^T (g_tr - g_rem)
    return grad_remainder + moving_average_adjoint(np.asarray(grad_trend) - grad_remainder, k)

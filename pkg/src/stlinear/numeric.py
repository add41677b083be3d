"""Dense numeric primitives: affine maps, GELU, Adam, gradient checking.

Tensors are plain C-contiguous ``float64`` numpy arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CheckError, DimensionError, TrainingError


def as_tensor(x, name="tensor"):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim and 0 in arr.shape:
        raise DimensionError(f"{name} has an empty dimension: {arr.shape}")
    return arr


def affine_forward(W, b, x):
    """Return ``W @ x + b`` for a single vector ``x``."""
    W, b, x = as_tensor(W, "W"), as_tensor(b, "b"), as_tensor(x, "x")
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape != (W.shape[1],):
        raise DimensionError(
            f"affine shapes do not conform: W{W.shape}, b{b.shape}, x{x.shape}"
        )
    return W @ x + b


def affine_backward(W, x, grad_out):
    """Gradients of ``W @ x + b`` given the upstream gradient.

    Returns ``(grad_W, grad_b, grad_x)``.
    """
    W, x, g = as_tensor(W, "W"), as_tensor(x, "x"), as_tensor(grad_out, "grad_out")
    if W.ndim != 2 or x.shape != (W.shape[1],) or g.shape != (W.shape[0],):
        raise DimensionError(
            f"affine_backward shapes do not conform: W{W.shape}, x{x.shape}, grad_out{g.shape}"
        )
    return np.outer(g, x), g.copy(), W.T @ g


def gelu(x):
    """Exact GELU ``x * Phi(x)`` with the erf-based Gaussian CDF."""
    if np.isscalar(x):
        return float(kernels.gelu(np.array([x], dtype=np.float64))[0])
    return kernels.gelu(np.asarray(x, dtype=np.float64))


def gelu_backward(x):
    """Derivative ``Phi(x) + x * phi(x)``."""
    if np.isscalar(x):
        return float(kernels.gelu_grad(np.array([x], dtype=np.float64))[0])
    return kernels.gelu_grad(np.asarray(x, dtype=np.float64))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def like(cls, param, **kw):
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64), **kw)


def adam_step(param, grad, state, lr, name="param"):
    """One in-place Adam update with bias correction.

    ``param``, ``state.m`` and ``state.v`` are modified in place and ``param``
    is returned for convenience.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if param.shape != grad.shape or state.m.shape != param.shape or state.v.shape != param.shape:
        raise DimensionError(
            f"{name}: param{param.shape}, grad{grad.shape}, m{state.m.shape}, v{state.v.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for parameter '{name}'")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    param -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return param


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str = ""
    worst_index: tuple = field(default_factory=tuple)


def finite_diff_check(loss_fn, params, eps=1e-6, grads=None, max_coords=None, rng=None,
                      floor=1e-6):
    """Compare analytic gradients against central differences.

    ``loss_fn()`` is called with no arguments and must read ``params`` (a
    mapping name -> array, perturbed in place).  When ``grads`` is None,
    ``loss_fn`` must return ``(loss, grads)`` at the unperturbed point;
    otherwise it returns the scalar loss and ``grads`` holds the analytic
    gradients.  The relative error per coordinate is
    ``|a - n| / max(|n|, floor)``, measured against the numerical
    estimate so that a gradient off by a factor of two scores 1.0.  Returns a :class:`GradCheckResult`.

    ``max_coords`` limits the number of coordinates probed per tensor (chosen
    with ``rng``); by default every coordinate is checked.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")

    def scalar_loss():
        out = loss_fn()
        return float(out[0] if isinstance(out, tuple) else out)

    if grads is None:
        loss0, grads = loss_fn()
        grads = {k: np.array(v, dtype=np.float64, copy=True) for k, v in grads.items()}
    else:
        loss0 = scalar_loss()
    if scalar_loss() != float(loss0):
        raise CheckError("loss_fn is not deterministic across repeated evaluations")

    rng = np.random.default_rng(0) if rng is None else rng
    result = GradCheckResult(0.0)
    for name, p in params.items():
        g = grads[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + eps
            up = scalar_loss()
            flat[j] = orig - eps
            down = scalar_loss()
            flat[j] = orig
            num = (up - down) / (2.0 * eps)
            ana = float(g.reshape(-1)[j])
            err = abs(ana - num) / max(abs(num), floor)
            if err > result.max_rel_error:
                result = GradCheckResult(err, name, np.unravel_index(j, p.shape))
    return result

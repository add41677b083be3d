"""Reference forecasters: DLinear, last-value persistence, historical average.

Every forecaster exposes ``predict(windows, normalizer)`` returning raw-scale
predictions of shape ``(B, N, T_p)``, plus ``num_parameters()`` and
``macs_per_sample()`` so the CLI can treat them uniformly with STLinear.
"""

import numpy as np

from .decomposition import decompose
from .errors import DimensionError
from .model import ParameterSet


class DLinear:
    """Shared (node-independent) trend and remainder linear maps."""

    def __init__(self, config, params=None):
        self.config = config
        if params is None:
            rng = np.random.default_rng(config.seed)
            bound = 1.0 / np.sqrt(config.T_h)
            shape = (config.T_p, config.T_h)
            params = ParameterSet({
                "W_trend": rng.uniform(-bound, bound, shape),
                "b_trend": np.zeros(config.T_p),
                "W_remainder": rng.uniform(-bound, bound, shape),
                "b_remainder": np.zeros(config.T_p),
            })
        self.params = params
        self._cache = None

    def forward(self, X, slots=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[-1] != self.config.T_h:
            raise DimensionError(f"history batch must be (B, N, {self.config.T_h}), got {X.shape}")
        trend, rem = decompose(X, self.config.kernel)
        self._cache = (trend, rem)
        p = self.params
        return trend @ p["W_trend"].T + p["b_trend"] + rem @ p["W_remainder"].T + p["b_remainder"]

    __call__ = forward

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        trend, rem = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        G = g.reshape(-1, g.shape[-1])
        grads = self.params.grads
        grads["W_trend"] += G.T @ trend.reshape(-1, trend.shape[-1])
        grads["W_remainder"] += G.T @ rem.reshape(-1, rem.shape[-1])
        bias = G.sum(axis=0)
        grads["b_trend"] += bias
        grads["b_remainder"] += bias

    def num_parameters(self):
        return self.params.num_parameters()

    def macs_per_sample(self):
        return 2 * self.config.T_p * self.config.T_h * self.config.N


def dlinear_forward(params, history_i, k):
    """Single-node DLinear forecast; ``params`` maps the four tensor names."""
    trend, rem = decompose(history_i, k)
    return (params["W_trend"] @ trend + params["b_trend"]
            + params["W_remainder"] @ rem + params["b_remainder"])


def persistence_forecast(history_i, T_p):
    """Repeat the last observed value ``T_p`` times (along the last axis)."""
    history_i = np.asarray(history_i, dtype=np.float64)
    if history_i.shape[-1] < 1:
        raise ValueError("history must contain at least one step")
    return np.repeat(history_i[..., -1:], T_p, axis=-1)


class Persistence:
    def __init__(self, T_p):
        self.T_p = T_p

    def predict(self, windows, normalizer=None):
        return persistence_forecast(windows.histories(), self.T_p)

    def num_parameters(self):
        return 0

    def macs_per_sample(self):
        return 0


class HistoricalAverage:
    """Mean of training values sharing a (time-of-day, weekday) slot.

    Empty slots fall back to the time-of-day mean, then to the global mean.
    """

    def __init__(self, train_series, calendar):
        x = np.atleast_2d(np.asarray(train_series, dtype=np.float64))
        self.calendar = calendar
        N, T = x.shape
        Nd = calendar.steps_per_day
        day, week = calendar.slots(np.arange(T))
        flat = week * Nd + day
        sums = np.zeros((N, 7 * Nd))
        counts = np.bincount(flat, minlength=7 * Nd).astype(np.float64)
        for i in range(N):
            sums[i] = np.bincount(flat, weights=x[i], minlength=7 * Nd)
        day_sums = sums.reshape(N, 7, Nd).sum(axis=1)
        day_counts = counts.reshape(7, Nd).sum(axis=0)
        glob = x.mean(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            day_mean = np.where(day_counts > 0, day_sums / np.maximum(day_counts, 1), glob)
            slot = np.where(counts > 0, sums / np.maximum(counts, 1),
                            np.tile(day_mean, (1, 7)))
        self.slot_mean = slot.reshape(N, 7, Nd)
        self.squeeze = np.ndim(train_series) == 1

    def forecast(self, anchor_t, T_p):
        day, week = self.calendar.slots(np.arange(anchor_t + 1, anchor_t + 1 + T_p))
        out = self.slot_mean[:, week, day]
        return out[0] if self.squeeze else out

    def predict(self, windows, normalizer=None):
        return np.stack([self.forecast(int(a), windows.T_p) for a in windows.anchors])

    def num_parameters(self):
        return int(self.slot_mean.size)

    def macs_per_sample(self):
        return 0


def historical_average(train_series, calendar, anchor_t, T_p):
    return HistoricalAverage(train_series, calendar).forecast(anchor_t, T_p)

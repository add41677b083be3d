"""STLinear: node-specific linear encoder with periodicity embeddings and a
residual linear decoder, trained with hand-written backpropagation.

All arrays are ``float64``.  Batched shapes: histories ``(B, N, T_h)``,
predictions ``(B, N, T_p)``; calendar slots are length-``B`` integer arrays.
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .decomposition import check_kernel, decompose, decompose_adjoint
from .errors import DimensionError


@dataclass
class ModelConfig:
    T_h: int = 12
    T_p: int = 12
    d: int = 32
    e: int = 8
    c: int = 32
    L: int = 3
    hidden: Optional[int] = None  # decoder inner width; None means emb_dim
    kernel: int = 3
    N: int = 1
    N_d: int = 288
    seed: int = 0
    use_spatial: bool = True
    use_time_of_day: bool = True
    use_day_of_week: bool = True

    def __post_init__(self):
        for name in ("T_h", "T_p", "d", "e", "c", "L", "N", "N_d"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.hidden is not None and self.hidden < 1:
            raise ValueError(f"hidden must be positive, got {self.hidden}")
        check_kernel(self.kernel, self.T_h)

    @property
    def period_dim(self):
        """Width of one start/end periodicity vector."""
        return self.c * (int(self.use_time_of_day) + int(self.use_day_of_week))

    @property
    def emb_dim(self):
        return self.d + 2 * self.period_dim

    @property
    def hidden_dim(self):
        return self.emb_dim if self.hidden is None else self.hidden

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, value in d.items():
            if key not in known:
                continue
            if key.startswith("use_"):
                value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
            elif key == "hidden":
                value = None if value in (None, "", "None") else int(value)
            else:
                value = int(value)
            kw[key] = value
        return cls(**kw)


class ParameterSet:
    """Ordered learnable tensors, each with a same-shaped gradient buffer."""

    def __init__(self, tensors=None):
        self.values = OrderedDict()
        self.grads = OrderedDict()
        for name, arr in (tensors or {}).items():
            self.add(name, arr)

    def add(self, name, arr):
        arr = np.ascontiguousarray(arr, dtype=np.float64).copy()
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def names(self):
        return list(self.values)

    def items(self):
        return self.values.items()

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def num_parameters(self):
        return int(sum(v.size for v in self.values.values()))

    def copy(self):
        return ParameterSet({k: v for k, v in self.values.items()})

    def load(self, other):
        """Copy values from a mapping with identical names and shapes."""
        for name, arr in other.items():
            if name not in self.values or self.values[name].shape != np.shape(arr):
                raise DimensionError(f"tensor {name!r}: shape {np.shape(arr)} does not fit")
            self.values[name][...] = arr


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_parameters(cfg):
    """Seeded fan-in uniform initialization; biases and bias pools start at 0."""
    rng = np.random.default_rng(cfg.seed)
    d, T_h, e, c, emb, hid = cfg.d, cfg.T_h, cfg.e, cfg.c, cfg.emb_dim, cfg.hidden_dim
    p = ParameterSet()
    if cfg.use_spatial:
        p.add("pool_theta_tr", _uniform(rng, (d, T_h, e), T_h))
        p.add("pool_theta_re", _uniform(rng, (d, T_h, e), T_h))
        p.add("pool_beta_tr", np.zeros((d, e)))
        p.add("pool_beta_re", np.zeros((d, e)))
        p.add("spatial", _uniform(rng, (cfg.N, e), e))
    else:
        p.add("W_tr", _uniform(rng, (d, T_h), T_h))
        p.add("W_re", _uniform(rng, (d, T_h), T_h))
        p.add("b_tr", np.zeros(d))
        p.add("b_re", np.zeros(d))
    if cfg.use_time_of_day:
        p.add("day_table", _uniform(rng, (cfg.N_d, c), c))
    if cfg.use_day_of_week:
        p.add("week_table", _uniform(rng, (7, c), c))
    for l in range(cfg.L):
        p.add(f"W_A.{l}", _uniform(rng, (hid, emb), emb))
        p.add(f"b_A.{l}", np.zeros(hid))
        p.add(f"W_B.{l}", _uniform(rng, (emb, hid), hid))
        p.add(f"b_B.{l}", np.zeros(emb))
    p.add("W_p", _uniform(rng, (cfg.T_p, emb), emb))
    p.add("b_p", np.zeros(cfg.T_p))
    return p


class MaterializedNodeWeights(NamedTuple):
    W_tr: np.ndarray  # (d, T_h)
    W_re: np.ndarray
    b_tr: np.ndarray  # (d,)
    b_re: np.ndarray


class _Cache(NamedTuple):
    trend: np.ndarray
    remainder: np.ndarray
    weights: tuple
    slots: tuple
    layers: list  # (y_in, pre_activation, activation) per block
    y_out: np.ndarray
    batch: int


class STLinear:
    def __init__(self, config, params=None):
        self.config = config
        self.params = init_parameters(config) if params is None else params
        self._cache = None
        self._frozen = None

    # -- node-specific weights -------------------------------------------

    def node_weights(self):
        """Per-node encoder weights for all nodes: W (N, d, T_h) x2, b (N, d) x2."""
        p = self.params
        if not self.config.use_spatial:
            N = self.config.N
            return tuple(np.broadcast_to(p[k], (N,) + p[k].shape)
                         for k in ("W_tr", "W_re", "b_tr", "b_re"))
        S = p["spatial"]
        return (np.einsum("dte,ne->ndt", p["pool_theta_tr"], S, optimize=True),
                np.einsum("dte,ne->ndt", p["pool_theta_re"], S, optimize=True),
                S @ p["pool_beta_tr"].T,
                S @ p["pool_beta_re"].T)

    def materialize_node_weights(self, i):
        if not 0 <= i < self.config.N:
            raise IndexError(f"node index {i} outside [0, {self.config.N})")
        p = self.params
        if not self.config.use_spatial:
            return MaterializedNodeWeights(p["W_tr"].copy(), p["W_re"].copy(),
                                           p["b_tr"].copy(), p["b_re"].copy())
        s = p["spatial"][i]
        return MaterializedNodeWeights(p["pool_theta_tr"] @ s, p["pool_theta_re"] @ s,
                                       p["pool_beta_tr"] @ s, p["pool_beta_re"] @ s)

    def freeze(self):
        """Precompute node weights once; later forwards skip the pool contraction."""
        self._frozen = tuple(np.ascontiguousarray(w) for w in self.node_weights())

    def unfreeze(self):
        self._frozen = None

    # -- forward ----------------------------------------------------------

    def periodic_vectors(self, day_idx, week_idx):
        """Concatenated ``[d(t); w(t)]`` rows for each batch entry, shape (B, period_dim)."""
        parts = []
        if self.config.use_time_of_day:
            parts.append(self.params["day_table"][day_idx])
        if self.config.use_day_of_week:
            parts.append(self.params["week_table"][week_idx])
        if not parts:
            return np.zeros((len(np.atleast_1d(day_idx)), 0))
        return np.concatenate(parts, axis=-1)

    def encode_batch(self, X, slots, weights=None):
        cfg = self.config
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (cfg.N, cfg.T_h):
            raise DimensionError(f"history batch must be (B, {cfg.N}, {cfg.T_h}), got {X.shape}")
        B = X.shape[0]
        trend, rem = decompose(X, cfg.kernel)
        if weights is None:
            weights = self._frozen if self._frozen is not None else self.node_weights()
        W_tr, W_re, b_tr, b_re = weights
        e_tmp = (kernels.node_affine(W_tr, b_tr, trend)
                 + kernels.node_affine(W_re, b_re, rem))
        day_s, week_s, day_e, week_e = (np.asarray(s) for s in slots)
        start = self.periodic_vectors(day_s, week_s)
        end = self.periodic_vectors(day_e, week_e)
        P = cfg.period_dim
        emb = np.empty((B, cfg.N, cfg.emb_dim))
        emb[:, :, :P] = start[:, None, :]
        emb[:, :, P : P + cfg.d] = e_tmp
        emb[:, :, P + cfg.d :] = end[:, None, :]
        return emb, trend, rem, weights

    def decode_rows(self, Y, layers=None):
        p = self.params
        for l in range(self.config.L):
            H = Y @ p[f"W_A.{l}"].T + p[f"b_A.{l}"]
            G = kernels.gelu(H)
            if layers is not None:
                layers.append((Y, H, G))
            Y = G @ p[f"W_B.{l}"].T + p[f"b_B.{l}"] + Y
        return Y

    def head_rows(self, Y):
        return Y @ self.params["W_p"].T + self.params["b_p"]

    def forward(self, X, slots):
        """Normalized-scale predictions, shape (B, N, T_p); caches activations."""
        cfg = self.config
        emb, trend, rem, weights = self.encode_batch(X, slots)
        B = emb.shape[0]
        layers = []
        Y = self.decode_rows(emb.reshape(B * cfg.N, cfg.emb_dim), layers)
        out = self.head_rows(Y).reshape(B, cfg.N, cfg.T_p)
        self._cache = _Cache(trend, rem, weights, tuple(np.asarray(s) for s in slots),
                             layers, Y, B)
        return out

    __call__ = forward

    # -- backward ---------------------------------------------------------

    def backward(self, grad_out, input_grad=False):
        """Accumulate parameter gradients for the last :meth:`forward` call.

        Returns the gradient w.r.t. the (normalized) history batch when
        ``input_grad`` is true, else None.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        cfg, p, g = self.config, self.params, self.params.grads
        c = self._cache
        B, N = c.batch, cfg.N
        gP = np.asarray(grad_out, dtype=np.float64)
        if gP.shape != (B, N, cfg.T_p):
            raise DimensionError(f"grad_out must be {(B, N, cfg.T_p)}, got {gP.shape}")
        gP = gP.reshape(B * N, cfg.T_p)

        g["W_p"] += gP.T @ c.y_out
        g["b_p"] += gP.sum(axis=0)
        gY = gP @ p["W_p"]
        for l in reversed(range(cfg.L)):
            Y_in, H, G = c.layers[l]
            g[f"W_B.{l}"] += gY.T @ G
            g[f"b_B.{l}"] += gY.sum(axis=0)
            gH = (gY @ p[f"W_B.{l}"]) * kernels.gelu_grad(H)
            g[f"W_A.{l}"] += gH.T @ Y_in
            g[f"b_A.{l}"] += gH.sum(axis=0)
            gY = gY + gH @ p[f"W_A.{l}"]

        gE = gY.reshape(B, N, cfg.emb_dim)
        P = cfg.period_dim
        day_s, week_s, day_e, week_e = c.slots
        self._scatter_periodic(gE[:, :, :P].sum(axis=1), day_s, week_s)
        self._scatter_periodic(gE[:, :, P + cfg.d :].sum(axis=1), day_e, week_e)

        g_tmp = np.ascontiguousarray(gE[:, :, P : P + cfg.d])
        gW_tr, gb_tr = kernels.node_affine_grad(c.trend, g_tmp)
        gW_re, gb_re = kernels.node_affine_grad(c.remainder, g_tmp)
        if cfg.use_spatial:
            S = p["spatial"]
            g["pool_theta_tr"] += np.einsum("ndt,ne->dte", gW_tr, S, optimize=True)
            g["pool_theta_re"] += np.einsum("ndt,ne->dte", gW_re, S, optimize=True)
            g["pool_beta_tr"] += gb_tr.T @ S
            g["pool_beta_re"] += gb_re.T @ S
            g["spatial"] += (np.einsum("ndt,dte->ne", gW_tr, p["pool_theta_tr"], optimize=True)
                             + np.einsum("ndt,dte->ne", gW_re, p["pool_theta_re"], optimize=True)
                             + gb_tr @ p["pool_beta_tr"]
                             + gb_re @ p["pool_beta_re"])
        else:
            g["W_tr"] += gW_tr.sum(axis=0)
            g["W_re"] += gW_re.sum(axis=0)
            g["b_tr"] += gb_tr.sum(axis=0)
            g["b_re"] += gb_re.sum(axis=0)

        if not input_grad:
            return None
        W_tr, W_re = c.weights[0], c.weights[1]
        g_trend = np.einsum("bnd,ndt->bnt", g_tmp, W_tr, optimize=True)
        g_rem = np.einsum("bnd,ndt->bnt", g_tmp, W_re, optimize=True)
        return decompose_adjoint(g_trend, g_rem, cfg.kernel)

    def _scatter_periodic(self, gV, day_idx, week_idx):
        c, g = self.config.c, self.params.grads
        off = 0
        if self.config.use_time_of_day:
            np.add.at(g["day_table"], day_idx, gV[:, off : off + c])
            off += c
        if self.config.use_day_of_week:
            np.add.at(g["week_table"], week_idx, gV[:, off : off + c])

    def num_parameters(self):
        return self.params.num_parameters()


# -- single-node views ---------------------------------------------------------


def _slots_for(calendar, anchor_t, T_h):
    ds_, ws_ = calendar.slots(np.array([anchor_t - T_h]))
    de, we = calendar.slots(np.array([anchor_t]))
    return ds_, ws_, de, we


def encode(model, history_i, i, anchor_t, calendar):
    """Embedding vector of length ``emb_dim`` for node ``i`` at ``anchor_t``."""
    cfg = model.config
    x = np.asarray(history_i, dtype=np.float64)
    if x.shape != (cfg.T_h,):
        raise DimensionError(f"history must have length {cfg.T_h}, got {x.shape}")
    w = model.materialize_node_weights(i)
    trend, rem = decompose(x, cfg.kernel)
    e_tmp = w.W_tr @ trend + w.b_tr + w.W_re @ rem + w.b_re
    ds_, ws_, de, we = _slots_for(calendar, anchor_t, cfg.T_h)
    start = model.periodic_vectors(ds_, ws_)[0]
    end = model.periodic_vectors(de, we)[0]
    return np.concatenate([start, e_tmp, end])


def decode(model, emb):
    emb = np.asarray(emb, dtype=np.float64)
    if emb.shape != (model.config.emb_dim,):
        raise DimensionError(f"embedding must have length {model.config.emb_dim}, got {emb.shape}")
    return model.decode_rows(emb[None])[0]


def predict_head(model, y_L):
    y_L = np.asarray(y_L, dtype=np.float64)
    if y_L.shape != (model.config.emb_dim,):
        raise DimensionError(f"decoder output must have length {model.config.emb_dim}, got {y_L.shape}")
    return model.head_rows(y_L[None])[0]


def forward_sample(model, history, anchor_t, calendar):
    """Predictions (N, T_p) for one normalized history matrix (N, T_h)."""
    history = np.asarray(history, dtype=np.float64)
    return model.forward(history[None], _slots_for(calendar, anchor_t, model.config.T_h))[0]

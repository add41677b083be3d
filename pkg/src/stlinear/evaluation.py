"""Forecast metrics and analytic efficiency accounting (MACs, memory)."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError

BYTES_PER_FLOAT = 8


@dataclass
class EvalReport:
    mae: float
    rmse: float
    mape: float  # percent; nan when no target exceeds the mask threshold
    horizon_mae: np.ndarray = field(repr=False)
    horizon_rmse: np.ndarray = field(repr=False)
    horizon_mape: np.ndarray = field(repr=False)
    samples: int = 0
    mask_count: int = 0

    def to_text(self, prefix=""):
        lines = [
            f"{prefix}mae={self.mae:.6f}",
            f"{prefix}rmse={self.rmse:.6f}",
            f"{prefix}mape={_fmt_pct(self.mape)}",
            f"{prefix}samples={self.samples}",
            f"{prefix}mask_count={self.mask_count}",
        ]
        return "\n".join(lines) + "\n"

    def horizon_rows(self):
        for h in range(len(self.horizon_mae)):
            yield h + 1, self.horizon_mae[h], self.horizon_rmse[h], self.horizon_mape[h]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["horizon", "mae", "rmse", "mape"])
            for h, a, r, p in self.horizon_rows():
                w.writerow([h, f"{a:.6f}", f"{r:.6f}", _fmt_pct(p)])


def _fmt_pct(x):
    return "undefined" if math.isnan(x) else f"{x:.4f}"


def _metrics(err, target, threshold, axis):
    abs_err = np.abs(err)
    mae = abs_err.mean(axis=axis)
    rmse = np.sqrt((err * err).mean(axis=axis))
    mask = target > threshold
    count = mask.sum(axis=axis)
    ratio = np.where(mask, abs_err / np.where(mask, np.abs(target), 1.0), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mape = np.where(count > 0, ratio.sum(axis=axis) / count * 100.0, np.nan)
    return mae, rmse, mape, count


def compute_metrics(preds, targets, mask_threshold=0.0):
    """MAE and RMSE over every entry; MAPE over targets above ``mask_threshold``.

    Arrays are on the raw traffic scale with the horizon on the last axis.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise DimensionError(f"prediction shape {preds.shape} != target shape {targets.shape}")
    if preds.size == 0:
        raise DimensionError("cannot score an empty prediction set")
    err = preds - targets
    mae, rmse, mape, count = _metrics(err, targets, mask_threshold, None)
    flat_err = err.reshape(-1, err.shape[-1])
    flat_tgt = targets.reshape(-1, targets.shape[-1])
    h_mae, h_rmse, h_mape, _ = _metrics(flat_err, flat_tgt, mask_threshold, 0)
    return EvalReport(float(mae), float(rmse), float(mape), h_mae, h_rmse, h_mape,
                      samples=preds.shape[0] if preds.ndim > 1 else 1, mask_count=int(count))


# -- efficiency accounting -----------------------------------------------------


@dataclass
class MacReport:
    macs_per_sample: int
    macs_per_epoch: int
    parameter_count: int
    activation_memory_bytes: int
    mode: str = "inference"

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in (
            ("mode", self.mode),
            ("macs_per_sample", self.macs_per_sample),
            ("macs_per_epoch", self.macs_per_epoch),
            ("parameter_count", self.parameter_count),
            ("activation_memory_bytes", self.activation_memory_bytes),
        ))


def parameter_count(cfg):
    d, T_h, e, c = cfg.d, cfg.T_h, cfg.e, cfg.c
    emb, hid = cfg.emb_dim, cfg.hidden_dim
    if cfg.use_spatial:
        enc = 2 * d * T_h * e + 2 * d * e + cfg.N * e
    else:
        enc = 2 * d * T_h + 2 * d
    tables = cfg.N_d * c * cfg.use_time_of_day + 7 * c * cfg.use_day_of_week
    dec = cfg.L * (2 * hid * emb + hid + emb)
    return enc + tables + dec + cfg.T_p * emb + cfg.T_p


def node_macs(cfg, mode="inference"):
    """Forward multiply-accumulates for one node of one sample."""
    d, T_h, e = cfg.d, cfg.T_h, cfg.e
    enc = 2 * d * T_h
    if mode == "training" and cfg.use_spatial:
        enc += 2 * (d * T_h * e + d * e)
    dec = cfg.L * 2 * cfg.hidden_dim * cfg.emb_dim
    return enc + dec + cfg.T_p * cfg.emb_dim


def activation_elements(cfg):
    """Floats cached per sample by one forward pass."""
    per_node = 3 * cfg.T_h + cfg.emb_dim + cfg.L * (2 * cfg.hidden_dim + cfg.emb_dim) + cfg.T_p
    return cfg.N * per_node + 2 * cfg.period_dim


def count_macs(cfg, mode="inference", samples_per_epoch=1):
    """Exact symbolic MAC count.

    Inference assumes pre-materialized node weights.  Training adds the pool
    contraction and costs backward as twice the forward pass.
    """
    if mode not in ("inference", "training"):
        raise ValueError(f"mode must be 'inference' or 'training', got {mode!r}")
    per_sample = cfg.N * node_macs(cfg, mode)
    if mode == "training":
        per_sample *= 3
    return MacReport(
        macs_per_sample=per_sample,
        macs_per_epoch=per_sample * int(samples_per_epoch),
        parameter_count=parameter_count(cfg),
        activation_memory_bytes=activation_elements(cfg) * BYTES_PER_FLOAT,
        mode=mode,
    )


def estimate_memory(cfg, batch_size, mode="training"):
    """Analytical lower bound in bytes: parameters (plus Adam moments when
    training) and the activations cached for one batch."""
    if mode not in ("inference", "training"):
        raise ValueError(f"mode must be 'inference' or 'training', got {mode!r}")
    copies = 3 if mode == "training" else 1
    params = parameter_count(cfg) * copies
    return (params + int(batch_size) * activation_elements(cfg)) * BYTES_PER_FLOAT


def instrumented_forward(model, history_i, i, anchor_t, calendar, counted=None):
    """Single-node forward through scalar loops that count every multiply.

    Returns ``(prediction, macs)``; the prediction matches the batched path.
    """
    from .decomposition import decompose

    cfg = model.config
    counted = kernels.counted_forward if counted is None else counted
    w = model.materialize_node_weights(i)
    trend, rem = decompose(np.asarray(history_i, dtype=np.float64), cfg.kernel)
    start = model.periodic_vectors(*calendar.slots(np.array([anchor_t - cfg.T_h])))[0]
    end = model.periodic_vectors(*calendar.slots(np.array([anchor_t])))[0]
    p = model.params
    WA = np.stack([p[f"W_A.{l}"] for l in range(cfg.L)])
    bA = np.stack([p[f"b_A.{l}"] for l in range(cfg.L)])
    WB = np.stack([p[f"W_B.{l}"] for l in range(cfg.L)])
    bB = np.stack([p[f"b_B.{l}"] for l in range(cfg.L)])
    pred, count = counted(trend, rem, np.ascontiguousarray(w.W_tr), w.b_tr,
                          np.ascontiguousarray(w.W_re), w.b_re,
                          np.ascontiguousarray(start), np.ascontiguousarray(end),
                          WA, bA, WB, bB, p["W_p"], p["b_p"])
    return pred, int(count)


def instrumented_macs(model, history, anchor_t, calendar, counted=None):
    """Total counted multiplies for a full (N, T_h) sample."""
    return sum(instrumented_forward(model, history[i], i, anchor_t, calendar, counted)[1]
               for i in range(model.config.N))


def write_mac_csv(path, rows):
    """Write sweep rows (dicts with identical keys) as CSV."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)

"""Mini-batch training with masked MAE, Adam and best-on-validation selection,
plus the binary checkpoint format."""

import io
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import DLinear
from .data import Normalizer
from .errors import CheckpointError, LossError, TrainingError
from .evaluation import compute_metrics
from .model import ModelConfig, STLinear
from .numeric import AdamState, adam_step

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"STLCKPT1"
FORMAT_VERSION = 1
MODEL_KINDS = {"stlinear": STLinear, "dlinear": DLinear}


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    lr: float = 2e-4
    seed: int = 0
    patience: Optional[int] = None
    loss_mask_threshold: float = 0.0
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError(f"invalid training config: {self}")


@dataclass
class Checkpoint:
    model_kind: str
    config: ModelConfig
    normalizer: Normalizer
    tensors: "OrderedDict[str, np.ndarray]"
    metadata: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)  # not serialized
    version: int = FORMAT_VERSION


def masked_mae_loss(pred, target, threshold=0.0):
    """Mean absolute error over entries whose target exceeds ``threshold``.

    Returns ``(loss, grad)`` where ``grad`` is the (sub)gradient w.r.t. ``pred``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LossError(f"prediction shape {pred.shape} != target shape {target.shape}")
    mask = target > threshold
    M = int(mask.sum())
    if M == 0:
        raise LossError("every target entry is masked")
    diff = np.where(mask, pred - target, 0.0)
    return float(np.abs(diff).sum() / M), np.sign(diff) / M


def build_model(kind, config, params=None):
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None
    return cls(config, params)


def predict(model, windows, normalizer, batch_size=256):
    """Raw-scale predictions (B, N, T_p) for a whole window set."""
    out = []
    for lo in range(0, len(windows), batch_size):
        idx = np.arange(lo, min(lo + batch_size, len(windows)))
        X = normalizer.normalize(windows.histories(idx))
        out.append(normalizer.denormalize(model.forward(X, windows.calendar_slots(idx))))
    T_p = windows.T_p
    return np.concatenate(out) if out else np.zeros((0, windows.dataset.num_nodes, T_p))


def evaluate(model, windows, normalizer, mask_threshold=0.0, batch_size=256):
    return compute_metrics(predict(model, windows, normalizer, batch_size),
                           windows.targets(), mask_threshold)


def _snapshot(params):
    return OrderedDict((k, v.copy()) for k, v in params.items())


def train(model, train_set, val_set, normalizer, cfg, kind=None, callback=None):
    """Train ``model`` in place and return the best-validation :class:`Checkpoint`.

    ``callback(epoch, train_loss, val_mae)`` is invoked after every epoch.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    kind = kind or next(k for k, c in MODEL_KINDS.items() if isinstance(model, c))
    params = model.params
    states = {name: AdamState.like(v) for name, v in params.items()}
    rng = np.random.default_rng(cfg.seed)
    std = normalizer.std
    params.zero_grad()

    best_mae, best_epoch, best = np.inf, 0, _snapshot(params)
    history = []
    stale = 0
    M = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(M)
        losses = []
        for b, lo in enumerate(range(0, M, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            X = normalizer.normalize(train_set.histories(idx))
            pred = normalizer.denormalize(model.forward(X, train_set.calendar_slots(idx)))
            loss, grad = masked_mae_loss(pred, train_set.targets(idx), cfg.loss_mask_threshold)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            model.backward(grad * std)
            for name, value in params.items():
                adam_step(value, params.grads[name], states[name], cfg.lr, name)
            params.zero_grad()
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_mae = evaluate(model, val_set, normalizer, batch_size=cfg.eval_batch_size).mae
        history.append((epoch, train_loss, val_mae))
        log.info("epoch %d train_loss %.4f val_mae %.4f", epoch, train_loss, val_mae)
        if callback is not None:
            callback(epoch, train_loss, val_mae)
        if val_mae < best_mae:
            best_mae, best_epoch, best = val_mae, epoch, _snapshot(params)
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                log.info("early stop after %d epochs without improvement", stale)
                break

    params.load(best)
    meta = {"epoch": best_epoch, "best_val_mae": float(best_mae), "seed": cfg.seed,
            "epochs_run": len(history)}
    return Checkpoint(kind, model.config, normalizer, best, meta, history)


# -- checkpoint file -----------------------------------------------------------


def _manifest(ckpt):
    lines = [f"format_version={ckpt.version}", f"model={ckpt.model_kind}"]
    for key, value in ckpt.config.to_dict().items():
        lines.append(f"config.{key}={value}")
    lines.append(f"normalizer.mean={float(ckpt.normalizer.mean).hex()}")
    lines.append(f"normalizer.std={float(ckpt.normalizer.std).hex()}")
    for key, value in ckpt.metadata.items():
        if isinstance(value, float):
            value = value.hex()
        lines.append(f"meta.{key}={value}")
    for name, arr in ckpt.tensors.items():
        lines.append(f"tensor.{name}=" + "x".join(str(s) for s in arr.shape))
    return ("\n".join(lines) + "\n").encode("utf-8")


def checkpoint_bytes(ckpt):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    manifest = _manifest(ckpt)
    buf.write(struct.pack("<Q", len(manifest)))
    buf.write(manifest)
    for arr in ckpt.tensors.values():
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path, ckpt):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(ckpt))


def _parse_float(s):
    try:
        return float.fromhex(s)
    except ValueError:
        return float(s)


def _take(data, pos, n, what):
    if pos + n > len(data):
        raise CheckpointError(f"corrupt checkpoint: truncated while reading {what}")
    return data[pos : pos + n], pos + n


def parse_checkpoint(data):
    magic, pos = _take(data, 0, len(CHECKPOINT_MAGIC), "magic")
    if magic != CHECKPOINT_MAGIC:
        if magic[:7] == CHECKPOINT_MAGIC[:7]:
            raise CheckpointError(f"unsupported checkpoint format version {magic[7:]!r}")
        raise CheckpointError("not a checkpoint file (bad magic)")
    raw, pos = _take(data, pos, 8, "manifest length")
    (mlen,) = struct.unpack("<Q", raw)
    raw, pos = _take(data, pos, mlen, "manifest")
    entries = OrderedDict()
    for line in raw.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            entries[key] = value
    version = int(entries.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")

    config = ModelConfig.from_dict({k[7:]: v for k, v in entries.items() if k.startswith("config.")})
    normalizer = Normalizer(_parse_float(entries["normalizer.mean"]),
                            _parse_float(entries["normalizer.std"]))
    meta = {}
    for k, v in entries.items():
        if k.startswith("meta."):
            key = k[5:]
            meta[key] = int(v) if v.lstrip("-").isdigit() else _parse_float(v)

    tensors = OrderedDict()
    for k, v in entries.items():
        if not k.startswith("tensor."):
            continue
        name = k[7:]
        expected = tuple(int(s) for s in v.split("x")) if v else ()
        raw, pos = _take(data, pos, 4, f"{name} rank")
        (ndim,) = struct.unpack("<I", raw)
        raw, pos = _take(data, pos, 8 * ndim, f"{name} shape")
        shape = struct.unpack(f"<{ndim}Q", raw)
        if tuple(shape) != expected:
            raise CheckpointError(f"tensor {name}: shape header {shape} disagrees with manifest {expected}")
        n = int(np.prod(shape)) * 8
        raw, pos = _take(data, pos, n, f"{name} data")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(data):
        raise CheckpointError(f"corrupt checkpoint: {len(data) - pos} trailing bytes")
    return Checkpoint(entries["model"], config, normalizer, tensors, meta)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())


def model_from_checkpoint(ckpt):
    model = build_model(ckpt.model_kind, ckpt.config)
    expected = {k: v.shape for k, v in model.params.items()}
    got = {k: v.shape for k, v in ckpt.tensors.items()}
    if expected != got:
        raise CheckpointError(f"checkpoint tensors do not match its config: {got} vs {expected}")
    model.params.load(ckpt.tensors)
    return model


def check_compatible(ckpt, config):
    """Raise unless ``ckpt`` can be evaluated under ``config``."""
    keys = ("T_h", "T_p", "N", "N_d")
    diff = [f"{k}: checkpoint {getattr(ckpt.config, k)} vs requested {getattr(config, k)}"
            for k in keys if getattr(ckpt.config, k) != getattr(config, k)]
    if diff:
        raise CheckpointError("incompatible checkpoint (" + "; ".join(diff) + ")")

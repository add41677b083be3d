"""Traffic series loading, calendar features, windowing, splitting, scaling."""

import csv
import datetime as dt
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import LoadError, NormalizationError

MAGIC = b"STF1"

# Node counts and first day of each public PEMS release (midnight start).
PEMS_DATASETS = {
    "PEMS03": (358, "2018-09-01T00:00"),
    "PEMS04": (307, "2018-01-01T00:00"),
    "PEMS07": (883, "2017-07-01T00:00"),
    "PEMS08": (170, "2016-07-01T00:00"),
}


def _parse_time(value):
    if isinstance(value, dt.datetime):
        return value
    if isinstance(value, dt.date):
        return dt.datetime(value.year, value.month, value.day)
    return dt.datetime.fromisoformat(str(value).strip())


@dataclass(frozen=True)
class Calendar:
    """Maps integer time indices to (time-of-day slot, weekday) pairs.

    Indices are not range-checked here so that window start times one step
    before the first observation still resolve.
    """

    start_time: dt.datetime
    interval_minutes: int

    def __post_init__(self):
        if self.interval_minutes <= 0 or 1440 % self.interval_minutes:
            raise ValueError(f"interval_minutes must divide 1440, got {self.interval_minutes}")

    @property
    def steps_per_day(self):
        return 1440 // self.interval_minutes

    @property
    def offset(self):
        minutes = self.start_time.hour * 60 + self.start_time.minute
        return minutes // self.interval_minutes

    def slots(self, t):
        t = np.asarray(t, dtype=np.int64)
        absolute = self.offset + t
        day = np.mod(absolute, self.steps_per_day)
        week = np.mod(self.start_time.weekday() + np.floor_divide(absolute, self.steps_per_day), 7)
        return day, week


@dataclass
class SeriesDataset:
    values: np.ndarray  # (N, T)
    start_time: dt.datetime
    interval_minutes: int
    name: str = ""

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise LoadError(f"values must be a 2-D node x time matrix, got shape {self.values.shape}")
        self.start_time = _parse_time(self.start_time)
        self.calendar = Calendar(self.start_time, int(self.interval_minutes))
        bad = np.argwhere(~np.isfinite(self.values))
        if len(bad):
            i, t = bad[0]
            raise LoadError(f"non-finite value at node {i}, step {t}")

    @property
    def num_nodes(self):
        return self.values.shape[0]

    @property
    def num_steps(self):
        return self.values.shape[1]

    @property
    def steps_per_day(self):
        return self.calendar.steps_per_day


def time_indices(ds, t):
    """Return ``(day_index, week_index)`` for step ``t`` of ``ds``."""
    if not 0 <= t < ds.num_steps:
        raise IndexError(f"time index {t} outside [0, {ds.num_steps})")
    day, week = ds.calendar.slots(t)
    return int(day), int(week)


# -- file formats -------------------------------------------------------------


def meta_path(path):
    return str(path) + ".meta"


def read_meta(path):
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise LoadError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def write_meta(path, start_time, interval_minutes, name=""):
    with open(path, "w") as fh:
        fh.write(f"start_time={_parse_time(start_time).isoformat()}\n")
        fh.write(f"interval_minutes={int(interval_minutes)}\n")
        if name:
            fh.write(f"name={name}\n")


def save_stf(path, ds):
    """Write the binary container plus its ``.meta`` sidecar."""
    N, T = ds.values.shape
    with open(path, "wb") as fh:
        fh.write(b"%s %d %d\n" % (MAGIC, N, T))
        fh.write(ds.values.astype("<f8").tobytes(order="C"))
    write_meta(meta_path(path), ds.start_time, ds.interval_minutes, ds.name)


def _read_stf(path):
    with open(path, "rb") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3 or parts[0] != MAGIC:
            raise LoadError(f"{path}: bad header {header[:40]!r}")
        try:
            N, T = int(parts[1]), int(parts[2])
        except ValueError:
            raise LoadError(f"{path}: bad header {header[:40]!r}") from None
        if N <= 0 or T <= 0:
            raise LoadError(f"{path}: non-positive dimensions {N}x{T}")
        payload = fh.read()
    if len(payload) != N * T * 8:
        raise LoadError(f"{path}: expected {N * T * 8} data bytes for {N}x{T}, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(N, T).astype(np.float64)


def read_csv_matrix(path):
    """Read a T-rows x N-columns CSV with one header line; returns (N, T)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LoadError(f"{path}: empty file")
        width = len(header)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise LoadError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            for col, v in enumerate(vals):
                if not math.isfinite(v):
                    raise LoadError(f"{path}:{lineno}: non-finite value in column {col}")
            rows.append(vals)
    if not rows:
        raise LoadError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64).T.copy()


def read_npz_matrix(path, key="data", channel=0):
    """Read a public PEMS ``.npz`` release (``data`` of shape (T, N, C))."""
    with np.load(path) as z:
        if key not in z:
            raise LoadError(f"{path}: no array named {key!r} (have {sorted(z.files)})")
        arr = np.asarray(z[key], dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., channel]
    if arr.ndim != 2:
        raise LoadError(f"{path}: expected (T, N[, C]) array, got {arr.shape}")
    return arr.T.copy()


def load_dataset(path, start_time=None, interval_minutes=None):
    """Load a dataset from an STF1 container, a CSV, or a PEMS ``.npz``.

    Calendar metadata not passed explicitly is read from ``<path>.meta``.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise LoadError(f"dataset file not found: {path}")
    meta = read_meta(meta_path(path)) if os.path.exists(meta_path(path)) else {}
    if start_time is None:
        start_time = meta.get("start_time")
    if interval_minutes is None:
        interval_minutes = meta.get("interval_minutes", 5)
    if start_time is None:
        raise LoadError(f"{path}: no start_time given and no {meta_path(path)} sidecar")

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        values = _read_stf(path)
    elif path.endswith(".npz"):
        values = read_npz_matrix(path)
    else:
        values = read_csv_matrix(path)
    name = meta.get("name", os.path.splitext(os.path.basename(path))[0])
    return SeriesDataset(values, start_time, int(interval_minutes), name=name)


# -- windows ------------------------------------------------------------------


@dataclass(frozen=True)
class WindowSample:
    history: np.ndarray  # (N, T_h)
    target: np.ndarray  # (N, T_p)
    anchor_t: int


class WindowSet(Sequence):
    """Chronological sequence of windows over one dataset.

    Indexing with an int yields a :class:`WindowSample` (views into the
    dataset); slicing yields another ``WindowSet``.
    """

    def __init__(self, ds, T_h, T_p, anchors):
        self.dataset = ds
        self.T_h = T_h
        self.T_p = T_p
        self.anchors = np.asarray(anchors, dtype=np.int64)

    def __len__(self):
        return len(self.anchors)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return WindowSet(self.dataset, self.T_h, self.T_p, self.anchors[i])
        a = int(self.anchors[i])
        v = self.dataset.values
        return WindowSample(v[:, a - self.T_h + 1 : a + 1], v[:, a + 1 : a + 1 + self.T_p], a)

    def histories(self, idx=None):
        """Stacked histories, shape (B, N, T_h)."""
        a = self.anchors if idx is None else self.anchors[idx]
        view = np.lib.stride_tricks.sliding_window_view(self.dataset.values, self.T_h, axis=1)
        return np.ascontiguousarray(view[:, a - self.T_h + 1].transpose(1, 0, 2))

    def targets(self, idx=None):
        """Stacked targets, shape (B, N, T_p)."""
        a = self.anchors if idx is None else self.anchors[idx]
        view = np.lib.stride_tricks.sliding_window_view(self.dataset.values, self.T_p, axis=1)
        return np.ascontiguousarray(view[:, a + 1].transpose(1, 0, 2))

    def calendar_slots(self, idx=None):
        """(day_start, week_start, day_end, week_end) index arrays.

        The start slot is taken at ``anchor - T_h``, one step before the first
        history element; the end slot at the anchor itself.
        """
        a = self.anchors if idx is None else self.anchors[idx]
        cal = self.dataset.calendar
        ds_, ws_ = cal.slots(a - self.T_h)
        de, we = cal.slots(a)
        return ds_, ws_, de, we


def make_windows(ds, T_h, T_p):
    T = ds.num_steps
    if T_h < 1 or T_p < 1:
        raise ValueError(f"T_h and T_p must be positive, got {T_h}, {T_p}")
    if T < T_h + T_p:
        raise ValueError(f"series of length {T} too short for T_h={T_h} + T_p={T_p}")
    return WindowSet(ds, T_h, T_p, np.arange(T_h - 1, T - T_p))


def split_samples(samples, ratios=(0.6, 0.2, 0.2)):
    """Chronological train/val/test split at floor(0.6 M) and floor(0.8 M)."""
    M = len(samples)
    if M < 10:
        raise ValueError(f"need at least 10 samples to split, got {M}")
    a = math.floor(ratios[0] * M)
    b = math.floor((ratios[0] + ratios[1]) * M)
    return samples[:a], samples[a:b], samples[b:]


# -- normalization ------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    mean: float
    std: float

    def __post_init__(self):
        if not (self.std > 0 and math.isfinite(self.std)):
            raise NormalizationError(f"standard deviation must be positive, got {self.std}")

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


def fit_normalizer(train):
    """Global z-score over all nodes of the training portion.

    ``train`` is a :class:`WindowSet` (the time range its histories cover is
    used) or a raw array.
    """
    if isinstance(train, WindowSet):
        if len(train) == 0:
            raise NormalizationError("training portion is empty")
        lo = int(train.anchors.min()) - train.T_h + 1
        hi = int(train.anchors.max()) + 1
        data = train.dataset.values[:, lo:hi]
    else:
        data = np.asarray(train, dtype=np.float64)
        if data.size == 0:
            raise NormalizationError("training portion is empty")
    std = float(data.std())
    if not std > 0:
        raise NormalizationError("training data has zero variance")
    return Normalizer(float(data.mean()), std)


# -- synthetic data -----------------------------------------------------------


def synthetic_dataset(num_nodes=8, days=21, steps_per_day=24, noise=0.05, seed=0,
                      start_time="2024-01-01T00:00"):
    """Positive traffic-like series with daily rush-hour and weekly structure.

    The signal is a daily profile (each node gets its own scale, base level and
    rush-hour timing) plus an additive weekday offset that drops on weekends.  ``noise`` is the Gaussian noise std relative to each node scale.
    """
    rng = np.random.default_rng(seed)
    T = days * steps_per_day
    t = np.arange(T)
    hour = (t % steps_per_day) * 24.0 / steps_per_day
    cal = Calendar(_parse_time(start_time), 1440 // steps_per_day)
    _, weekday = cal.slots(t)
    weekend = np.isin(weekday, (5, 6))

    values = np.empty((num_nodes, T))
    for i in range(num_nodes):
        scale = rng.uniform(50, 150)
        base = rng.uniform(0.2, 0.4)
        am, pm = rng.uniform(7, 9), rng.uniform(16, 18.5)
        width = rng.uniform(0.8, 1.6)
        daily = (base
                 + 0.5 * np.sin(np.pi * np.clip((hour - 5.5) / 17.0, 0, 1))
                 + np.exp(-0.5 * ((hour - am) / width) ** 2)
                 + 0.8 * np.exp(-0.5 * ((hour - pm) / width) ** 2))
        weekly = np.where(weekend, -rng.uniform(0.3, 0.6), rng.uniform(-0.05, 0.05, size=7)[weekday])
        signal = scale * (daily + weekly)
        values[i] = signal + noise * scale * rng.standard_normal(T)
    return SeriesDataset(np.maximum(values, 1.0), start_time, 1440 // steps_per_day, name="synthetic")

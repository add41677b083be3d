"""Static SVG figures from the CSV files the CLI writes."""

import csv
import os
import shutil

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import LoadError  # noqa: E402


def read_columns(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise LoadError(f"{path}: empty CSV")
        rows = list(reader)
    if not rows:
        raise LoadError(f"{path}: CSV has a header but no rows")
    cols = {k: [r[k] for r in rows] for k in reader.fieldnames}
    return cols


def _floats(values):
    return [float(v) for v in values]


def plot_loss(cols, ax):
    epoch = _floats(cols["epoch"])
    ax.plot(epoch, _floats(cols["train_loss"]), label="train loss")
    ax.plot(epoch, _floats(cols["val_mae"]), label="validation MAE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MAE")
    ax.legend()


def plot_macs(cols, fig):
    rows = list(zip(cols["sweep"], _floats(cols["N"]), _floats(cols["T_p"]),
                    _floats(cols["macs_per_epoch"])))
    sweeps = [s for s in ("N", "T_p") if any(r[0] == s for r in rows)]
    axes = fig.subplots(1, len(sweeps), squeeze=False)[0]
    for ax, sweep in zip(axes, sweeps):
        sel = [r for r in rows if r[0] == sweep]
        x = [r[1] if sweep == "N" else r[2] for r in sel]
        ax.plot(x, [r[3] for r in sel], marker="o")
        ax.set_yscale("log")
        ax.set_xlabel("number of nodes N" if sweep == "N" else "horizon T_p")
        ax.set_ylabel("MACs per epoch")


def plot_predictions(cols, fig):
    nodes = sorted(set(int(n) for n in cols["node"]))
    axes = fig.subplots(len(nodes), 1, squeeze=False, sharex=True)[:, 0]
    node_col = [int(n) for n in cols["node"]]
    t, pred, truth = _floats(cols["t"]), _floats(cols["pred"]), _floats(cols["truth"])
    for ax, n in zip(axes, nodes):
        idx = [k for k, v in enumerate(node_col) if v == n]
        ax.plot([t[k] for k in idx], [truth[k] for k in idx], lw=0.8, label="truth")
        ax.plot([t[k] for k in idx], [pred[k] for k in idx], lw=0.8, label="prediction")
        ax.set_ylabel(f"node {n}")
    axes[0].legend(loc="upper right")
    axes[-1].set_xlabel("time step")


def plot_csv(path, out):
    """Pick the figure type from the CSV header; writes ``out`` plus a CSV copy."""
    cols = read_columns(path)
    fig = plt.figure(figsize=(8, 4.5))
    if {"epoch", "train_loss", "val_mae"} <= cols.keys():
        plot_loss(cols, fig.add_subplot())
    elif {"sweep", "macs_per_epoch"} <= cols.keys():
        plot_macs(cols, fig)
    elif {"t", "node", "pred", "truth"} <= cols.keys():
        plot_predictions(cols, fig)
    else:
        plt.close(fig)
        raise LoadError(f"{path}: unrecognized columns {sorted(cols)}")
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    copy = os.path.splitext(out)[0] + ".csv"
    if os.path.abspath(copy) != os.path.abspath(path):
        shutil.copyfile(path, copy)
    return out

"""``stlinear`` command line interface.

Defaults: d=32, e=8, c=32, L=3, Adam with lr 2e-4, batch 32, 300 epochs,
T_h = T_p = 12.
"""

import argparse
import csv
import logging
import os
import sys
import time


from . import data as dataio
from .baselines import HistoricalAverage, Persistence
from .errors import STLinearError
from .evaluation import compute_metrics, count_macs, estimate_memory, write_mac_csv
from .model import ModelConfig
from .training import (
    TrainConfig,
    build_model,
    check_compatible,
    load_checkpoint,
    model_from_checkpoint,
    predict,
    save_checkpoint,
    train,
)

log = logging.getLogger("stlinear")

MODEL_DEFAULTS = {"d": 32, "e": 8, "c": 32, "L": 3, "hidden": None, "kernel": 3, "seed": 0}
TRAIN_DEFAULTS = {"epochs": 300, "batch": 32, "lr": 2e-4, "horizon": 12, "patience": None}
ABLATIONS = {"spatial": "use_spatial", "tod": "use_time_of_day", "dow": "use_day_of_week"}


def read_config_file(path):
    conf = dataio.read_meta(path)
    return {k.replace("-", "_"): v for k, v in conf.items()}


def resolve(args, key, defaults, conf, cast):
    """Flag > config file > built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in conf:
        return None if conf[key] in ("", "None") else cast(conf[key])
    return defaults[key]


def _int_or_none(x):
    return None if x in (None, "", "None") else int(x)


def run_settings(args):
    conf = read_config_file(args.config) if getattr(args, "config", None) else {}
    m = {k: resolve(args, k, MODEL_DEFAULTS, conf, _int_or_none if k == "hidden" else int)
         for k in MODEL_DEFAULTS}
    t = {
        "epochs": resolve(args, "epochs", TRAIN_DEFAULTS, conf, int),
        "batch": resolve(args, "batch", TRAIN_DEFAULTS, conf, int),
        "lr": resolve(args, "lr", TRAIN_DEFAULTS, conf, float),
        "horizon": resolve(args, "horizon", TRAIN_DEFAULTS, conf, int),
        "patience": resolve(args, "patience", TRAIN_DEFAULTS, conf, _int_or_none),
    }
    ablate = list(getattr(args, "ablate", None) or [])
    if not ablate and conf.get("ablate"):
        ablate = [a.strip() for a in conf["ablate"].split(",") if a.strip()]
    return m, t, ablate


def prepare(path, T_h, T_p):
    ds = dataio.load_dataset(path)
    windows = dataio.make_windows(ds, T_h, T_p)
    return ds, windows, dataio.split_samples(windows)


def _add_model_flags(p):
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--horizon", type=int, help="T_h = T_p (default 12)")
    p.add_argument("--kernel", type=int, help="moving-average kernel, odd (default 3; "
                   "candidates 3, 5, 15, 25)")
    p.add_argument("--d", type=int, help="temporal embedding width (default 32)")
    p.add_argument("--e", type=int, help="spatial embedding width (default 8)")
    p.add_argument("--c", type=int, help="periodicity embedding width (default 32)")
    p.add_argument("--L", "--layers", dest="L", type=int, help="residual blocks (default 3)")
    p.add_argument("--hidden", type=int, help="decoder inner width (default d + 4c)")
    p.add_argument("--seed", type=int, help="PRNG seed (default 0)")
    p.add_argument("--ablate", action="append", choices=sorted(ABLATIONS),
                   help="drop the spatial, time-of-day or day-of-week embedding; repeatable")


# -- commands -----------------------------------------------------------------


def cmd_convert(args):
    if args.input.endswith(".npz"):
        values = dataio.read_npz_matrix(args.input, channel=args.channel)
    else:
        values = dataio.read_csv_matrix(args.input)
    meta = dataio.read_meta(args.meta) if args.meta else {}
    name = args.name or meta.get("name", "")
    start = args.start_time or meta.get("start_time")
    if start is None and name.upper() in dataio.PEMS_DATASETS:
        start = dataio.PEMS_DATASETS[name.upper()][1]
    if start is None:
        raise STLinearError("no start time: pass --start-time or --meta")
    interval = args.interval or int(meta.get("interval_minutes", 5))
    ds = dataio.SeriesDataset(values, start, interval, name=name)
    dataio.save_stf(args.out, ds)
    print(f"N={ds.num_nodes} T={ds.num_steps} N_d={ds.steps_per_day}")
    return 0


def cmd_synth(args):
    ds = dataio.synthetic_dataset(args.nodes, args.days, args.steps_per_day,
                                  noise=args.noise, seed=args.seed)
    dataio.save_stf(args.out, ds)
    print(f"N={ds.num_nodes} T={ds.num_steps} N_d={ds.steps_per_day}")
    return 0


def cmd_train(args):
    m, t, ablate = run_settings(args)
    H = t["horizon"]
    ds, windows, (tr, va, te) = prepare(args.dataset, H, H)
    flags = {v: a not in ablate for a, v in ABLATIONS.items()}
    cfg = ModelConfig(T_h=H, T_p=H, N=ds.num_nodes, N_d=ds.steps_per_day, **m, **flags)
    normalizer = dataio.fit_normalizer(tr)
    kind = "dlinear" if args.baseline == "dlinear" else "stlinear"
    model = build_model(kind, cfg)
    tcfg = TrainConfig(epochs=t["epochs"], batch_size=t["batch"], lr=t["lr"], seed=m["seed"],
                       patience=t["patience"])
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_mae"])

        def on_epoch(epoch, loss, val):
            writer.writerow([epoch, f"{loss:.6f}", f"{val:.6f}"])
            fh.flush()
            if not args.quiet:
                print(f"epoch {epoch:4d}  train_loss {loss:.4f}  val_mae {val:.4f}", flush=True)

        started = time.perf_counter()
        ckpt = train(model, tr, va, normalizer, tcfg, kind=kind, callback=on_epoch)
        elapsed = time.perf_counter() - started
    path = args.checkpoint or os.path.join(args.out, "model.ckpt")
    save_checkpoint(path, ckpt)
    print(f"model={kind} parameters={model.num_parameters()} best_epoch={ckpt.metadata['epoch']} "
          f"best_val_mae={ckpt.metadata['best_val_mae']:.4f} seconds={elapsed:.1f}")
    print(f"checkpoint={path}")
    print(f"log={log_path}")
    return 0


def _write_prediction_csv(path, windows, preds, nodes):
    targets = windows.targets()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "pred", "truth"])
        for i in range(min(nodes, preds.shape[1])):
            for s, a in enumerate(windows.anchors):
                w.writerow([int(a) + 1, i, f"{preds[s, i, 0]:.6f}", f"{targets[s, i, 0]:.6f}"])


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    ds, windows, splits = prepare(args.dataset, cfg.T_h, cfg.T_p)
    requested = ModelConfig(**{**cfg.to_dict(), "N": ds.num_nodes, "N_d": ds.steps_per_day})
    if args.horizon is not None:
        requested = ModelConfig(**{**requested.to_dict(), "T_h": args.horizon, "T_p": args.horizon})
    check_compatible(ckpt, requested)
    split = dict(zip(("train", "val", "test"), splits))[args.split]
    model = model_from_checkpoint(ckpt)
    if ckpt.model_kind == "stlinear":
        model.freeze()
    preds = predict(model, split, ckpt.normalizer)
    report = compute_metrics(preds, split.targets(), args.mask_threshold)

    os.makedirs(args.out, exist_ok=True)
    text = f"model={ckpt.model_kind}\nsplit={args.split}\n" + report.to_text()
    baseline = None
    if args.baseline in ("persistence", "ha"):
        if args.baseline == "persistence":
            forecaster = Persistence(cfg.T_p)
        else:
            train_end = int(splits[0].anchors.max()) + cfg.T_p + 1
            forecaster = HistoricalAverage(ds.values[:, :train_end], ds.calendar)
        baseline = compute_metrics(forecaster.predict(split), split.targets(), args.mask_threshold)
        text += baseline.to_text(prefix=f"{args.baseline}.")
    elif args.baseline == "dlinear":
        if not args.baseline_checkpoint:
            raise STLinearError("--baseline dlinear needs --baseline-checkpoint from `train --baseline dlinear`")
        bck = load_checkpoint(args.baseline_checkpoint)
        check_compatible(bck, requested)
        bpreds = predict(model_from_checkpoint(bck), split, bck.normalizer)
        baseline = compute_metrics(bpreds, split.targets(), args.mask_threshold)
        text += baseline.to_text(prefix="dlinear.")

    sys.stdout.write(text)
    print("horizon  mae  rmse  mape")
    for h, a, r, p in report.horizon_rows():
        print(f"{h:4d}  {a:.4f}  {r:.4f}  {p:.4f}")
    with open(os.path.join(args.out, f"eval_{args.split}.txt"), "w") as fh:
        fh.write(text)
    report.to_csv(os.path.join(args.out, f"eval_{args.split}_horizon.csv"))
    _write_prediction_csv(os.path.join(args.out, f"predictions_{args.split}.csv"), split, preds,
                          args.plot_nodes)
    return 0


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    ds, windows, splits = prepare(args.dataset, cfg.T_h, cfg.T_p)
    check_compatible(ckpt, ModelConfig(**{**cfg.to_dict(), "N": ds.num_nodes, "N_d": ds.steps_per_day}))
    split = dict(zip(("train", "val", "test"), splits))[args.split]
    model = model_from_checkpoint(ckpt)
    preds = predict(model, split, ckpt.normalizer)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["anchor_t", "node"] + [f"h{h + 1}" for h in range(cfg.T_p)])
        for s, a in enumerate(split.anchors):
            for i in range(preds.shape[1]):
                w.writerow([int(a), i] + [f"{v:.6f}" for v in preds[s, i]])
    print(f"wrote {preds.shape[0] * preds.shape[1]} rows to {args.out}")
    return 0


def _int_list(s):
    return [int(x) for x in s.split(",") if x.strip()]


def cmd_bench(args):
    m, t, ablate = run_settings(args)
    flags = {v: a not in ablate for a, v in ABLATIONS.items()}
    base = {**m, **flags, "N_d": args.steps_per_day}
    rows = []

    def row(sweep, N, H):
        cfg = ModelConfig(T_h=H, T_p=H, N=N, **base)
        rep = count_macs(cfg, args.mode, args.samples_per_epoch)
        rows.append({
            "sweep": sweep, "N": N, "T_p": H, "mode": args.mode,
            "macs_per_sample": rep.macs_per_sample, "macs_per_epoch": rep.macs_per_epoch,
            "parameters": rep.parameter_count,
            "memory_bytes": estimate_memory(cfg, t["batch"], args.mode),
        })

    for N in _int_list(args.nodes):
        row("N", N, t["horizon"])
    for H in _int_list(args.horizons):
        row("T_p", args.fixed_nodes, H)
    write_mac_csv(args.out, rows)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    return 0


def cmd_plot(args):
    from . import plotting

    out = plotting.plot_csv(args.input, args.out)
    print(f"plot={out}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="stlinear", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="CSV or PEMS .npz -> STF1 container")
    p.add_argument("--input", required=True, help="T rows x N columns CSV (one header line) or .npz")
    p.add_argument("--meta", help="metadata file with start_time= and interval_minutes=")
    p.add_argument("--start-time", help="ISO-8601 timestamp of the first step")
    p.add_argument("--interval", type=int, help="minutes between steps (default 5)")
    p.add_argument("--name", help="dataset name, e.g. PEMS08 (fills in the start date)")
    p.add_argument("--channel", type=int, default=0, help="feature channel for .npz input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="write a synthetic daily/weekly dataset")
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--days", type=int, default=21)
    p.add_argument("--steps-per-day", type=int, default=24)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train STLinear (or DLinear) and write a checkpoint")
    p.add_argument("--dataset", required=True)
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, help="default 300")
    p.add_argument("--batch", type=int, help="default 32")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 2e-4)")
    p.add_argument("--patience", type=int, help="early-stop after this many stale epochs")
    p.add_argument("--baseline", choices=["dlinear"], help="train the DLinear baseline instead")
    p.add_argument("--checkpoint", help="checkpoint path (default <out>/model.ckpt)")
    p.add_argument("--out", default="runs", help="output directory (default runs)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--horizon", type=int, help="assert the checkpoint horizon")
    p.add_argument("--baseline", choices=["dlinear", "persistence", "ha"])
    p.add_argument("--baseline-checkpoint", help="DLinear checkpoint for --baseline dlinear")
    p.add_argument("--mask-threshold", type=float, default=0.0, help="MAPE mask (default 0)")
    p.add_argument("--plot-nodes", type=int, default=4, help="nodes written to the prediction CSV")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write raw-scale forecasts for a split as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="analytic MAC/memory sweep over N and T_p")
    _add_model_flags(p)
    p.add_argument("--batch", type=int, help="batch size for the memory estimate (default 32)")
    p.add_argument("--nodes", default="170,307,358,883", help="N sweep (default: the four PEMS sets)")
    p.add_argument("--horizons", default="12,24,36,48", help="T_p sweep, with T_h = T_p")
    p.add_argument("--fixed-nodes", type=int, default=170, help="N used in the T_p sweep")
    p.add_argument("--steps-per-day", type=int, default=288)
    p.add_argument("--mode", choices=["inference", "training"], default="inference")
    p.add_argument("--samples-per-epoch", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render a train-log, bench or prediction CSV to SVG")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (STLinearError, ValueError, OSError, KeyError, IndexError) as exc:
        print(f"stlinear {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

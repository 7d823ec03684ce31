"""Command-line entry point: ``graphunwrap <subcommand> [flags]``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime failures.
Every run writes a reproducibility stanza (version, seed, flags, config
echo) beside its outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .baselines import METHODS
from .config import (
    build_model_config,
    build_synth_config,
    build_train_config,
    format_pairs,
    load_config,
    parse_config,
    window_length,
)
from .data import WindowDataset, export_plot_data, load_dataset, prepare_windows, save_dataset, synth_generate
from .errors import ConfigError, GraphUnwrapError
from .graph import build_graph, circle_montage
from .metrics import score
from .model import ModelConfig, init_params
from .rng import SplitMix64
from .signal import FoldedWindow, SignalWindow, coarse_labels, fold
from .train import Sample, evaluate, evaluate_baseline, predict, sample_loss, train

GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    def __init__(self, message, flag=None):
        super().__init__(message)
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# helpers


def _need(args, *flags):
    for flag in flags:
        dest = "lam" if flag == "--lambda" else flag.lstrip("-").replace("-", "_")
        if getattr(args, dest) is None:
            raise UsageError(f"{flag} is required for '{args.command}'", flag)


def _config_values(args) -> dict:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "seed", None) is not None:
        values["train.seed"] = args.seed
        values["synth.seed"] = args.seed
    if getattr(args, "lam", None) is not None:
        values["train.lam"] = args.lam
    if getattr(args, "no_pgfi", False):
        values["model.pgfi_enabled"] = False
    return values


def _repro_path(out: Path) -> Path:
    return out / "repro.txt" if out.is_dir() else out.with_name(out.name + ".repro.txt")


def write_repro(args, out: Path, config_pairs=()) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "func") and v is not None}
    cfg = dict(config_pairs)
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = cfg.get("seed", cfg.get("synth.seed", "none"))
    pairs = [("version", __version__), ("command", args.command), ("seed", seed)]
    pairs += [(f"flag.{k}", v) for k, v in flags.items()]
    pairs += [(f"config.{k}", v) for k, v in config_pairs]
    _repro_path(out).write_text(format_pairs(pairs))


def _load(args, lam=None) -> WindowDataset:
    ds = load_dataset(args.data)
    if lam is not None and abs(lam - ds.lam) > 1e-12:
        ds = ds.refold(lam)
    return ds


def _montage(C: int):
    return None if C == 14 else circle_montage(C)


def _prepare_out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def save_checkpoint(params: ad.ParamStore, model: ModelConfig, lam: float, k: int, path) -> None:
    """``MRCP`` parameters plus a ``<path>.cfg`` sidecar with the model config."""
    path = Path(path)
    ad.save_params(params, path)
    pairs = [(f"model.{n}", v) for n, v in model.to_dict().items()]
    pairs += [("train.lam", float(lam)), ("train.k", int(k))]
    path.with_name(path.name + ".cfg").write_text(format_pairs(pairs))


def load_checkpoint(path):
    path = Path(path)
    params = ad.load_params(path)
    side = path.with_name(path.name + ".cfg")
    values = parse_config(side.read_text(), str(side))
    return params, build_model_config(values), values.get("train.lam"), values.get("train.k", 3)


def _metrics_pairs(prefix, m):
    return [(f"{prefix}accuracy", m.accuracy), (f"{prefix}l1", m.l1), (f"{prefix}mse", m.mse),
            (f"{prefix}r", m.r), (f"{prefix}mse_offset", m.mse_offset), (f"{prefix}windows", len(m.per_window))]


def _write_per_window(path: Path, ds: WindowDataset, m) -> None:
    lines = ["subject\twindow\taccuracy\tl1\tmse\tr\tmse_offset"]
    for w, pw in zip(ds.signals, m.per_window):
        lines.append(f"{w.subject_id}\t{w.window_index}\t{pw.accuracy!r}\t{pw.l1!r}\t{pw.mse!r}\t{pw.r!r}\t{pw.mse_offset!r}")
    path.write_text("\n".join(lines) + "\n")


def _prediction_dataset(ds: WindowDataset, preds) -> WindowDataset:
    """Container of predictions: x slot holds x_hat, z slot holds z_hat, p is unchanged."""
    out = WindowDataset(ds.T, ds.C, ds.lam)
    for w, f, (x_hat, z_hat) in zip(ds.signals, ds.folded, preds):
        out.signals.append(SignalWindow(np.asarray(x_hat, dtype=np.float64), w.subject_id, w.window_index))
        out.folded.append(FoldedWindow(f.p, ds.lam, np.asarray(z_hat, dtype=np.int64), w.subject_id, w.window_index))
    return out


def _check_aligned(truth: WindowDataset, pred: WindowDataset):
    if (truth.T, truth.C, len(truth)) != (pred.T, pred.C, len(pred)):
        raise GraphUnwrapError("prediction container does not match the data container shape")
    for a, b in zip(truth.signals, pred.signals):
        if (a.subject_id, a.window_index) != (b.subject_id, b.window_index):
            raise GraphUnwrapError(f"window mismatch: {a.subject_id}/{a.window_index} vs {b.subject_id}/{b.window_index}")


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    _need(args, "--out")
    values = _config_values(args)
    cfg = build_synth_config(values)
    T = window_length(values)
    lam = args.lam if args.lam is not None else 0.5
    ds = prepare_windows(synth_generate(cfg), T, lam)
    out = Path(args.out)
    save_dataset(ds, out)
    pairs = [(f"synth.{k}", getattr(cfg, k)) for k in
             ("num_subjects", "duration_s", "sample_rate_hz", "num_channels", "components_per_band",
              "pink_noise_amp", "mixing", "seed")]
    write_repro(args, out, pairs + [("data.window", T), ("lambda", lam)])
    print(f"wrote {len(ds)} windows ({ds.T}x{ds.C}, lambda={ds.lam}) to {out}")


def cmd_fold(args):
    _need(args, "--data", "--lambda", "--out")
    ds = load_dataset(args.data).refold(args.lam)
    out = Path(args.out)
    save_dataset(ds, out)
    write_repro(args, out, [("lambda", args.lam)])
    print(f"refolded {len(ds)} windows at lambda={args.lam} into {out}")


def cmd_train(args):
    _need(args, "--data", "--out")
    values = _config_values(args)
    ds = _load(args, values.get("train.lam"))
    values["train.lam"] = ds.lam
    cfg = build_train_config(values)
    out = _prepare_out_dir(args.out)
    montage = _montage(ds.C)

    hist = out / "history.tsv"
    lines = ["epoch\ttrain_loss\tval_accuracy\tval_l1\tval_mse\tval_r"]

    def progress(rec):
        v = rec.val
        lines.append(f"{rec.epoch}\t{rec.train_loss!r}\t{v.accuracy!r}\t{v.l1!r}\t{v.mse!r}\t{v.r!r}")
        if not args.quiet:
            print(f"epoch {rec.epoch}: loss {rec.train_loss:.4f} val acc {v.accuracy:.2f} mse {v.mse:.4f}",
                  flush=True)

    result = train(ds, cfg, montage=montage, progress=progress)
    hist.write_text("\n".join(lines) + "\n")
    save_checkpoint(result.params, cfg.model, ds.lam, cfg.k, out / "model.mrcp")

    test = ds.select(result.split.test)
    tm = evaluate(result.params, cfg.model, test, cfg.k, montage, args.threads)
    best = result.history[result.best_epoch - 1].val if result.best_epoch else None
    pairs = [("best_epoch", result.best_epoch), ("lambda", ds.lam),
             ("pgfi_enabled", cfg.model.pgfi_enabled),
             ("test_subjects", ",".join(result.split.test)),
             ("val_subjects", ",".join(result.split.val)),
             ("train_subjects", ",".join(result.split.train_subjects(cfg.fold)))]
    if best is not None:
        pairs += _metrics_pairs("val.", best)
    pairs += _metrics_pairs("test.", tm)
    (out / "summary.txt").write_text(format_pairs(pairs))
    write_repro(args, out, sorted(cfg.to_dict().items()))
    print(f"test accuracy {tm.accuracy:.2f}  mse {tm.mse:.4f}  (best epoch {result.best_epoch})")


def _recover_preds(args, ds):
    if args.method == "model":
        _need(args, "--checkpoint")
        params, model, lam, k = load_checkpoint(args.checkpoint)
        return predict(params, model, ds, k, _montage(ds.C), args.threads)
    _, results = evaluate_baseline(args.method, ds, args.k, _montage(ds.C), args.threads)
    return [(r.x_hat, r.z_hat) for r in results]


def cmd_recover(args):
    _need(args, "--data", "--method", "--out")
    ds = _load(args, args.lam)
    preds = _recover_preds(args, ds)
    out = Path(args.out)
    save_dataset(_prediction_dataset(ds, preds), out)
    write_repro(args, out, [("lambda", ds.lam)])
    print(f"recovered {len(ds)} windows with {args.method} into {out}")


def _score(ds, preds):
    return score([w.x for w in ds.signals], [p[0] for p in preds],
                 [f.require_z() for f in ds.folded], [p[1] for p in preds], ds.lam)


def _subset(args, ds):
    if args.subjects:
        keep = args.subjects.split(",")
        ds = ds.select(keep)
        if not len(ds):
            raise GraphUnwrapError(f"no windows for subjects {args.subjects}")
    return ds


def cmd_eval(args):
    _need(args, "--data", "--out")
    ds = _load(args, args.lam)
    if args.pred is not None:
        pred = load_dataset(args.pred)
        _check_aligned(ds, pred)
        keep = None
        if args.subjects:
            keep = set(args.subjects.split(","))
        pairs = [(w.x, f.require_z()) for w, f in zip(pred.signals, pred.folded)]
        if keep is not None:
            idx = [i for i, w in enumerate(ds.signals) if w.subject_id in keep]
            ds = ds.select(keep)
            pairs = [pairs[i] for i in idx]
        preds = pairs
    elif args.checkpoint is not None:
        ds = _subset(args, ds)
        params, model, lam, k = load_checkpoint(args.checkpoint)
        preds = predict(params, model, ds, k, _montage(ds.C), args.threads)
    else:
        raise UsageError("eval needs --pred or --checkpoint", "--pred")
    m = _score(ds, preds)
    out = _prepare_out_dir(args.out)
    (out / "metrics.txt").write_text(format_pairs(_metrics_pairs("", m)))
    _write_per_window(out / "per_window.tsv", ds, m)
    write_repro(args, out, [("lambda", ds.lam)])
    print(f"accuracy {m.accuracy:.2f}  l1 {m.l1:.4g}  mse {m.mse:.4g}  r {m.r:.4f}  mse_offset {m.mse_offset:.4g}")


def cmd_baseline(args):
    _need(args, "--data", "--method", "--out")
    if args.method == "model":
        raise UsageError("baseline takes a classical --method (itoh, mrf, sparse)", "--method")
    ds = _subset(args, _load(args, args.lam))
    m, _ = evaluate_baseline(args.method, ds, args.k, _montage(ds.C), args.threads)
    out = _prepare_out_dir(args.out)
    (out / "metrics.txt").write_text(format_pairs([("method", args.method)] + _metrics_pairs("", m)))
    _write_per_window(out / "per_window.tsv", ds, m)
    write_repro(args, out, [("lambda", ds.lam), ("k", args.k)])
    print(f"{args.method}: accuracy {m.accuracy:.2f}  mse {m.mse:.4g}  mse_offset {m.mse_offset:.4g}")


def gradcheck_report(seed: int, pgfi: bool = True):
    """Finite-difference check of the full training loss on a tiny model."""
    from .train import TrainConfig
    mc = ModelConfig(hidden_dim=8, num_layers=1, num_heads=2, z_max=2, pgfi_enabled=pgfi, pre_hidden=8)
    cfg = TrainConfig(lam=0.5, model=mc)
    x = 0.6 * SplitMix64(seed).spawn("gradcheck").normal(18).reshape(6, 3)
    f = fold(SignalWindow(x), cfg.lam)
    sample = Sample(build_graph(f, circle_montage(3), 1), f.z, coarse_labels(f).labels, x)
    params = init_params(mc, seed)

    def loss_fn(store):
        tape, loss, _ = sample_loss(sample, store, cfg, cfg.lam, "eval")
        return tape, loss

    return ad.gradcheck(loss_fn, params, eps=1e-4)


def cmd_gradcheck(args):
    seed = 0 if args.seed is None else args.seed
    worst, report = gradcheck_report(seed, not args.no_pgfi)
    lines = [f"{name}\t{err:.3e}" for name, err in report.items()]
    if args.out:
        out = Path(args.out)
        out.write_text(format_pairs([("max_rel_error", worst)] + list(report.items())))
        write_repro(args, out)
    if not args.quiet:
        print("\n".join(lines))
    print(f"max relative error {worst:.3e} ({'ok' if worst < GRADCHECK_TOL else 'FAIL'}, tol {GRADCHECK_TOL:g})")
    return 0 if worst < GRADCHECK_TOL else 1


def cmd_export_plot(args):
    _need(args, "--data", "--pred", "--out")
    ds = load_dataset(args.data)
    pred = load_dataset(args.pred)
    _check_aligned(ds, pred)
    if not 0 <= args.window < len(ds):
        raise UsageError(f"--window {args.window} out of range (0..{len(ds) - 1})", "--window")
    w = args.window
    out = Path(args.out)
    export_plot_data(ds.signals[w].x, pred.signals[w].x, ds.folded[w].p, out)
    write_repro(args, out)
    print(f"wrote plot data for window {w} to {out}")


# --------------------------------------------------------------------------
# parser


def _add(sub, name, func, help_text, flags):
    p = sub.add_parser(name, help=help_text, description=help_text,
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.set_defaults(func=func)
    opts = {
        "config": lambda: p.add_argument("--config", help="key = value config file (dotted keys)"),
        "data": lambda: p.add_argument("--data", help="input MODR container"),
        "lambda": lambda: p.add_argument("--lambda", dest="lam", type=float,
                                         help="folding threshold (refolds the data when it differs)"),
        "out": lambda: p.add_argument("--out", help="output path"),
        "seed": lambda: p.add_argument("--seed", type=int, help="seed for all randomness"),
        "method": lambda: p.add_argument("--method", choices=METHODS + ("model",), help="recovery method"),
        "no-pgfi": lambda: p.add_argument("--no-pgfi", action="store_true",
                                          help="disable pre-estimation guided feature injection"),
        "threads": lambda: p.add_argument("--threads", type=int, default=1, help="worker threads for window-level stages"),
        "checkpoint": lambda: p.add_argument("--checkpoint", help="MRCP model checkpoint (sidecar .cfg beside it)"),
        "pred": lambda: p.add_argument("--pred", help="MODR container of predictions (from recover)"),
        "k": lambda: p.add_argument("--k", type=int, default=3, help="spatial nearest neighbours"),
        "subjects": lambda: p.add_argument("--subjects", help="comma-separated subject ids to restrict to"),
        "window": lambda: p.add_argument("--window", type=int, default=0, help="window index to export"),
        "quiet": lambda: p.add_argument("--quiet", action="store_true", help="less console output"),
    }
    for f in flags:
        opts[f]()
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphunwrap", description="Fold-count recovery for modulo-sampled multichannel signals.")
    parser.add_argument("--version", action="version", version=f"graphunwrap {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _add(sub, "synth", cmd_synth, "generate a synthetic EEG-like dataset as a MODR container",
         ["config", "seed", "lambda", "out"])
    _add(sub, "fold", cmd_fold, "refold a container at a new threshold", ["data", "lambda", "out"])
    _add(sub, "train", cmd_train, "train the graph model on a container",
         ["config", "data", "lambda", "seed", "no-pgfi", "out", "threads", "quiet"])
    _add(sub, "recover", cmd_recover, "recover unfolded signals with a method",
         ["data", "lambda", "method", "checkpoint", "k", "threads", "out"])
    _add(sub, "eval", cmd_eval, "score predictions or a checkpoint against ground truth",
         ["data", "lambda", "pred", "checkpoint", "subjects", "threads", "out"])
    _add(sub, "baseline", cmd_baseline, "run and score a classical method",
         ["data", "lambda", "method", "k", "subjects", "threads", "out"])
    _add(sub, "gradcheck", cmd_gradcheck, "finite-difference gradient check on a tiny model",
         ["seed", "no-pgfi", "out", "quiet"])
    _add(sub, "export-plot", cmd_export_plot, "export one window as CSV (t, channel, x, p, x_hat)",
         ["data", "pred", "window", "out"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1", "--threads")
        if getattr(args, "lam", None) is not None and not args.lam > 0:
            raise UsageError("--lambda must be positive", "--lambda")
        rc = args.func(args)
        return 0 if rc is None else rc
    except ConfigError as e:
        print(f"graphunwrap: usage error: {e}", file=sys.stderr)
        return 2
    except UsageError as e:
        flag = f" [{e.flag}]" if e.flag else ""
        print(f"graphunwrap: usage error: {e}{flag}", file=sys.stderr)
        return 2
    except (GraphUnwrapError, OSError, ValueError) as e:
        print(f"graphunwrap: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

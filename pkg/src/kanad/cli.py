"""Command-line front end.

Subcommands::

    kanad synth  --config run.ini --out DIR          # write a labeled synthetic series
    kanad train  --config run.ini --out DIR          # fit a model on [data] path
    kanad eval   --config run.ini --out DIR          # score and evaluate the test split
    kanad detect --config run.ini --out DIR          # score a series, optional threshold
    kanad grid   --config run.ini --out DIR          # sweep window length x n_terms

Exit status is 0 on success, 2 for bad input or usage and 1 for anything
unexpected.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import model as M
from .config import ConfigError, RunConfig, load_config
from .detector import score_series, threshold
from .experiment import run_experiment, split_windows
from .metrics import NoPositiveLabelsError, evaluate
from .pipeline import InputError, Series, load_csv, save_csv, synthesize
from .trainer import train

log = logging.getLogger("kanad")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
MODEL_FILE = "model.kanad"


def _write(path: Path, text: str):
    path.write_text(text)
    log.info("wrote %s", path)


def _load_series(cfg: RunConfig, path: str) -> Series:
    if not path:
        raise ConfigError("no dataset configured: set [data] path (or pass --data)")
    return load_csv(path, cfg.data.value_column, cfg.data.label_column)


def _manifest(cfg: RunConfig, command: str, **extra):
    return json.dumps(
        {
            "command": command,
            "seed": cfg.seed,
            "param_count": M.param_count(cfg.model),
            "fingerprint": cfg.model.fingerprint(),
            "config": cfg.to_dict(),
            **extra,
        },
        indent=2,
        sort_keys=True,
    ) + "\n"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out: Path, args):
    spec = cfg.synth if args.seed is None else replace(cfg.synth, seed=args.seed)
    series = synthesize(spec)
    path = out / "dataset.csv"
    save_csv(series, path)
    log.info("wrote %s (%d points, %d labeled)", path, len(series), int(series.labels.sum()))
    print(path)


def cmd_train(cfg: RunConfig, out: Path, args):
    series = _load_series(cfg, cfg.data.path)
    norm, (train_w, val_w, _) = split_windows(series, cfg.split, cfg.features.window_len, cfg.cte)
    params, history = train(cfg.model, cfg.train_config, train_w, val_w, norm)
    M.save(params, out / MODEL_FILE)
    _write(out / "history.csv", history.to_csv())
    _write(
        out / "manifest.json",
        _manifest(
            cfg, "train", epochs=history.epochs, best_epoch=history.best_epoch,
            best_val_mse=min(history.val_loss),
        ),
    )
    from .plotting import plot_history

    plot_history(out / "history.png", history)
    print(f"trained {history.epochs} epochs, best validation MSE {min(history.val_loss):.6g} "
          f"at epoch {history.best_epoch}; model -> {out / MODEL_FILE}")


def _scored(cfg: RunConfig, args, out: Path, evaluate_split: bool):
    model_path = Path(args.model) if args.model else out / MODEL_FILE
    params = M.load(model_path, expected=cfg.model)
    if cfg.data.test_path:
        series, start = _load_series(cfg, cfg.data.test_path), 0
    else:
        series = _load_series(cfg, cfg.data.path)
        start = cfg.split.boundaries(len(series))[1] if evaluate_split else 0
        if start >= len(series):
            raise ConfigError("the configured split leaves no test data to evaluate")
    return series, score_series(params, series, start=start)


def _write_trace(out: Path, series: Series, trace, tau=None):
    from .plotting import plot_score_trace

    _write(out / "scores.csv", trace.to_csv())
    plot_score_trace(out / "scores.png", series.values[trace.index_offset:], trace, tau=tau)


def cmd_eval(cfg: RunConfig, out: Path, args):
    series, trace = _scored(cfg, args, out, evaluate_split=True)
    report = evaluate(*trace.covered(), k=cfg.delay_k)
    _write(out / "report.txt", report.to_text())
    _write(out / "report.csv", report.to_csv())
    _write_trace(out, series, trace, tau=report.best_f1_threshold)
    sys.stdout.write(report.to_text())


def cmd_detect(cfg: RunConfig, out: Path, args):
    series, trace = _scored(cfg, args, out, evaluate_split=False)
    _write_trace(out, series, trace, tau=args.threshold)
    if args.threshold is not None:
        flags = threshold(trace, args.threshold)
        with (out / "detections.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "score"])
            for i in flags.nonzero()[0]:
                writer.writerow([int(i) + trace.index_offset, repr(float(trace.scores[i]))])
        print(f"{int(flags.sum())} points flagged at threshold {args.threshold}")
    else:
        print(f"scored {len(trace.scores) - trace.covered_start} points -> {out / 'scores.csv'}")


GRID_COLUMNS = ["window_len", "n_terms", "param_count", "best_f1", "event_f1", "delay_f1", "auprc"]


def grid_rows(cfg: RunConfig, series: Series):
    rows = []
    for window_len in cfg.grid.window_lens:
        for n_terms in cfg.grid.n_terms:
            feat = replace(cfg.features, window_len=window_len, n_terms=n_terms)
            cell = replace(cfg, features=feat)
            result = run_experiment(
                series, cell.model, cell.train_config, cfg.split, cfg.cte, cfg.delay_k
            )
            if result.report is None:
                raise ConfigError("the configured split leaves no test data to evaluate")
            rep = result.report
            rows.append({
                "window_len": window_len, "n_terms": n_terms,
                "param_count": M.param_count(cell.model),
                "best_f1": rep.best_f1, "event_f1": rep.event_f1,
                "delay_f1": rep.delay_f1, "auprc": rep.auprc,
            })
            log.info("grid T=%d N=%d auprc=%.4f", window_len, n_terms, rep.auprc)
    return rows


def cmd_grid(cfg: RunConfig, out: Path, args):
    series = _load_series(cfg, cfg.data.path)
    rows = grid_rows(cfg, series)
    with (out / "grid.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, GRID_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write(out / "manifest.json", _manifest(cfg, "grid"))
    from .plotting import plot_grid

    plot_grid(out / "grid.png", rows)
    for row in rows:
        print(f"T={row['window_len']:<4d} N={row['n_terms']:<2d} AUPRC={row['auprc']:.4f} "
              f"F1={row['best_f1']:.4f} F1e={row['event_f1']:.4f} F1d={row['delay_f1']:.4f}")


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
    "detect": cmd_detect, "grid": cmd_grid,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (key = value with sections)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", metavar="DIR", default="kanad-out", help="output directory")
    common.add_argument("--data", metavar="PATH", help="override [data] path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kanad", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a labeled synthetic series")
    sub.add_parser("train", parents=[common], help="train a model")
    for name, text in (("eval", "evaluate a trained model"), ("detect", "score a series")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--model", metavar="PATH", help=f"model file (default: OUT/{MODEL_FILE})")
        if name == "detect":
            p.add_argument("--threshold", type=float, help="flag points with score >= this value")
    sub.add_parser("grid", parents=[common], help="sweep window length and n_terms")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None and args.command != "synth":
            cfg = cfg.with_seed(args.seed)
        if args.data:
            cfg = replace(cfg, data=replace(cfg.data, path=args.data))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except (InputError, M.ModelFileError, NoPositiveLabelsError, ValueError) as exc:
        print(f"kanad {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.debug("internal error", exc_info=True)
        print(f"kanad {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

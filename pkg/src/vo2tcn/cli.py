"""``vo2tcn`` command line: simulate, train, grid, evaluate, predict."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .cohort import read_cohort, write_cohort
from .config import RunConfig, load_run_config, write_run_config
from .data import fit_scaler, read_recording, split_by_participant, build_windows
from .errors import ConfigError, DataError, Vo2TcnError
from .evaluate import MetsCategory, classify_mets, vo2_to_mets
from .persist import load_model, save_model
from .report import evaluate_participants, write_report
from .sim import generate_cohort
from .train import DataBundle, grid_search, train, write_grid_results, write_history

log = logging.getLogger("vo2tcn")

MODEL_FILE = "model.vo2tcn"
PREDICT_COLUMNS = ("time_s", "vo2_true_mlpm", "vo2_pred_mlpm", "mets_pred", "category_pred",
                   "cold_start")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _split(cohort, cfg: RunConfig):
    ids = [p.profile.participant_id for p in cohort]
    train_ids, val_ids, test_ids = split_by_participant(ids, cfg.data.split_seed, cfg.split_ratios())
    by_id = {p.profile.participant_id: p for p in cohort}
    return train_ids, val_ids, test_ids, by_id


def _recordings(by_id, ids):
    return [rec for pid in ids for rec in by_id[pid].recordings.values()]


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config, {("simulate", "cohort"): args.cohort,
                                        ("simulate", "seed"): args.seed,
                                        ("simulate", "noise"): False if args.noiseless else None})
    s = cfg.simulate
    out = _out_dir(args.out)
    cohort = generate_cohort(s.cohort, s.seed, noise=s.noise, session_spread=s.session_spread)
    manifest = write_cohort(cohort, out, seed=s.seed)
    write_run_config(cfg, out / "run_config.ini")
    print(f"wrote {len(cohort)} participants to {manifest}")
    return 0


def _train_overrides(args) -> dict:
    return {
        ("model", "filters"): getattr(args, "filters", None),
        ("model", "kernel"): getattr(args, "kernel", None),
        ("model", "dilations"): getattr(args, "dilations", None),
        ("train", "epochs"): args.epochs,
        ("train", "learning_rate"): args.lr,
        ("train", "batch_size"): args.batch_size,
        ("train", "dropout"): args.dropout,
        ("train", "seed"): args.seed,
        ("train", "window_stride"): args.window_stride,
        ("data", "split_seed"): args.split_seed,
        ("data", "features"): args.features,
    }


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, _train_overrides(args))
    cohort = read_cohort(args.data)
    train_ids, val_ids, test_ids, by_id = _split(cohort, cfg)
    features = cfg.data.features
    train_recs, val_recs = _recordings(by_id, train_ids), _recordings(by_id, val_ids)
    scaler = fit_scaler(train_recs)
    tcn = cfg.tcn_config()
    rf = tcn.receptive_field
    train_ds = build_windows(train_recs, rf, scaler, features)
    if cfg.train.window_stride > 1:
        train_ds = train_ds.subsample(cfg.train.window_stride)
    val_ds = build_windows(val_recs, rf, scaler, features)
    log.info("training f=%d k=%d N=%d (RF %d s) on %d windows", tcn.num_filters,
             tcn.kernel_size, tcn.dilation_depth, rf, len(train_ds))
    result = train(tcn, cfg.train, train_ds, val_ds)

    out = _out_dir(args.out)
    meta = {"train_participants": train_ids, "val_participants": val_ids,
            "test_participants": test_ids, "split_seed": cfg.data.split_seed,
            "best_epoch": result.best_epoch, "best_val_mse": result.best_val_mse,
            "train": {k: getattr(cfg.train, k) for k in cfg.train.__dataclass_fields__}}
    save_model(out / MODEL_FILE, result.model, scaler, features, meta)
    write_history(result.history, out / "history.csv")
    write_run_config(cfg, out / "run_config.ini")
    if cfg.evaluate.figures:
        from .plotting import plot_history
        plot_history(result.history, out / "history.png")
    print(f"best epoch {result.best_epoch}, validation MSE {result.best_val_mse:.6f}; "
          f"model written to {out / MODEL_FILE}")
    return 0


def cmd_grid(args) -> int:
    overrides = _train_overrides(args)
    cfg = load_run_config(args.grid, overrides)
    cohort = read_cohort(args.data)
    train_ids, val_ids, _, by_id = _split(cohort, cfg)
    train_recs = _recordings(by_id, train_ids)
    bundle = DataBundle(train_recs, _recordings(by_id, val_ids), fit_scaler(train_recs),
                        cfg.data.features)
    grid = cfg.grid_configs()
    log.info("grid of %d configurations, %d job(s)", len(grid), args.jobs)
    results = grid_search(grid, cfg.train, bundle, jobs=args.jobs)

    out = Path(args.out)
    _out_dir(out.parent if str(out.parent) else ".")
    write_grid_results(results, out)
    write_run_config(cfg, out.with_suffix(".config.ini"))
    if cfg.evaluate.figures:
        from .plotting import plot_grid
        plot_grid(results, out.with_suffix(".png"))
    best = results[0]
    print(f"{len(results)} configurations; best f={best.filters} k={best.kernel_size} "
          f"N={best.dilations} (RF {best.receptive_field} s), val MSE {best.best_val_mse:.6f}")
    return 0


def _select_participants(spec, meta, cohort):
    available = [p.profile.participant_id for p in cohort]
    if spec is None:
        wanted = meta.get("test_participants")
        if not wanted:
            raise DataError("model file records no test participants; pass --participants")
    elif spec.strip().lower() == "all":
        wanted = available
    else:
        wanted = [s.strip() for s in spec.split(",") if s.strip()]
    missing = sorted(set(wanted) - set(available))
    if missing:
        raise DataError(f"participants not found in data: {', '.join(missing)}")
    return sorted(wanted)


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config, {("evaluate", "ba_ddof"): args.ba_ddof,
                                        ("evaluate", "figures"): False if args.no_figures else None})
    bundle = load_model(args.model)
    cohort = read_cohort(args.data)
    ids = _select_participants(args.participants, bundle.metadata, cohort)
    leaked = sorted(set(ids) & set(bundle.metadata.get("train_participants", [])))
    if leaked and not args.allow_train_leak:
        raise DataError(f"refusing to evaluate on training participants {', '.join(leaked)}; "
                        "pass --allow-train-leak to override")
    by_id = {p.profile.participant_id: p for p in cohort}
    report = evaluate_participants(bundle.model, bundle.scaler, bundle.features,
                                   [by_id[i] for i in ids], ba_ddof=cfg.evaluate.ba_ddof,
                                   peak_window_s=cfg.evaluate.vo2peak_window_s)
    out = _out_dir(args.out)
    write_report(report, out, figures=cfg.evaluate.figures)
    write_run_config(cfg, out / "run_config.ini")
    for note in report.notes:
        log.info("%s", note)
    print(f"{len(ids)} participants, {report.confusion.total} s: MAE {report.mae:.1f} ml/min, "
          f"bias {report.agreement.bias:.1f} [{report.agreement.loa_low:.1f}, "
          f"{report.agreement.loa_high:.1f}], METs accuracy {100 * report.confusion.accuracy:.1f}%")
    return 0


def cmd_predict(args) -> int:
    if not args.mass > 0:
        raise ConfigError("--mass must be positive")
    bundle = load_model(args.model)
    rec = read_recording(args.input, protocol_kind=args.protocol)
    rf = bundle.model.receptive_field
    if len(rec) < rf:
        raise DataError(f"recording has {len(rec)} s, shorter than the receptive field ({rf} s)")
    x = bundle.scaler.transform_features(rec, bundle.features)
    pred = bundle.scaler.inverse_target(bundle.model.predict_sequence(x))
    mets = vo2_to_mets(pred, args.mass)
    cats = classify_mets(mets)
    start = 0 if args.include_cold_start else rf - 1
    out = Path(args.output)
    _out_dir(out.parent if str(out.parent) else ".")
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICT_COLUMNS)
        for i in range(start, len(rec)):
            cold = i < rf - 1
            w.writerow([int(rec.time_s[i]), f"{rec.vo2_mlpm[i]:.6f}",
                        "" if cold else f"{pred[i]:.6f}", "" if cold else f"{mets[i]:.6f}",
                        "" if cold else MetsCategory(cats[i]).label, int(cold)])
    print(f"wrote {len(rec) - start} rows to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_train_flags(p, with_arch: bool):
    if with_arch:
        p.add_argument("--filters", type=int, help="filters per conv layer (default 24)")
        p.add_argument("--kernel", type=int, help="kernel size (default 8)")
        p.add_argument("--dilations", type=int, help="dilation depth N (default 5)")
    p.add_argument("--epochs", type=int, help="training epochs (default 100)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 0.0005)")
    p.add_argument("--batch-size", type=int, help="minibatch size (default 32)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0.2)")
    p.add_argument("--seed", type=int, help="training seed (default 0)")
    p.add_argument("--window-stride", type=int,
                   help="keep every n-th training window (default 1, all windows)")
    p.add_argument("--split-seed", type=int, help="participant split seed (default 0)")
    p.add_argument("--features", help="comma-separated input columns (default all five)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vo2tcn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for per-epoch detail)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--cohort", type=int, help="number of participants (default 20)")
    p.add_argument("--seed", type=int, help="simulation seed (default 0)")
    p.add_argument("--noiseless", action="store_true", help="disable sensor noise")
    p.add_argument("--config", help="run config INI")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", help="run config INI")
    p.add_argument("--data", required=True, help="cohort directory")
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p, with_arch=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid search over filters, kernels and depths")
    p.add_argument("--grid", required=True, help="grid config INI ([grid] section)")
    p.add_argument("--data", required=True, help="cohort directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", required=True, help="results CSV path")
    _add_train_flags(p, with_arch=False)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", help="report on held-out participants")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", required=True, help="cohort directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="run config INI")
    p.add_argument("--participants",
                   help="comma-separated ids or 'all' (default: the model's test participants)")
    p.add_argument("--allow-train-leak", action="store_true",
                   help="permit evaluating on training participants")
    p.add_argument("--ba-ddof", type=int, choices=(0, 1),
                   help="Bland-Altman between-participant normalization (default 0)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-second predictions for one recording CSV")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--input", required=True, help="recording CSV")
    p.add_argument("--output", required=True, help="output CSV")
    p.add_argument("--mass", type=float, default=70.0, help="body mass for METs (default 70 kg)")
    p.add_argument("--protocol", default=None, help="protocol kind label (validated if given)")
    p.add_argument("--include-cold-start", action="store_true",
                   help="also emit the first RF-1 seconds, marked and without predictions")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Vo2TcnError as exc:
        print(f"vo2tcn {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"vo2tcn {args.command}: numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

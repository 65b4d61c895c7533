"""Minibatch Adam training and the filter/kernel/depth grid search."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import FEATURES, WindowDataset, build_windows
from .errors import ConfigError, DataError
from .model import TcnConfig, TcnModel, build_model, param_count
from .optim import Adam
from .rng import RngStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0005
    dropout: float = 0.2
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    #: keep every n-th training window; 1 uses all of them
    window_stride: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.window_stride < 1:
            raise ConfigError("batch_size, epochs and window_stride must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


@dataclass
class TrainResult:
    model: TcnModel
    history: list[EpochRecord]
    best_epoch: int
    best_val_mse: float


def epoch_order(n: int, rng: RngStream) -> np.ndarray:
    return rng.permutation(n)


def evaluate_mse(model: TcnModel, ds: WindowDataset, batch_size: int = 256) -> float:
    """Inference-mode MSE over every window of ``ds``."""
    preds = predict_windows(model, ds, batch_size)
    return float(np.mean((preds - ds.targets) ** 2))


def predict_windows(model: TcnModel, ds: WindowDataset, batch_size: int = 256) -> np.ndarray:
    """Inference prediction at the last row of every window.

    When windows cover the receptive field, one dense pass per recording gives
    the same outputs far faster than evaluating windows one by one.
    """
    if len(ds) == 0:
        raise DataError("empty window dataset")
    covered = sum(n for _, n in ds.segments) == len(ds.series)
    if covered and ds.window >= model.receptive_field:
        full = np.concatenate([model.predict_sequence(ds.series[a:a + n]) for a, n in ds.segments])
        return full[ds.starts + ds.window - 1]
    out = np.empty(len(ds))
    for s in range(0, len(ds), batch_size):
        idx = np.arange(s, min(s + batch_size, len(ds)))
        x, _ = ds.batch(idx)
        out[idx] = model.forward(x, training=False).data
    return out


def _check_dataset(ds: WindowDataset, config: TcnConfig, role: str):
    if ds is None or len(ds) == 0:
        raise DataError(f"{role} dataset is empty")
    if ds.window != config.receptive_field:
        raise DataError(f"{role} windows have length {ds.window}, "
                        f"model receptive field is {config.receptive_field}")
    if ds.series.shape[1] != config.input_features:
        raise DataError(f"{role} windows have {ds.series.shape[1]} features, "
                        f"model expects {config.input_features}")


def train(config: TcnConfig, tc: TrainConfig, train_ds: WindowDataset,
          val_ds: WindowDataset) -> TrainResult:
    """Fit a fresh model; return it with the weights of its best validation epoch."""
    config = replace(config, dropout_rate=tc.dropout)
    _check_dataset(train_ds, config, "training")
    _check_dataset(val_ds, config, "validation")

    root = RngStream(tc.seed, "train")
    model = build_model(config, root.child("init"))
    shuffle_rng, dropout_rng = root.child("shuffle"), root.child("dropout")
    params = model.parameters()
    opt = Adam(params, lr=tc.learning_rate)

    history = []
    best_epoch, best_val, best_weights = 0, np.inf, model.get_weights()
    n = len(train_ds)
    for epoch in range(1, tc.epochs + 1):
        started = time.perf_counter()
        order = epoch_order(n, shuffle_rng)
        sse = 0.0
        for s in range(0, n, tc.batch_size):
            idx = order[s:s + tc.batch_size]
            x, y = train_ds.batch(idx)
            loss = ad.mse_loss(model.forward(x, training=True, rng=dropout_rng), y)
            ad.backward(loss, params)
            opt.step()
            sse += float(loss.data) * len(idx)
        val = evaluate_mse(model, val_ds)
        history.append(EpochRecord(epoch, sse / n, val))
        if val < best_val:
            best_epoch, best_val, best_weights = epoch, val, model.get_weights()
        log.debug("%s epoch %d train %.5f val %.5f (%.1fs)", _label(config), epoch,
                  sse / n, val, time.perf_counter() - started)
    model.set_weights(best_weights)
    return TrainResult(model, history, best_epoch, float(best_val))


def write_history(history, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for rec in history:
            w.writerow([rec.epoch, repr(rec.train_mse), repr(rec.val_mse)])


# ---------------------------------------------------------------------------
# grid search


@dataclass
class DataBundle:
    """Standardization plus the recordings a grid search trains and validates on."""

    train_recordings: list
    val_recordings: list
    scaler: object
    features: tuple = FEATURES


@dataclass
class GridResult:
    filters: int
    kernel_size: int
    dilations: int
    receptive_field: int
    param_count: int
    best_epoch: int
    best_val_mse: float
    seed: int = 0
    weights: list | None = field(default=None, repr=False)

    @property
    def config(self) -> TcnConfig:
        return TcnConfig(self.filters, self.kernel_size, self.dilations)


GRID_COLUMNS = ("rank", "filters", "kernel_size", "dilations", "receptive_field",
                "param_count", "best_epoch", "best_val_mse")


def config_seed(global_seed: int, config: TcnConfig) -> int:
    ss = np.random.SeedSequence([global_seed, config.num_filters, config.kernel_size,
                                 config.dilation_depth, config.input_features])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _label(config: TcnConfig) -> str:
    return f"f{config.num_filters}-k{config.kernel_size}-N{config.dilation_depth}"


def _run_one(args) -> GridResult:
    config, tc, data = args
    rf = config.receptive_field
    train_ds = build_windows(data.train_recordings, rf, data.scaler, data.features)
    if tc.window_stride > 1:
        train_ds = train_ds.subsample(tc.window_stride)
    val_ds = build_windows(data.val_recordings, rf, data.scaler, data.features)
    seed = config_seed(tc.seed, config)
    started = time.perf_counter()
    result = train(config, replace(tc, seed=seed), train_ds, val_ds)
    log.info("%s RF=%d best val %.5f @ epoch %d (%.0fs)", _label(config), rf,
             result.best_val_mse, result.best_epoch, time.perf_counter() - started)
    return GridResult(config.num_filters, config.kernel_size, config.dilation_depth, rf,
                      param_count(config), result.best_epoch, result.best_val_mse, seed,
                      result.model.get_weights())


def grid_search(grid, tc: TrainConfig, data: DataBundle, jobs: int = 1) -> list[GridResult]:
    """Train every configuration independently and rank by best validation MSE.

    Each configuration's seed depends only on ``tc.seed`` and the
    configuration itself, so the ranking does not depend on ``jobs``.
    """
    n_features = len(data.features)
    grid = [replace(c, input_features=n_features) for c in grid]
    if not grid:
        raise ConfigError("empty grid")
    tasks = [(c, tc, data) for c in grid]
    if jobs <= 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    results.sort(key=lambda r: (r.best_val_mse, r.param_count, r.filters, r.kernel_size, r.dilations))
    return results


def write_grid_results(results, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_COLUMNS)
        for rank, r in enumerate(results, 1):
            w.writerow([rank, r.filters, r.kernel_size, r.dilations, r.receptive_field,
                        r.param_count, r.best_epoch, repr(r.best_val_mse)])


def read_grid_results(path) -> list[GridResult]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [GridResult(int(r["filters"]), int(r["kernel_size"]), int(r["dilations"]),
                       int(r["receptive_field"]), int(r["param_count"]), int(r["best_epoch"]),
                       float(r["best_val_mse"])) for r in rows]

import numpy as np
import pytest

from vo2tcn.data import ProtocolRecording, build_windows, fit_scaler, make_windows
from vo2tcn.errors import ConfigError, DataError
from vo2tcn.model import TcnConfig
from vo2tcn.train import (DataBundle, TrainConfig, config_seed, epoch_order, evaluate_mse,
                          grid_search, predict_windows, read_grid_results, train,
                          write_grid_results, write_history)
from vo2tcn.rng import RngStream


def _rec(n=60, seed=0, pid="P01"):
    rng = np.random.default_rng(seed)
    wr = np.repeat(rng.choice([25.0, 150.0], n // 10 + 1), 10)[:n]
    return ProtocolRecording(pid, "L-M", np.arange(n, dtype=float), wr, 60 + 0.5 * wr,
                             wr / 200, 15 + wr / 20, 10 + wr / 5, 500 + 10 * wr + rng.normal(0, 20, n))


@pytest.fixture(scope="module")
def tiny():
    recs = [_rec(seed=i, pid=f"P{i}") for i in range(3)]
    sc = fit_scaler(recs[:2])
    cfg = TcnConfig(4, 2, 2)
    rf = cfg.receptive_field
    return cfg, build_windows(recs[:2], rf, sc), build_windows(recs[2:], rf, sc), recs, sc


def test_training_defaults():
    tc = TrainConfig()
    assert (tc.learning_rate, tc.dropout, tc.batch_size, tc.epochs) == (0.0005, 0.2, 32, 100)
    for bad in (dict(batch_size=0), dict(dropout=1.0), dict(epochs=0), dict(learning_rate=-1)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_history_and_best_epoch(tiny):
    cfg, tr, va, _, _ = tiny
    res = train(cfg, TrainConfig(epochs=4, seed=1), tr, va)
    assert [h.epoch for h in res.history] == [1, 2, 3, 4]
    vals = [h.val_mse for h in res.history]
    assert res.best_val_mse == min(vals) and res.best_epoch == 1 + int(np.argmin(vals))
    assert evaluate_mse(res.model, va) == pytest.approx(res.best_val_mse, rel=1e-12)


def test_same_seed_is_bit_identical(tiny):
    cfg, tr, va, _, _ = tiny
    a = train(cfg, TrainConfig(epochs=3, seed=5), tr, va)
    b = train(cfg, TrainConfig(epochs=3, seed=5), tr, va)
    assert [(h.train_mse, h.val_mse) for h in a.history] == [(h.train_mse, h.val_mse) for h in b.history]
    assert all(np.array_equal(x, y) for x, y in zip(a.model.get_weights(), b.model.get_weights()))


def test_zero_learning_rate_freezes_everything(tiny):
    cfg, tr, va, _, _ = tiny
    res = train(cfg, TrainConfig(epochs=3, learning_rate=0.0, dropout=0.0), tr, va)
    assert len({h.val_mse for h in res.history}) == 1
    assert len({h.train_mse for h in res.history}) == 1


def test_single_window_is_memorized():
    rec = _rec(n=2)
    sc = fit_scaler([_rec(seed=1), _rec(seed=2)])
    ds = make_windows(rec, 2, sc)
    assert len(ds) == 1
    res = train(TcnConfig(4, 2, 1), TrainConfig(epochs=200, dropout=0.0, learning_rate=0.01), ds, ds)
    assert res.history[-1].train_mse < 1e-4


def test_shuffle_is_a_permutation():
    a = epoch_order(50, RngStream(1))
    b = epoch_order(50, RngStream(2))
    assert sorted(a) == sorted(b) == list(range(50))
    assert not np.array_equal(a, b)


def test_dataset_errors(tiny):
    cfg, tr, va, recs, sc = tiny
    wrong = build_windows(recs[:1], cfg.receptive_field + 1, sc)
    with pytest.raises(DataError):
        train(cfg, TrainConfig(epochs=1), wrong, va)
    empty = tr.subsample(1)
    empty.starts = empty.starts[:0]
    with pytest.raises(DataError):
        train(cfg, TrainConfig(epochs=1), empty, va)


def test_segment_fast_path_matches_windowed_batches(tiny):
    cfg, tr, va, _, _ = tiny
    res = train(cfg, TrainConfig(epochs=1), tr, va)
    fast = predict_windows(res.model, va)
    slow = res.model.forward(va.inputs).data
    assert np.allclose(fast, slow, atol=1e-12)


def test_grid_is_ranked_and_parallelism_independent(tiny, tmp_path):
    _, _, _, recs, sc = tiny
    data = DataBundle(recs[:2], recs[2:], sc)
    grid = [TcnConfig(2, 1, 1), TcnConfig(2, 2, 2), TcnConfig(4, 3, 1)]
    tc = TrainConfig(epochs=2, seed=3)
    serial = grid_search(grid, tc, data, jobs=1)
    parallel = grid_search(grid, tc, data, jobs=2)
    assert [r.best_val_mse for r in serial] == sorted(r.best_val_mse for r in serial)
    assert [(r.config, r.best_val_mse) for r in serial] == [(r.config, r.best_val_mse) for r in parallel]
    write_grid_results(serial, tmp_path / "g.csv")
    back = read_grid_results(tmp_path / "g.csv")
    assert [(r.config, r.best_val_mse, r.param_count) for r in back] == \
        [(r.config, r.best_val_mse, r.param_count) for r in serial]


def test_single_config_grid_equals_train(tiny):
    cfg, tr, va, recs, sc = tiny
    tc = TrainConfig(epochs=2, seed=4)
    [g] = grid_search([cfg], tc, DataBundle(recs[:2], recs[2:], sc))
    direct = train(cfg, TrainConfig(epochs=2, seed=config_seed(4, cfg)), tr, va)
    assert g.best_val_mse == direct.best_val_mse


def test_history_csv(tiny, tmp_path):
    cfg, tr, va, _, _ = tiny
    res = train(cfg, TrainConfig(epochs=2), tr, va)
    write_history(res.history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_mse,val_mse" and len(lines) == 3

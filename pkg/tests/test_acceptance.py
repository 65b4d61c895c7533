"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
Criteria 5 and 6 train real models and take several minutes each.
"""

import time

import numpy as np
import pytest

from vo2tcn.cli import main
from vo2tcn.data import FEATURES, build_windows, fit_scaler, split_by_participant
from vo2tcn.evaluate import bland_altman_rm, predict_protocol, transient_mask
from vo2tcn.model import (GRID_DILATIONS, GRID_KERNELS, TcnConfig, build_model,
                          count_parameters, full_grid, param_count, receptive_field)
from vo2tcn.report import evaluate_participants
from vo2tcn.rng import RngStream
from vo2tcn.sim import (ShiftRegister, SignalKinetics, first_order_response, generate_cohort,
                        prbs15)
from vo2tcn.train import DataBundle, TrainConfig, grid_search, train

from _oracles import finite_difference_check
from conftest import ACCEPTANCE_LINES


def report(n, ok, detail):
    line = f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert ok, detail


def test_criterion_01_receptive_field():
    t0 = time.perf_counter()
    table = {(8, 5): 218, (7, 5): 187, (6, 4): 76, (7, 4): 91}
    got = {kn: receptive_field(*kn) for kn in table}
    ones = {receptive_field(1, n) for n in range(1, 6)}
    elapsed = time.perf_counter() - t0
    report(1, got == table and ones == {1} and elapsed < 1.0,
           f"{got}, k=1 -> {sorted(ones)}, {elapsed * 1e3:.2f} ms")


def test_criterion_02_parameter_counts():
    table = {TcnConfig(24, 8, 5): 19921, TcnConfig(16, 7, 5): 8081, TcnConfig(16, 6, 4): 5393,
             TcnConfig(16, 7, 4): 6241, TcnConfig(24, 1, 1): 361, TcnConfig(24, 8, 5, 1): 19057}
    got = {cfg: param_count(cfg) for cfg in table}
    mismatched = [cfg for cfg in full_grid() if count_parameters(build_model(cfg)) != param_count(cfg)]
    report(2, got == table and not mismatched,
           f"{sorted(got.values())}; structural mismatches over 200 configs: {len(mismatched)}")


def test_criterion_03_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, cases = 0.0, []
    for i in range(20):
        cfg = TcnConfig(int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                        input_features=int(rng.integers(1, 4)),
                        dropout_rate=0.2 if i % 2 else 0.0)
        model = build_model(cfg, RngStream(i))
        model.set_weights([w + 0.2 * rng.normal(size=w.shape) for w in model.get_weights()])
        T = cfg.receptive_field + int(rng.integers(0, 3))
        x = rng.normal(size=(2, T, cfg.input_features))
        y = rng.normal(size=2)
        err = finite_difference_check(model, x, y, dropout_seed=i if i % 2 else None)
        worst = max(worst, err)
        cases.append((cfg.num_filters, cfg.kernel_size, cfg.dilation_depth, cfg.input_features))
    elapsed = time.perf_counter() - t0
    report(3, worst < 1e-4 and elapsed < 300,
           f"20 configs, worst relative error {worst:.2e}, {elapsed:.1f} s")


def test_criterion_04_causality():
    t0 = time.perf_counter()
    identical, witnessed = 0, 0
    pairs = [(k, n) for k in GRID_KERNELS for n in GRID_DILATIONS]
    for k, n in pairs:
        cfg = TcnConfig(4, k, n, input_features=3)
        model = build_model(cfg, RngStream(k, str(n)))
        rng = np.random.default_rng(100 * k + n)
        model.set_weights([w + 0.3 * rng.normal(size=w.shape) for w in model.get_weights()])
        rf = cfg.receptive_field
        T = rf + 20
        x = rng.normal(size=(1, T, 3))
        base_last = model.forward(x, outputs="last").data
        base_all = model.forward(x, outputs="all").data[:, -1]
        far = x.copy()
        far[:, : T - rf] += rng.normal(0, 10, size=(1, T - rf, 3))   # lags rf .. T-1
        same = (np.array_equal(model.forward(far, outputs="last").data, base_last)
                and np.array_equal(model.forward(far, outputs="all").data[:, -1], base_all))
        near = x.copy()
        near[:, T - rf] += 5.0                                        # lag rf - 1
        moved = not np.array_equal(model.forward(near, outputs="last").data, base_last)
        identical += same
        witnessed += moved
    elapsed = time.perf_counter() - t0
    report(4, identical == witnessed == len(pairs) and elapsed < 300,
           f"{identical}/{len(pairs)} bit-identical beyond RF, {witnessed}/{len(pairs)} lag RF-1 "
           f"witnesses, {elapsed:.1f} s")


REDUCED = [TcnConfig(f, k, n) for f in (8, 16, 24) for k in (1, 4, 8) for n in (1, 3, 5)]


@pytest.mark.slow
def test_criterion_05_history_benefit():
    t0 = time.perf_counter()
    cohort = generate_cohort(20, seed=7)
    by = {p.profile.participant_id: p for p in cohort}
    tr, va, _ = split_by_participant(list(by), 7)
    recs = lambda ids: [r for i in ids for r in by[i].recordings.values()]  # noqa: E731
    scaler = fit_scaler(recs(tr))
    results = grid_search(REDUCED, TrainConfig(epochs=12, window_stride=3),
                          DataBundle(recs(tr), recs(va), scaler))
    long_best = min(r.best_val_mse for r in results if r.receptive_field >= 76)
    rf1 = min((r for r in results if r.receptive_field == 1), key=lambda r: r.best_val_mse)
    model = build_model(rf1.config)
    model.set_weights(rf1.weights)
    errors, late = [], []
    for pid in va:
        rec = by[pid].recordings["L-H"]
        _, pred = predict_protocol(model, rec, scaler)
        err = pred - rec.vo2_mlpm
        errors.append(err[transient_mask(rec.work_rate_w, "off", 60)])
        # context only: recovery seconds 30 s or more after the drop
        tail = transient_mask(rec.work_rate_w, "off", 90) & ~transient_mask(rec.work_rate_w, "off", 30)
        late.append(err[tail])
    off_bias = float(np.concatenate(errors).mean())
    late_bias = float(np.concatenate(late).mean())
    elapsed = time.perf_counter() - t0
    ratio = long_best / rf1.best_val_mse
    report(5, ratio <= 0.75 and off_bias > 0 and elapsed < 3600,
           f"best RF>=76 val MSE {long_best:.5f} vs RF=1 {rf1.best_val_mse:.5f} (ratio {ratio:.3f}); "
           f"RF=1 L-H off-transient bias {off_bias:+.1f} ml/min (late recovery {late_bias:+.1f}); "
           f"{elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_06_noiseless_convergence():
    cohort = generate_cohort(20, seed=11, noise=False)
    by = {p.profile.participant_id: p for p in cohort}
    tr, va, te = split_by_participant(list(by), 11)
    recs = lambda ids: [r for i in ids for r in by[i].recordings.values()]  # noqa: E731
    scaler = fit_scaler(recs(tr))
    cfg = TcnConfig(16, 6, 4)
    tc = TrainConfig(learning_rate=0.002, dropout=0.0, epochs=60, window_stride=2)
    rf = cfg.receptive_field
    result = train(cfg, tc, build_windows(recs(tr), rf, scaler).subsample(2),
                   build_windows(recs(va), rf, scaler))
    rep = evaluate_participants(result.model, scaler, FEATURES, [by[i] for i in te])
    amplitude = np.mean([r.vo2_mlpm.max() - r.vo2_mlpm.min() for r in recs(te)])
    share = rep.mae / amplitude
    acc = rep.confusion.accuracy
    report(6, share < 0.05 and acc >= 0.95,
           f"MAE {rep.mae:.1f} ml/min = {100 * share:.2f}% of amplitude {amplitude:.0f}; "
           f"METs accuracy {100 * acc:.2f}% over {rep.confusion.total} s")


def test_criterion_07_bland_altman():
    r = bland_altman_rm(np.zeros(4), np.array([10.0, 10.0, -10.0, -10.0]), ["A", "A", "B", "B"])
    hand = abs(r.bias) < 1e-6 and abs(r.loa_low + 19.6) < 1e-6 and abs(r.loa_high - 19.6) < 1e-6
    rng = np.random.default_rng(0)
    true = rng.integers(500, 3000, 16).astype(float)
    pred = true + rng.integers(-100, 100, 16)
    groups = np.repeat(["A", "B", "C", "D"], 4)
    base = bland_altman_rm(true, pred, groups)
    shifted = [bland_altman_rm(true, pred + c, groups) for c in (-64.0, 3.0, 250.0)]
    equivariant = all(s.bias == base.bias + c and s.sd == base.sd
                      for s, c in zip(shifted, (-64.0, 3.0, 250.0)))
    report(7, hand and equivariant,
           f"bias {r.bias:g}, LoA [{r.loa_low:.6f}, {r.loa_high:.6f}]; translation exact: {equivariant}")


def test_criterion_08_simulator_physics():
    kin = SignalKinetics(10.0, 500.0, 30.0, 35.0)
    y = first_order_response(kin.steady_state(np.full(200, 100.0)), kin, 500.0)
    frac = (y[30] - 500.0) / 1000.0
    steady = np.concatenate([np.full(120, 1500.0), np.full(180, 700.0)])
    slow = SignalKinetics(10.0, 500.0, 25.0, 40.0)
    z = first_order_response(steady, slow, 500.0)
    t = np.arange(300.0)
    up = 1500.0 - 1000.0 * np.exp(-t[:121] / 25.0)
    down = 700.0 + (up[120] - 700.0) * np.exp(-(t[120:] - 120.0) / 40.0)
    err = max(np.abs(z[:121] - up).max(), np.abs(z[120:] - down).max())
    report(8, abs(frac - 0.6321) <= 0.001 and err < 1e-9,
           f"step reaches {100 * frac:.4f}% at tau; closed-form max error {err:.1e}")


def test_criterion_09_prbs():
    bits = prbs15()
    reg = ShiftRegister(0b1111)
    states = []
    for _ in range(15):
        states.append(reg.state)
        reg.step()
    stream = ShiftRegister(0b1111)
    long = [stream.step() for _ in range(60)]
    period = next(p for p in range(1, 31) if long[p:p + 30] == long[:30])
    ok = period == 15 and sum(bits) == 8 and len(bits) - sum(bits) == 7 and \
        sorted(states) == list(range(1, 16)) and reg.state == 0b1111
    report(9, ok, f"period {period}, ones/zeros {sum(bits)}/{15 - sum(bits)}, "
                  f"{len(set(states))} distinct nonzero states")


def _pipeline(root):
    data, run, ev = root / "data", root / "run", root / "eval"
    assert main(["simulate", "--cohort", "4", "--seed", "5", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run), "--filters", "4", "--kernel", "4",
                 "--dilations", "3", "--epochs", "2", "--window-stride", "4", "--seed", "5"]) == 0
    assert main(["evaluate", "--model", str(run / "model.vo2tcn"), "--data", str(data),
                 "--out", str(ev)]) == 0
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path):
    first = _pipeline(tmp_path / "a")
    second = _pipeline(tmp_path / "b")
    differing = [k for k in first if first[k] != second.get(k)]
    report(10, set(first) == set(second) and not differing,
           f"{len(first)} artifacts compared, {len(differing)} differ")

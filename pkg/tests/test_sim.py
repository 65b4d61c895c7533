import math

import numpy as np
import pytest

from vo2tcn.cohort import read_cohort, write_cohort
from vo2tcn.data import PROTOCOL_KINDS
from vo2tcn.errors import ConfigError, DataError, NumericError
from vo2tcn.rng import RngStream
from vo2tcn.sim import (KineticsParams, ParticipantProfile, ShiftRegister, SignalKinetics,
                        WorkRateProfile, build_protocol, first_order_response, generate_cohort,
                        prbs15, simulate_responses)

PROFILE = ParticipantProfile("P01", 70.0, 60.0, 190.0, 2940.0, 1800.0, 115.0, 130.0, 200.0)


def test_register_hand_stepped_output():
    # taps 4 xor 3, all-ones seed, stepped by hand
    assert prbs15(0b1111) == [1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 1, 0]


@pytest.mark.parametrize("seed", range(1, 16))
def test_m_sequence_properties(seed):
    reg = ShiftRegister(seed)
    states, bits = [], []
    for _ in range(30):
        states.append(reg.state)
        bits.append(reg.step())
    assert sorted(set(states[:15])) == list(range(1, 16))
    assert bits[:15] == bits[15:]
    assert sum(bits[:15]) == 8


def test_zero_seed_rejected():
    with pytest.raises(ConfigError):
        ShiftRegister(0)


def test_prbs_protocol_layout():
    for kind, levels in (("L-M", {25.0, 115.0}), ("L-H", {25.0, 200.0}), ("VT-H", {130.0, 200.0})):
        wr = build_protocol(kind, PROFILE)
        assert len(wr) == 1110
        assert set(np.unique(wr.work_rate_w)) == levels
        units = wr.work_rate_w.reshape(37, 30)
        assert np.all(units == units[:, :1])
        bits = (units[:, 0] == max(levels)).astype(int).tolist()
        seq = prbs15()
        assert bits == seq[-7:] + seq + seq
    with pytest.raises(ConfigError):
        build_protocol("XYZ", PROFILE)


def test_ramp_protocol():
    wr = build_protocol("RAMP", PROFILE)
    assert np.all(wr.work_rate_w[:241] == 25.0)
    assert wr.work_rate_w[300] == pytest.approx(50.0)
    peak = KineticsParams().vo2.work_rate_for(PROFILE.vo2peak_ml_min)
    assert wr.work_rate_w[-1] >= peak > wr.work_rate_w[-2]


def test_step_response_hits_63_percent_at_tau():
    kin = SignalKinetics(10.0, 500.0, 30.0, 35.0)
    y = first_order_response(kin.steady_state(np.full(200, 100.0)), kin, 500.0)
    frac = (y[30] - 500.0) / 1000.0
    assert abs(frac - (1 - math.exp(-1))) < 1e-12


def test_exact_update_matches_closed_form():
    kin = SignalKinetics(10.0, 500.0, 25.0, 40.0)
    steady = np.concatenate([np.full(100, 1500.0), np.full(150, 700.0)])
    y = first_order_response(steady, kin, 500.0)
    t = np.arange(250.0)
    up = 1500.0 - 1000.0 * np.exp(-t[:101] / 25.0)
    y100 = up[100]
    down = 700.0 + (y100 - 700.0) * np.exp(-(t[100:] - 100.0) / 40.0)
    assert np.max(np.abs(y[:101] - up)) < 1e-9
    assert np.max(np.abs(y[100:] - down)) < 1e-9


def test_noiseless_constant_input_is_fixed_point():
    params = KineticsParams().without_noise()
    wr = WorkRateProfile("L-M", np.arange(100.0), np.full(100, 80.0))
    rec = simulate_responses(wr, PROFILE, params)
    for name in ("hr_bpm", "ve_lpm", "bf_brpm", "vo2_mlpm"):
        col = rec.column(name)
        assert np.all(col == col[0])
    assert rec.vo2_mlpm[0] == 500.0 + 10.0 * 80.0


def test_recovery_is_monotone_and_hr_lags_vo2():
    params = KineticsParams().without_noise()
    wr = WorkRateProfile("L-H", np.arange(400.0),
                         np.concatenate([np.full(200, 200.0), np.full(200, 25.0)]))
    rec = simulate_responses(wr, PROFILE, params, initial_wr=25.0)
    recovery = rec.vo2_mlpm[200:]
    assert np.all(np.diff(recovery) <= 0)
    # fraction of the off-step completed 45 s in: HR (slower) behind VO2
    def done(x):
        return (x[200] - x[245]) / (x[200] - x[-1])
    assert done(rec.hr_bpm) < done(rec.vo2_mlpm)


def test_invalid_kinetics():
    bad = KineticsParams(vo2=SignalKinetics(10.0, 500.0, 0.0, 35.0))
    with pytest.raises(ConfigError):
        bad.validate()
    with pytest.raises(NumericError):
        KineticsParams(vo2=SignalKinetics(float("nan"), 500.0, 30.0, 35.0)).validate()


def test_noise_requires_rng():
    wr = build_protocol("L-M", PROFILE)
    with pytest.raises(ValueError):
        simulate_responses(wr, PROFILE, KineticsParams())
    rec = simulate_responses(wr, PROFILE, KineticsParams(), RngStream(0))
    rec.validate()


def test_cohort_properties(small_cohort):
    assert len(small_cohort) == 6
    again = generate_cohort(6, seed=3)
    for a, b in zip(small_cohort, again):
        assert a.profile == b.profile
        for kind in PROTOCOL_KINDS:
            assert np.array_equal(a.recordings[kind].vo2_mlpm, b.recordings[kind].vo2_mlpm)
    for person in small_cohort:
        p = person.profile
        assert p.wr_90vt_W < p.wr_vt_W < p.wr_d50_W
        assert 0.55 * p.vo2peak_ml_min <= p.vt_vo2_ml_min <= 0.65 * p.vo2peak_ml_min
        assert set(person.recordings) == set(PROTOCOL_KINDS)
        for rec in person.recordings.values():
            rec.validate()


def test_participant_is_independent_of_cohort_size():
    a = generate_cohort(2, seed=9)[1]
    b = generate_cohort(5, seed=9)[1]
    assert a.profile == b.profile
    assert np.array_equal(a.recordings["L-H"].hr_bpm, b.recordings["L-H"].hr_bpm)


def test_cohort_demographics_match_targets():
    profiles = [p.profile for p in generate_cohort(100, seed=21)]
    rel = np.array([p.vo2peak_ml_min / p.mass_kg for p in profiles])
    se = rel.std(ddof=1) / np.sqrt(rel.size)
    assert abs(rel.mean() - 42.0) < 2 * se
    mass = np.array([p.mass_kg for p in profiles])
    assert 65 < mass.mean() < 75


def test_cohort_manifest_round_trip(tmp_path, small_cohort):
    write_cohort(small_cohort[:2], tmp_path, seed=3)
    files = sorted(p.name for p in tmp_path.glob("*.csv"))
    assert len(files) == 8
    back = read_cohort(tmp_path)
    assert [p.profile for p in back] == [p.profile for p in small_cohort[:2]]
    assert np.allclose(back[0].recordings["RAMP"].vo2_mlpm,
                       small_cohort[0].recordings["RAMP"].vo2_mlpm, atol=5e-7)
    with pytest.raises(DataError):
        read_cohort(tmp_path / "nowhere")

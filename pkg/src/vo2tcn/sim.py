"""Exercise protocols and a first-order cardiorespiratory response simulator.

The simulator stands in for measured data. Each signal relaxes toward a
work-rate-dependent steady state with separate on- and off-transient time
constants, so heart rate and ventilation recover more slowly than VO2 after a
work-rate drop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import PROTOCOL_KINDS, ProtocolRecording, compute_hrr
from .errors import ConfigError, NumericError
from .rng import RngStream

UNIT_S = 30
WARMUP_UNITS = 7
BASELINE_W = 25.0
RAMP_BASELINE_S = 240
RAMP_W_PER_MIN = 25.0


class ShiftRegister:
    """4-stage Fibonacci LFSR, feedback = stage 4 XOR stage 3 (x^4 + x^3 + 1).

    Bit 3 of ``state`` is stage 4 (the output); the feedback bit enters at
    stage 1 (bit 0).
    """

    def __init__(self, seed: int = 0b1111):
        if not 0 < seed < 16:
            raise ConfigError("register seed must be a nonzero 4-bit value")
        self.state = seed

    def step(self) -> int:
        out = (self.state >> 3) & 1
        feedback = ((self.state >> 3) ^ (self.state >> 2)) & 1
        self.state = ((self.state << 1) | feedback) & 0xF
        return out


def prbs15(register_seed: int = 0b1111) -> list[int]:
    """One period of the maximal-length binary sequence from :class:`ShiftRegister`."""
    reg = ShiftRegister(register_seed)
    return [reg.step() for _ in range(15)]


@dataclass(frozen=True)
class ParticipantProfile:
    participant_id: str
    mass_kg: float
    hr_rest_bpm: float
    hr_max_bpm: float
    vo2peak_ml_min: float
    vt_vo2_ml_min: float
    wr_90vt_W: float
    wr_vt_W: float
    wr_d50_W: float

    def validate(self):
        if not self.hr_max_bpm > self.hr_rest_bpm:
            raise ConfigError(f"{self.participant_id}: hr_max must exceed hr_rest")
        if not self.vt_vo2_ml_min < self.vo2peak_ml_min:
            raise ConfigError(f"{self.participant_id}: VT VO2 must be below VO2peak")
        if not self.wr_90vt_W < self.wr_vt_W < self.wr_d50_W:
            raise ConfigError(f"{self.participant_id}: work-rate anchors out of order")


@dataclass(frozen=True)
class SignalKinetics:
    gain: float
    intercept: float
    tau_on_s: float
    tau_off_s: float
    noise_sd: float = 0.0

    def steady_state(self, wr):
        return self.intercept + self.gain * np.asarray(wr, dtype=np.float64)

    def work_rate_for(self, level: float) -> float:
        return (level - self.intercept) / self.gain


@dataclass(frozen=True)
class KineticsParams:
    vo2: SignalKinetics = SignalKinetics(10.0, 500.0, 30.0, 35.0, 40.0)
    hr: SignalKinetics = SignalKinetics(0.5, 75.0, 40.0, 60.0, 2.0)
    ve: SignalKinetics = SignalKinetics(0.25, 5.0, 45.0, 70.0, 2.0)
    bf: SignalKinetics = SignalKinetics(0.06, 16.0, 40.0, 60.0, 1.5)

    def signals(self):
        return {"vo2": self.vo2, "hr": self.hr, "ve": self.ve, "bf": self.bf}

    def without_noise(self) -> KineticsParams:
        return KineticsParams(**{k: replace(s, noise_sd=0.0) for k, s in self.signals().items()})

    def validate(self):
        for name, s in self.signals().items():
            values = (s.gain, s.intercept, s.tau_on_s, s.tau_off_s, s.noise_sd)
            if not all(math.isfinite(v) for v in values):
                raise NumericError(f"non-finite kinetics parameter for {name}")
            if s.tau_on_s <= 0 or s.tau_off_s <= 0 or s.noise_sd < 0:
                raise ConfigError(f"{name}: time constants must be positive, noise non-negative")


@dataclass
class WorkRateProfile:
    protocol_kind: str
    time_s: np.ndarray
    work_rate_w: np.ndarray

    def __len__(self):
        return len(self.time_s)


def peak_work_rate(profile: ParticipantProfile, params: KineticsParams | None = None) -> float:
    """Work rate whose steady-state VO2 equals the participant's VO2peak."""
    params = params or KineticsParams()
    return params.vo2.work_rate_for(profile.vo2peak_ml_min)


def build_protocol(kind: str, profile: ParticipantProfile,
                   params: KineticsParams | None = None,
                   register_seed: int = 0b1111) -> WorkRateProfile:
    """Work-rate schedule at 1 Hz for one of the four sessions."""
    if kind == "RAMP":
        wr_end = peak_work_rate(profile, params)
        ramp_s = max(1, math.ceil((wr_end - BASELINE_W) * 60.0 / RAMP_W_PER_MIN))
        t = np.arange(RAMP_BASELINE_S + ramp_s + 1, dtype=np.float64)
        wr = BASELINE_W + np.maximum(t - RAMP_BASELINE_S, 0.0) * RAMP_W_PER_MIN / 60.0
        return WorkRateProfile(kind, t, wr)
    levels = {
        "L-M": (BASELINE_W, profile.wr_90vt_W),
        "L-H": (BASELINE_W, profile.wr_d50_W),
        "VT-H": (profile.wr_vt_W, profile.wr_d50_W),
    }
    if kind not in levels:
        raise ConfigError(f"unknown protocol kind {kind!r}; expected one of {PROTOCOL_KINDS}")
    low, high = levels[kind]
    bits = prbs15(register_seed)
    units = bits[-WARMUP_UNITS:] + bits + bits
    wr = np.repeat(np.where(np.array(units) == 1, high, low), UNIT_S).astype(np.float64)
    return WorkRateProfile(kind, np.arange(wr.size, dtype=np.float64), wr)


def first_order_response(steady, kin: SignalKinetics, y0: float) -> np.ndarray:
    """Exact 1 s update of ``dy/dt = (steady - y) / tau`` with direction-dependent tau.

    ``steady[t]`` is held over ``[t, t+1)``; ``y[0] = y0``.
    """
    a_on = math.exp(-1.0 / kin.tau_on_s)
    a_off = math.exp(-1.0 / kin.tau_off_s)
    y = np.empty(len(steady))
    cur = float(y0)
    for t, target in enumerate(steady):
        y[t] = cur
        a = a_on if target > cur else a_off
        cur = target + (cur - target) * a
    return y


def simulate_responses(wr: WorkRateProfile, profile: ParticipantProfile,
                       params: KineticsParams, rng: RngStream | None = None,
                       initial_wr: float | None = None) -> ProtocolRecording:
    """Synthesize a 1 Hz recording for ``wr``, starting at steady state.

    The state starts at equilibrium for ``initial_wr`` (default: the first
    work rate). Heart rate's steady state saturates at ``hr_max``. Additive
    Gaussian noise is drawn from ``rng`` when the signal's ``noise_sd`` is
    positive.
    """
    params.validate()
    w = np.asarray(wr.work_rate_w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite work rate")
    w0 = w[0] if initial_wr is None else float(initial_wr)

    out = {}
    for name, kin in params.signals().items():
        steady = kin.steady_state(w)
        start = kin.steady_state(w0)
        if name == "hr":
            steady = np.minimum(steady, profile.hr_max_bpm)
            start = min(start, profile.hr_max_bpm)
        y = first_order_response(steady, kin, start)
        if kin.noise_sd > 0:
            if rng is None:
                raise ValueError("noisy simulation needs an rng")
            y = y + rng.child(name).normal(0.0, kin.noise_sd, y.size)
        out[name] = np.maximum(y, 0.0)

    span = profile.hr_max_bpm - profile.hr_rest_bpm
    hr = np.clip(out["hr"], profile.hr_rest_bpm, profile.hr_rest_bpm + 1.05 * span)
    return ProtocolRecording(
        participant_id=profile.participant_id,
        protocol_kind=wr.protocol_kind,
        time_s=np.asarray(wr.time_s, dtype=np.float64),
        work_rate_w=w,
        hr_bpm=hr,
        hrr_frac=compute_hrr(hr, profile.hr_rest_bpm, profile.hr_max_bpm),
        bf_brpm=out["bf"],
        ve_lpm=out["ve"],
        vo2_mlpm=out["vo2"],
    )


@dataclass
class Participant:
    profile: ParticipantProfile
    kinetics: KineticsParams
    recordings: dict = field(default_factory=dict)


def participant_kinetics(profile: ParticipantProfile, base: KineticsParams,
                         ve_equivalent: float = 25.0, bf_peak_brpm: float = 45.0) -> KineticsParams:
    """Scale heart-rate, ventilation and breathing-rate steady states to one participant.

    HR runs from ``hr_rest + 15`` at 0 W to ``hr_max`` at the peak work rate.
    Ventilation follows metabolic rate through the ventilatory equivalent
    (litres of air per litre of O2). Breathing frequency tracks relative
    intensity, reaching ``bf_peak_brpm`` at the peak work rate.
    """
    wr_peak = peak_work_rate(profile, base)
    hr0 = profile.hr_rest_bpm + 15.0
    return replace(
        base,
        hr=replace(base.hr, intercept=hr0, gain=(profile.hr_max_bpm - hr0) / wr_peak),
        ve=replace(base.ve, intercept=base.ve.intercept + ve_equivalent * base.vo2.intercept / 1000.0,
                   gain=ve_equivalent * base.vo2.gain / 1000.0),
        bf=replace(base.bf, gain=(bf_peak_brpm - base.bf.intercept) / wr_peak),
    )


def session_kinetics(kin: KineticsParams, rng: RngStream, spread: float) -> KineticsParams:
    """Day-to-day variation of one session around a participant's kinetics.

    Heart rate shifts by up to ``spread * 20`` bpm (normal SD); ventilation and
    breathing gains scale by ``1 + N(0, spread)``. VO2 is left untouched.
    """
    if spread <= 0:
        return kin
    return replace(
        kin,
        hr=replace(kin.hr, intercept=kin.hr.intercept + float(rng.normal(0.0, 20.0 * spread))),
        ve=replace(kin.ve, gain=kin.ve.gain * (1.0 + float(rng.normal(0.0, spread)))),
        bf=replace(kin.bf, gain=kin.bf.gain * (1.0 + float(rng.normal(0.0, spread)))),
    )


def sample_profile(participant_id: str, rng: RngStream,
                   params: KineticsParams | None = None) -> ParticipantProfile:
    """Draw one profile around the target demographics.

    Mass 70 +/- 11 kg, VO2peak 42 +/- 6 ml/min/kg, resting HR ~60, max HR ~190,
    VT at 55-65 % of VO2peak. Draws whose 90 %-VT work rate falls below 40 W
    are rejected so every PRBS has a real low/high contrast.
    """
    vo2 = (params or KineticsParams()).vo2
    while True:
        mass = float(np.clip(rng.normal(70.0, 11.0), 45.0, 110.0))
        peak_per_kg = float(np.clip(rng.normal(42.0, 6.0), 26.0, 62.0))
        hr_rest = float(np.clip(rng.normal(60.0, 5.0), 45.0, 80.0))
        hr_max = float(np.clip(rng.normal(190.0, 7.0), 170.0, 210.0))
        vt_frac = float(rng.uniform(0.55, 0.65))
        vo2peak = peak_per_kg * mass
        vt = vt_frac * vo2peak
        wr_90vt = vo2.work_rate_for(0.9 * vt)
        if wr_90vt >= 40.0:
            break
    profile = ParticipantProfile(
        participant_id=participant_id,
        mass_kg=mass,
        hr_rest_bpm=hr_rest,
        hr_max_bpm=hr_max,
        vo2peak_ml_min=vo2peak,
        vt_vo2_ml_min=vt,
        wr_90vt_W=wr_90vt,
        wr_vt_W=vo2.work_rate_for(vt),
        wr_d50_W=vo2.work_rate_for(0.5 * (vt + vo2peak)),
    )
    profile.validate()
    return profile


def generate_cohort(n_participants: int, seed: int, params: KineticsParams | None = None,
                    noise: bool = True, session_spread: float = 0.1) -> list[Participant]:
    """Profiles plus one RAMP and three PRBS recordings per participant.

    Every draw comes from a stream keyed by ``(seed, participant, purpose)``,
    so participant ``i`` is identical whatever the cohort size.
    """
    if n_participants < 1:
        raise ConfigError("cohort needs at least one participant")
    base = params or KineticsParams()
    if not noise:
        base = base.without_noise()
    cohort = []
    for i in range(n_participants):
        pid = f"P{i + 1:02d}"
        profile = sample_profile(pid, RngStream(seed, "profile", i), base)
        rng = RngStream(seed, "physiology", i)
        kin = participant_kinetics(profile, base,
                                   ve_equivalent=float(rng.uniform(22.0, 30.0)),
                                   bf_peak_brpm=float(rng.uniform(38.0, 52.0)))
        person = Participant(profile, kin)
        for kind in PROTOCOL_KINDS:
            wr = build_protocol(kind, profile, base)
            session = session_kinetics(kin, RngStream(seed, "session", i, kind), session_spread)
            person.recordings[kind] = simulate_responses(
                wr, profile, session, RngStream(seed, "noise", i, kind))
        cohort.append(person)
    return cohort

"""Agreement statistics, METs classification and per-protocol error summaries."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import FEATURES, ProtocolRecording
from .errors import DataError
from .model import TcnModel

METS_ML_PER_KG_MIN = 3.5
MODERATE_METS = 3.0
VIGOROUS_METS = 6.0
LOA_Z = 1.96

#: error-table column label per protocol kind; the ramp test is the maximal one
TABLE_LABELS = {"L-M": "L-M", "L-H": "L-H", "VT-H": "VT-H", "RAMP": "MAX"}


def predict_protocol(model: TcnModel, rec: ProtocolRecording, scaler,
                     features=FEATURES) -> tuple[np.ndarray, np.ndarray]:
    """De-standardized predictions from the first full receptive field onward.

    Returns ``(time_s, vo2_pred)`` covering rows ``RF-1 .. L-1``; the first
    ``RF-1`` seconds (the cold start) get no prediction.
    """
    rf = model.receptive_field
    if len(rec) < rf:
        raise DataError(f"{rec.participant_id}/{rec.protocol_kind}: {len(rec)} s is shorter "
                        f"than the receptive field ({rf} s)")
    if len(features) != model.config.input_features:
        raise DataError("feature list does not match the model input width")
    z = model.predict_sequence(scaler.transform_features(rec, features))
    return rec.time_s[rf - 1:].copy(), scaler.inverse_target(z[rf - 1:])


# ---------------------------------------------------------------------------
# Bland-Altman


@dataclass
class BlandAltmanReport:
    bias: float
    sd: float
    loa_low: float
    loa_high: float
    n_pairs: int
    n_participants: int
    within_var: float = 0.0
    between_var: float = 0.0
    method: str = "repeated"


def bland_altman(true, pred) -> BlandAltmanReport:
    """Standard Bland-Altman on paired values (differences are ``pred - true``)."""
    d = np.asarray(pred, dtype=np.float64) - np.asarray(true, dtype=np.float64)
    if d.size < 2:
        raise DataError("Bland-Altman needs at least two pairs")
    bias, sd = float(d.mean()), float(d.std(ddof=1))
    return BlandAltmanReport(bias, sd, bias - LOA_Z * sd, bias + LOA_Z * sd, d.size, d.size,
                             method="standard")


def bland_altman_rm(true, pred, participants, ddof: int = 0) -> BlandAltmanReport:
    """Bland-Altman limits for repeated measurements per participant.

    The variance of differences is split into a between-participant component
    (spread of participant-mean differences, corrected for the within-participant
    noise those means carry) and the within-participant residual mean square.

    Parameters
    ----------
    true, pred : array_like
        Paired measurements; differences are ``pred - true``.
    participants : array_like
        Participant label for every pair.
    ddof : {0, 1}
        Normalization of the spread of participant means. ``0`` divides by the
        number of participants. ``1`` gives the one-way ANOVA estimator of
        Bland & Altman (2007), which divides by ``n - 1`` and handles unequal
        pair counts through its effective group size.

    With a single participant the standard (non-repeated) analysis is returned
    with ``method='standard-fallback'``.
    """
    t = np.asarray(true, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    groups = np.asarray(participants)
    if not (t.shape == p.shape == groups.shape) or t.ndim != 1:
        raise DataError("true, pred and participants must be equal-length 1-D sequences")
    if ddof not in (0, 1):
        raise ValueError("ddof must be 0 or 1")
    d = p - t
    labels, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
    if len(labels) < 2:
        report = bland_altman(t, p)
        report.method = "standard-fallback"
        report.n_participants = len(labels)
        return report
    if np.any(counts < 2):
        raise DataError("every participant needs at least two pairs")

    n_total, n_groups = d.size, len(labels)
    means = np.bincount(inverse, weights=d) / counts
    bias = float(d.mean())
    ss_within = float(np.sum((d - means[inverse]) ** 2))
    ms_within = ss_within / (n_total - n_groups) if n_total > n_groups else 0.0
    if ddof == 1:
        ms_between = float(np.sum(counts * (means - bias) ** 2)) / (n_groups - 1)
        divisor = (n_total ** 2 - float(np.sum(counts ** 2))) / ((n_groups - 1) * n_total)
        between = (ms_between - ms_within) / divisor
    else:
        between = float(np.var(means)) - ms_within * float(np.mean(1.0 / counts))
    between = max(between, 0.0)
    sd = float(np.sqrt(between + ms_within))
    return BlandAltmanReport(bias, sd, bias - LOA_Z * sd, bias + LOA_Z * sd, n_total, n_groups,
                             within_var=ms_within, between_var=between)


# ---------------------------------------------------------------------------
# METs


class MetsCategory(enum.IntEnum):
    LIGHT = 0
    MODERATE = 1
    VIGOROUS = 2

    @property
    def label(self) -> str:
        return self.name.lower()


def vo2_to_mets(vo2, mass_kg):
    """METs from VO2 in ml/min: ``vo2 / mass / 3.5``."""
    mass = np.asarray(mass_kg, dtype=np.float64)
    if np.any(mass <= 0):
        raise ValueError("mass must be positive")
    mets = np.asarray(vo2, dtype=np.float64) / mass / METS_ML_PER_KG_MIN
    return float(mets) if mets.ndim == 0 else mets


def classify_mets(mets):
    """Light below 3.0, moderate from 3.0 up to 6.0, vigorous from 6.0."""
    m = np.asarray(mets, dtype=np.float64)
    cat = np.where(m >= VIGOROUS_METS, 2, np.where(m >= MODERATE_METS, 1, 0))
    return MetsCategory(int(cat)) if cat.ndim == 0 else cat


@dataclass
class ConfusionMatrix3:
    """Counts with rows = true category, columns = predicted category."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else float("nan")


def confusion_by_second(true_vo2, pred_vo2, mass_kg) -> ConfusionMatrix3:
    t = np.asarray(true_vo2, dtype=np.float64)
    p = np.asarray(pred_vo2, dtype=np.float64)
    if t.shape != p.shape:
        raise DataError("true and predicted series differ in length")
    ct = classify_mets(vo2_to_mets(t, mass_kg))
    cp = classify_mets(vo2_to_mets(p, mass_kg))
    counts = np.zeros((3, 3), dtype=np.int64)
    np.add.at(counts, (np.atleast_1d(ct), np.atleast_1d(cp)), 1)
    return ConfusionMatrix3(counts)


# ---------------------------------------------------------------------------
# test-derived indices


def vo2peak(series, window_s: int = 20) -> float:
    """Highest ``window_s``-second moving average."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < window_s:
        raise DataError(f"need at least {window_s} s of data for VO2peak")
    csum = np.concatenate([[0.0], np.cumsum(x)])
    return float(np.max((csum[window_s:] - csum[:-window_s]) / window_s))


def mean_response_time(rec_or_time, vo2=None, ramp_onset_s: float = 240.0,
                       vt_vo2_ml_min: float | None = None, baseline_s: float = 120.0,
                       fit_start_s: float = 120.0, min_t: float = 3.0) -> float:
    """Delay of the VO2 ramp response behind the work-rate ramp.

    A horizontal line through the mean VO2 over the ``baseline_s`` seconds before
    ramp onset is intersected with the least-squares line through the ramp
    response from ``fit_start_s`` after onset until VO2 first reaches the
    ventilatory threshold (or the end of the test). The intersection's time
    after onset is returned, in seconds.

    Raises :class:`~vo2tcn.errors.DataError` when either segment is shorter
    than 120 s or the ramp slope is not significantly positive (t < ``min_t``).
    """
    if isinstance(rec_or_time, ProtocolRecording):
        t, v = rec_or_time.time_s, rec_or_time.vo2_mlpm
    else:
        t = np.asarray(rec_or_time, dtype=np.float64)
        v = np.asarray(vo2, dtype=np.float64)
    base = (t >= ramp_onset_s - baseline_s) & (t < ramp_onset_s)
    if base.sum() < 120:
        raise DataError("need at least 120 s of baseline before ramp onset")
    baseline = float(v[base].mean())

    ramp = t >= ramp_onset_s + fit_start_s
    if vt_vo2_ml_min is not None:
        above = np.nonzero((t >= ramp_onset_s) & (v >= vt_vo2_ml_min))[0]
        if above.size:
            ramp &= t < t[above[0]]
    if ramp.sum() < 120:
        raise DataError("need at least 120 s of sub-threshold ramp data after the fit start")
    fit = stats.linregress(t[ramp], v[ramp])
    if not fit.slope > 0 or (fit.stderr > 0 and fit.slope / fit.stderr < min_t):
        raise DataError("ramp VO2 slope is not significantly positive")
    crossing = (baseline - fit.intercept) / fit.slope
    return float(crossing - ramp_onset_s)


# ---------------------------------------------------------------------------
# error tables


@dataclass
class ErrorRow:
    label: str
    n: int
    mean: float
    sd: float


def _row(label, errors) -> ErrorRow:
    e = np.asarray(errors, dtype=np.float64)
    sd = float(e.std(ddof=1)) if e.size > 1 else 0.0
    return ErrorRow(label, int(e.size), float(e.mean()) if e.size else float("nan"), sd)


def error_table(by_kind, vo2peak_pairs=None) -> list[ErrorRow]:
    """Signed per-second error (pred - true) per protocol, pooled, and for VO2peak.

    ``by_kind`` maps a protocol kind to a list of ``(true, pred)`` array pairs.
    ``vo2peak_pairs``, when given, is a list of ``(true_peak, pred_peak)``
    values, one per participant.
    """
    rows, pooled = [], []
    for kind in ("L-M", "L-H", "VT-H", "RAMP"):
        pairs = by_kind.get(kind)
        if not pairs:
            continue
        errs = np.concatenate([np.asarray(p, float) - np.asarray(t, float) for t, p in pairs])
        pooled.append(errs)
        rows.append(_row(TABLE_LABELS[kind], errs))
    if not pooled:
        raise DataError("no predictions to tabulate")
    rows.append(_row("combined", np.concatenate(pooled)))
    if vo2peak_pairs:
        rows.append(_row("VO2peak", [p - t for t, p in vo2peak_pairs]))
    return rows


def transient_mask(work_rate, direction: str = "off", duration_s: int = 60) -> np.ndarray:
    """Seconds within ``duration_s`` after the most recent work-rate step, if that
    step went down (``'off'``) or up (``'on'``)."""
    wr = np.asarray(work_rate, dtype=np.float64)
    mask = np.zeros(wr.size, dtype=bool)
    steps = np.nonzero(np.diff(wr) != 0)[0] + 1
    for i, s in enumerate(steps):
        went_down = wr[s] < wr[s - 1]
        if went_down != (direction == "off"):
            continue
        end = steps[i + 1] if i + 1 < len(steps) else wr.size
        mask[s:min(end, s + duration_s)] = True
    return mask

"""Recordings, preprocessing, standardization and sliding-window datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import RngStream

PROTOCOL_KINDS = ("RAMP", "L-M", "L-H", "VT-H")

CSV_COLUMNS = ("time_s", "work_rate_w", "hr_bpm", "hrr_frac", "bf_brpm", "ve_lpm", "vo2_mlpm")
#: model input order; a subset may be used (e.g. heart rate only)
FEATURES = ("work_rate_w", "hr_bpm", "hrr_frac", "bf_brpm", "ve_lpm")
TARGET = "vo2_mlpm"
HRR_MAX = 1.05


@dataclass
class ProtocolRecording:
    """One participant-protocol session sampled at 1 Hz."""

    participant_id: str
    protocol_kind: str
    time_s: np.ndarray
    work_rate_w: np.ndarray
    hr_bpm: np.ndarray
    hrr_frac: np.ndarray
    bf_brpm: np.ndarray
    ve_lpm: np.ndarray
    vo2_mlpm: np.ndarray

    def __post_init__(self):
        for name in CSV_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    def __len__(self):
        return len(self.time_s)

    def column(self, name) -> np.ndarray:
        if name not in CSV_COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    def feature_matrix(self, features=FEATURES) -> np.ndarray:
        return np.column_stack([self.column(f) for f in features])

    def validate(self) -> None:
        if self.protocol_kind not in PROTOCOL_KINDS:
            raise DataError(f"unknown protocol kind {self.protocol_kind!r}")
        n = len(self.time_s)
        if n < 1:
            raise DataError("empty recording")
        for name in CSV_COLUMNS:
            col = self.column(name)
            if col.shape != (n,):
                raise DataError(f"column {name} has {col.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {name} contains non-finite values")
            if name != "time_s" and np.any(col < 0):
                raise DataError(f"column {name} contains negative values")
        if n > 1 and not np.allclose(np.diff(self.time_s), 1.0, rtol=0, atol=1e-9):
            raise DataError("time_s must increase in steps of exactly 1 s")
        if np.any(self.hrr_frac > HRR_MAX):
            raise DataError(f"hrr_frac exceeds {HRR_MAX}")


def read_recording(path, participant_id=None, protocol_kind=None) -> ProtocolRecording:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
                raise DataError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
            rows = [[float(v) for v in row] for row in reader if row]
    except OSError as exc:
        raise DataError(f"cannot read recording {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from exc
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(CSV_COLUMNS))
    rec = ProtocolRecording(participant_id or path.stem, protocol_kind or "RAMP",
                            *(arr[:, i] for i in range(len(CSV_COLUMNS))))
    if protocol_kind is not None:
        rec.validate()
    return rec


def write_recording(rec: ProtocolRecording, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        cols = [rec.column(c) for c in CSV_COLUMNS]
        for i in range(len(rec)):
            writer.writerow([f"{int(round(cols[0][i]))}"] + [f"{c[i]:.6f}" for c in cols[1:]])


# ---------------------------------------------------------------------------
# preprocessing


def median_filter5(series) -> np.ndarray:
    """Centered 5-sample median.

    Near the ends the window shrinks symmetrically (3 samples, then 1) so it
    stays centered; monotone series therefore pass through unchanged.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 1:
        raise DataError("median filter needs at least one sample")
    out = np.empty_like(x)
    n = x.size
    for i in range(n):
        half = min(2, i, n - 1 - i)
        out[i] = np.median(x[i - half:i + half + 1])
    return out


def resample_1hz(timestamps, values) -> tuple[np.ndarray, np.ndarray]:
    """Linearly interpolate irregular samples onto whole seconds."""
    t = np.asarray(timestamps, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size < 2 or t.shape != v.shape:
        raise DataError("resampling needs at least two samples with matching values")
    if np.any(np.diff(t) <= 0):
        raise DataError("timestamps must be strictly increasing")
    grid = np.arange(math.ceil(t[0]), math.floor(t[-1]) + 1, dtype=np.float64)
    return grid, np.interp(grid, t, v)


def align_by_xcorr(reference_hr, candidate_hr, max_lag: int) -> int:
    """Lag (s) that best aligns ``candidate_hr`` to ``reference_hr``.

    A positive lag means the candidate runs late: ``candidate[t + lag]``
    matches ``reference[t]``. The score is the Pearson correlation over the
    overlapping samples; ties go to the smallest ``|lag|``.
    """
    ref = np.asarray(reference_hr, dtype=np.float64)
    cand = np.asarray(candidate_hr, dtype=np.float64)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if min(ref.size, cand.size) < max(2, 2 * max_lag):
        raise DataError("series too short for the requested lag range")
    if np.std(ref) == 0 or np.std(cand) == 0:
        raise DataError("cannot cross-correlate a constant signal")
    best_lag, best_score = 0, -np.inf
    for lag in sorted(range(-max_lag, max_lag + 1), key=lambda v: (abs(v), v)):
        if lag >= 0:
            a, b = ref[:cand.size - lag], cand[lag:]
        else:
            a, b = ref[-lag:], cand[:ref.size + lag]
        m = min(a.size, b.size)
        a, b = a[:m], b[:m]
        if m < 2 or np.std(a) == 0 or np.std(b) == 0:
            continue
        score = np.corrcoef(a, b)[0, 1]
        if score > best_score + 1e-12:
            best_lag, best_score = lag, score
    return best_lag


def calibrate_ve(raw_ve, reference_ve) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` mapping raw to reference ventilation."""
    x = np.asarray(raw_ve, dtype=np.float64)
    y = np.asarray(reference_ve, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise DataError("calibration needs two equal-length series of at least 2 samples")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise DataError("raw ventilation is constant; slope undefined")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    return float(slope), float(ym - slope * xm)


def compute_hrr(hr, hr_rest: float, hr_max: float) -> np.ndarray:
    """Heart-rate-reserve fraction, unclipped."""
    if hr_max <= hr_rest:
        raise DataError("hr_max must exceed hr_rest")
    return (np.asarray(hr, dtype=np.float64) - hr_rest) / (hr_max - hr_rest)


# ---------------------------------------------------------------------------
# standardization


@dataclass
class FeatureScaler:
    """Training-set statistics: z-scores for physiology and VO2, min-max for work rate."""

    mean: dict
    std: dict
    wr_min: float
    wr_max: float

    def transform_column(self, name, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if name == "work_rate_w":
            return (values - self.wr_min) / (self.wr_max - self.wr_min)
        return (values - self.mean[name]) / self.std[name]

    def inverse_column(self, name, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if name == "work_rate_w":
            return values * (self.wr_max - self.wr_min) + self.wr_min
        return values * self.std[name] + self.mean[name]

    def transform_features(self, rec: ProtocolRecording, features=FEATURES) -> np.ndarray:
        return np.column_stack([self.transform_column(f, rec.column(f)) for f in features])

    def transform_target(self, vo2) -> np.ndarray:
        return self.transform_column(TARGET, vo2)

    def inverse_target(self, z) -> np.ndarray:
        return self.inverse_column(TARGET, z)

    def to_dict(self) -> dict:
        return {"mean": dict(self.mean), "std": dict(self.std),
                "wr_min": self.wr_min, "wr_max": self.wr_max}

    @classmethod
    def from_dict(cls, d) -> FeatureScaler:
        return cls({k: float(v) for k, v in d["mean"].items()},
                   {k: float(v) for k, v in d["std"].items()},
                   float(d["wr_min"]), float(d["wr_max"]))


def fit_scaler(train_recordings) -> FeatureScaler:
    recs = list(train_recordings)
    if not recs:
        raise DataError("cannot fit a scaler on no recordings")
    mean, std = {}, {}
    for name in ("hr_bpm", "hrr_frac", "bf_brpm", "ve_lpm", TARGET):
        pooled = np.concatenate([r.column(name) for r in recs])
        mean[name] = float(pooled.mean())
        std[name] = float(pooled.std())
        if not std[name] > 0:
            raise DataError(f"feature {name} has zero variance in the training data")
    wr = np.concatenate([r.work_rate_w for r in recs])
    if not wr.max() > wr.min():
        raise DataError("work rate is constant in the training data")
    return FeatureScaler(mean, std, float(wr.min()), float(wr.max()))


def apply_scaler(rec: ProtocolRecording, scaler: FeatureScaler, features=FEATURES):
    """Standardized ``(features (L, F), target (L,))`` for one recording."""
    return scaler.transform_features(rec, features), scaler.transform_target(rec.vo2_mlpm)


# ---------------------------------------------------------------------------
# sliding windows


@dataclass
class WindowDataset:
    """Stride-1 windows over one or more recordings, stored without copying.

    ``series`` stacks every recording's input rows; window ``i`` covers
    ``series[starts[i] : starts[i] + window]`` and its target is the VO2 at the
    window's last row.
    """

    series: np.ndarray
    target_series: np.ndarray
    starts: np.ndarray
    window: int
    provenance: list = field(default_factory=list)
    #: ``(first_row, n_rows)`` of each recording inside ``series``
    segments: list = field(default_factory=list)

    def __len__(self):
        return len(self.starts)

    @property
    def targets(self) -> np.ndarray:
        return self.target_series[self.starts + self.window - 1]

    @property
    def inputs(self) -> np.ndarray:
        """Materialized ``(N, T, F)`` array; prefer :meth:`batch` for large sets."""
        return self.batch(np.arange(len(self)))[0]

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx, dtype=np.int64)
        rows = self.starts[idx][:, None] + np.arange(self.window)[None, :]
        return self.series[rows], self.target_series[rows[:, -1]]

    def subsample(self, stride: int) -> WindowDataset:
        keep = np.arange(0, len(self), stride)
        return WindowDataset(self.series, self.target_series, self.starts[keep], self.window,
                             [self.provenance[i] for i in keep] if self.provenance else [],
                             list(self.segments))


def make_windows(rec: ProtocolRecording, T: int, scaler: FeatureScaler | None = None,
                 features=FEATURES) -> WindowDataset:
    """All ``L - T + 1`` windows of length ``T``; provenance end-times are ``T-1 .. L-1``."""
    if T < 1:
        raise DataError("window length must be positive")
    n = len(rec)
    if n < T:
        raise DataError(f"recording {rec.participant_id}/{rec.protocol_kind} has {n} rows, "
                        f"shorter than the window length {T}")
    if scaler is None:
        x, y = rec.feature_matrix(features), rec.vo2_mlpm.copy()
    else:
        x, y = apply_scaler(rec, scaler, features)
    starts = np.arange(n - T + 1)
    prov = [(rec.participant_id, rec.protocol_kind, int(s + T - 1)) for s in starts]
    return WindowDataset(x, y, starts, T, prov, [(0, n)])


def concat_windows(datasets) -> WindowDataset:
    datasets = list(datasets)
    if not datasets:
        raise DataError("no window datasets to concatenate")
    window = datasets[0].window
    if any(d.window != window for d in datasets):
        raise DataError("cannot mix window lengths")
    series, targets, starts, prov, segments = [], [], [], [], []
    offset = 0
    for d in datasets:
        series.append(d.series)
        targets.append(d.target_series)
        starts.append(d.starts + offset)
        prov.extend(d.provenance)
        segments.extend((offset + a, n) for a, n in d.segments)
        offset += len(d.series)
    return WindowDataset(np.concatenate(series), np.concatenate(targets),
                         np.concatenate(starts), window, prov, segments)


def build_windows(recordings, T, scaler, features=FEATURES) -> WindowDataset:
    return concat_windows(make_windows(r, T, scaler, features) for r in recordings)


# ---------------------------------------------------------------------------
# participant-level splitting


def split_by_participant(participant_ids, seed: int, ratios=(0.5, 0.25, 0.25)):
    """Deterministically partition whole participants into train/val/test.

    Returns three sorted lists of ids. A 20-participant cohort splits 10/5/5.
    """
    ids = sorted(set(participant_ids))
    if len(ids) < 3:
        raise DataError("need at least 3 participants to split")
    order = [ids[i] for i in RngStream(seed, "split").permutation(len(ids))]
    n = len(ids)
    n_val = max(1, round(n * ratios[1]))
    n_test = max(1, round(n * ratios[2]))
    n_train = n - n_val - n_test
    if n_train < 1:
        n_train, n_val = 1, n - 1 - n_test
    train = sorted(order[:n_train])
    val = sorted(order[n_train:n_train + n_val])
    test = sorted(order[n_train + n_val:])
    return train, val, test

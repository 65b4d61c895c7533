"""Evaluate a trained model on whole participants and write the report files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import PROTOCOL_KINDS
from .errors import DataError
from .evaluate import (BlandAltmanReport, ConfusionMatrix3, ErrorRow, MetsCategory,
                       bland_altman, bland_altman_rm, classify_mets, confusion_by_second,
                       error_table, mean_response_time, predict_protocol, vo2_to_mets, vo2peak)

REPORT_FILES = ("error_table.csv", "bland_altman_summary.csv", "bland_altman_points.csv",
                "confusion_matrix.csv", "mets_trace.csv", "participants.csv", "summary.csv")
FIGURE_FILES = ("bland_altman.png", "mets_trace.png", "confusion_matrix.png", "predictions.png")


@dataclass
class ProtocolPrediction:
    participant_id: str
    protocol_kind: str
    mass_kg: float
    time_s: np.ndarray
    vo2_true: np.ndarray
    vo2_pred: np.ndarray


@dataclass
class ParticipantSummary:
    participant_id: str
    mass_kg: float
    vo2peak_true: float = math.nan
    vo2peak_pred: float = math.nan
    mrt_true_s: float = math.nan
    mrt_pred_s: float = math.nan


@dataclass
class EvaluationReport:
    predictions: list[ProtocolPrediction]
    errors: list[ErrorRow]
    agreement: BlandAltmanReport
    confusion: ConfusionMatrix3
    participants: list[ParticipantSummary]
    peak_agreement: BlandAltmanReport | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def mae(self) -> float:
        err = np.concatenate([p.vo2_pred - p.vo2_true for p in self.predictions])
        return float(np.mean(np.abs(err)))


def evaluate_participants(model, scaler, features, participants, ba_ddof: int = 0,
                          peak_window_s: int = 20) -> EvaluationReport:
    """Predict every recording of ``participants`` (cold start excluded) and summarize."""
    if not participants:
        raise DataError("no participants to evaluate")
    rf = model.receptive_field
    preds, summaries, by_kind, peak_pairs, notes = [], [], {}, [], []
    for person in participants:
        prof = person.profile
        summary = ParticipantSummary(prof.participant_id, prof.mass_kg)
        for kind in PROTOCOL_KINDS:
            rec = person.recordings.get(kind)
            if rec is None:
                continue
            t, p = predict_protocol(model, rec, scaler, features)
            y = rec.vo2_mlpm[rf - 1:]
            preds.append(ProtocolPrediction(prof.participant_id, kind, prof.mass_kg, t, y, p))
            by_kind.setdefault(kind, []).append((y, p))
            if kind != "RAMP":
                continue
            if len(y) >= peak_window_s:
                summary.vo2peak_true = vo2peak(y, peak_window_s)
                summary.vo2peak_pred = vo2peak(p, peak_window_s)
                peak_pairs.append((summary.vo2peak_true, summary.vo2peak_pred))
            for attr, ts, series in (("mrt_true_s", rec.time_s, rec.vo2_mlpm), ("mrt_pred_s", t, p)):
                try:
                    setattr(summary, attr, mean_response_time(ts, series,
                                                              vt_vo2_ml_min=prof.vt_vo2_ml_min))
                except DataError as exc:
                    notes.append(f"{prof.participant_id} {attr}: {exc}")
        summaries.append(summary)
    if not preds:
        raise DataError("participants have no recordings")

    true = np.concatenate([q.vo2_true for q in preds])
    pred = np.concatenate([q.vo2_pred for q in preds])
    groups = np.concatenate([[q.participant_id] * len(q.vo2_true) for q in preds])
    mass = np.concatenate([np.full(len(q.vo2_true), q.mass_kg) for q in preds])
    agreement = bland_altman_rm(true, pred, groups, ddof=ba_ddof)
    peak = bland_altman(*zip(*peak_pairs)) if len(peak_pairs) >= 2 else None
    return EvaluationReport(preds, error_table(by_kind, peak_pairs), agreement,
                            confusion_by_second(true, pred, mass), summaries, peak, notes)


def _f(x) -> str:
    return f"{x:.6f}" if x is not None and math.isfinite(x) else ""


def _writer(path):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_report(report: EvaluationReport, out_dir, figures: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fh, w = _writer(out / "error_table.csv")
    with fh:
        w.writerow(["protocol", "n", "mean_error_mlpm", "sd_error_mlpm"])
        for r in report.errors:
            w.writerow([r.label, r.n, _f(r.mean), _f(r.sd)])
    written.append(out / "error_table.csv")

    fh, w = _writer(out / "bland_altman_summary.csv")
    with fh:
        w.writerow(["analysis", "method", "bias_mlpm", "sd_mlpm", "loa_low_mlpm", "loa_high_mlpm",
                    "n_pairs", "n_participants"])
        rows = [("vo2_per_second", report.agreement)]
        if report.peak_agreement is not None:
            rows.append(("vo2peak", report.peak_agreement))
        for name, ba in rows:
            w.writerow([name, ba.method, _f(ba.bias), _f(ba.sd), _f(ba.loa_low), _f(ba.loa_high),
                        ba.n_pairs, ba.n_participants])
    written.append(out / "bland_altman_summary.csv")

    fh, w = _writer(out / "bland_altman_points.csv")
    with fh:
        w.writerow(["participant_id", "protocol", "time_s", "mean_mlpm", "diff_mlpm"])
        for q in report.predictions:
            means, diffs = (q.vo2_true + q.vo2_pred) / 2, q.vo2_pred - q.vo2_true
            for t, m, d in zip(q.time_s, means, diffs):
                w.writerow([q.participant_id, q.protocol_kind, int(t), _f(m), _f(d)])
    written.append(out / "bland_altman_points.csv")

    fh, w = _writer(out / "confusion_matrix.csv")
    with fh:
        w.writerow(["true_category"] + [f"pred_{c.label}" for c in MetsCategory])
        for c in MetsCategory:
            w.writerow([c.label] + [int(v) for v in report.confusion.counts[c]])
    written.append(out / "confusion_matrix.csv")

    fh, w = _writer(out / "mets_trace.csv")
    with fh:
        w.writerow(["index", "participant_id", "protocol", "time_s", "vo2_true_mlpm",
                    "vo2_pred_mlpm", "mets_true", "mets_pred", "category_true", "category_pred"])
        i = 0
        for q in report.predictions:
            mt, mp = vo2_to_mets(q.vo2_true, q.mass_kg), vo2_to_mets(q.vo2_pred, q.mass_kg)
            ct, cp = classify_mets(mt), classify_mets(mp)
            for j in range(len(q.time_s)):
                w.writerow([i, q.participant_id, q.protocol_kind, int(q.time_s[j]),
                            _f(q.vo2_true[j]), _f(q.vo2_pred[j]), _f(mt[j]), _f(mp[j]),
                            MetsCategory(ct[j]).label, MetsCategory(cp[j]).label])
                i += 1
    written.append(out / "mets_trace.csv")

    fh, w = _writer(out / "participants.csv")
    with fh:
        w.writerow(["participant_id", "mass_kg", "vo2peak_true_mlpm", "vo2peak_pred_mlpm",
                    "mrt_true_s", "mrt_pred_s"])
        for s in report.participants:
            w.writerow([s.participant_id, _f(s.mass_kg), _f(s.vo2peak_true), _f(s.vo2peak_pred),
                        _f(s.mrt_true_s), _f(s.mrt_pred_s)])
    written.append(out / "participants.csv")

    fh, w = _writer(out / "summary.csv")
    with fh:
        w.writerow(["metric", "value"])
        w.writerow(["seconds", report.confusion.total])
        w.writerow(["participants", len(report.participants)])
        w.writerow(["mae_mlpm", _f(report.mae)])
        w.writerow(["mets_accuracy", _f(report.confusion.accuracy)])
        w.writerow(["ba_bias_mlpm", _f(report.agreement.bias)])
        w.writerow(["ba_loa_low_mlpm", _f(report.agreement.loa_low)])
        w.writerow(["ba_loa_high_mlpm", _f(report.agreement.loa_high)])
    written.append(out / "summary.csv")

    if figures:
        written.extend(_figures(report, out))
    return written


def _figures(report: EvaluationReport, out: Path) -> list[Path]:
    from . import plotting

    preds = report.predictions
    true = np.concatenate([q.vo2_true for q in preds])
    pred = np.concatenate([q.vo2_pred for q in preds])
    groups = np.concatenate([[q.participant_id] * len(q.vo2_true) for q in preds])
    mt = np.concatenate([vo2_to_mets(q.vo2_true, q.mass_kg) for q in preds])
    mp = np.concatenate([vo2_to_mets(q.vo2_pred, q.mass_kg) for q in preds])
    first = preds[0].participant_id
    traces = [(f"{q.participant_id} {q.protocol_kind}", q.time_s, q.vo2_true, q.vo2_pred)
              for q in preds if q.participant_id == first]
    return [
        plotting.plot_bland_altman((true + pred) / 2, pred - true, groups, report.agreement,
                                   out / "bland_altman.png"),
        plotting.plot_mets_trace(mt, mp, out / "mets_trace.png"),
        plotting.plot_confusion(report.confusion, out / "confusion_matrix.png"),
        plotting.plot_predictions(traces, out / "predictions.png"),
    ]

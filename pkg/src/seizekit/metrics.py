"""Event-level scoring of detections against annotated seizures.

Four scorers share one result type:

* ``moes_score``: minimum-overlap scoring with detection/seizure overlap
  fractions (DOL/SOL) and a minimum overlap duration;
* ``ovlp_score``: any positive overlap counts;
* ``ims_score``: any-overlap after widening each seizure by a margin;
* ``taes_score``: fractional, time-aligned credit (following Shah et al.'s
  TAES definition, which scores each event by its overlapped fraction).

Two intervals "overlap" only when they share a stretch of positive length;
touching endpoints do not count.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .core import AnnotationSet, DetectionEvent, Interval

METRICS = ("moes", "ovlp", "taes", "ims")
DEFAULT_THETAS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class MoesConfig:
    min_fraction: float = 0.3
    min_overlap_s: float = 10.0

    def __post_init__(self):
        if not 0 < self.min_fraction <= 1:
            raise ValueError("min_fraction must lie in (0, 1]")
        if self.min_overlap_s < 0:
            raise ValueError("min_overlap_s must be >= 0")


@dataclass
class ScoringResult:
    """Counts and verdicts for one recording.

    ``seizure_verdicts`` holds "TP"/"FN" per seizure and
    ``detection_fp`` the FP credit per detection (0/1, fractional for TAES).
    """

    metric: str
    tp: float
    fn: float
    fp: float
    seizure_verdicts: list[str] = field(default_factory=list)
    detection_fp: list[float] = field(default_factory=list)
    offsets: list[float] = field(default_factory=list)
    duration_h: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _intervals(events) -> list[Interval]:
    if isinstance(events, AnnotationSet):
        return list(events.seizures)
    return [e.interval if isinstance(e, DetectionEvent) else e for e in events]


def _overlap_matrix(dets: Sequence[Interval], szs: Sequence[Interval]) -> np.ndarray:
    """Overlap seconds, shape ``(detections, seizures)``."""
    if not dets or not szs:
        return np.zeros((len(dets), len(szs)))
    ds = np.array([[d.start, d.end] for d in dets])
    ss = np.array([[s.start, s.end] for s in szs])
    ov = np.minimum(ds[:, 1:2], ss[None, :, 1]) - np.maximum(ds[:, 0:1], ss[None, :, 0])
    return np.clip(ov, 0.0, None)


def _durations(ivs: Sequence[Interval]) -> np.ndarray:
    return np.array([iv.duration() for iv in ivs], dtype=np.float64)


def _hours(duration_s: float | None) -> float | None:
    return None if duration_s is None else duration_s / 3600.0


def dol(detection, seizures) -> float:
    """Fraction of the detection covered by seizures, capped at 1."""
    d = _intervals([detection])[0]
    ov = _overlap_matrix([d], _intervals(seizures))
    return float(min(1.0, ov.sum() / d.duration()))


def sol(seizure, detections) -> float:
    """Fraction of the seizure covered by detections, capped at 1."""
    s = _intervals([seizure])[0]
    ov = _overlap_matrix(_intervals(detections), [s])
    return float(min(1.0, ov.sum() / s.duration()))


def moes_score(
    detections,
    seizures,
    config: MoesConfig = MoesConfig(),
    window_w: float = 3.0,
    duration_s: float | None = None,
) -> ScoringResult:
    """Minimum-overlap scoring.

    A detection *qualifies* when its DOL reaches ``min_fraction``.  A seizure
    is TP when the qualifying detections cover at least ``min_fraction`` of
    it and at least ``min(min_overlap_s, seizure duration)`` seconds; a
    non-qualifying detection touching a seizure does not veto it but is an FP
    in its own right.  A detection is FP when it does not qualify or every
    seizure it overlaps has SOL below ``min_fraction``.
    """
    dets, szs = _intervals(detections), _intervals(seizures)
    ov = _overlap_matrix(dets, szs)
    d_len, s_len = _durations(dets), _durations(szs)
    dol_v = np.minimum(1.0, ov.sum(axis=1) / d_len) if dets else np.zeros(0)
    sol_v = np.minimum(1.0, ov.sum(axis=0) / s_len) if szs else np.zeros(0)
    qualifies = dol_v >= config.min_fraction

    verdicts, offsets = [], []
    for j, s in enumerate(szs):
        q_overlap = ov[qualifies, j].sum()
        tp = q_overlap / s_len[j] >= config.min_fraction and q_overlap >= min(config.min_overlap_s, s_len[j])
        verdicts.append("TP" if tp else "FN")
        if tp:
            first = min((dets[i] for i in np.flatnonzero(qualifies & (ov[:, j] > 0))), key=lambda d: d.start)
            offsets.append(first.start - s.start + window_w)

    fp = []
    for i in range(len(dets)):
        touched = ov[i] > 0
        is_fp = not qualifies[i] or not np.any(sol_v[touched] >= config.min_fraction)
        fp.append(1.0 if is_fp else 0.0)

    tp = verdicts.count("TP")
    return ScoringResult("moes", tp, len(szs) - tp, float(sum(fp)), verdicts, fp, offsets, _hours(duration_s))


def ovlp_score(detections, seizures, duration_s: float | None = None, metric: str = "ovlp") -> ScoringResult:
    """Any positive overlap makes the seizure a hit and the detection correct."""
    dets, szs = _intervals(detections), _intervals(seizures)
    hit = _overlap_matrix(dets, szs) > 0
    verdicts = ["TP" if hit[:, j].any() else "FN" for j in range(len(szs))]
    fp = [0.0 if hit[i].any() else 1.0 for i in range(len(dets))]
    tp = verdicts.count("TP")
    return ScoringResult(metric, tp, len(szs) - tp, float(sum(fp)), verdicts, fp, [], _hours(duration_s))


def ims_score(detections, seizures, margin_s: float = 30.0, duration_s: float | None = None) -> ScoringResult:
    """OVLP against seizures widened by ``margin_s`` on both sides."""
    if margin_s < 0:
        raise ValueError("margin must be >= 0")
    wide = [Interval(max(0.0, s.start - margin_s), s.end + margin_s) for s in _intervals(seizures)]
    return ovlp_score(detections, wide, duration_s, metric="ims")


def taes_score(detections, seizures, duration_s: float | None = None) -> ScoringResult:
    """Fractional scoring: TP credit SOL_j, FN credit 1 - SOL_j, FP credit 1 - DOL_i."""
    dets, szs = _intervals(detections), _intervals(seizures)
    ov = _overlap_matrix(dets, szs)
    sol_v = np.minimum(1.0, ov.sum(axis=0) / _durations(szs)) if szs else np.zeros(0)
    dol_v = np.minimum(1.0, ov.sum(axis=1) / _durations(dets)) if dets else np.zeros(0)
    fp = (1.0 - dol_v).tolist()
    verdicts = ["TP" if v > 0 else "FN" for v in sol_v]
    tp = float(sol_v.sum())
    return ScoringResult("taes", tp, len(szs) - tp, float(sum(fp)), verdicts, fp, [], _hours(duration_s))


def score(metric: str, detections, seizures, duration_s=None, window_w: float = 3.0, ims_margin: float = 30.0, moes=MoesConfig()):
    if metric == "moes":
        return moes_score(detections, seizures, moes, window_w, duration_s)
    if metric == "ovlp":
        return ovlp_score(detections, seizures, duration_s)
    if metric == "taes":
        return taes_score(detections, seizures, duration_s)
    if metric == "ims":
        return ims_score(detections, seizures, ims_margin, duration_s)
    raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


# -- aggregation --------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    tp: float
    fn: float
    fp: float
    sensitivity: float
    precision: float
    precision_undefined: bool
    afpr_h: float | None
    mfpr_h: float | None
    median_offset_s: float | None

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate(results: Iterable[ScoringResult]) -> Summary:
    """Pooled SEN/PRE plus mean and median false positives per hour.

    PRE with no detections at all is reported as 0 with ``precision_undefined``
    set; the FPR fields are ``None`` when no recording carries a duration.
    """
    results = list(results)
    tp = sum(r.tp for r in results)
    fn = sum(r.fn for r in results)
    fp = sum(r.fp for r in results)
    sen = tp / (tp + fn) if tp + fn > 0 else 0.0
    undefined = tp + fp == 0
    pre = 0.0 if undefined else tp / (tp + fp)
    rates = [r.fp / r.duration_h for r in results if r.duration_h]
    offsets = [o for r in results for o in r.offsets]
    return Summary(
        tp,
        fn,
        fp,
        sen,
        pre,
        undefined,
        float(np.mean(rates)) if rates else None,
        float(np.median(rates)) if rates else None,
        float(np.median(offsets)) if offsets else None,
    )


def write_report(results: Sequence[ScoringResult], path, recording_ids: Sequence[str] | None = None) -> dict:
    ids = list(recording_ids) if recording_ids is not None else [f"rec{i}" for i in range(len(results))]
    report = {
        "recordings": [dict(id=rid, **r.as_dict()) for rid, r in zip(ids, results)],
        "summary": aggregate(results).as_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# -- precision-recall sweep ---------------------------------------------------


@dataclass(frozen=True)
class PrPoint:
    theta: float
    precision: float
    recall: float


def pr_curve(
    score_at: Callable[[float], Sequence[ScoringResult]], thetas: Sequence[float] = DEFAULT_THETAS
) -> list[PrPoint]:
    """One (precision, recall) point per threshold.

    ``score_at(theta)`` returns the per-recording results obtained with that
    threshold (see :func:`seizekit.eeg_detector.postprocess`).
    """
    points = []
    for theta in thetas:
        s = aggregate(score_at(theta))
        points.append(PrPoint(float(theta), s.precision, s.sensitivity))
    return points


def write_pr_csv(points: Sequence[PrPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta", "precision", "recall"])
        for p in points:
            writer.writerow([f"{p.theta:g}", f"{p.precision:.6f}", f"{p.recall:.6f}"])


def pr_svg(points: Sequence[PrPoint], title: str = "precision-recall", size: int = 320) -> str:
    """Recall on x, precision on y, both on [0, 1]."""
    pad = 40
    span = size - 2 * pad

    def xy(p):
        return f"{pad + p.recall * span:.2f},{pad + (1 - p.precision) * span:.2f}"

    poly = " ".join(xy(p) for p in points)
    marks = "".join(
        f'<circle cx="{xy(p).split(",")[0]}" cy="{xy(p).split(",")[1]}" r="2.5"><title>theta={p.theta:g}</title></circle>'
        for p in points
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">'
        f'<text x="{size / 2}" y="20" text-anchor="middle" font-size="12">{escape(title)}</text>'
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>'
        f'<text x="{size / 2}" y="{size - 10}" text-anchor="middle" font-size="11">recall</text>'
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="11" transform="rotate(-90 12 {size / 2})">precision</text>'
        f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="1.5"/>'
        f"{marks}</svg>\n"
    )


def write_pr_svg(points: Sequence[PrPoint], path, title: str = "precision-recall") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(pr_svg(points, title))


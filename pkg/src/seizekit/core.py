"""Shared domain types, interval helpers and the on-disk recording bundle."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BUNDLE_VERSION = 1
HEADER_FILE = "header.json"
SIGNAL_FILE = "signal.f32"
ANNOTATION_FILE = "annotations.csv"
ANNOTATION_COLUMNS = ("start_s", "end_s", "label")

WINDOW_LENGTHS = (3, 5, 10, 20)
SMOOTH_SECONDS = (3, 5, 7)
SMOOTH_TYPES = ("mean", "median", "max")


class BundleError(ValueError):
    """Raised when a recording bundle cannot be read or written.

    ``field`` names the header key, file or row that was at fault.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open time span ``[start, end)`` in seconds."""

    start: float
    end: float

    def __post_init__(self):
        start, end = float(self.start), float(self.end)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ValueError(f"non-finite interval bounds ({start}, {end})")
        if start < 0:
            raise ValueError(f"interval start {start} is negative")
        if end <= start:
            raise ValueError(f"end before start: ({start}, {end})")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    def duration(self) -> float:
        return self.end - self.start

    def shifted(self, offset: float) -> "Interval":
        return Interval(self.start + offset, self.end + offset)


def overlap_duration(a: Interval, b: Interval) -> float:
    """Length of the intersection of two intervals (0 when disjoint)."""
    return max(0.0, min(a.end, b.end) - max(a.start, b.start))


@dataclass(frozen=True)
class DetectionEvent:
    interval: Interval
    peak_probability: float = 1.0

    def __post_init__(self):
        p = float(self.peak_probability)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"peak_probability {p} outside [0, 1]")
        object.__setattr__(self, "peak_probability", p)

    @property
    def start(self) -> float:
        return self.interval.start

    @property
    def end(self) -> float:
        return self.interval.end


@dataclass(frozen=True)
class AnnotationSet:
    """Ground-truth seizures, sorted and with overlaps merged.

    Build through :meth:`from_intervals` to get the normalisation; the
    constructor only checks that the invariants already hold.
    """

    seizures: tuple[Interval, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        seizures = tuple(self.seizures)
        labels = tuple(self.labels) if self.labels else ("seizure",) * len(seizures)
        if len(labels) != len(seizures):
            raise ValueError("labels and seizures differ in length")
        for prev, cur in zip(seizures, seizures[1:]):
            if cur.start < prev.end:
                raise ValueError("annotation intervals must be sorted and disjoint")
        object.__setattr__(self, "seizures", seizures)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_intervals(cls, intervals: Iterable[Interval], labels: Sequence[str] | None = None):
        items = list(intervals)
        labs = list(labels) if labels is not None else ["seizure"] * len(items)
        if len(labs) != len(items):
            raise ValueError("labels and intervals differ in length")
        order = sorted(range(len(items)), key=lambda i: (items[i].start, items[i].end))
        merged: list[list] = []
        for i in order:
            iv, lab = items[i], labs[i]
            if merged and iv.start < merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], iv.end)
                merged[-1][2].append(lab)
            else:
                merged.append([iv.start, iv.end, [lab]])
        return cls(
            tuple(Interval(s, e) for s, e, _ in merged),
            tuple("+".join(labs_) for _, _, labs_ in merged),
        )

    def __len__(self) -> int:
        return len(self.seizures)

    def __iter__(self):
        return iter(self.seizures)


@dataclass(frozen=True, eq=False)
class Recording:
    """Multi-channel signal in microvolts.

    ``data`` is a read-only float32 array of shape ``(n_channels, n_samples)``.
    """

    channel_names: tuple[str, ...]
    data: np.ndarray
    fs: float
    montage: str = "monopolar"
    id: str = "recording"

    def __post_init__(self):
        names = tuple(str(n) for n in self.channel_names)
        data = np.array(self.data, dtype=np.float32, copy=True, order="C")
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ValueError("data must be 2-D (channels, samples)")
        if data.shape[0] != len(names):
            raise ValueError(f"{len(names)} channel names for {data.shape[0]} channels")
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.montage not in ("monopolar", "bipolar"):
            raise ValueError(f"unknown montage {self.montage!r}")
        data.setflags(write=False)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    @property
    def channels(self) -> list[tuple[str, np.ndarray]]:
        return list(zip(self.channel_names, self.data))

    def channel(self, name: str) -> np.ndarray:
        return self.data[self.channel_names.index(name)]

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.channel_names == other.channel_names
            and self.fs == other.fs
            and self.montage == other.montage
            and self.id == other.id
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True)
class PipelineConfig:
    """EEG-level detection settings.

    ``step`` overrides the default window stride of ``window_w - overlap_to``
    (e.g. ``step=1`` for heavily overlapping epochs).
    """

    window_w: int = 3
    overlap_to: float = 1.0
    smooth_type: str = "mean"
    smooth_seconds: int = 5
    threshold_theta: float = 0.5
    min_chain_nc: int = 3
    merge_gap: int = 3
    mains_hz: int = 60
    step: float | None = None
    ieeg_mode: bool = False
    batch_size: int = 4096
    jobs: int = 1

    def __post_init__(self):
        if self.window_w not in WINDOW_LENGTHS:
            raise ValueError(f"window_w must be one of {WINDOW_LENGTHS}")
        if not 0 <= self.overlap_to < self.window_w:
            raise ValueError("overlap_to must satisfy 0 <= overlap_to < window_w")
        if self.smooth_type not in SMOOTH_TYPES:
            raise ValueError(f"smooth_type must be one of {SMOOTH_TYPES}")
        if self.smooth_seconds not in SMOOTH_SECONDS:
            raise ValueError(f"smooth_seconds must be one of {SMOOTH_SECONDS}")
        if not 0.1 <= self.threshold_theta <= 0.9:
            raise ValueError("threshold_theta must lie in [0.1, 0.9]")
        if not 1 <= self.min_chain_nc <= 20:
            raise ValueError("min_chain_nc must lie in [1, 20]")
        if self.merge_gap < 0:
            raise ValueError("merge_gap must be >= 0")
        if self.mains_hz not in (50, 60):
            raise ValueError("mains_hz must be 50 or 60")
        if self.step is not None and not 0 < self.step:
            raise ValueError("step must be positive")
        if self.jobs < 1 or self.batch_size < 1:
            raise ValueError("jobs and batch_size must be >= 1")

    @property
    def epoch_step(self) -> float:
        return float(self.step) if self.step is not None else self.window_w - self.overlap_to

    @property
    def smooth_len_kf(self) -> int:
        """Smoothing length in epochs: ceil(seconds / step), bumped to odd, >= 3."""
        k = max(3, math.ceil(self.smooth_seconds / self.epoch_step - 1e-9))
        return k if k % 2 else k + 1

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# -- bundle I/O ---------------------------------------------------------------


def store_bundle(recording: Recording, annotations: AnnotationSet, path) -> None:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        header = {
            "version": BUNDLE_VERSION,
            "id": recording.id,
            "fs": recording.fs,
            "montage": recording.montage,
            "channel_names": list(recording.channel_names),
            "n_samples": recording.n_samples,
        }
        with open(path / HEADER_FILE, "w", encoding="utf-8") as fh:
            json.dump(header, fh, indent=2)
            fh.write("\n")
        recording.data.astype("<f4").tofile(path / SIGNAL_FILE)
        with open(path / ANNOTATION_FILE, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ANNOTATION_COLUMNS)
            for iv, label in zip(annotations.seizures, annotations.labels):
                writer.writerow([repr(iv.start), repr(iv.end), label])
    except OSError as exc:
        raise BundleError(f"cannot write bundle: {exc}", field=str(path)) from exc


def _header_field(header: dict, key: str, kind):
    if key not in header:
        raise BundleError("missing field", field=key)
    value = header[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise BundleError(f"unexpected type {type(value).__name__}", field=key)
    return value


def load_annotations(path) -> AnnotationSet:
    path = Path(path)
    if not path.exists():
        raise BundleError("file not found", field=path.name)
    intervals, labels = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ANNOTATION_COLUMNS:
            raise BundleError(f"header must be {','.join(ANNOTATION_COLUMNS)}", field=path.name)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise BundleError("expected start_s,end_s,label", field=f"{path.name} line {lineno}")
            try:
                start, end = float(row[0]), float(row[1])
            except ValueError:
                raise BundleError("non-numeric time", field=f"{path.name} line {lineno}") from None
            if end <= start:
                raise BundleError("end before start", field=f"{path.name} line {lineno}")
            try:
                intervals.append(Interval(start, end))
            except ValueError as exc:
                raise BundleError(str(exc), field=f"{path.name} line {lineno}") from None
            labels.append(row[2] if len(row) > 2 else "")
    return AnnotationSet.from_intervals(intervals, labels)


def load_bundle(path) -> tuple[Recording, AnnotationSet]:
    path = Path(path)
    if not path.is_dir():
        raise BundleError("bundle directory not found", field=str(path))
    try:
        with open(path / HEADER_FILE, encoding="utf-8") as fh:
            header = json.load(fh)
    except FileNotFoundError:
        raise BundleError("file not found", field=HEADER_FILE) from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"invalid JSON: {exc}", field=HEADER_FILE) from None

    version = header.get("version")
    if version != BUNDLE_VERSION:
        raise BundleError(f"unknown version {version!r}", field="version")
    fs = _header_field(header, "fs", (int, float))
    montage = _header_field(header, "montage", str)
    names = _header_field(header, "channel_names", list)
    n_samples = _header_field(header, "n_samples", int)
    if n_samples < 0:
        raise BundleError("must be non-negative", field="n_samples")

    signal_path = path / SIGNAL_FILE
    if not signal_path.exists():
        raise BundleError("file not found", field=SIGNAL_FILE)
    raw = np.fromfile(signal_path, dtype="<f4")
    if raw.size != len(names) * n_samples:
        if n_samples and raw.size % n_samples == 0:
            raise BundleError(
                f"channel count mismatch: header declares {len(names)}, "
                f"signal holds {raw.size // n_samples}",
                field="channel_names",
            )
        raise BundleError("signal length mismatch", field="n_samples")
    try:
        recording = Recording(
            channel_names=tuple(names),
            data=raw.reshape(len(names), n_samples),
            fs=float(fs),
            montage=montage,
            id=str(header.get("id", path.name)),
        )
    except ValueError as exc:
        raise BundleError(str(exc), field=HEADER_FILE) from None
    return recording, load_annotations(path / ANNOTATION_FILE)


def write_detections_csv(events: Sequence[DetectionEvent], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["start_s", "end_s", "peak_prob"])
        for ev in events:
            writer.writerow([f"{ev.start:.6f}", f"{ev.end:.6f}", f"{ev.peak_probability:.6f}"])


def read_detections_csv(path) -> list[DetectionEvent]:
    events = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["start_s", "end_s", "peak_prob"]:
            raise BundleError("header must be start_s,end_s,peak_prob", field=f"{os.fspath(path)} line 1")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 3:
                    raise ValueError("expected 3 columns")
                start, end, peak = (float(v) for v in row)
                events.append(DetectionEvent(Interval(start, end), peak))
            except ValueError as exc:
                raise BundleError(str(exc), field=f"{os.fspath(path)} line {lineno}") from None
    return events

"""Recording-level detection: per-epoch segment probabilities turned into events.

The postprocessing chain is smooth -> threshold -> drop short chains -> merge
nearby chains, then each remaining run of positive epochs becomes one event.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .channel_detector import ChannelModel
from .core import DetectionEvent, Interval, PipelineConfig, Recording
from .dsp import TARGET_FS, default_montage_pairs, preprocess, seconds_to_samples, to_bipolar, window_array
from .gbt import GbtModel, predict_proba
from .segment_detector import assign_regions, regional_features

log = logging.getLogger(__name__)

FLAT_STD = 1e-6


@dataclass(frozen=True, eq=False)
class ProbabilitySequence:
    """One probability per epoch; epoch ``i`` starts at ``start + i*step`` seconds."""

    values: np.ndarray
    step: float
    start: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("probability sequence must be 1-D")
        if not np.all(np.isfinite(v)) or np.any((v < 0) | (v > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if not self.step > 0:
            raise ValueError("epoch step must be positive")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(self.values.size) * self.step

    def with_values(self, values) -> "ProbabilitySequence":
        return ProbabilitySequence(values, self.step, self.start)


_REDUCERS = {"mean": np.nanmean, "median": np.nanmedian, "max": np.nanmax}


def smooth(p, kind: str, k: int):
    """Centred sliding ``kind`` filter of ``k`` epochs; edge windows are truncated.

    Accepts a :class:`ProbabilitySequence` or a plain array and returns the
    same type.
    """
    seq = p if isinstance(p, ProbabilitySequence) else None
    v = np.asarray(seq.values if seq is not None else p, dtype=np.float64)
    if kind not in _REDUCERS:
        raise ValueError(f"unknown smoothing type {kind!r}")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"smoothing length must be odd, got {k}")
    if k > v.size:
        raise ValueError(f"smoothing length {k} exceeds sequence length {v.size}")
    half = k // 2
    padded = np.pad(v, half, constant_values=np.nan)
    out = _REDUCERS[kind](sliding_window_view(padded, k), axis=1)
    return seq.with_values(out) if seq is not None else out


def binarize(p, theta: float) -> np.ndarray:
    v = p.values if isinstance(p, ProbabilitySequence) else np.asarray(p, dtype=np.float64)
    return (v >= theta).astype(np.int8)


def runs(bits) -> list[tuple[int, int]]:
    """Maximal runs of ones as half-open ``(start, stop)`` index pairs."""
    b = np.asarray(bits, dtype=np.int8)
    edges = np.diff(np.concatenate(([0], b, [0])))
    return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


def remove_short_chains(bits, n_c: int) -> np.ndarray:
    """Zero every run of ones shorter than ``n_c``."""
    out = np.array(bits, dtype=np.int8)
    for a, b in runs(out):
        if b - a < n_c:
            out[a:b] = 0
    return out


def merge_nearby(bits, gap: int) -> np.ndarray:
    """Fill interior zero gaps of at most ``gap`` epochs between two runs."""
    out = np.array(bits, dtype=np.int8)
    r = runs(out)
    for (_, stop), (start, _) in zip(r, r[1:]):
        if start - stop <= gap:
            out[stop:start] = 1
    return out


def bits_to_events(bits, p: ProbabilitySequence, window_w: float) -> list[DetectionEvent]:
    """One event per run: first epoch start to last epoch start + ``window_w``."""
    times = p.times
    return [
        DetectionEvent(Interval(float(times[a]), float(times[b - 1] + window_w)), float(p.values[a:b].max()))
        for a, b in runs(bits)
    ]


def postprocess(p: ProbabilitySequence, config: PipelineConfig, theta: float | None = None) -> list[DetectionEvent]:
    """Events from raw segment probabilities; ``theta`` overrides the configured threshold."""
    if len(p) == 0:
        return []
    k = min(config.smooth_len_kf, len(p) if len(p) % 2 else len(p) - 1)
    smoothed = smooth(p, config.smooth_type, k)
    bits = binarize(smoothed, config.threshold_theta if theta is None else theta)
    bits = remove_short_chains(bits, config.min_chain_nc)
    bits = merge_nearby(bits, config.merge_gap)
    return bits_to_events(bits, smoothed, config.window_w)


def detection_offset(detection, seizure, window_w: float) -> float:
    """``d_start - s_start + W``; negative when the detection window opens before onset."""
    d = detection.interval if isinstance(detection, DetectionEvent) else detection
    return d.start - seizure.start + window_w


# -- full pipeline ------------------------------------------------------------


def prepare(recording: Recording, config: PipelineConfig) -> Recording:
    """Bipolar montage (scalp, if still monopolar), filtering and resampling to 128 Hz."""
    if recording.montage == "monopolar" and not config.ieeg_mode:
        recording = to_bipolar(recording, default_montage_pairs())
    return preprocess(recording, config.mains_hz)


def channel_probabilities(recording: Recording, model: ChannelModel, config: PipelineConfig) -> np.ndarray:
    """``(epochs, channels)`` channel-level probabilities for a preprocessed recording."""
    if model.spec.window_w != config.window_w:
        raise ValueError(f"channel model expects {model.spec.window_w} s windows, config asks for {config.window_w} s")
    windows = window_array(recording.data, recording.fs, config.window_w, config.epoch_step)
    n_win, n_ch, length = windows.shape
    flat = windows.reshape(n_win * n_ch, length)
    params = model.inference_params()
    bounds = [(s, min(s + config.batch_size, flat.shape[0])) for s in range(0, flat.shape[0], config.batch_size)]

    def run(b):
        return model.predict_proba(flat[b[0] : b[1]], batch_size=1024, params=params)

    if config.jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(config.jobs) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    out = np.concatenate(parts) if parts else np.zeros(0)
    # flat windows carry no activity; z-scoring would turn them into all-zero inputs
    out[flat.std(axis=1) <= FLAT_STD] = 0.0
    return out.reshape(n_win, n_ch)


def segment_probabilities(
    recording: Recording, channel_model: ChannelModel, segment_model: GbtModel, config: PipelineConfig
) -> ProbabilitySequence:
    """Raw per-epoch segment probabilities for an unprocessed recording."""
    rec = prepare(recording, config)
    step = seconds_to_samples(config.epoch_step, TARGET_FS) / TARGET_FS
    chan = channel_probabilities(rec, channel_model, config)
    if chan.shape[0] == 0:
        log.warning("recording %s is shorter than one window; nothing to detect", recording.id)
        return ProbabilitySequence(np.zeros(0), step)
    features = regional_features(chan, assign_regions(rec.channel_names, config.ieeg_mode))
    return ProbabilitySequence(predict_proba(segment_model, features), step)


def detect(
    recording: Recording, channel_model: ChannelModel, segment_model: GbtModel, config: PipelineConfig = PipelineConfig()
) -> list[DetectionEvent]:
    return postprocess(segment_probabilities(recording, channel_model, segment_model, config), config)

"""Preprocessing chain and window extraction.

Filters are designed here as Butterworth analog prototypes mapped through
the bilinear transform and realised as cascades of biquads.  Running the
cascade over a signal is delegated to :func:`scipy.signal.sosfilt`, which
implements the same direct-form-II-transposed recursion.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .core import Recording

TARGET_FS = 128
FILTER_ORDER = 4
HIGHPASS_HZ = 1.0
ANTIALIAS_HZ = 50.0
NOTCH_HALF_WIDTH_HZ = 2.0


class FilterDesignError(ValueError):
    pass


class ShortRecordingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections, each ``(b0, b1, b2, a1, a2)`` with ``a0 = 1``."""

    sections: tuple[tuple[float, float, float, float, float], ...]
    description: str = ""

    def __post_init__(self):
        secs = tuple(tuple(float(c) for c in s) for s in self.sections)
        for s in secs:
            if len(s) != 5:
                raise ValueError("each section needs 5 coefficients")
        object.__setattr__(self, "sections", secs)

    @classmethod
    def identity(cls) -> "BiquadCascade":
        return cls(((1.0, 0.0, 0.0, 0.0, 0.0),), "identity")

    def sos(self) -> np.ndarray:
        """Coefficients in the ``[b0, b1, b2, 1, a1, a2]`` layout scipy expects."""
        return np.array([[b0, b1, b2, 1.0, a1, a2] for b0, b1, b2, a1, a2 in self.sections])

    def pole_radii(self) -> np.ndarray:
        radii = []
        for _, _, _, a1, a2 in self.sections:
            radii.extend(np.abs(np.roots([1.0, a1, a2])) if a2 != 0 or a1 != 0 else [0.0])
        return np.asarray(radii)

    def is_stable(self) -> bool:
        return bool(np.all(self.pole_radii() < 1.0))

    def frequency_response(self, freqs_hz, fs: float) -> np.ndarray:
        """Complex response H(e^{jw}) evaluated directly from the coefficients."""
        z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / fs)
        z2 = z1 * z1
        h = np.ones_like(z1)
        for b0, b1, b2, a1, a2 in self.sections:
            h = h * (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
        return h

    def __add__(self, other: "BiquadCascade") -> "BiquadCascade":
        desc = " -> ".join(d for d in (self.description, other.description) if d)
        return BiquadCascade(self.sections + other.sections, desc)


def _bilinear(roots: np.ndarray, fs: float) -> np.ndarray:
    fs2 = 2.0 * fs
    return (fs2 + roots) / (fs2 - roots)


def _prewarp(f_hz: float, fs: float) -> float:
    return 2.0 * fs * math.tan(math.pi * f_hz / fs)


def _pair_conjugates(roots: np.ndarray) -> list[np.ndarray]:
    """Group roots into conjugate pairs (real roots pair with each other)."""
    roots = list(np.asarray(roots, dtype=complex))
    cplx = sorted((r for r in roots if r.imag > 1e-12), key=lambda r: (abs(r), np.angle(r)))
    reals = sorted(r.real for r in roots if abs(r.imag) <= 1e-12)
    pairs = [np.array([r, np.conj(r)]) for r in cplx]
    while reals:
        chunk, reals = reals[:2], reals[2:]
        pairs.append(np.array(chunk, dtype=complex))
    return pairs


def _sections_from_zpk(zeros, poles, fs, ref_hz) -> tuple:
    """Biquads from digital zeros/poles, each normalised to unit gain at ``ref_hz``."""
    zpairs = _pair_conjugates(zeros)
    ppairs = _pair_conjugates(poles)
    if len(zpairs) != len(ppairs):
        raise FilterDesignError("zero/pole pairing failed")
    # all zero pairs are identical for these designs, so pole order is free
    z_ref = np.exp(-2j * np.pi * ref_hz / fs)
    sections = []
    for zp, pp in zip(zpairs, ppairs):
        b = np.real(np.poly(zp))
        a = np.real(np.poly(pp))
        b = np.pad(b, (0, 3 - b.size))
        a = np.pad(a, (0, 3 - a.size))
        num = b[0] + b[1] * z_ref + b[2] * z_ref**2
        den = a[0] + a[1] * z_ref + a[2] * z_ref**2
        g = abs(den / num)
        sections.append((g * b[0], g * b[1], g * b[2], a[1], a[2]))
    return tuple(sections)


def design_butterworth(kind: str, order: int, edges, fs: float) -> BiquadCascade:
    """Digital Butterworth filter as a biquad cascade.

    ``kind`` is ``"lowpass"``, ``"highpass"`` or ``"bandstop"``.  For a
    bandstop, ``order`` is the prototype order, so the cascade has
    ``order`` biquads (the usual convention of ``scipy.signal.butter``).
    """
    edges = [float(e) for e in np.atleast_1d(edges)]
    nyq = fs / 2.0
    for e in edges:
        if not 0.0 < e < nyq:
            raise FilterDesignError(f"edge {e} Hz must lie strictly inside (0, {nyq}) Hz")
    if order < 1:
        raise FilterDesignError("order must be >= 1")
    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))

    if kind in ("lowpass", "highpass"):
        if len(edges) != 1:
            raise FilterDesignError(f"{kind} takes exactly one edge")
        wc = _prewarp(edges[0], fs)
        if kind == "lowpass":
            poles_a = wc * proto
            zeros_d = -np.ones(order)
            ref = 0.0
        else:
            poles_a = wc / proto
            zeros_d = np.ones(order)
            ref = nyq
        poles_d = _bilinear(poles_a, fs)
    elif kind == "bandstop":
        if len(edges) != 2 or edges[0] >= edges[1]:
            raise FilterDesignError("bandstop takes two increasing edges")
        w1, w2 = _prewarp(edges[0], fs), _prewarp(edges[1], fs)
        w0, bw = math.sqrt(w1 * w2), w2 - w1
        disc = np.sqrt((bw / (2 * proto)) ** 2 - w0**2 + 0j)
        poles_a = np.concatenate([bw / (2 * proto) + disc, bw / (2 * proto) - disc])
        poles_d = _bilinear(poles_a, fs)
        z0 = _bilinear(np.array([1j * w0]), fs)[0]
        zeros_d = np.concatenate([np.full(order, z0), np.full(order, np.conj(z0))])
        ref = 0.0
    else:
        raise FilterDesignError(f"unsupported filter kind {kind!r}")

    sections = _sections_from_zpk(zeros_d, poles_d, fs, ref)
    desc = f"butterworth {kind} order {order} edges {edges} Hz @ {fs:g} Hz"
    cascade = BiquadCascade(sections, desc)
    if not cascade.is_stable():
        raise FilterDesignError(f"unstable design: {desc}")
    return cascade


def apply_filter(cascade: BiquadCascade, x) -> np.ndarray:
    """Causal filtering along the last axis with zero initial state."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("cannot filter an empty signal")
    return sps.sosfilt(cascade.sos(), x, axis=-1)


def preprocessing_cascade(fs: float, mains_hz: float) -> BiquadCascade:
    notch = design_butterworth(
        "bandstop", FILTER_ORDER, [mains_hz - NOTCH_HALF_WIDTH_HZ, mains_hz + NOTCH_HALF_WIDTH_HZ], fs
    )
    highpass = design_butterworth("highpass", FILTER_ORDER, [HIGHPASS_HZ], fs)
    antialias = design_butterworth("lowpass", FILTER_ORDER, [ANTIALIAS_HZ], fs)
    return notch + highpass + antialias


def decimation_factor(fs: float) -> int:
    ratio = fs / TARGET_FS
    r = round(ratio)
    if fs < TARGET_FS or r < 1 or abs(ratio - r) > 1e-9:
        raise ValueError(f"sampling rate {fs} Hz is not an integer multiple of {TARGET_FS} Hz")
    return int(r)


def preprocess(recording: Recording, mains_hz: float = 60) -> Recording:
    """Notch, 1 Hz highpass, 50 Hz anti-alias lowpass, then decimate to 128 Hz."""
    factor = decimation_factor(recording.fs)
    cascade = preprocessing_cascade(recording.fs, mains_hz)
    filtered = apply_filter(cascade, recording.data)
    out = filtered[:, ::factor]
    return Recording(recording.channel_names, out, TARGET_FS, recording.montage, recording.id)


def default_montage_pairs() -> list[tuple[str, str]]:
    text = resources.files("seizekit.data").joinpath("double_banana.json").read_text("utf-8")
    return [tuple(p) for p in json.loads(text)]


def load_montage_pairs(path) -> list[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        pairs = json.load(fh)
    if not isinstance(pairs, list) or not all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(n, str) for n in p) for p in pairs
    ):
        raise ValueError("montage file must be a JSON array of [anode, cathode] pairs")
    return [tuple(p) for p in pairs]


def to_bipolar(recording: Recording, montage_pairs: Sequence[tuple[str, str]]) -> Recording:
    if recording.montage != "monopolar":
        raise ValueError("recording is already bipolar")
    index = {name: i for i, name in enumerate(recording.channel_names)}
    for anode, cathode in montage_pairs:
        for name in (anode, cathode):
            if name not in index:
                raise ValueError(f"missing channel {name}")
    data = recording.data
    out = np.stack([data[index[a]] - data[index[c]] for a, c in montage_pairs]) if montage_pairs else (
        np.zeros((0, recording.n_samples), dtype=np.float32)
    )
    names = [f"{a}-{c}" for a, c in montage_pairs]
    return Recording(names, out, recording.fs, "bipolar", recording.id)


def seconds_to_samples(t: float, fs: float) -> int:
    """Round half-up."""
    return int(math.floor(t * fs + 0.5))


@dataclass(frozen=True, eq=False)
class Segment:
    samples: np.ndarray
    start_time: float
    fs: float


def window_starts(n_samples: int, fs: float, window_w: float, step: float) -> np.ndarray:
    """Sample offsets of every full window; trailing partial windows are dropped."""
    win = seconds_to_samples(window_w, fs)
    hop = seconds_to_samples(step, fs)
    if hop < 1:
        raise ValueError("window step must be at least one sample")
    if n_samples < win:
        return np.zeros(0, dtype=np.int64)
    return np.arange((n_samples - win) // hop + 1, dtype=np.int64) * hop


def window_array(data: np.ndarray, fs: float, window_w: float, step: float) -> np.ndarray:
    """Read-only view of shape ``(n_windows, n_channels, W*fs)``."""
    win = seconds_to_samples(window_w, fs)
    starts = window_starts(data.shape[-1], fs, window_w, step)
    if starts.size == 0:
        return np.zeros((0, data.shape[0], win), dtype=data.dtype)
    hop = seconds_to_samples(step, fs)
    view = sliding_window_view(data, win, axis=-1)[:, ::hop]
    return view[:, : starts.size].transpose(1, 0, 2)


def extract_windows(recording: Recording, window_w: float, overlap_to: float, step: float | None = None) -> list[Segment]:
    """Sliding windows of ``window_w`` seconds; consecutive windows share ``overlap_to`` s.

    ``step`` overrides the stride (e.g. 1 s).  A recording shorter than one
    window yields an empty list and a :class:`ShortRecordingWarning`.
    """
    if window_w <= overlap_to:
        raise ValueError("window length must exceed the overlap")
    stride = window_w - overlap_to if step is None else step
    if recording.n_samples < seconds_to_samples(window_w, recording.fs):
        warnings.warn(
            f"recording of {recording.duration:g} s is shorter than the {window_w} s window",
            ShortRecordingWarning,
            stacklevel=2,
        )
        return []
    hop = seconds_to_samples(stride, recording.fs)
    windows = window_array(recording.data, recording.fs, window_w, stride)
    return [
        Segment(np.array(w), i * hop / recording.fs, recording.fs) for i, w in enumerate(windows)
    ]

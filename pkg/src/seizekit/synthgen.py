"""Seeded synthetic EEG with injected rhythmic seizures.

Background is 1/f^alpha noise per channel; each seizure adds, on a random
subset of channels, an enveloped oscillation at ``dominant_hz`` with a sharp
spike per cycle (a spike-and-wave caricature).  All randomness comes from
counter-based Philox streams derived from the config seed, one per channel
and one per seizure.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import AnnotationSet, Interval, Recording
from .dsp import default_montage_pairs

BACKGROUND_UV = 20.0
RAMP_S = 2.0
CHANNEL_TAG = "channels="


@dataclass(frozen=True)
class SeizureSpec:
    start_s: float
    duration_s: float
    dominant_hz: float = 3.0
    amplitude_ratio: float = 4.0
    channel_fraction: float = 0.6

    def __post_init__(self):
        if self.start_s < 0 or self.duration_s <= 0:
            raise ValueError("seizure must start at t >= 0 and have positive duration")
        if not self.amplitude_ratio > 1:
            raise ValueError("amplitude_ratio must exceed 1")
        if not 0 < self.channel_fraction <= 1:
            raise ValueError("channel_fraction must lie in (0, 1]")
        if not self.dominant_hz > 0:
            raise ValueError("dominant_hz must be positive")

    @property
    def interval(self) -> Interval:
        return Interval(self.start_s, self.start_s + self.duration_s)


@dataclass(frozen=True)
class SynthConfig:
    n_channels: int = 18
    duration_s: float = 600.0
    fs: float = 256.0
    seizures: tuple[SeizureSpec, ...] = ()
    noise_exponent: float = 1.0
    mains_hz: float = 60.0
    mains_uv: float = 0.0
    seed: int = 0
    id: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(
            self, "seizures", tuple(s if isinstance(s, SeizureSpec) else SeizureSpec(**s) for s in self.seizures)
        )
        if self.n_channels < 1 or self.duration_s <= 0 or self.fs <= 0:
            raise ValueError("n_channels, duration_s and fs must be positive")
        ordered = sorted(self.seizures, key=lambda s: s.start_s)
        for s in ordered:
            if s.start_s + s.duration_s > self.duration_s:
                raise ValueError(f"seizure at {s.start_s} s runs past the end of the recording")
        for a, b in zip(ordered, ordered[1:]):
            if b.start_s < a.start_s + a.duration_s:
                raise ValueError(f"overlapping seizure specs at {a.start_s} s and {b.start_s} s")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        d["seizures"] = tuple(SeizureSpec(**s) for s in d.get("seizures", ()))
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seizures"] = [asdict(s) for s in self.seizures]
        return d


def channel_names(n: int) -> list[str]:
    """Double-banana derivations first, then numbered extras."""
    base = [f"{a}-{c}" for a, c in default_montage_pairs()]
    return base[:n] + [f"X{i}" for i in range(len(base), n)]


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def pink_noise(rng: np.random.Generator, n: int, exponent: float) -> np.ndarray:
    """Unit-variance noise with power spectrum ~ 1/f^exponent (zero mean)."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    shaping = np.zeros_like(f)
    shaping[1:] = f[1:] ** (-exponent / 2.0)
    out = np.fft.irfft(spec * shaping, n)
    sd = out.std()
    return out / sd if sd > 0 else out


def seizure_waveform(t: np.ndarray, hz: float, phase: float) -> np.ndarray:
    """Unit-RMS sinusoid plus one narrow spike per cycle."""
    cycle = (hz * t + phase) % 1.0
    spike = np.exp(-0.5 * ((cycle - 0.25) / 0.04) ** 2)
    wave = np.sin(2 * np.pi * (hz * t + phase)) + 1.5 * spike
    wave -= wave.mean()
    rms = np.sqrt(np.mean(wave**2))
    return wave / rms if rms > 0 else wave


def envelope(n: int, fs: float) -> np.ndarray:
    ramp = min(int(RAMP_S * fs), n // 2)
    env = np.ones(n)
    if ramp:
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = r
        env[n - ramp :] = r[::-1]
    return env


def affected_channels(label: str, names: Sequence[str]) -> list[str]:
    """Channel names recorded in an annotation label; every channel when absent."""
    chans: list[str] = []
    for part in label.split("+"):
        if CHANNEL_TAG in part:
            chans.extend(c for c in part.split(CHANNEL_TAG, 1)[1].split(";") if c)
        else:
            return list(names)
    return [c for c in names if c in set(chans)]


def generate(config: SynthConfig) -> tuple[Recording, AnnotationSet]:
    n = int(round(config.duration_s * config.fs))
    names = channel_names(config.n_channels)
    chan_rngs = _streams(config.seed, config.n_channels + len(config.seizures))
    data = np.empty((config.n_channels, n))
    t = np.arange(n) / config.fs
    for c in range(config.n_channels):
        rng = chan_rngs[c]
        gain = BACKGROUND_UV * (0.75 + 0.5 * rng.random())
        data[c] = gain * pink_noise(rng, n, config.noise_exponent)
        if config.mains_uv:
            data[c] += config.mains_uv * np.sin(2 * np.pi * config.mains_hz * t)

    intervals, labels = [], []
    for k, sz in enumerate(config.seizures):
        rng = chan_rngs[config.n_channels + k]
        n_aff = max(1, int(round(sz.channel_fraction * config.n_channels)))
        chans = np.sort(rng.choice(config.n_channels, size=n_aff, replace=False))
        i0 = int(round(sz.start_s * config.fs))
        i1 = min(n, int(round((sz.start_s + sz.duration_s) * config.fs)))
        env = envelope(i1 - i0, config.fs)
        for c in chans:
            bg_rms = np.sqrt(np.mean(data[c] ** 2))
            wave = seizure_waveform(t[i0:i1], sz.dominant_hz * (0.95 + 0.1 * rng.random()), rng.random())
            data[c, i0:i1] += sz.amplitude_ratio * bg_rms * env * wave
        intervals.append(sz.interval)
        labels.append("seizure " + CHANNEL_TAG + ";".join(names[c] for c in chans))

    recording = Recording(names, data.astype(np.float32), config.fs, "bipolar", config.id)
    return recording, AnnotationSet.from_intervals(intervals, labels)


def random_seizures(
    rng: np.random.Generator,
    duration_s: float,
    count: int,
    length_range=(30.0, 90.0),
    margin_s: float = 30.0,
    **spec_kwargs,
) -> tuple[SeizureSpec, ...]:
    """``count`` non-overlapping seizures placed in equal slots of the recording."""
    slot = duration_s / max(count, 1)
    specs = []
    for i in range(count):
        length = float(rng.uniform(*length_range))
        lo = i * slot + margin_s
        hi = (i + 1) * slot - margin_s - length
        if hi < lo:
            raise ValueError("recording too short for the requested seizures")
        specs.append(SeizureSpec(float(np.round(rng.uniform(lo, hi), 1)), round(length, 1), **spec_kwargs))
    return tuple(specs)

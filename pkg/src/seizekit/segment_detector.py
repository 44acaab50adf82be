"""Segment-level detection from channel probabilities.

Channel probabilities are grouped into frontal, central, occipital and
parietal regions plus a global region.  Seven statistics per region and a
5-bin histogram over all channels give 40 features, whatever the number of
channels.  Regions with no channels (always the case for iEEG) reuse the
global statistics.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gbt import GbtConfig, GbtModel, grid_search, predict_proba, train_gbt

log = logging.getLogger(__name__)

LOCAL_REGIONS = ("frontal", "central", "occipital", "parietal")
REGIONS = LOCAL_REGIONS + ("global",)
STATS = ("mean", "median", "std", "max", "min", "p25", "p75")
HIST_EDGES = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
N_FEATURES = len(REGIONS) * len(STATS) + len(HIST_EDGES) - 1

FEATURE_NAMES = tuple(f"{r}_{s}" for r in REGIONS for s in STATS) + tuple(
    f"hist_{i}" for i in range(len(HIST_EDGES) - 1)
)


@dataclass(frozen=True)
class RegionMap:
    channel_names: tuple[str, ...]
    regions: tuple[str | None, ...]
    ieeg_mode: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.ieeg_mode and any(r is not None for r in self.regions):
            raise ValueError("iEEG region maps cannot assign local regions")

    def indices(self, region: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.regions) if r == region], dtype=np.int64)


def _region_of(name: str) -> str | None:
    electrode = name.split("-", 1)[0].strip().upper()
    if electrode.startswith("FP") or electrode.startswith("F"):
        return "frontal"
    if electrode.startswith("C") or electrode.startswith("T"):
        return "central"
    if electrode.startswith("P"):
        return "parietal"
    if electrode.startswith("O"):
        return "occipital"
    return None


def assign_regions(channel_names: Sequence[str], ieeg_mode: bool = False) -> RegionMap:
    """Scalp region per channel by electrode prefix (the anode for bipolar pairs).

    Temporal (T*) electrodes count as central.  Unrecognised names join only
    the global region and are reported in ``warnings``.
    """
    names = tuple(channel_names)
    if len(set(names)) != len(names):
        raise ValueError("channel names must be unique")
    if ieeg_mode:
        return RegionMap(names, (None,) * len(names), True)
    regions = tuple(_region_of(n) for n in names)
    warns = tuple(f"channel {n!r} has no scalp region; used in global features only" for n, r in zip(names, regions) if r is None)
    for w in warns:
        log.warning(w)
    return RegionMap(names, regions, False, warns)


def _stats(p: np.ndarray) -> np.ndarray:
    """Seven statistics over the last axis of ``p (segments, channels)``."""
    q = np.percentile(p, [50, 25, 75], axis=1)
    return np.stack(
        [p.mean(axis=1), q[0], p.std(axis=1), p.max(axis=1), p.min(axis=1), q[1], q[2]], axis=1
    )


def histogram(p: np.ndarray) -> np.ndarray:
    """Normalised 5-bin histogram on [0, 1]; bins are left-closed, the last also right-closed."""
    idx = np.clip(np.searchsorted(HIST_EDGES, p, side="right") - 1, 0, len(HIST_EDGES) - 2)
    counts = np.stack([(idx == b).sum(axis=1) for b in range(len(HIST_EDGES) - 1)], axis=1)
    return counts / p.shape[1]


def regional_features(channel_probs, region_map: RegionMap) -> np.ndarray:
    """40 features per segment.

    ``channel_probs`` is ``(channels,)`` for one segment or
    ``(segments, channels)``; the output is ``(40,)`` or ``(segments, 40)``.
    """
    p = np.asarray(channel_probs, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[None]
    if p.shape[1] == 0:
        raise ValueError("no channel probabilities given")
    if p.shape[1] != len(region_map.channel_names):
        raise ValueError(f"{p.shape[1]} probabilities for {len(region_map.channel_names)} channels")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("channel probabilities must lie in [0, 1]")
    global_stats = _stats(p)
    blocks = []
    for region in LOCAL_REGIONS:
        idx = region_map.indices(region)
        blocks.append(_stats(p[:, idx]) if idx.size else global_stats)
    blocks.append(global_stats)
    blocks.append(histogram(p))
    out = np.clip(np.concatenate(blocks, axis=1), 0.0, 1.0)
    return out[0] if single else out


# -- classifier ---------------------------------------------------------------


def train_segment_classifier(features, labels, config: GbtConfig | None = None, search: bool = False, seed: int = 0) -> GbtModel:
    """Fit the boosted-tree classifier; ``search`` runs the CV grid search first."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if np.unique(y).size < 2:
        raise ValueError("segment classifier needs both classes")
    config = config or GbtConfig()
    if search:
        config, scores = grid_search(x, y, base=config, seed=seed)
        log.info("grid search picked depth=%d rounds=%d", config.max_depth, config.n_rounds)
    return train_gbt(x, y, config)


def predict_segment(model: GbtModel, feature_vector) -> np.ndarray | float:
    fv = np.asarray(feature_vector, dtype=np.float64)
    if fv.ndim == 1:
        return float(predict_proba(model, fv[None])[0])
    return predict_proba(model, fv)


def write_feature_csv(features, labels, path) -> None:
    features = np.asarray(features)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(N_FEATURES)] + ["label"])
        for row, lab in zip(features, labels):
            writer.writerow([f"{v:.6f}" for v in row] + [int(lab)])

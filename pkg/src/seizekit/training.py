"""Two-stage training on annotated recordings: channel network, then boosted trees.

The channel network sees a seeded subsample of single-channel windows; the
segment classifier is then fitted on the 40 regional features that the
trained network produces for every epoch of the same recordings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel_detector import ChannelModel, ChannelModelSpec, TrainingHistory, channel_training_set, train_channel, window_labels
from .core import AnnotationSet, PipelineConfig, Recording
from .eeg_detector import channel_probabilities, prepare
from .gbt import GbtConfig, GbtModel
from .nn.optim import TrainConfig
from .segment_detector import assign_regions, regional_features, train_segment_classifier
from .synthgen import SynthConfig, generate, random_seizures

log = logging.getLogger(__name__)

CHANNEL_DIR = "channel"
SEGMENT_FILE = "segment_gbt.json"
TRAIN_LOG = "train_log.csv"

# small-corpus settings; the full-scale defaults live in TrainConfig
DESK_TRAIN = dict(learning_rate=1e-3, batch_size=64, epochs=15, patience=5)


def synthetic_corpus(
    seed: int, n_recordings: int = 3, duration_s: float = 600.0, n_channels: int = 18, n_seizures: int = 3
) -> list[tuple[Recording, AnnotationSet]]:
    rng = np.random.default_rng(seed)
    corpus = []
    for k in range(n_recordings):
        cfg = SynthConfig(
            n_channels=n_channels,
            duration_s=duration_s,
            seizures=random_seizures(rng, duration_s, n_seizures),
            seed=seed * 1000 + k,
            id=f"train{k}",
        )
        corpus.append(generate(cfg))
    return corpus


def channel_dataset(
    corpus: Sequence[tuple[Recording, AnnotationSet]],
    config: PipelineConfig,
    n_segments: int = 2000,
    positive_fraction: float = 0.3,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded subsample of labelled channel windows with a fixed class mix.

    Falls back to every available window of a class when it has fewer than
    its share.
    """
    xs, ys = [], []
    for rec, ann in corpus:
        x, y = channel_training_set(prepare(rec, config), ann, config.window_w, config.epoch_step)
        xs.append(x)
        ys.append(y)
    x, y = np.concatenate(xs), np.concatenate(ys)
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_fraction * n_segments))
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("training recordings must contain both seizure and background windows")
    take_pos = rng.choice(pos, min(n_pos, pos.size), replace=False)
    take_neg = rng.choice(neg, min(n_segments - take_pos.size, neg.size), replace=False)
    sel = np.sort(np.concatenate([take_pos, take_neg]))
    return x[sel], y[sel]


def segment_dataset(
    corpus: Sequence[tuple[Recording, AnnotationSet]], model: ChannelModel, config: PipelineConfig
) -> tuple[np.ndarray, np.ndarray]:
    feats, labels = [], []
    for rec, ann in corpus:
        pre = prepare(rec, config)
        probs = channel_probabilities(pre, model, config)
        starts = np.arange(probs.shape[0]) * config.epoch_step
        feats.append(regional_features(probs, assign_regions(pre.channel_names, config.ieeg_mode)))
        labels.append(window_labels(starts, config.window_w, ann.seizures))
    return np.concatenate(feats), np.concatenate(labels)


@dataclass
class TrainedPipeline:
    channel_model: ChannelModel
    segment_model: GbtModel
    history: TrainingHistory

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.channel_model.save(directory / CHANNEL_DIR)
        self.segment_model.save(directory / SEGMENT_FILE)
        self.history.write_csv(directory / TRAIN_LOG)


def load_models(directory) -> tuple[ChannelModel, GbtModel]:
    directory = Path(directory)
    return ChannelModel.load(directory / CHANNEL_DIR), GbtModel.load(directory / SEGMENT_FILE)


def train_pipeline(
    corpus: Sequence[tuple[Recording, AnnotationSet]],
    spec: ChannelModelSpec,
    train_config: TrainConfig,
    config: PipelineConfig = PipelineConfig(),
    n_segments: int = 2000,
    gbt_config: GbtConfig = GbtConfig(),
    grid_search: bool = False,
) -> TrainedPipeline:
    if spec.window_w != config.window_w:
        raise ValueError("channel model window and pipeline window differ")
    x, y = channel_dataset(corpus, config, n_segments, seed=train_config.seed)
    log.info("channel training set: %d windows, %d positive", y.size, int(y.sum()))
    model, history = train_channel((x, y), spec, train_config)
    feats, labels = segment_dataset(corpus, model, config)
    log.info("segment training set: %d epochs, %d positive", labels.size, int(labels.sum()))
    gbt = train_segment_classifier(feats, labels, gbt_config, search=grid_search, seed=train_config.seed)
    return TrainedPipeline(model, gbt, history)

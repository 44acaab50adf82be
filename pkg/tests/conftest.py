import numpy as np
import pytest

from seizekit.channel_detector import ChannelModelSpec
from seizekit.core import PipelineConfig
from seizekit.nn.optim import TrainConfig
from seizekit.synthgen import SynthConfig, generate, random_seizures
from seizekit.training import DESK_TRAIN, synthetic_corpus, train_pipeline

TRAIN_SEED = 0


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(TRAIN_SEED)


@pytest.fixture(scope="session")
def trained(corpus):
    """CNN_BM (W=3) plus boosted trees, trained once per test session."""
    return train_pipeline(
        corpus,
        ChannelModelSpec("CNN_BM", 3),
        TrainConfig(seed=TRAIN_SEED, **DESK_TRAIN),
        PipelineConfig(),
        n_segments=2000,
    )


@pytest.fixture(scope="session")
def held_out():
    """30-minute, 20-channel recording with three seizures, unseen in training."""
    cfg = SynthConfig(
        n_channels=20,
        duration_s=1800,
        seizures=random_seizures(np.random.default_rng(7), 1800, 3),
        seed=999,
        id="held-out",
    )
    return generate(cfg)

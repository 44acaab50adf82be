import numpy as np
import pytest

from seizekit.channel_detector import (
    ChannelModel,
    ChannelModelSpec,
    LabeledChannelSegment,
    build_channel_model,
    predict_channel,
    token_starts,
    tokenize,
    train_channel,
    window_labels,
)
from seizekit.core import Interval, PipelineConfig
from seizekit.nn.evaluation import binary_report
from seizekit.nn.optim import TrainConfig
from seizekit.training import DESK_TRAIN, channel_dataset


@pytest.mark.parametrize("w,count", [(3, 3), (5, 6), (10, 13), (20, 26)])
def test_token_count(w, count):
    assert token_starts(w * 128).size == count == int((w - 1) // 0.75) + 1
    seg = np.arange(w * 128, dtype=float)
    tokens = tokenize(seg)
    assert tokens.shape == (count, 128)
    np.testing.assert_array_equal(tokens[1], seg[96:224])


def test_sm_and_bm_share_architecture():
    for w in (3, 10):
        sm = build_channel_model(ChannelModelSpec("CNN_SM", w))
        bm = build_channel_model(ChannelModelSpec("CNN_BM", w))
        assert sm.params.n_values() == bm.params.n_values()


def test_same_seed_same_weights():
    a = build_channel_model(ChannelModelSpec("CNN_TRF_BM", 3), seed=5).params.flat()
    b = build_channel_model(ChannelModelSpec("CNN_TRF_BM", 3), seed=5).params.flat()
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("variant", ["CNN_SM", "CNN_BM", "CNN_TRF_BM"])
@pytest.mark.parametrize("w", [3, 5, 10, 20])
def test_zero_input_gives_finite_logits(variant, w):
    model = build_channel_model(ChannelModelSpec(variant, w))
    logits = model.forward(np.zeros((1, w * 128))).data
    assert logits.shape == (1, 2) and np.all(np.isfinite(logits))


@pytest.mark.parametrize("variant", ["CNN_SM", "CNN_BM", "CNN_TRF_BM"])
def test_probabilities_in_range(variant):
    model = build_channel_model(ChannelModelSpec(variant, 3), seed=1)
    x = np.random.default_rng(0).standard_normal((1000, 384)) * 100
    p = model.predict_proba(x)
    assert p.shape == (1000,) and np.all((p >= 0) & (p <= 1))
    assert predict_channel(model, x[0]) == pytest.approx(p[0])
    assert model.predict_proba(x[:5] * 1.0).tobytes() == model.predict_proba(x[:5]).tobytes()


def test_probability_mappings():
    sm = build_channel_model(ChannelModelSpec("CNN_SM", 3))
    bm = build_channel_model(ChannelModelSpec("CNN_BM", 3))
    assert sm.probabilities_from_logits(np.zeros((1, 2)))[0] == pytest.approx(0.5)
    # alpha = exp(logits) = (1, 3) -> Dirichlet mean 3/4
    assert bm.probabilities_from_logits(np.log([[1.0, 3.0]]))[0] == pytest.approx(0.75)


def test_length_mismatch():
    model = build_channel_model(ChannelModelSpec("CNN_BM", 3))
    with pytest.raises(ValueError, match="does not match"):
        predict_channel(model, np.zeros(100))


def test_window_labels_half_overlap():
    starts = np.array([0.0, 2.0, 4.0, 6.0, 8.0])
    # seizure [5.5, 9): [4,7) overlaps 1.5 = W/2 -> 1; [8,11) overlaps 1 -> 0
    np.testing.assert_array_equal(window_labels(starts, 3, [Interval(5.5, 9)]), [0, 0, 1, 1, 0])


def test_checkpoint_round_trip(tmp_path):
    model = build_channel_model(ChannelModelSpec("CNN_TRF_BM", 3), seed=2)
    model.save(tmp_path)
    loaded = ChannelModel.load(tmp_path)
    assert loaded.spec == model.spec
    x = np.random.default_rng(1).standard_normal((4, 384))
    np.testing.assert_allclose(loaded.predict_proba(x), model.predict_proba(x), rtol=1e-6)
    (tmp_path / "weights.f32").write_bytes(b"\0" * 16)
    with pytest.raises(ValueError, match="weights.f32 holds"):
        ChannelModel.load(tmp_path)


# -- training ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_set(corpus):
    return channel_dataset(corpus, PipelineConfig(), n_segments=600, seed=3)


def _cfg(**kw):
    base = dict(DESK_TRAIN, epochs=4, patience=4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_trained_model_separates_held_out_windows(trained, held_out):
    from seizekit.channel_detector import channel_training_set
    from seizekit.eeg_detector import prepare

    rec, ann = held_out
    cfg = PipelineConfig()
    x, y = channel_training_set(prepare(rec, cfg), ann, 3, cfg.epoch_step)
    rng = np.random.default_rng(0)
    idx = np.concatenate([rng.choice(np.flatnonzero(y == c), 500, replace=False) for c in (0, 1)])
    report = binary_report(trained.channel_model.predict_proba(x[idx]), y[idx])
    assert report.bac >= 0.90


def test_bm_training_loss_decreases(trained):
    losses = [r["train_loss"] for r in trained.history.rows[:5]]
    assert len(losses) == 5
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_duplicated_samples_same_bac(small_set):
    x, y = small_set
    _, h1 = train_channel((x, y), ChannelModelSpec("CNN_BM", 3), _cfg())
    _, h2 = train_channel((np.repeat(x, 2, axis=0), np.repeat(y, 2)), ChannelModelSpec("CNN_BM", 3), _cfg())
    assert abs(h1.best_val_bac - h2.best_val_bac) <= 0.02


def test_shuffled_labels_give_chance_bac(small_set):
    x, y = small_set
    y_shuffled = np.random.default_rng(11).permutation(y)
    model, _ = train_channel((x, y_shuffled), ChannelModelSpec("CNN_BM", 3), _cfg(epochs=3))
    # score on windows the model never saw, labelled by the shuffled rule
    from seizekit.nn.evaluation import balanced_accuracy

    rng = np.random.default_rng(12)
    probe = x[rng.permutation(y.size)[:300]]
    labels = rng.integers(0, 2, 300)
    assert 0.40 <= balanced_accuracy(model.predict_proba(probe), labels) <= 0.60


def test_list_of_segments_and_single_class_error(small_set):
    x, y = small_set
    segs = [LabeledChannelSegment(s, int(lab)) for s, lab in zip(x[:80], y[:80])]
    if len({s.label for s in segs}) == 2:
        train_channel(segs, ChannelModelSpec("CNN_BM", 3), _cfg(epochs=1))
    with pytest.raises(ValueError, match="both classes"):
        train_channel((x[:10], np.zeros(10, dtype=int)), ChannelModelSpec("CNN_BM", 3), _cfg(epochs=1))


def test_variant_loss_mismatch(small_set):
    x, y = small_set
    with pytest.raises(ValueError, match="SM loss"):
        train_channel((x, y), ChannelModelSpec("CNN_SM", 3), _cfg(loss="BM"))


def test_calibration_bm_vs_sm_recorded(corpus, held_out, capsys):
    """Soft metric: held-out ECE of CNN_BM vs CNN_SM at W=20 is reported, not gated."""
    from seizekit.channel_detector import channel_training_set
    from seizekit.eeg_detector import prepare

    cfg = PipelineConfig(window_w=20)
    x, y = channel_dataset(corpus, cfg, n_segments=300, seed=1)
    rec, ann = held_out
    hx, hy = channel_training_set(prepare(rec, cfg), ann, 20, cfg.epoch_step)
    rng = np.random.default_rng(0)
    idx = np.concatenate([rng.choice(np.flatnonzero(hy == c), 100, replace=False) for c in (0, 1)])
    eces = {}
    for variant, loss in (("CNN_SM", "SM"), ("CNN_BM", "BM")):
        model, _ = train_channel((x, y), ChannelModelSpec(variant, 20), _cfg(epochs=3, loss=loss))
        eces[variant] = binary_report(model.predict_proba(hx[idx]), hy[idx]).ece
    with capsys.disabled():
        print(f"\n  W=20 held-out ECE: CNN_SM {eces['CNN_SM']:.4f}, CNN_BM {eces['CNN_BM']:.4f}")
    assert all(np.isfinite(v) for v in eces.values())

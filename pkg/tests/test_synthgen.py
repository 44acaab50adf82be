import numpy as np
import pytest
from scipy.signal import periodogram

from seizekit.core import load_bundle, store_bundle
from seizekit.synthgen import SeizureSpec, SynthConfig, affected_channels, generate, pink_noise, random_seizures


def small(**kw):
    base = dict(n_channels=6, duration_s=120, seizures=(SeizureSpec(40, 30),), seed=3)
    base.update(kw)
    return SynthConfig(**base)


def test_same_seed_is_bit_identical():
    a, ann_a = generate(small())
    b, ann_b = generate(small())
    assert a.data.tobytes() == b.data.tobytes() and ann_a == ann_b
    c, _ = generate(small(seed=4))
    assert a.data.tobytes() != c.data.tobytes()


def test_no_seizures_gives_empty_annotations():
    rec, ann = generate(small(seizures=()))
    assert ann.seizures == () and rec.data.shape == (6, 120 * 256)
    assert np.all(np.isfinite(rec.data))


def test_annotations_match_injected_intervals():
    specs = (SeizureSpec(10, 20), SeizureSpec(60.5, 30.25))
    _, ann = generate(small(seizures=specs))
    assert [(s.start, s.end) for s in ann.seizures] == [(10, 30), (60.5, 90.75)]


def test_seizure_band_power_exceeds_background():
    rec, ann = generate(small(n_channels=10, duration_s=240, seizures=(SeizureSpec(100, 60),)))
    fs = rec.fs
    sz = ann.seizures[0]
    inside = slice(int((sz.start + 5) * fs), int((sz.end - 5) * fs))
    outside = slice(0, int(50 * fs))
    for name in affected_channels(ann.labels[0], rec.channel_names):
        x = rec.data[rec.channel_names.index(name)].astype(np.float64)

        def band(seg):
            f, p = periodogram(seg, fs)
            return p[(f >= 2.5) & (f <= 3.5)].mean()

        assert 10 * np.log10(band(x[inside]) / band(x[outside])) >= 6.0


def test_only_listed_channels_change():
    with_sz, ann = generate(small())
    without, _ = generate(small(seizures=()))
    hit = set(affected_channels(ann.labels[0], with_sz.channel_names))
    assert len(hit) == round(0.6 * 6)
    for i, name in enumerate(with_sz.channel_names):
        same = np.array_equal(with_sz.data[i], without.data[i])
        assert same != (name in hit)


def test_bundle_round_trip(tmp_path):
    rec, ann = generate(small())
    store_bundle(rec, ann, tmp_path / "b")
    rec2, ann2 = load_bundle(tmp_path / "b")
    assert rec2.channel_names == rec.channel_names and rec2.fs == rec.fs
    np.testing.assert_array_equal(rec2.data, rec.data)
    assert ann2 == ann


def test_invalid_configs():
    with pytest.raises(ValueError, match="overlapping"):
        SynthConfig(seizures=(SeizureSpec(10, 30), SeizureSpec(30, 10)))
    with pytest.raises(ValueError, match="past the end"):
        SynthConfig(duration_s=60, seizures=(SeizureSpec(50, 20),))
    with pytest.raises(ValueError):
        SeizureSpec(10, 20, amplitude_ratio=1.0)


def test_config_dict_round_trip():
    cfg = small(seizures=(SeizureSpec(10, 20, dominant_hz=4),))
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


def test_pink_noise_spectrum_slope():
    x = pink_noise(np.random.default_rng(0), 2**16, 1.0)
    f, p = periodogram(x)
    keep = (f > 1e-3) & (f < 0.4)
    slope = np.polyfit(np.log(f[keep]), np.log(p[keep]), 1)[0]
    assert abs(x.std() - 1) < 1e-9 and -1.15 < slope < -0.85


def test_random_seizures_fit_and_do_not_overlap():
    specs = random_seizures(np.random.default_rng(2), 1800, 3)
    SynthConfig(duration_s=1800, seizures=specs)
    with pytest.raises(ValueError):
        random_seizures(np.random.default_rng(2), 100, 3)

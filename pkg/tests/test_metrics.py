import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seizekit.core import AnnotationSet, DetectionEvent, Interval, PipelineConfig
from seizekit.eeg_detector import ProbabilitySequence, postprocess
from seizekit.metrics import (
    DEFAULT_THETAS,
    MoesConfig,
    aggregate,
    dol,
    ims_score,
    moes_score,
    ovlp_score,
    pr_curve,
    score,
    sol,
    taes_score,
    write_pr_csv,
    write_report,
)

from .oracles import moes_oracle


def iv(a, b):
    return Interval(a, b)


def test_overlap_fractions():
    assert dol(iv(0, 10), [iv(5, 15)]) == 0.5
    assert dol(iv(20, 30), [iv(10, 40)]) == 1.0
    assert dol(iv(0, 10), [iv(0, 4), iv(6, 10)]) == pytest.approx(0.8)
    assert sol(iv(10, 20), [iv(0, 40)]) == 1.0
    assert sol(iv(10, 20), [iv(30, 40)]) == 0.0
    assert sol(iv(0, 100), [iv(0, 30), iv(50, 70)]) == pytest.approx(0.5)
    # touching endpoints share no time
    assert dol(iv(0, 10), [iv(10, 20)]) == 0.0


def test_moes_config_validation():
    with pytest.raises(ValueError):
        MoesConfig(min_fraction=0)
    with pytest.raises(ValueError):
        MoesConfig(min_overlap_s=-1)


# -- canonical overlap configurations ----------------------------------------


def test_detection_encloses_seizure():
    r = moes_score([iv(95, 165)], [iv(100, 160)])
    assert r.seizure_verdicts == ["TP"] and r.detection_fp == [0.0]


def test_seizure_encloses_detection():
    r = moes_score([iv(105, 150)], [iv(100, 160)])
    assert r.seizure_verdicts == ["TP"] and r.detection_fp == [0.0]


def test_detection_protrudes_far():
    r = moes_score([iv(0, 400)], [iv(100, 160)])
    assert dol(iv(0, 400), [iv(100, 160)]) < 0.3
    assert r.seizure_verdicts == ["FN"] and r.detection_fp == [1.0]


def test_seizure_protrudes_far():
    r = moes_score([iv(100, 120)], [iv(100, 400)])
    assert r.seizure_verdicts == ["FN"] and r.detection_fp == [1.0]


def test_three_detections_one_seizure():
    seizure = iv(100, 200)
    dets = [iv(80, 120), iv(130, 180), iv(190, 300)]
    assert dol(dets[0], [seizure]) == pytest.approx(0.5)
    assert dol(dets[1], [seizure]) == 1.0
    assert dol(dets[2], [seizure]) < 0.3
    r = moes_score(dets, [seizure])
    assert r.seizure_verdicts == ["TP"]
    assert r.detection_fp == [0.0, 0.0, 1.0]


def test_one_detection_three_seizures():
    det = iv(100, 300)
    szs = [iv(80, 120), iv(140, 180), iv(290, 340)]
    assert sol(szs[0], [det]) == pytest.approx(0.5)
    assert sol(szs[1], [det]) == 1.0
    assert sol(szs[2], [det]) < 0.3
    r = moes_score([det], szs)
    assert r.seizure_verdicts == ["TP", "TP", "FN"]
    assert r.detection_fp == [0.0]


def test_minimum_overlap_duration():
    # 40 % of a 20 s seizure is only 8 s of overlap
    assert moes_score([iv(100, 108)], [iv(100, 120)]).seizure_verdicts == ["FN"]
    assert moes_score([iv(100, 110)], [iv(100, 120)]).seizure_verdicts == ["TP"]
    # a seizure shorter than the floor must be covered end to end
    assert moes_score([iv(99, 107)], [iv(100, 106)]).seizure_verdicts == ["TP"]
    assert moes_score([iv(100, 104)], [iv(100, 106)]).seizure_verdicts == ["FN"]
    assert moes_score([iv(100, 108)], [iv(100, 120)], MoesConfig(min_overlap_s=0)).seizure_verdicts == ["TP"]


def test_offsets_use_earliest_qualifying_detection():
    r = moes_score([iv(110, 140), iv(150, 170)], [iv(100, 180)], window_w=3)
    assert r.offsets == [13.0]
    r = moes_score([iv(90, 140)], [iv(100, 180)], window_w=3)
    assert r.offsets == [-7.0]
    assert moes_score([iv(0, 400)], [iv(100, 160)]).offsets == []


def test_detection_overlapping_nothing_is_fp():
    r = moes_score([iv(0, 10)], [])
    assert r.detection_fp == [1.0] and r.tp == 0 and r.fn == 0


def _moes_agrees(dets, szs):
    r = moes_score([iv(*d) for d in dets], [iv(*s) for s in szs])
    verdicts, fps = moes_oracle(dets, szs)
    return r.seizure_verdicts == verdicts and r.detection_fp == [float(f) for f in fps]


def _disjoint_pairs(ivs):
    return [(a, b) for a, b in itertools.combinations(ivs, 2) if a[1] <= b[0] or b[1] <= a[0]]


def test_moes_matches_cell_counting_oracle_on_small_grid():
    fine = [(a, b) for a in range(0, 21, 2) for b in range(a + 2, 21, 2)]
    coarse = [(a, b) for a in range(0, 21, 4) for b in range(a + 4, 21, 4)]
    det_sets = [()] + [(d,) for d in fine] + list(itertools.combinations_with_replacement(fine, 2))
    cases = 0
    for dets in det_sets:
        for szs in [()] + [(s,) for s in fine]:
            assert _moes_agrees(dets, szs), (dets, szs)
            cases += 1
    for dets in [()] + [(d,) for d in fine]:
        for szs in _disjoint_pairs(fine):
            assert _moes_agrees(dets, szs), (dets, szs)
            cases += 1
    for dets in itertools.combinations_with_replacement(coarse, 2):
        for szs in _disjoint_pairs(coarse):
            assert _moes_agrees(dets, szs), (dets, szs)
            cases += 1
    assert cases >= 10_000


# -- comparison scorers ----------------------------------------------------------


def test_ovlp_examples():
    r = ovlp_score([iv(0, 10.001)], [iv(10, 20)])
    assert r.seizure_verdicts == ["TP"] and r.fp == 0
    r = ovlp_score([iv(0, 10)], [iv(10, 20)])
    assert r.seizure_verdicts == ["FN"] and r.fp == 1


def test_ims_examples():
    det, szs = [iv(50, 90)], [iv(100, 160)]
    assert ims_score(det, szs, 30).seizure_verdicts == ["TP"]
    r = ims_score(det, szs, 5)
    assert r.seizure_verdicts == ["FN"] and r.fp == 1
    # widening never pushes a seizure before time zero
    assert ims_score([iv(0, 1)], [iv(10, 20)], 30).tp == 1
    with pytest.raises(ValueError):
        ims_score(det, szs, -1)


def test_taes_examples():
    r = taes_score([iv(100, 160)], [iv(100, 160)])
    assert (r.tp, r.fn, r.fp) == (1.0, 0.0, 0.0)
    r = taes_score([iv(110, 140)], [iv(100, 160)])
    assert (r.tp, r.fn, r.fp) == (0.5, 0.5, 0.0)
    r = taes_score([iv(70, 190)], [iv(100, 160)])
    assert (r.tp, r.fn, r.fp) == (1.0, 0.0, 0.5)


def _random_events(rng, n, horizon=600.0):
    out = []
    for _ in range(n):
        a = float(rng.uniform(0, horizon - 5))
        out.append(iv(a, a + float(rng.uniform(1, 120))))
    return out


def test_scorer_hierarchy_on_random_inputs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        dets = _random_events(rng, int(rng.integers(0, 6)))
        szs = AnnotationSet.from_intervals(_random_events(rng, int(rng.integers(0, 4)))).seizures
        moes, ovlp = moes_score(dets, szs), ovlp_score(dets, szs)
        ims0, ims30 = ims_score(dets, szs, 0), ims_score(dets, szs, 30)
        assert ims30.tp >= ovlp.tp >= moes.tp
        assert moes.tp + moes.fn == len(szs)
        assert moes.fp <= len(dets) and ovlp.fp <= moes.fp
        assert (ims0.tp, ims0.fn, ims0.fp, ims0.seizure_verdicts) == (ovlp.tp, ovlp.fn, ovlp.fp, ovlp.seizure_verdicts)


@pytest.mark.parametrize("metric", ["moes", "ovlp", "taes", "ims"])
def test_scorers_invariant_under_time_shift(metric):
    rng = np.random.default_rng(1)
    for _ in range(200):
        dets = _random_events(rng, int(rng.integers(0, 5)))
        szs = AnnotationSet.from_intervals(_random_events(rng, int(rng.integers(0, 4)))).seizures
        shift = float(rng.choice([37.0, 1000.0, 0.25]))
        moved_d = [iv(d.start + shift, d.end + shift) for d in dets]
        moved_s = [iv(s.start + shift, s.end + shift) for s in szs]
        a = score(metric, dets, szs, ims_margin=0 if metric == "ims" else 30)
        b = score(metric, moved_d, moved_s, ims_margin=0 if metric == "ims" else 30)
        assert a.seizure_verdicts == b.seizure_verdicts
        np.testing.assert_allclose([a.tp, a.fn, a.fp], [b.tp, b.fn, b.fp], atol=1e-9)
        np.testing.assert_allclose(a.offsets, b.offsets, atol=1e-9)


def test_score_dispatch_and_event_types():
    ev = [DetectionEvent(iv(100, 150), 0.9)]
    ann = AnnotationSet.from_intervals([iv(100, 160)])
    assert score("moes", ev, ann).tp == 1
    with pytest.raises(ValueError, match="unknown metric"):
        score("ebs", ev, ann)


# -- aggregation -----------------------------------------------------------------


def _result(tp, fn, fp, hours, offsets=()):
    r = ovlp_score([], [])
    r.tp, r.fn, r.fp, r.duration_h, r.offsets = tp, fn, fp, hours, list(offsets)
    return r


def test_aggregate_single_recording():
    s = aggregate([_result(2, 1, 1, 2.0, [3.0, 7.0])])
    assert s.sensitivity == pytest.approx(2 / 3) and s.precision == pytest.approx(2 / 3)
    assert s.afpr_h == 0.5 and s.median_offset_s == 5.0 and not s.precision_undefined


def test_aggregate_mean_and_median_fp_rates():
    s = aggregate([_result(1, 0, 0, 1.0), _result(1, 0, 0, 1.0), _result(1, 0, 3, 1.0)])
    assert s.afpr_h == 1.0 and s.mfpr_h == 0.0


def test_aggregate_without_detections_flags_precision():
    s = aggregate([moes_score([], [iv(10, 40)], duration_s=3600)])
    assert s.sensitivity == 0.0 and s.precision == 0.0 and s.precision_undefined
    assert aggregate([moes_score([], [])]).afpr_h is None


def test_report_json(tmp_path):
    results = [moes_score([iv(100, 150)], [iv(100, 160)], duration_s=600)]
    write_report(results, tmp_path / "r.json", ["rec-a"])
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["recordings"][0]["id"] == "rec-a"
    assert report["summary"]["tp"] == 1 and report["summary"]["sensitivity"] == 1.0


# -- precision-recall sweep ------------------------------------------------------


def _sweep(values, seizures, metric, cfg=PipelineConfig(smooth_type="max")):
    p = ProbabilitySequence(values, step=2.0)
    return pr_curve(lambda t: [score(metric, postprocess(p, cfg, t), seizures)])


def test_pr_curve_rows(tmp_path):
    pts = _sweep(np.linspace(0, 1, 50), [iv(60, 100)], "moes")
    assert [p.theta for p in pts] == list(DEFAULT_THETAS)
    write_pr_csv(pts, tmp_path / "pr.csv")
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "theta,precision,recall" and len(lines) == 10


def test_pr_curve_without_detections_has_zero_recall():
    pts = _sweep(np.zeros(40), [iv(20, 40)], "moes")
    assert all(p.recall == 0 for p in pts)


@settings(max_examples=150, deadline=None)
@given(
    values=st.lists(st.floats(0, 1), min_size=5, max_size=80),
    starts=st.lists(st.floats(0, 150), min_size=1, max_size=3),
    kind=st.sampled_from(["mean", "median", "max"]),
    n_c=st.integers(1, 5),
    gap=st.integers(0, 4),
)
def test_pr_recall_non_increasing_under_any_overlap(values, starts, kind, n_c, gap):
    szs = AnnotationSet.from_intervals([iv(s, s + 20) for s in starts]).seizures
    cfg = PipelineConfig(smooth_type=kind, min_chain_nc=n_c, merge_gap=gap)
    recalls = [p.recall for p in _sweep(values, szs, "ovlp", cfg)]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))


def test_pr_recall_can_rise_with_threshold_under_minimum_overlap():
    # a broad low plateau merges into one long detection at small thresholds, whose DOL is too low
    values = np.full(100, 0.35)
    values[45:55] = 0.9
    recalls = [p.recall for p in _sweep(values, [iv(90, 110)], "moes", PipelineConfig(smooth_type="max", min_chain_nc=1))]
    assert recalls[0] == 0.0 and recalls[-1] == 1.0

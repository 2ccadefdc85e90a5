import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_frames
from fuzzyspeech import synth_corpus as sc
from fuzzyspeech.audio_features import FeatureSequence, Segment, analyze_clip
from fuzzyspeech.paraling_filter import (
    ParalinguisticRecord,
    correction_weights,
    filter_segment,
    filter_utterance,
    normalize_gain,
    normalize_speed,
    normalize_tilt,
    profile_segment,
    resample_count,
    weighted_hf_ratio,
)


def frames_with_ratio(n, ratio, le=-30.0):
    """Frames whose every band split gives HF ratio ``ratio`` (bands 2..7 are HF at 16 kHz)."""
    lf = np.log10((1 - ratio) / 2) * 10 + le
    hf = np.log10(ratio / 6) * 10 + le
    bands = np.tile([lf, lf, hf, hf, hf, hf, hf, hf], (n, 1))
    fs = FeatureSequence(np.full(n, le), np.zeros(n), bands)
    return fs.with_values(hf_ratio=fs.hf_from_bands())


def oracle_ratio(bands):
    # independent HF share: bands 2..7 cover 2-8 kHz exactly
    p = 10.0 ** (np.asarray(bands) / 10.0)
    return float(p[:, 2:].sum() / p.sum())


# -- profiling ---------------------------------------------------------------------

def test_neutral_profile():
    f = frames_with_ratio(40, 0.45)
    p = profile_segment(f, 40, -30.0)
    assert p.speed_log2 == 0.0 and p.degree("speed", "normal") == 1.0
    assert p.emphasis_db == 0.0 and p.degree("emphasis", "medium") == 1.0
    assert p.degree("accent", "soft") == pytest.approx(0.5, abs=1e-9)
    assert p.degree("accent", "sharp") == pytest.approx(0.5, abs=1e-9)


def test_half_duration_is_fast():
    p = profile_segment(make_frames(20), 40, -30.0)
    assert p.speed_log2 == 1.0 and p.degree("speed", "fast") == 1.0


def test_longer_than_reference_is_slow():
    p = profile_segment(make_frames(80), 40, -30.0)
    assert p.speed_log2 == -1.0 and p.degree("speed", "slow") == 1.0


def test_emphasis_crossover():
    p = profile_segment(make_frames(40, le=-24.0), 40, -30.0)
    assert p.emphasis_db == pytest.approx(6.0)
    np.testing.assert_allclose(p.emphasis, [0, 0.5, 0.5], atol=1e-12)


def test_accent_reading_skips_quiet_frames():
    loud = frames_with_ratio(10, 0.8, le=-30.0)
    quiet = frames_with_ratio(10, 0.1, le=-70.0)
    joined = FeatureSequence(np.concatenate([loud.log_energy, quiet.log_energy]),
                             np.concatenate([loud.hf_ratio, quiet.hf_ratio]),
                             np.vstack([loud.bands, quiet.bands]))
    assert profile_segment(joined, 20, -30).accent_ratio == pytest.approx(0.8)


def test_profile_errors():
    with pytest.raises(ValueError):
        profile_segment(make_frames(0), 40, -30)
    with pytest.raises(ValueError):
        profile_segment(make_frames(5), 0, -30)


def test_correction_weights_examples():
    neutral = profile_segment(frames_with_ratio(40, 0.45), 40, -30)
    assert correction_weights(neutral) == pytest.approx((0, 0, 0), abs=1e-9)
    fast = profile_segment(frames_with_ratio(20, 0.45), 40, -30)
    assert correction_weights(fast)[0] == 1.0


# -- speed --------------------------------------------------------------------------

def test_speed_identity():
    f = make_frames(10, seed=1)
    assert normalize_speed(f, 0.0, 1.0) is f


def test_speed_doubling_keeps_originals_on_even_indices():
    f = make_frames(10, seed=2)
    out = normalize_speed(f, 1.0, 1.0)
    assert len(out) == 20
    np.testing.assert_array_equal(out.log_energy[::2], f.log_energy)
    np.testing.assert_array_equal(out.bands[::2], f.bands)
    np.testing.assert_array_equal(out.hf_ratio[::2], f.hf_ratio)


def test_speed_factor_value():
    assert 2.0 ** (0.5 * 0.5) == pytest.approx(1.189207115, abs=1e-9)
    assert len(normalize_speed(make_frames(100), 0.5, 0.5)) == resample_count(100, 2 ** 0.25) == 119


@given(st.integers(1, 300), st.floats(0.1, 10))
def test_resample_count(n, f):
    m = resample_count(n, f)
    assert m >= 1
    if n * f >= 0.5:
        assert abs(m - n * f) <= 0.5 + 1e-9


# -- gain --------------------------------------------------------------------------------

def test_gain_examples():
    f = make_frames(5, le=-30.0, seed=3)
    assert normalize_gain(f, 0.0, 1.0) is f
    out = normalize_gain(f, 12.0, 1.0)
    np.testing.assert_allclose(out.log_energy, f.log_energy - 12)
    np.testing.assert_allclose(out.bands, f.bands - 12)
    np.testing.assert_array_equal(out.hf_ratio, f.hf_ratio)
    np.testing.assert_allclose(normalize_gain(f, 6.0, 0.5).log_energy, f.log_energy - 3)


def test_gain_clamps_at_floor():
    out = normalize_gain(make_frames(3, le=-75.0), 20.0, 1.0)
    assert np.all(out.log_energy == -80.0) and np.all(out.bands >= -80.0)


# -- tilt ----------------------------------------------------------------------------------

def test_tilt_noop_cases():
    f = frames_with_ratio(10, 0.45)
    assert normalize_tilt(f, 0.45, 1.0)[0] is f
    g = frames_with_ratio(10, 0.9)
    assert normalize_tilt(g, 0.9, 0.0)[0] is g
    silent = FeatureSequence(np.full(4, -80.0), np.zeros(4), np.full((4, 8), -80.0))
    assert normalize_tilt(silent, 0.9, 1.0)[0] is silent


def test_tilt_reaches_target():
    f = frames_with_ratio(12, 0.9)
    assert oracle_ratio(f.bands) == pytest.approx(0.9)
    out, slope = normalize_tilt(f, 0.9, 1.0)
    assert slope < 0
    assert abs(oracle_ratio(out.bands) - 0.45) <= 0.01
    np.testing.assert_allclose(out.hf_ratio, out.hf_from_bands())
    np.testing.assert_array_equal(out.log_energy, f.log_energy)


def test_tilt_partial_weight():
    f = frames_with_ratio(12, 0.2)
    out, _ = normalize_tilt(f, 0.2, 0.5)
    assert abs(weighted_hf_ratio(out) - 0.325) <= 0.01


@settings(max_examples=30, deadline=None)
@given(st.floats(-12, 12), st.integers(0, 2**16))
def test_gain_commutes_with_tilt_on_log_energy(e, seed):
    f = make_frames(15, le=-30.0, seed=seed)
    crisp = weighted_hf_ratio(f)
    a = normalize_tilt(normalize_gain(f, e, 1.0), crisp, 0.7)[0]
    b = normalize_gain(normalize_tilt(f, crisp, 0.7)[0], e, 1.0)
    np.testing.assert_array_equal(a.log_energy, b.log_energy)


# -- whole segment / utterance ---------------------------------------------------------------

def test_neutral_segment_untouched():
    f = frames_with_ratio(40, 0.45)
    out, rec = filter_segment(f, 40, -30.0)
    assert out.identical(f)
    assert rec.corrections.is_zero


def test_empty_utterance():
    assert filter_utterance([], 40) == ([], [])


def test_stretched_word_restored_to_reference_duration():
    base = sc.make_word(sc.DEFAULT_LEXICON[0])
    ref = analyze_clip(base).segments[0].n_frames
    utt = analyze_clip(sc.time_stretch(base, 2.0))
    assert len(utt.segments) == 1
    out, recs = filter_utterance(utt, ref)
    assert abs(len(out[0]) - ref) <= 0.1 * ref
    assert len(recs) == 1 and recs[0].corrections.resample_factor < 1


def test_utterance_leaves_input_alone_and_records_spans(word_segments):
    segs = [Segment(0, len(word_segments[0]), word_segments[0]),
            Segment(60, 60 + len(word_segments[1]), word_segments[1])]
    before = [s.frames.log_energy.copy() for s in segs]
    out, recs = filter_utterance(segs, 30)
    assert [r.segment_id for r in recs] == [0, 1]
    assert (recs[1].start_frame, recs[1].end_frame) == (60, 60 + len(word_segments[1]))
    for s, b in zip(segs, before):
        np.testing.assert_array_equal(s.frames.log_energy, b)


def test_segment_error_names_segment():
    bad = Segment(0, 1, make_frames(1))
    with pytest.raises(ValueError, match="segment 0"):
        filter_utterance([bad], -1.0, -30.0)


def test_record_roundtrip_and_after_profile(word_segments):
    for sid, f in enumerate(word_segments):
        out, rec = filter_segment(f, 30.0, -20.0, segment_id=sid)
        back = ParalinguisticRecord.from_json(rec.to_json())
        assert back.to_json() == rec.to_json()
        assert json.loads(rec.to_json())["segment_id"] == sid
        again = profile_segment(out, 30.0, -20.0)
        for axis in ("accent", "speed", "emphasis"):
            np.testing.assert_allclose(getattr(again, axis), getattr(rec.after, axis), atol=1e-6)


# -- contraction -------------------------------------------------------------------------------

def _synthetic_segment(base, ref, v, e):
    """Word frames resampled to ref / 2**v frames and shifted by e dB."""
    n = max(1, round(ref / 2 ** v))
    f = normalize_speed(base, math.log2(n / len(base)), 1.0)
    return normalize_gain(f, -e, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 9), st.floats(-1.5, 1.5), st.floats(-15, 15))
def test_contraction(word_segments, k, v, e):
    base = word_segments[k]
    ref, ref_e = 40.0, float(np.mean(base.log_energy))
    cur = _synthetic_segment(base, ref, v, e)
    prev_e = None
    for _ in range(5):
        cur, rec = filter_segment(cur, ref, ref_e)
        b, a = rec.before, rec.after
        if prev_e is not None:
            assert abs(b.emphasis_db) <= abs(prev_e) + 1e-9
        assert abs(a.emphasis_db) <= abs(b.emphasis_db) + 1e-9
        assert abs(a.speed_log2) <= abs(b.speed_log2) + 0.05
        prev_e = b.emphasis_db
    assert rec.after.degree("emphasis", "medium") >= 0.9
    assert rec.after.degree("speed", "normal") >= 0.9

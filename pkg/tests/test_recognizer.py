import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_frames
from fuzzyspeech import synth_corpus as sc
from fuzzyspeech.audio_features import AudioClip
from fuzzyspeech.paraling_filter import profile_segment
from fuzzyspeech.recognizer import (
    RecognitionError,
    RecognitionResult,
    RecognizerConfig,
    Template,
    TemplateStore,
    accept,
    confirm,
    decide,
    enroll,
    load_store,
    match_score,
    rank_words,
    recognize,
    save_store,
    store_from_dict,
    store_to_dict,
)

LABELS = [w.label for w in sc.DEFAULT_LEXICON]


@pytest.fixture(scope="module")
def homophone_store():
    clip = sc.make_word(sc.HOMOPHONE_SPEC)
    st_ = enroll("tail", [clip])
    return enroll("tale", [clip], st_), clip


def top_word(clip, store, **cfg):
    res = recognize(clip, store, RecognizerConfig(**cfg))
    assert len(res) == 1
    return res[0]


# -- enrollment ---------------------------------------------------------------------

def test_first_enrollment_is_self_referenced(lexicon_clips):
    label, clip = lexicon_clips[0]
    store = enroll(label, [clip])
    assert len(store) == 1
    t = store.templates[0]
    assert t.duration_frames == t.raw_frames.__len__()
    prof = profile_segment(t.raw_frames, store.mean_duration, t.mean_energy)
    assert prof.speed_log2 == 0.0


def test_homophone_templates_identical(homophone_store):
    store, _ = homophone_store
    a, b = store.templates
    assert (a.word, b.word) == ("tail", "tale")
    assert a.frames.identical(b.frames)


def test_enroll_rejects_silence_and_two_words():
    with pytest.raises(ValueError, match="one isolated word"):
        enroll("x", [AudioClip(np.zeros(16000))])
    a = sc.make_word(sc.DEFAULT_LEXICON[0]).samples
    with pytest.raises(ValueError, match="one isolated word"):
        enroll("x", [AudioClip(np.concatenate([a, np.zeros(8000), a]))])


def test_labels_normalised_and_multi_template(lexicon_clips):
    (_, c1), (_, c2) = lexicon_clips[:2]
    store = enroll(" Vector ", [c1, c2])
    assert store.words == ["vector"] and store.counts() == {"vector": 2}


def test_templates_are_near_neutral(store):
    for t in store.templates:
        prof = profile_segment(t.frames, store.mean_duration, store.mean_energy)
        assert prof.degree("speed", "normal") >= 0.8


# -- scoring -------------------------------------------------------------------------

def test_match_score_examples():
    f = make_frames(12, hf=0.3)
    assert match_score(f, f) == 1.0
    shifted = f.with_values(hf_ratio=f.hf_ratio + 1.0)  # every step costs exactly 1
    assert match_score(f, shifted) == pytest.approx(math.exp(-1.0), abs=1e-12)
    far = f.with_values(log_energy=f.log_energy + 400.0)
    assert match_score(f, far) < 1e-8


def test_match_score_min_tnorm():
    f = make_frames(6)
    g = f.with_values(hf_ratio=f.hf_ratio + np.array([0, 0, 0.5, 0, 0, 0]))
    assert match_score(f, g, tnorm="min") == pytest.approx(math.exp(-0.5))
    assert match_score(f, g, tnorm="min") <= match_score(f, g)


def test_ranking_tie_break_and_decide():
    store = TemplateStore(tuple(Template(w, make_frames(3), 3) for w in ("b", "a", "c")))
    hyps = rank_words(store, [0.5, 0.5, 0.9])
    assert hyps == [("c", 0.9), ("a", 0.5), ("b", 0.5)]
    res = decide(0, hyps)
    assert res.confidence == pytest.approx(0.4)
    assert not res.ambiguous and not res.needs_confirmation
    low = decide(0, [("a", 0.15), ("b", 0.01)])
    assert low.out_of_vocabulary and low.needs_confirmation
    single = decide(0, [("a", 0.7)])
    assert single.confidence == 1.0


def test_recognize_errors():
    with pytest.raises(RecognitionError, match="no templates"):
        recognize(sc.make_word(sc.DEFAULT_LEXICON[0]), TemplateStore())


def test_silence_gives_no_results(store):
    assert recognize(AudioClip(np.zeros(16000)), store) == []


def test_self_recognition(store, lexicon_clips):
    for label, clip in lexicon_clips:
        for use_filter in (True, False):
            res = top_word(clip, store, use_filter=use_filter)
            assert res.top_word == label
            assert res.top_score > 0.95
            assert not res.needs_confirmation


def test_scores_bounded_and_sorted(store, corpus):
    for row in corpus.manifest[::37]:
        res = top_word(corpus.clips[row.filename], store)
        scores = [s for _, s in res.hypotheses]
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores == sorted(scores, reverse=True)
        assert len(res.hypotheses) == 10


def test_stretched_and_louder_word(store):
    spec = sc.DEFAULT_LEXICON[4]
    clip = sc.perturb(sc.make_word(spec), sc.PerturbationSpec(1.5, 6.0, 0.0))
    assert top_word(clip, store).top_word == spec.label


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(range(10)), st.floats(-12, 12))
def test_gain_invariance(store, k, g):
    clip = sc.apply_gain(sc.make_word(sc.DEFAULT_LEXICON[k]), g)
    assert top_word(clip, store).top_word == LABELS[k]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(range(10)), st.floats(0.6, 1.6))
def test_stretch_robustness(store, k, f):
    clip = sc.time_stretch(sc.make_word(sc.DEFAULT_LEXICON[k]), f)
    assert top_word(clip, store).top_word == LABELS[k]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.6, 1.6), st.floats(-12, 12), st.floats(-2, 2))
def test_homophone_symmetry(homophone_store, f, g, t):
    store, clip = homophone_store
    res = top_word(sc.perturb(clip, sc.PerturbationSpec(f, g, t)), store)
    scores = dict(res.hypotheses)
    assert abs(scores["tail"] - scores["tale"]) < 1e-9
    assert res.ambiguous


# -- confirmation ------------------------------------------------------------------------

def _flagged(words=("tail", "tale")):
    return decide(3, [(words[0], 0.9), (words[1], 0.9)])


def test_confirm_yes():
    entry = confirm(_flagged(), True)
    assert (entry.word, entry.origin) == ("tail", "confirmed")


def test_confirm_correction():
    entry = confirm(_flagged(), False, "Tale", lexicon=["tail", "tale"])
    assert (entry.word, entry.origin, entry.note) == ("tale", "user", "")
    odd = confirm(_flagged(), False, "tall", lexicon=["tail", "tale"])
    assert odd.note == "out_of_lexicon"


def test_confirm_reject_and_guard():
    assert confirm(_flagged(), False).origin == "rejected"
    clear = decide(0, [("a", 0.95), ("b", 0.2)])
    with pytest.raises(ValueError):
        confirm(clear, True)
    assert accept(clear).origin == "auto"


# -- persistence -------------------------------------------------------------------------

def test_store_roundtrip(tmp_path, store):
    save_store(store, tmp_path / "s.json")
    back = load_store(tmp_path / "s.json")
    assert back.words == store.words
    for a, b in zip(store.templates, back.templates):
        assert a.frames.identical(b.frames) and a.raw_frames.identical(b.raw_frames)
        assert a.duration_frames == b.duration_frames and a.source == b.source
    assert back.mean_duration == store.mean_duration


def test_store_version_checked(store):
    data = store_to_dict(store)
    data["schema_version"] = 99
    with pytest.raises(ValueError, match="schema version"):
        store_from_dict(data)
    with pytest.raises(ValueError):
        store_from_dict({"kind": "other"})


def test_result_roundtrip(store, lexicon_clips):
    res = top_word(lexicon_clips[2][1], store)
    back = RecognitionResult.from_dict(res.to_dict())
    assert back.to_dict() == res.to_dict()

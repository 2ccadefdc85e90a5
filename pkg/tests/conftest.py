import numpy as np
import pytest

from fuzzyspeech import synth_corpus as sc
from fuzzyspeech.audio_features import FeatureSequence, analyze_clip
from fuzzyspeech.recognizer import enroll


@pytest.fixture(scope="session")
def corpus():
    return sc.build_eval_corpus(sc.DEFAULT_LEXICON, sc.DEFAULT_GRID, seed=0)


@pytest.fixture(scope="session")
def lexicon_clips(corpus):
    return [(w.label, corpus.lexicon[w.label]) for w in sc.DEFAULT_LEXICON]


@pytest.fixture(scope="session")
def store(lexicon_clips):
    st = None
    for label, clip in lexicon_clips:
        st = enroll(label, [clip], st)
    return st


@pytest.fixture(scope="session")
def word_segments(lexicon_clips):
    """First (only) endpointed segment of every lexicon word."""
    return [analyze_clip(clip).segments[0].frames for _, clip in lexicon_clips]


def make_frames(n, le=-30.0, hf=0.45, seed=None):
    """Synthetic feature sequence with consistent bands and HF ratio."""
    rng = np.random.default_rng(seed)
    bands = np.full((n, 8), le - 9.0)
    if seed is not None:
        bands = bands + rng.uniform(-3, 3, size=(n, 8))
    fs = FeatureSequence(np.full(n, le), np.zeros(n), bands)
    return fs.with_values(hf_ratio=fs.hf_from_bands())

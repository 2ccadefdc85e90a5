"""Fuzzy paralinguistic filtering in front of a DTW isolated-word recognizer."""
from .audio_features import AudioClip, analyze_clip, extract_features, load_audio, write_wav
from .dtw_align import brute_force_dtw, dtw, dtw_distance
from .fuzzy_core import LinguisticVariable, MembershipFunction, centroid_defuzzify, fuzzify
from .paraling_filter import filter_segment, filter_utterance, profile_segment
from .recognizer import TemplateStore, confirm, enroll, match_score, recognize

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "analyze_clip", "extract_features", "load_audio", "write_wav",
    "brute_force_dtw", "dtw", "dtw_distance",
    "LinguisticVariable", "MembershipFunction", "centroid_defuzzify", "fuzzify",
    "filter_segment", "filter_utterance", "profile_segment",
    "TemplateStore", "confirm", "enroll", "match_score", "recognize",
]

"""Template enrollment and isolated-word recognition.

A word hypothesis is scored by aligning the (filtered) segment against each
template and mapping every aligned frame pair to a similarity ``exp(-c)``.
Those step similarities are combined with a t-norm along the path; with the
product t-norm and length normalisation the score is their geometric mean,
``exp(-dtw_distance)``. A word's score is the best over its templates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio_features import AudioClip, FeatureSequence, Segment, analyze_clip
from .dtw_align import cost_matrix, dtw
from .paraling_filter import (
    DEFAULT_AXES,
    FuzzyAxes,
    ParalinguisticRecord,
    TARGET_RATIO,
    filter_segment,
)

STORE_SCHEMA_VERSION = 1
STORE_KIND = "fuzzyspeech-template-store"


class EnrollmentError(ValueError):
    pass


class RecognitionError(ValueError):
    pass


@dataclass(frozen=True)
class FrontEnd:
    """Framing and endpointing parameters shared by enrollment and recognition."""

    window_ms: float = 25.0
    hop_ms: float = 10.0
    hf_cutoff_hz: float = 2000.0
    open_threshold_db: float = -45.0
    close_threshold_db: float = -55.0
    min_gap_ms: float = 200.0
    min_segment_ms: float = 80.0

    def analyze(self, clip: AudioClip):
        return analyze_clip(
            clip, self.window_ms, self.hop_ms, self.hf_cutoff_hz,
            open_threshold_db=self.open_threshold_db,
            close_threshold_db=self.close_threshold_db,
            min_gap_ms=self.min_gap_ms, min_segment_ms=self.min_segment_ms,
        )


@dataclass(frozen=True)
class RecognizerConfig:
    eps_amb: float = 0.01
    theta_conf: float = 0.1
    min_score: float = 0.5
    s_oov: float = 0.2
    tnorm: str = "product"
    use_filter: bool = True
    target_ratio: float = TARGET_RATIO
    band_half_width: int | None = None
    frontend: FrontEnd = field(default_factory=FrontEnd)
    axes: FuzzyAxes = DEFAULT_AXES

    def __post_init__(self):
        for name in ("eps_amb", "theta_conf", "min_score", "s_oov", "target_ratio"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.tnorm not in ("product", "min"):
            raise ValueError(f"tnorm must be 'product' or 'min', got {self.tnorm!r}")


DEFAULT_CONFIG = RecognizerConfig()


@dataclass(frozen=True, eq=False)
class Template:
    word: str
    frames: FeatureSequence
    duration_frames: int
    source: str = ""
    raw_frames: FeatureSequence | None = None

    @property
    def mean_energy(self) -> float:
        return float(np.mean(self.frames.log_energy))


@dataclass(frozen=True, eq=False)
class TemplateStore:
    templates: tuple[Template, ...] = ()

    def __len__(self):
        return len(self.templates)

    @property
    def words(self) -> list[str]:
        return sorted({t.word for t in self.templates})

    @property
    def mean_duration(self) -> float:
        if not self.templates:
            raise RecognitionError("no templates")
        return float(np.mean([t.duration_frames for t in self.templates]))

    @property
    def mean_energy(self) -> float:
        if not self.templates:
            raise RecognitionError("no templates")
        return float(np.mean([t.mean_energy for t in self.templates]))

    def add(self, template: Template) -> "TemplateStore":
        return TemplateStore(self.templates + (template,))

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t in self.templates:
            out[t.word] = out.get(t.word, 0) + 1
        return dict(sorted(out.items()))


def normalize_label(word: str) -> str:
    return word.strip().lower()


def enroll(word: str, clips: Sequence[AudioClip], store: TemplateStore | None = None,
           config: RecognizerConfig = DEFAULT_CONFIG, sources: Sequence[str] | None = None
           ) -> TemplateStore:
    """Add one template per clip; each clip must endpoint to a single word."""
    store = store or TemplateStore()
    label = normalize_label(word)
    if not label:
        raise EnrollmentError("word label must be non-empty")
    sources = list(sources) if sources is not None else [""] * len(clips)
    for clip, source in zip(clips, sources):
        utt = config.frontend.analyze(clip)
        if len(utt.segments) != 1:
            raise EnrollmentError(
                f"enrollment requires one isolated word ({len(utt.segments)} segments found)"
            )
        seg = utt.segments[0]
        if len(store):
            ref_dur, ref_energy = store.mean_duration, store.mean_energy
        else:
            ref_dur, ref_energy = float(seg.n_frames), float(np.mean(seg.frames.log_energy))
        frames, _ = filter_segment(seg.frames, ref_dur, ref_energy, config.axes,
                                   config.target_ratio)
        store = store.add(Template(label, frames, len(frames), source, seg.frames))
    return store


def match_score(segment_frames, template: Template | FeatureSequence, band=None,
                tnorm: str = "product") -> float:
    """Fuzzy similarity in [0, 1] between a segment and a template.

    ``product`` gives ``exp(-normalized_cost)``; ``min`` gives the weakest
    step similarity on the optimal path.
    """
    ref = template.frames if isinstance(template, Template) else template
    result = dtw(segment_frames, ref, band)
    if tnorm == "product":
        return math.exp(-result.normalized_cost)
    if tnorm == "min":
        cost = cost_matrix(segment_frames, ref)
        worst = max(cost[i, j] for i, j in result.path)
        return math.exp(-worst)
    raise ValueError(f"unknown t-norm {tnorm!r}")


@dataclass(frozen=True, eq=False)
class RecognitionResult:
    segment_id: int
    hypotheses: list[tuple[str, float]]
    confidence: float
    ambiguous: bool
    needs_confirmation: bool
    out_of_vocabulary: bool
    start_frame: int = 0
    end_frame: int = 0
    record: ParalinguisticRecord | None = field(default=None, repr=False)
    frames: FeatureSequence | None = field(default=None, repr=False)  # what was scored

    @property
    def top_word(self) -> str:
        return self.hypotheses[0][0]

    @property
    def top_score(self) -> float:
        return self.hypotheses[0][1]

    def tied_words(self, eps: float) -> list[str]:
        top = self.top_score
        return [w for w, s in self.hypotheses if top - s < eps]

    def to_dict(self) -> dict:
        out = {
            "type": "recognition",
            "segment_id": self.segment_id,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "hypotheses": [{"word": w, "score": s} for w, s in self.hypotheses],
            "confidence": self.confidence,
            "ambiguous": self.ambiguous,
            "needs_confirmation": self.needs_confirmation,
            "out_of_vocabulary": self.out_of_vocabulary,
        }
        if self.record is not None:
            out["paralinguistic"] = self.record.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict, axes: FuzzyAxes = DEFAULT_AXES) -> "RecognitionResult":
        rec = data.get("paralinguistic")
        return cls(
            segment_id=data["segment_id"],
            hypotheses=[(h["word"], h["score"]) for h in data["hypotheses"]],
            confidence=data["confidence"],
            ambiguous=data["ambiguous"],
            needs_confirmation=data["needs_confirmation"],
            out_of_vocabulary=data["out_of_vocabulary"],
            start_frame=data.get("start_frame", 0),
            end_frame=data.get("end_frame", 0),
            record=ParalinguisticRecord.from_dict(rec, axes) if rec else None,
        )


def _score_templates(frames, store: TemplateStore, config: RecognizerConfig,
                     raw: bool) -> list[float]:
    scores = []
    for t in store.templates:
        ref = t.raw_frames if raw and t.raw_frames is not None else t.frames
        scores.append(match_score(frames, ref, config.band_half_width, config.tnorm))
    return scores


def rank_words(store: TemplateStore, scores: Sequence[float]) -> list[tuple[str, float]]:
    """Best score per word, sorted by score then label."""
    best: dict[str, float] = {}
    for t, s in zip(store.templates, scores):
        if s > best.get(t.word, -1.0):
            best[t.word] = s
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def decide(segment_id: int, hypotheses: list[tuple[str, float]],
           config: RecognizerConfig = DEFAULT_CONFIG, **extra) -> RecognitionResult:
    """Attach confidence margin and flags to ranked hypotheses."""
    top = hypotheses[0][1]
    confidence = top - hypotheses[1][1] if len(hypotheses) > 1 else 1.0
    ambiguous = len(hypotheses) > 1 and confidence < config.eps_amb
    return RecognitionResult(
        segment_id=segment_id,
        hypotheses=hypotheses,
        confidence=confidence,
        ambiguous=ambiguous,
        needs_confirmation=confidence < config.theta_conf or top < config.min_score,
        out_of_vocabulary=top < config.s_oov,
        **extra,
    )


def recognize_segment(seg: Segment | FeatureSequence, store: TemplateStore,
                      config: RecognizerConfig = DEFAULT_CONFIG, segment_id: int = 0,
                      reference_energy_db: float | None = None) -> RecognitionResult:
    """Score one endpointed segment against every template."""
    if not len(store):
        raise RecognitionError("no templates")
    frames = seg.frames if isinstance(seg, Segment) else seg
    span = (seg.start_frame, seg.end_frame) if isinstance(seg, Segment) else (0, len(frames))

    if not config.use_filter:
        hyps = rank_words(store, _score_templates(frames, store, config, raw=True))
        return decide(segment_id, hyps, config, start_frame=span[0], end_frame=span[1],
                      frames=frames)

    ref_energy = store.mean_energy if reference_energy_db is None else reference_energy_db
    filtered, record = filter_segment(frames, store.mean_duration, ref_energy, config.axes,
                                      config.target_ratio, segment_id, span)
    scores = _score_templates(filtered, store, config, raw=False)

    # second pass: speed reference taken from the best-matching template
    best = store.templates[int(np.argmax(scores))]
    filtered, record = filter_segment(frames, best.duration_frames, ref_energy, config.axes,
                                      config.target_ratio, segment_id, span)
    scores = _score_templates(filtered, store, config, raw=False)
    hyps = rank_words(store, scores)
    return decide(segment_id, hyps, config, start_frame=span[0], end_frame=span[1],
                  record=record, frames=filtered)


def recognize(clip: AudioClip, store: TemplateStore,
              config: RecognizerConfig = DEFAULT_CONFIG) -> list[RecognitionResult]:
    """One result per endpointed segment of ``clip``."""
    if not len(store):
        raise RecognitionError("no templates")
    utt = config.frontend.analyze(clip)
    return [recognize_segment(seg, store, config, sid) for sid, seg in enumerate(utt.segments)]


@dataclass(frozen=True)
class TranscriptEntry:
    segment_id: int
    word: str | None
    origin: str  # auto | confirmed | user | rejected
    note: str = ""

    def to_dict(self) -> dict:
        return {"type": "transcript", "segment_id": self.segment_id, "word": self.word,
                "origin": self.origin, "note": self.note}


def accept(result: RecognitionResult) -> TranscriptEntry:
    """Transcript entry for a result that needs no confirmation."""
    return TranscriptEntry(result.segment_id, result.top_word, "auto")


def confirm(result: RecognitionResult, answer: bool, correction: str | None = None,
            lexicon: Sequence[str] | None = None) -> TranscriptEntry:
    """Resolve a flagged result with the speaker's yes/no answer.

    ``answer=True`` accepts the top word. ``answer=False`` with a correction
    records the correction (noting when it is outside ``lexicon``); without
    one the entry is rejected.
    """
    if not (result.needs_confirmation or result.ambiguous):
        raise ValueError("result does not need confirmation")
    if answer:
        return TranscriptEntry(result.segment_id, result.top_word, "confirmed")
    if correction:
        word = normalize_label(correction)
        note = "" if lexicon is None or word in lexicon else "out_of_lexicon"
        return TranscriptEntry(result.segment_id, word, "user", note)
    return TranscriptEntry(result.segment_id, None, "rejected")


# -- persistence ----------------------------------------------------------------

def _frames_to_dict(frames: FeatureSequence) -> dict:
    return {"log_energy": frames.log_energy.tolist(), "hf_ratio": frames.hf_ratio.tolist(),
            "bands": frames.bands.tolist()}


def _frames_from_dict(data: dict, meta: dict) -> FeatureSequence:
    return FeatureSequence(np.array(data["log_energy"], dtype=float),
                           np.array(data["hf_ratio"], dtype=float),
                           np.array(data["bands"], dtype=float).reshape(-1, 8), **meta)


def store_to_dict(store: TemplateStore) -> dict:
    meta = {}
    if store.templates:
        f = store.templates[0].frames
        meta = {"sample_rate": f.sample_rate, "hop_ms": f.hop_ms, "hf_cutoff_hz": f.hf_cutoff_hz}
    return {
        "kind": STORE_KIND,
        "schema_version": STORE_SCHEMA_VERSION,
        "frame_meta": meta,
        "templates": [
            {
                "word": t.word,
                "duration_frames": t.duration_frames,
                "source": t.source,
                "frames": _frames_to_dict(t.frames),
                "raw_frames": None if t.raw_frames is None else _frames_to_dict(t.raw_frames),
            }
            for t in store.templates
        ],
    }


def store_from_dict(data: dict) -> TemplateStore:
    if data.get("kind") != STORE_KIND:
        raise ValueError("not a template store")
    if data.get("schema_version") != STORE_SCHEMA_VERSION:
        raise ValueError(f"unsupported store schema version {data.get('schema_version')}")
    meta = data.get("frame_meta") or {}
    templates = []
    for t in data["templates"]:
        raw = t.get("raw_frames")
        templates.append(Template(
            word=t["word"],
            frames=_frames_from_dict(t["frames"], meta),
            duration_frames=int(t["duration_frames"]),
            source=t.get("source", ""),
            raw_frames=None if raw is None else _frames_from_dict(raw, meta),
        ))
    return TemplateStore(tuple(templates))


def save_store(store: TemplateStore, path) -> None:
    Path(path).write_text(json.dumps(store_to_dict(store)) + "\n", encoding="utf-8")


def load_store(path) -> TemplateStore:
    return store_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

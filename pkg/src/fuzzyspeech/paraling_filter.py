"""Fuzzy paralinguistic profiling and feature-domain normalisation.

Each segment is read along three axes:

* speed, ``v = log2(reference_frames / segment_frames)`` (positive = fast);
* emphasis, ``e`` = mean segment log-energy minus a reference level (dB);
* accent, mean HF ratio over frames louder than -60 dBFS.

The crisp readings are fuzzified and every correction is scaled by how far
the segment sits from the neutral term (``1 - mu_normal``, ``1 - mu_medium``,
``|mu_sharp - mu_soft|``), so neutral speech passes through untouched.
Corrections are applied in the order speed, gain, tilt. The unfiltered frames
are never modified; what was measured and applied is kept in a
:class:`ParalinguisticRecord` for any downstream paralinguistic consumer.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fuzzy_core
from .audio_features import (
    ENERGY_FLOOR_DB,
    FeatureSequence,
    Segment,
    Utterance,
    band_hf_fraction,
)
from .fuzzy_core import LinguisticVariable, fuzzify

VOICED_FLOOR_DB = -60.0
TARGET_RATIO = 0.45
TILT_SLOPE_LIMIT = 24.0


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class FuzzyAxes:
    """The three linguistic variables used for profiling."""

    accent: LinguisticVariable = fuzzy_core.ACCENT
    speed: LinguisticVariable = fuzzy_core.SPEED
    emphasis: LinguisticVariable = fuzzy_core.EMPHASIS

    def __post_init__(self):
        required = {"accent": ("soft", "sharp"), "speed": ("normal",), "emphasis": ("medium",)}
        for axis, labels in required.items():
            var = getattr(self, axis)
            missing = [lab for lab in labels if lab not in var.labels]
            if missing:
                raise ValueError(f"{axis} variable lacks term(s) {missing}")

    @classmethod
    def from_mapping(cls, variables: dict[str, LinguisticVariable]) -> "FuzzyAxes":
        return cls(**{k: variables[k] for k in ("accent", "speed", "emphasis") if k in variables})


DEFAULT_AXES = FuzzyAxes()


@dataclass(frozen=True, eq=False)
class ParalinguisticProfile:
    accent_ratio: float
    accent: np.ndarray
    speed_log2: float
    speed: np.ndarray
    emphasis_db: float
    emphasis: np.ndarray
    axes: FuzzyAxes = field(default=DEFAULT_AXES, repr=False)

    def degree(self, axis: str, label: str) -> float:
        var = getattr(self.axes, axis)
        return float(getattr(self, axis)[var.index(label)])

    def to_dict(self) -> dict:
        out = {}
        for axis, crisp in (("accent", "accent_ratio"), ("speed", "speed_log2"),
                            ("emphasis", "emphasis_db")):
            var = getattr(self.axes, axis)
            out[axis] = {
                "crisp": float(getattr(self, crisp)),
                "degrees": dict(zip(var.labels, map(float, getattr(self, axis)))),
            }
        return out

    @classmethod
    def from_dict(cls, data: dict, axes: FuzzyAxes = DEFAULT_AXES) -> "ParalinguisticProfile":
        def vec(axis):
            var = getattr(axes, axis)
            return np.array([data[axis]["degrees"][lab] for lab in var.labels])

        return cls(
            accent_ratio=data["accent"]["crisp"], accent=vec("accent"),
            speed_log2=data["speed"]["crisp"], speed=vec("speed"),
            emphasis_db=data["emphasis"]["crisp"], emphasis=vec("emphasis"),
            axes=axes,
        )


def _frames_of(seg) -> FeatureSequence:
    return seg.frames if isinstance(seg, Segment) else seg


def accent_reading(frames: FeatureSequence) -> float:
    """Mean HF ratio over frames above the voicing floor (all frames if none)."""
    voiced = frames.log_energy > VOICED_FLOOR_DB
    ratios = frames.hf_ratio[voiced] if np.any(voiced) else frames.hf_ratio
    return float(np.mean(ratios))


def profile_segment(seg, reference_duration_frames: float, utterance_mean_energy: float,
                    axes: FuzzyAxes = DEFAULT_AXES) -> ParalinguisticProfile:
    """Crisp readings and fuzzy degrees for one segment.

    Crisp values are stored clamped into their universes.
    """
    frames = _frames_of(seg)
    if len(frames) == 0:
        raise FilterError("empty segment")
    if reference_duration_frames <= 0:
        raise FilterError("reference duration must be positive")

    v = axes.speed.clamp(math.log2(reference_duration_frames / len(frames)))
    e = axes.emphasis.clamp(float(np.mean(frames.log_energy)) - utterance_mean_energy)
    r = axes.accent.clamp(accent_reading(frames))
    return ParalinguisticProfile(
        accent_ratio=r, accent=fuzzify(axes.accent, r),
        speed_log2=v, speed=fuzzify(axes.speed, v),
        emphasis_db=e, emphasis=fuzzify(axes.emphasis, e),
        axes=axes,
    )


def correction_weights(profile: ParalinguisticProfile) -> tuple[float, float, float]:
    """``(w_speed, w_emph, w_acc)``, each in [0, 1]."""
    w_speed = 1.0 - profile.degree("speed", "normal")
    w_emph = 1.0 - profile.degree("emphasis", "medium")
    w_acc = abs(profile.degree("accent", "sharp") - profile.degree("accent", "soft"))
    return w_speed, w_emph, w_acc


def resample_count(n: int, factor: float) -> int:
    return max(1, int(math.floor(n * factor + 0.5)))


def normalize_speed(frames: FeatureSequence, v: float, w_speed: float) -> FeatureSequence:
    """Linearly resample the frame sequence by ``2 ** (v * w_speed)``.

    Output position ``j`` reads input position ``j * n / n_out`` (clamped to
    the last frame), so an exact doubling reproduces every input frame at the
    even output indices.
    """
    if len(frames) == 0:
        raise FilterError("empty segment")
    factor = 2.0 ** (v * w_speed)
    n = len(frames)
    n_out = resample_count(n, factor)
    if factor == 1.0 or n_out == n:
        return frames
    pos = np.minimum(np.arange(n_out) * (n / n_out), n - 1)
    grid = np.arange(n)
    bands = np.column_stack([np.interp(pos, grid, frames.bands[:, k])
                             for k in range(frames.bands.shape[1])])
    return frames.with_values(
        log_energy=np.interp(pos, grid, frames.log_energy),
        hf_ratio=np.interp(pos, grid, frames.hf_ratio),
        bands=bands,
    )


def normalize_gain(frames: FeatureSequence, e: float, w_emph: float) -> FeatureSequence:
    """Subtract ``e * w_emph`` dB from log-energy and every band energy."""
    return shift_energy(frames, e * w_emph)


def shift_energy(frames: FeatureSequence, shift: float) -> FeatureSequence:
    """Lower every energy by ``shift`` dB, clamped at the floor."""
    if shift == 0.0:
        return frames
    return frames.with_values(
        log_energy=np.maximum(frames.log_energy - shift, ENERGY_FLOOR_DB),
        bands=np.maximum(frames.bands - shift, ENERGY_FLOOR_DB),
    )


def weighted_hf_ratio(frames: FeatureSequence, bands: np.ndarray | None = None) -> float:
    """Energy-weighted mean HF ratio of a segment, from its band energies."""
    bands = frames.bands if bands is None else bands
    power = 10.0 ** (bands / 10.0)
    frac = band_hf_fraction(frames.sample_rate, frames.hf_cutoff_hz, bands.shape[1])
    return float((power * frac).sum() / power.sum())


def tilt_offsets(slope_db: float, n_bands: int) -> np.ndarray:
    """Per-band offsets of a linear tilt spanning ``slope_db`` from first to last band."""
    idx = np.arange(n_bands)
    return slope_db * (idx - (n_bands - 1) / 2.0) / (n_bands - 1)


def _tilted(frames: FeatureSequence, slope_db: float) -> np.ndarray:
    return np.maximum(frames.bands + tilt_offsets(slope_db, frames.bands.shape[1]),
                      ENERGY_FLOOR_DB)


def solve_tilt(frames: FeatureSequence, target: float, tol: float = 1e-4,
               max_iter: int = 100) -> float:
    """Tilt slope (dB across the band span) that moves the weighted HF ratio to ``target``.

    Bisection over ``[-24, 24]``; returns the bracket end when the target is
    out of reach.
    """
    lo, hi = -TILT_SLOPE_LIMIT, TILT_SLOPE_LIMIT
    if weighted_hf_ratio(frames, _tilted(frames, lo)) >= target:
        return lo
    if weighted_hf_ratio(frames, _tilted(frames, hi)) <= target:
        return hi
    mid = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = weighted_hf_ratio(frames, _tilted(frames, mid))
        if abs(r - target) < tol:
            break
        if r < target:
            lo = mid
        else:
            hi = mid
    return mid


def normalize_tilt(frames: FeatureSequence, crisp_ratio: float, w_acc: float,
                   target_ratio: float = TARGET_RATIO) -> tuple[FeatureSequence, float]:
    """Pull the segment's HF balance toward ``target_ratio``.

    Returns the corrected frames and the applied slope (0.0 when untouched).
    Per-frame HF ratios are recomputed from the tilted bands; log-energy is
    left alone.
    """
    desired = crisp_ratio + (target_ratio - crisp_ratio) * w_acc
    if w_acc == 0.0 or desired == crisp_ratio or len(frames) == 0:
        return frames, 0.0
    if np.all(frames.bands <= ENERGY_FLOOR_DB):
        return frames, 0.0
    slope = solve_tilt(frames, desired)
    bands = _tilted(frames, slope)
    return frames.with_values(bands=bands, hf_ratio=frames.hf_from_bands(bands)), slope


@dataclass(frozen=True)
class Corrections:
    resample_factor: float
    frames_in: int
    frames_out: int
    gain_shift_db: float
    tilt_slope_db: float
    target_ratio: float
    resample_drift_db: float = 0.0

    @property
    def is_zero(self) -> bool:
        return (self.resample_factor == 1.0 and self.frames_in == self.frames_out
                and self.gain_shift_db == 0.0 and self.tilt_slope_db == 0.0
                and self.resample_drift_db == 0.0)


@dataclass(frozen=True, eq=False)
class ParalinguisticRecord:
    """Side-channel entry for one filtered segment."""

    segment_id: int
    start_frame: int
    end_frame: int
    before: ParalinguisticProfile
    weights: tuple[float, float, float]
    corrections: Corrections
    after: ParalinguisticProfile
    reference_duration_frames: float
    reference_energy_db: float

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "reference_duration_frames": self.reference_duration_frames,
            "reference_energy_db": self.reference_energy_db,
            "before": self.before.to_dict(),
            "weights": dict(zip(("speed", "emphasis", "accent"), self.weights)),
            "corrections": asdict(self.corrections),
            "after": self.after.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, axes: FuzzyAxes = DEFAULT_AXES) -> "ParalinguisticRecord":
        w = data["weights"]
        return cls(
            segment_id=data["segment_id"],
            start_frame=data["start_frame"],
            end_frame=data["end_frame"],
            before=ParalinguisticProfile.from_dict(data["before"], axes),
            weights=(w["speed"], w["emphasis"], w["accent"]),
            corrections=Corrections(**data["corrections"]),
            after=ParalinguisticProfile.from_dict(data["after"], axes),
            reference_duration_frames=data["reference_duration_frames"],
            reference_energy_db=data["reference_energy_db"],
        )

    @classmethod
    def from_json(cls, line: str, axes: FuzzyAxes = DEFAULT_AXES) -> "ParalinguisticRecord":
        return cls.from_dict(json.loads(line), axes)


def filter_segment(frames: FeatureSequence, reference_duration_frames: float,
                   reference_energy_db: float, axes: FuzzyAxes = DEFAULT_AXES,
                   target_ratio: float = TARGET_RATIO, segment_id: int = 0,
                   span: tuple[int, int] | None = None):
    """Profile, weight and normalise one segment. Returns ``(frames', record)``."""
    before = profile_segment(frames, reference_duration_frames, reference_energy_db, axes)
    w_speed, w_emph, w_acc = correction_weights(before)

    out = normalize_speed(frames, before.speed_log2, w_speed)
    # resampling nudges the mean log-energy; undo that in the gain stage so the
    # speed correction does not leak into the emphasis axis
    drift = float(np.mean(out.log_energy) - np.mean(frames.log_energy)) if out is not frames else 0.0
    out = shift_energy(out, before.emphasis_db * w_emph + drift)
    out, slope = normalize_tilt(out, before.accent_ratio, w_acc, target_ratio)

    after = profile_segment(out, reference_duration_frames, reference_energy_db, axes)
    start, end = span if span is not None else (0, len(frames))
    record = ParalinguisticRecord(
        segment_id=segment_id,
        start_frame=start,
        end_frame=end,
        before=before,
        weights=(w_speed, w_emph, w_acc),
        corrections=Corrections(
            resample_factor=2.0 ** (before.speed_log2 * w_speed),
            frames_in=len(frames),
            frames_out=len(out),
            gain_shift_db=before.emphasis_db * w_emph,
            tilt_slope_db=slope,
            target_ratio=target_ratio,
            resample_drift_db=drift,
        ),
        after=after,
        reference_duration_frames=float(reference_duration_frames),
        reference_energy_db=float(reference_energy_db),
    )
    return out, record


def utterance_mean_energy(segments) -> float:
    """Mean log-energy over all frames of all segments."""
    le = np.concatenate([_frames_of(s).log_energy for s in segments])
    return float(np.mean(le))


def filter_utterance(utterance: Utterance | list[Segment], reference_duration_frames: float,
                     reference_energy_db: float | None = None,
                     axes: FuzzyAxes = DEFAULT_AXES, target_ratio: float = TARGET_RATIO):
    """Filter every segment of an utterance.

    ``reference_energy_db`` defaults to the utterance's own mean segment
    energy. Returns ``(normalised frame sequences, records)`` in segment
    order; the input segments are left untouched.
    """
    segments = utterance.segments if isinstance(utterance, Utterance) else list(utterance)
    if not segments:
        return [], []
    if reference_energy_db is None:
        reference_energy_db = utterance_mean_energy(segments)

    normalized, records = [], []
    for sid, seg in enumerate(segments):
        try:
            out, rec = filter_segment(
                seg.frames, reference_duration_frames, reference_energy_db, axes,
                target_ratio, segment_id=sid, span=(seg.start_frame, seg.end_frame),
            )
        except ValueError as exc:
            raise FilterError(f"segment {sid}: {exc}") from exc
        normalized.append(out)
        records.append(rec)
    return normalized, records

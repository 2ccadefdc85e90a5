"""Deterministic synthetic words and the accent / speed / emphasis perturbations.

A synthetic word is a run of segments. Each segment mixes one sinusoid per
analysis band, placed at the band centre with a small seeded frequency
jitter and a seeded random phase, weighted by the band profile (dB), peak
normalised to the segment amplitude and shaped with 10 ms raised-cosine
ramps. Words are padded with 150 ms of digital silence on both sides.
"""
from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audio_features import DEFAULT_RATE, N_BANDS, AudioClip, analyze_clip, write_wav

PAD_MS = 150.0
RAMP_MS = 10.0
TONE_JITTER = 0.05
MIN_WORD_MS = 120.0

STRETCH_RANGE = (0.25, 4.0)
GAIN_LIMIT_DB = 24.0
TILT_LIMIT_DB = 6.0
# leaves headroom for +12 dB gain on top of the default tilt grid
WORD_AMPLITUDE = 0.15


class SpecError(ValueError):
    """Invalid word or perturbation spec; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SegmentSpec:
    duration_ms: float
    band_profile: tuple[float, ...]
    amplitude: float


@dataclass(frozen=True)
class WordSpec:
    label: str
    segments: tuple[SegmentSpec, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.label:
            raise SpecError("label", "must be non-empty")
        if not self.segments:
            raise SpecError("segments", "at least one segment required")
        total = 0.0
        for k, seg in enumerate(self.segments):
            where = f"segments[{k}]"
            if not seg.duration_ms > 0:
                raise SpecError(f"{where}.duration_ms", "must be positive")
            if len(seg.band_profile) != N_BANDS:
                raise SpecError(f"{where}.band_profile", f"needs {N_BANDS} values")
            if not all(np.isfinite(seg.band_profile)):
                raise SpecError(f"{where}.band_profile", "values must be finite")
            if not 0.0 < seg.amplitude <= 1.0:
                raise SpecError(f"{where}.amplitude", "must lie in (0, 1]")
            total += seg.duration_ms
        if total < MIN_WORD_MS:
            raise SpecError("segments", f"total duration {total} ms < {MIN_WORD_MS} ms")

    @property
    def duration_ms(self) -> float:
        return sum(s.duration_ms for s in self.segments)

    def relabel(self, label: str) -> "WordSpec":
        return WordSpec(label, self.segments, self.seed)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "seed": self.seed,
            "segments": [
                {"duration_ms": s.duration_ms, "band_profile": list(s.band_profile),
                 "amplitude": s.amplitude}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WordSpec":
        try:
            segs = tuple(
                SegmentSpec(float(s["duration_ms"]), tuple(float(v) for v in s["band_profile"]),
                            float(s["amplitude"]))
                for s in data["segments"]
            )
        except KeyError as exc:
            raise SpecError(f"segments.{exc.args[0]}", "missing") from None
        return cls(str(data.get("label", "")), segs, int(data.get("seed", 0)))


@dataclass(frozen=True)
class PerturbationSpec:
    stretch: float = 1.0
    gain_db: float = 0.0
    tilt_db_per_band: float = 0.0

    def __post_init__(self):
        lo, hi = STRETCH_RANGE
        if not lo <= self.stretch <= hi:
            raise SpecError("stretch", f"{self.stretch} outside [{lo}, {hi}]")
        if abs(self.gain_db) > GAIN_LIMIT_DB:
            raise SpecError("gain_db", f"|{self.gain_db}| exceeds {GAIN_LIMIT_DB}")
        if abs(self.tilt_db_per_band) > TILT_LIMIT_DB:
            raise SpecError("tilt", f"|{self.tilt_db_per_band}| exceeds {TILT_LIMIT_DB}")

    @property
    def is_neutral(self) -> bool:
        return self.stretch == 1.0 and self.gain_db == 0.0 and self.tilt_db_per_band == 0.0


def _raised_cosine(n_total: int, n_ramp: int) -> np.ndarray:
    env = np.ones(n_total)
    n_ramp = min(n_ramp, n_total // 2)
    if n_ramp > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(n_ramp) + 0.5) / n_ramp)
        env[:n_ramp] = ramp
        env[n_total - n_ramp:] = ramp[::-1]
    return env


def _segment_signal(seg: SegmentSpec, rng: np.random.Generator, sample_rate: int) -> np.ndarray:
    n = int(round(seg.duration_ms * sample_rate / 1000.0))
    t = np.arange(n) / sample_rate
    width = sample_rate / 2.0 / N_BANDS
    x = np.zeros(n)
    freqs = (np.arange(N_BANDS) + 0.5 + rng.uniform(-TONE_JITTER, TONE_JITTER, N_BANDS)) * width
    phases = rng.uniform(0.0, 2.0 * np.pi, N_BANDS)
    for b, level_db in enumerate(seg.band_profile):
        x += 10.0 ** (level_db / 20.0) * np.sin(2.0 * np.pi * freqs[b] * t + phases[b])
    x *= _raised_cosine(n, int(round(RAMP_MS * sample_rate / 1000.0)))
    peak = np.max(np.abs(x))
    return x * (seg.amplitude / peak)


def make_word(spec: WordSpec, sample_rate: int = DEFAULT_RATE, corpus_seed: int = 0) -> AudioClip:
    """Render ``spec`` to audio; identical inputs give identical samples."""
    rng = np.random.default_rng(np.random.SeedSequence([corpus_seed, spec.seed]))
    pad = np.zeros(int(round(PAD_MS * sample_rate / 1000.0)))
    body = [_segment_signal(seg, rng, sample_rate) for seg in spec.segments]
    return AudioClip(np.concatenate([pad, *body, pad]), sample_rate)


# -- perturbations ------------------------------------------------------------

def _mean_block_level(x: np.ndarray, sample_rate: int) -> float:
    """Mean dB power of the non-silent 25 ms blocks (10 ms hop) of ``x``."""
    win, hop = int(0.025 * sample_rate), int(0.010 * sample_rate)
    if x.size < win:
        ms = np.array([np.mean(x * x)])
    else:
        idx = np.arange(win)[None, :] + hop * np.arange(1 + (x.size - win) // hop)[:, None]
        ms = np.mean(x[idx] ** 2, axis=1)
    active = ms > 1e-5 * ms.max() if ms.max() > 0 else ms > 0
    if not np.any(active):
        return -np.inf
    return float(np.mean(10.0 * np.log10(ms[active])))


def _word_level(x: np.ndarray, sample_rate: int) -> float:
    """Mean frame log-energy over the endpointed segments (block level if none)."""
    utt = analyze_clip(AudioClip(x, sample_rate))
    if not utt.segments:
        return _mean_block_level(x, sample_rate)
    return float(np.mean(np.concatenate([s.frames.log_energy for s in utt.segments])))


def _match_level(y: np.ndarray, x: np.ndarray, sample_rate: int, iters: int = 4) -> np.ndarray:
    """Rescale ``y`` so its word level equals that of ``x``.

    Rescaling can move segment edges, so a few refinement passes are made.
    """
    ref = _word_level(x, sample_rate)
    if not np.isfinite(ref):
        return y
    for _ in range(iters):
        cur = _word_level(y, sample_rate)
        if not np.isfinite(cur) or abs(ref - cur) < 1e-4:
            break
        y = y * 10.0 ** ((ref - cur) / 20.0)
    return y


def _stft(x: np.ndarray, n_fft: int, hop: int):
    window = np.hanning(n_fft + 1)[:-1]
    padded = np.pad(x, (n_fft // 2, n_fft // 2 + n_fft))
    n_frames = 1 + (padded.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(padded[idx] * window, axis=1), window


def time_stretch(clip: AudioClip, factor: float, n_fft: int = 512, hop: int = 128) -> AudioClip:
    """Change duration by ``factor`` keeping the spectrum in place.

    Phase vocoder: STFT magnitudes are linearly interpolated between
    neighbouring analysis frames at fractional positions, phases are
    advanced by the measured instantaneous frequency (bins locked to their
    nearest spectral peak), and the result is overlap-added. Output length
    is ``round(len(clip) * factor)`` and the mean level of the endpointed
    word frames is restored to that of the input.
    """
    lo, hi = STRETCH_RANGE
    if not lo <= factor <= hi:
        raise SpecError("stretch", f"{factor} outside [{lo}, {hi}]")
    if factor == 1.0:
        return clip
    x = clip.samples
    n_out = int(round(x.size * factor))
    spec, window = _stft(x, n_fft, hop)
    mag, phase = np.abs(spec), np.angle(spec)
    n_frames = spec.shape[0]

    steps = np.arange(0.0, n_frames - 1, 1.0 / factor)
    expected = 2.0 * np.pi * hop * np.arange(spec.shape[1]) / n_fft
    acc = phase[0].copy()
    out_spec = np.empty((steps.size, spec.shape[1]), dtype=complex)
    bins = np.arange(spec.shape[1])
    for k, t in enumerate(steps):
        i = int(t)
        frac = t - i
        m = (1.0 - frac) * mag[i] + frac * mag[i + 1]
        # identity phase locking: each bin keeps its offset from the nearest peak
        peaks = np.flatnonzero((m >= np.roll(m, 1)) & (m >= np.roll(m, -1)))
        if peaks.size == 0:
            owner = bins
        else:
            mids = (peaks[1:] + peaks[:-1]) / 2.0
            owner = peaks[np.searchsorted(mids, bins)]
        out_spec[k] = m * np.exp(1j * (acc[owner] + phase[i] - phase[i][owner]))
        dphi = phase[i + 1] - phase[i] - expected
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        acc += expected + dphi

    frames = np.fft.irfft(out_spec, n=n_fft, axis=1) * window
    total = n_fft + hop * (steps.size - 1)
    y = np.zeros(total)
    norm = np.zeros(total)
    for k in range(steps.size):
        y[k * hop:k * hop + n_fft] += frames[k]
        norm[k * hop:k * hop + n_fft] += window**2
    y = np.divide(y, norm, out=np.zeros_like(y), where=norm > 1e-8)
    y = y[n_fft // 2:]
    if y.size < n_out:
        y = np.pad(y, (0, n_out - y.size))
    return AudioClip(_match_level(y[:n_out], x, clip.sample_rate), clip.sample_rate)


def apply_gain(clip: AudioClip, gain_db: float) -> AudioClip:
    """Scale by ``10 ** (gain_db / 20)``; samples beyond +-1 are clipped with a warning."""
    if abs(gain_db) > GAIN_LIMIT_DB:
        raise SpecError("gain_db", f"|{gain_db}| exceeds {GAIN_LIMIT_DB}")
    if gain_db == 0.0:
        return clip
    y = clip.samples * 10.0 ** (gain_db / 20.0)
    if np.any(np.abs(y) > 1.0):
        warnings.warn(f"gain {gain_db:+.2f} dB clipped {np.sum(np.abs(y) > 1.0)} samples",
                      RuntimeWarning, stacklevel=2)
        y = np.clip(y, -1.0, 1.0)
    return AudioClip(y, clip.sample_rate)


def _envelope(x: np.ndarray, sample_rate: int) -> np.ndarray:
    """Short-time mean power, Hann-smoothed over 25 ms."""
    n = max(3, int(0.025 * sample_rate) | 1)
    kernel = np.hanning(n)
    return np.convolve(x * x, kernel / kernel.sum(), mode="same")


def apply_tilt(clip: AudioClip, tilt_db_per_band: float) -> AudioClip:
    """Zero-phase band-gain filter: band ``k`` gets ``tilt * (k - 3.5)`` dB.

    The input's short-time energy envelope is then restored, so the tilt
    reshapes the spectrum without acting as an emphasis change (and any
    filter ringing into digital silence is removed).
    """
    if abs(tilt_db_per_band) > TILT_LIMIT_DB:
        raise SpecError("tilt", f"|{tilt_db_per_band}| exceeds {TILT_LIMIT_DB}")
    if tilt_db_per_band == 0.0:
        return clip
    x = clip.samples
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / clip.sample_rate)
    band = np.minimum((freqs / (clip.sample_rate / 2.0) * N_BANDS).astype(int), N_BANDS - 1)
    gains_db = tilt_db_per_band * (band - (N_BANDS - 1) / 2.0)
    y = np.fft.irfft(spec * 10.0 ** (gains_db / 20.0), n=x.size)
    ex, ey = _envelope(x, clip.sample_rate), _envelope(y, clip.sample_rate)
    g = np.sqrt(np.divide(ex, ey, out=np.zeros_like(ex), where=ey > 1e-20))
    return AudioClip(y * g, clip.sample_rate)


def perturb(clip: AudioClip, spec: PerturbationSpec) -> AudioClip:
    """Stretch, then tilt, then gain."""
    out = time_stretch(clip, spec.stretch)
    out = apply_tilt(out, spec.tilt_db_per_band)
    return apply_gain(out, spec.gain_db)


# -- default lexicon and corpus --------------------------------------------------

def _profile(peaks: dict[int, float], floor: float = -30.0) -> tuple[float, ...]:
    return tuple(float(peaks.get(b, floor)) for b in range(N_BANDS))


def _word(label: str, seed: int, *segments) -> WordSpec:
    return WordSpec(label, tuple(SegmentSpec(d, _profile(p), WORD_AMPLITUDE) for d, p in segments), seed)


# Durations stay within +-5% of 800 ms so unperturbed words sit on the
# "normal" plateau of the speed partition relative to the lexicon mean. Words
# this long keep enough frames after a 0.5x stretch that a single edge frame
# cannot move the segment's mean HF ratio by much.
DEFAULT_LEXICON: tuple[WordSpec, ...] = (
    _word("vector", 11, (280, {0: 0, 1: -6}), (240, {4: 0, 5: -3}), (280, {1: 0, 2: -6})),
    _word("speech", 12, (320, {5: 0, 6: 0, 7: -6}), (480, {0: -3, 2: 0})),
    _word("beach", 13, (360, {0: 0, 3: -6}), (440, {6: 0, 5: -6})),
    _word("nice", 14, (400, {1: 0, 3: 0}), (380, {5: -3, 7: 0})),
    _word("boat", 15, (260, {0: 0}), (300, {2: 0, 3: -3}), (240, {4: -3, 6: 0})),
    _word("dog", 16, (420, {2: 0, 0: -6}), (400, {1: 0, 4: -6})),
    _word("word", 17, (240, {3: 0}), (280, {0: 0, 7: -9}), (260, {2: -3, 5: 0})),
    _word("accent", 18, (260, {1: 0, 2: 0}), (260, {6: 0, 7: 0}), (300, {3: 0, 4: 0})),
    _word("speed", 19, (440, {4: 0, 7: -3}), (360, {0: -3, 1: 0})),
    _word("stress", 20, (300, {7: 0, 3: -6}), (220, {0: 0, 2: -3}), (280, {5: 0, 6: -3})),
)

# One spec enrolled under two spellings (the tail / tale homophone pair).
HOMOPHONE_SPEC = _word("tail", 21, (320, {1: 0, 2: -3}), (460, {3: -3, 4: 0}))
HOMOPHONE_LABELS = ("tail", "tale")


@dataclass(frozen=True)
class PerturbationGrid:
    stretch: tuple[float, ...] = (0.5, 0.75, 1.0, 1.25, 1.5)
    gain_db: tuple[float, ...] = (-12.0, -6.0, 0.0, 6.0, 12.0)
    tilt_db_per_band: tuple[float, ...] = (-2.0, 0.0, 2.0)

    def cells(self) -> list[PerturbationSpec]:
        return [PerturbationSpec(s, g, t) for s, g, t in
                itertools.product(self.stretch, self.gain_db, self.tilt_db_per_band)]

    def __len__(self):
        return len(self.stretch) * len(self.gain_db) * len(self.tilt_db_per_band)

    def to_dict(self) -> dict:
        return {"stretch": list(self.stretch), "gain_db": list(self.gain_db),
                "tilt": list(self.tilt_db_per_band)}

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationGrid":
        grid = cls(tuple(float(v) for v in data.get("stretch", (1.0,))),
                   tuple(float(v) for v in data.get("gain_db", (0.0,))),
                   tuple(float(v) for v in data.get("tilt", (0.0,))))
        grid.cells()  # validates bounds
        return grid


DEFAULT_GRID = PerturbationGrid()
NEUTRAL_GRID = PerturbationGrid((1.0,), (0.0,), (0.0,))


@dataclass(frozen=True)
class ManifestRow:
    filename: str
    label: str
    stretch: float
    gain_db: float
    tilt: float

    @property
    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(self.stretch, self.gain_db, self.tilt)


MANIFEST_FIELDS = ("filename", "label", "stretch", "gain_db", "tilt")


def clip_filename(label: str, p: PerturbationSpec) -> str:
    return f"{label}__s{p.stretch:.2f}_g{p.gain_db:+05.1f}_t{p.tilt_db_per_band:+04.1f}.wav"


@dataclass(frozen=True, eq=False)
class Corpus:
    lexicon: dict[str, AudioClip]
    clips: dict[str, AudioClip] = field(repr=False)
    manifest: list[ManifestRow]


def build_eval_corpus(lexicon: Sequence[WordSpec] = DEFAULT_LEXICON,
                      grid: PerturbationGrid = DEFAULT_GRID, seed: int = 0,
                      sample_rate: int = DEFAULT_RATE) -> Corpus:
    """Enrollment clips plus one perturbed clip per (word, grid cell)."""
    if len(lexicon) < 2:
        raise SpecError("lexicon", "at least two words required")
    labels = [w.label for w in lexicon]
    if len(set(labels)) != len(labels):
        raise SpecError("lexicon", "duplicate labels")

    enroll, clips, rows = {}, {}, []
    cells = grid.cells()
    for spec in lexicon:
        base = make_word(spec, sample_rate, corpus_seed=seed)
        enroll[spec.label] = base
        for p in cells:
            name = clip_filename(spec.label, p)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                clips[name] = perturb(base, p)
            rows.append(ManifestRow(name, spec.label, p.stretch, p.gain_db, p.tilt_db_per_band))
    return Corpus(enroll, clips, rows)


def write_manifest(path, rows: Iterable[ManifestRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in rows:
            writer.writerow([r.filename, r.label, repr(r.stretch), repr(r.gain_db), repr(r.tilt)])


def read_manifest(path) -> list[ManifestRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: unexpected manifest header {reader.fieldnames}")
        return [ManifestRow(r["filename"], r["label"], float(r["stretch"]),
                            float(r["gain_db"]), float(r["tilt"])) for r in reader]


def write_corpus(out_dir, corpus: Corpus, lexicon: Sequence[WordSpec],
                 grid: PerturbationGrid, seed: int) -> Path:
    """Write ``lexicon/*.wav``, ``clips/*.wav``, ``manifest.tsv`` and ``corpus.json``."""
    out = Path(out_dir)
    (out / "lexicon").mkdir(parents=True, exist_ok=True)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    for label, clip in corpus.lexicon.items():
        write_wav(out / "lexicon" / f"{label}.wav", clip)
    for name, clip in corpus.clips.items():
        write_wav(out / "clips" / name, clip)
    manifest = out / "manifest.tsv"
    write_manifest(manifest, [ManifestRow(f"clips/{r.filename}", r.label, r.stretch,
                                          r.gain_db, r.tilt) for r in corpus.manifest])
    meta = {"seed": seed, "grid": grid.to_dict(), "words": [w.to_dict() for w in lexicon]}
    (out / "corpus.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return manifest


def load_lexicon_spec(path) -> tuple[list[WordSpec], PerturbationGrid | None, int | None]:
    """Read a JSON lexicon spec: ``{"words": [...], "grid": {...}, "seed": n}``."""
    data = json.loads(Path(path).read_text())
    if "words" not in data:
        raise SpecError("words", "missing")
    words = []
    for k, w in enumerate(data["words"]):
        try:
            words.append(WordSpec.from_dict(w))
        except SpecError as exc:
            raise SpecError(f"words[{k}].{exc.field}", str(exc).split(": ", 1)[1]) from None
    grid = PerturbationGrid.from_dict(data["grid"]) if "grid" in data else None
    seed = int(data["seed"]) if "seed" in data else None
    return words, grid, seed

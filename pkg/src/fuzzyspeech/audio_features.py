"""Audio ingestion, Hamming framing, per-frame features and energy endpointing.

Each frame is summarised by three quantities:

* ``log_energy``: 20*log10 of the windowed RMS, in dBFS, floored at -80;
* ``hf_ratio``: share of spectral power at or above ``hf_cutoff_hz``;
* ``bands``: 8 log band powers (dB) over equal-width bands from 0 to Nyquist.

Band powers are scaled so that they sum (in linear power) to the windowed
mean square, which keeps them on the same dBFS scale as ``log_energy``.
"""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

ENERGY_FLOOR_DB = -80.0
N_BANDS = 8
DEFAULT_RATE = 16000


class AudioFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = DEFAULT_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def load_audio(path) -> AudioClip:
    """Read a RIFF WAV file (16-bit PCM or 32-bit float, mono or stereo)."""
    path = Path(path)
    if path.stat().st_size == 0:
        raise AudioFormatError(f"{path}: empty audio")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: unsupported format ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported format (sample type {data.dtype})")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioFormatError(f"{path}: empty audio")
    return AudioClip(samples, int(rate))


def write_wav(path, clip: AudioClip) -> None:
    """Write ``clip`` as 16-bit PCM mono."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(Path(path), clip.sample_rate, pcm)


def frame_lengths(sample_rate: int, window_ms: float = 25.0, hop_ms: float = 10.0):
    """Window and hop in samples."""
    return int(round(sample_rate * window_ms / 1000)), int(round(sample_rate * hop_ms / 1000))


def frame_signal(clip: AudioClip, window_ms: float = 25.0, hop_ms: float = 10.0) -> np.ndarray:
    """Hamming-windowed frames, shape ``(n_frames, window)``.

    The trailing partial window is dropped, so a clip shorter than one window
    yields zero frames.
    """
    win, hop = frame_lengths(clip.sample_rate, window_ms, hop_ms)
    n = len(clip)
    if n < win:
        return np.zeros((0, win))
    frames = sliding_window_view(clip.samples, win)[::hop]
    return frames * np.hamming(win)


def log_energy(frame: np.ndarray) -> np.ndarray | float:
    """RMS level of windowed frame(s) in dBFS, floored at -80."""
    frame = np.asarray(frame, dtype=float)
    ms = np.mean(frame**2, axis=-1)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(ms)
    db = np.maximum(db, ENERGY_FLOOR_DB)
    return float(db) if np.ndim(db) == 0 else db


def band_edges(sample_rate: int, n_bands: int = N_BANDS) -> np.ndarray:
    return np.linspace(0.0, sample_rate / 2.0, n_bands + 1)


def band_hf_fraction(sample_rate: int, hf_cutoff_hz: float, n_bands: int = N_BANDS) -> np.ndarray:
    """Fraction of each band lying at or above the HF cutoff."""
    edges = band_edges(sample_rate, n_bands)
    lo, hi = edges[:-1], edges[1:]
    return np.clip((hi - hf_cutoff_hz) / (hi - lo), 0.0, 1.0)


def _power_spectrum(frames: np.ndarray):
    frames = np.atleast_2d(frames)
    win = frames.shape[-1]
    n_fft = 1 << max(int(np.ceil(np.log2(win))), 0)
    spec = np.fft.rfft(frames, n=n_fft, axis=-1)
    power = np.abs(spec) ** 2
    # one-sided: interior bins carry the mirrored half too
    power[..., 1:(n_fft + 1) // 2] *= 2.0
    return power / (n_fft * win), n_fft


def spectrum_features(frame: np.ndarray, sample_rate: int = DEFAULT_RATE,
                      hf_cutoff_hz: float = 2000.0, n_bands: int = N_BANDS):
    """``(hf_ratio, band_energies)`` for one frame or a stack of frames."""
    frame = np.asarray(frame, dtype=float)
    single = frame.ndim == 1
    power, n_fft = _power_spectrum(frame)
    freqs = np.arange(power.shape[-1]) * sample_rate / n_fft

    total = power.sum(axis=-1)
    hf = power[..., freqs >= hf_cutoff_hz].sum(axis=-1)
    ratio = np.divide(hf, total, out=np.zeros_like(total), where=total > 0)

    band_idx = np.minimum((freqs / (sample_rate / 2.0) * n_bands).astype(int), n_bands - 1)
    bands = np.zeros(power.shape[:-1] + (n_bands,))
    for b in range(n_bands):
        bands[..., b] = power[..., band_idx == b].sum(axis=-1)
    with np.errstate(divide="ignore"):
        bands_db = np.maximum(10.0 * np.log10(bands), ENERGY_FLOOR_DB)

    if single:
        return float(ratio[0]), bands_db[0]
    return ratio, bands_db


@dataclass(frozen=True)
class FeatureFrame:
    log_energy: float
    hf_ratio: float
    band_energies: tuple[float, ...]

    def vector(self) -> np.ndarray:
        return np.concatenate(([self.log_energy / 20.0, self.hf_ratio],
                               np.asarray(self.band_energies) / 20.0))


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A run of feature frames stored column-wise.

    ``log_energy`` and ``hf_ratio`` have shape ``(T,)``, ``bands`` ``(T, 8)``.
    The framing metadata travels with the arrays so downstream code can
    convert frame counts to time and recompute HF ratios from bands.
    """

    log_energy: np.ndarray
    hf_ratio: np.ndarray
    bands: np.ndarray
    sample_rate: int = DEFAULT_RATE
    hop_ms: float = 10.0
    hf_cutoff_hz: float = 2000.0

    def __post_init__(self):
        le = np.array(self.log_energy, dtype=float).reshape(-1)
        hf = np.array(self.hf_ratio, dtype=float).reshape(-1)
        bands = np.array(self.bands, dtype=float).reshape(le.size, N_BANDS)
        if hf.size != le.size:
            raise ValueError("log_energy and hf_ratio lengths differ")
        for arr in (le, hf, bands):
            arr.setflags(write=False)
        object.__setattr__(self, "log_energy", le)
        object.__setattr__(self, "hf_ratio", hf)
        object.__setattr__(self, "bands", bands)

    def __len__(self):
        return self.log_energy.size

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return replace(self, log_energy=self.log_energy[idx],
                           hf_ratio=self.hf_ratio[idx], bands=self.bands[idx])
        return FeatureFrame(float(self.log_energy[idx]), float(self.hf_ratio[idx]),
                            tuple(float(v) for v in self.bands[idx]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def vectors(self) -> np.ndarray:
        """Matrix ``(T, 10)`` with energies divided by 20 dB."""
        return np.column_stack([self.log_energy / 20.0, self.hf_ratio, self.bands / 20.0])

    def with_values(self, log_energy=None, hf_ratio=None, bands=None) -> "FeatureSequence":
        return replace(
            self,
            log_energy=self.log_energy if log_energy is None else log_energy,
            hf_ratio=self.hf_ratio if hf_ratio is None else hf_ratio,
            bands=self.bands if bands is None else bands,
        )

    def identical(self, other: "FeatureSequence") -> bool:
        """Bit-for-bit equality of all feature arrays."""
        return (
            len(self) == len(other)
            and np.array_equal(self.log_energy, other.log_energy)
            and np.array_equal(self.hf_ratio, other.hf_ratio)
            and np.array_equal(self.bands, other.bands)
        )

    @classmethod
    def from_frames(cls, frames, **meta) -> "FeatureSequence":
        frames = list(frames)
        return cls(
            [f.log_energy for f in frames],
            [f.hf_ratio for f in frames],
            np.array([f.band_energies for f in frames]).reshape(len(frames), N_BANDS),
            **meta,
        )

    def hf_from_bands(self, bands: np.ndarray | None = None) -> np.ndarray:
        """Per-frame HF ratio recomputed from (possibly modified) band energies."""
        bands = self.bands if bands is None else bands
        power = 10.0 ** (np.asarray(bands) / 10.0)
        frac = band_hf_fraction(self.sample_rate, self.hf_cutoff_hz, power.shape[-1])
        total = power.sum(axis=-1)
        return (power * frac).sum(axis=-1) / total


def extract_features(clip: AudioClip, window_ms: float = 25.0, hop_ms: float = 10.0,
                     hf_cutoff_hz: float = 2000.0) -> FeatureSequence:
    frames = frame_signal(clip, window_ms, hop_ms)
    if frames.shape[0] == 0:
        return FeatureSequence(np.zeros(0), np.zeros(0), np.zeros((0, N_BANDS)),
                               clip.sample_rate, hop_ms, hf_cutoff_hz)
    le = log_energy(frames)
    ratio, bands = spectrum_features(frames, clip.sample_rate, hf_cutoff_hz)
    return FeatureSequence(np.atleast_1d(le), ratio, bands, clip.sample_rate, hop_ms, hf_cutoff_hz)


@dataclass(frozen=True, eq=False)
class Segment:
    """Frames ``[start_frame, end_frame)`` of an utterance."""

    start_frame: int
    end_frame: int
    frames: FeatureSequence = field(repr=False)

    def __post_init__(self):
        if not self.start_frame < self.end_frame:
            raise ValueError("segment must satisfy start_frame < end_frame")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True, eq=False)
class Utterance:
    frames: FeatureSequence
    segments: list[Segment]


def endpoint_segments(frames: FeatureSequence, open_threshold_db: float = -45.0,
                      close_threshold_db: float = -55.0, min_gap_ms: float = 200.0,
                      min_segment_ms: float = 80.0) -> list[Segment]:
    """Hysteresis energy gate.

    A segment opens on the first frame above ``open_threshold_db`` and closes
    on the first frame below ``close_threshold_db``. Pauses shorter than
    ``min_gap_ms`` are bridged, then segments shorter than ``min_segment_ms``
    are discarded.
    """
    le = frames.log_energy
    spans = []
    start = None
    for i, value in enumerate(le):
        if start is None:
            if value > open_threshold_db:
                start = i
        elif value < close_threshold_db:
            spans.append([start, i])
            start = None
    if start is not None:
        spans.append([start, len(le)])

    min_gap = int(round(min_gap_ms / frames.hop_ms))
    merged = []
    for span in spans:
        if merged and span[0] - merged[-1][1] < min_gap:
            merged[-1][1] = span[1]
        else:
            merged.append(span)

    min_len = int(round(min_segment_ms / frames.hop_ms))
    return [Segment(s, e, frames[s:e]) for s, e in merged if e - s >= min_len]


def analyze_clip(clip: AudioClip, window_ms: float = 25.0, hop_ms: float = 10.0,
                 hf_cutoff_hz: float = 2000.0, **endpoint_kw) -> Utterance:
    """Features plus endpointed segments for a clip."""
    feats = extract_features(clip, window_ms, hop_ms, hf_cutoff_hz)
    return Utterance(feats, endpoint_segments(feats, **endpoint_kw))


def dump_features(frames: FeatureSequence, fh, start_frame: int = 0) -> None:
    """One JSON object per frame: index, log_energy, hf_ratio, bands."""
    for k in range(len(frames)):
        fh.write(json.dumps({
            "frame": start_frame + k,
            "log_energy": float(frames.log_energy[k]),
            "hf_ratio": float(frames.hf_ratio[k]),
            "bands": [float(b) for b in frames.bands[k]],
        }) + "\n")

"""Flat ``section.key = value`` configuration for the command-line tool.

Example::

    recognizer.eps_amb = 0.01
    frame.hop_ms = 10
    dtw.band_half_width = auto
    filter.enabled = true
    variables.path = my_terms.ini

Unknown keys and out-of-range values raise :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import fuzzy_core
from .paraling_filter import FuzzyAxes
from .recognizer import FrontEnd, RecognizerConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _band(text: str):
    low = text.strip().lower()
    if low in ("auto", "none", ""):
        return None
    return int(low)


# key -> (attribute, parser)
KEYS = {
    "variables.path": ("variables_path", str),
    "recognizer.eps_amb": ("eps_amb", float),
    "recognizer.theta_conf": ("theta_conf", float),
    "recognizer.min_score": ("min_score", float),
    "recognizer.s_oov": ("s_oov", float),
    "recognizer.tnorm": ("tnorm", str),
    "frame.window_ms": ("window_ms", float),
    "frame.hop_ms": ("hop_ms", float),
    "frame.hf_cutoff_hz": ("hf_cutoff_hz", float),
    "endpoint.open_db": ("open_threshold_db", float),
    "endpoint.close_db": ("close_threshold_db", float),
    "endpoint.min_gap_ms": ("min_gap_ms", float),
    "endpoint.min_segment_ms": ("min_segment_ms", float),
    "dtw.band_half_width": ("band_half_width", _band),
    "filter.enabled": ("use_filter", _bool),
    "filter.target_ratio": ("target_ratio", float),
}


@dataclass(frozen=True)
class Config:
    variables_path: str | None = None
    eps_amb: float = 0.01
    theta_conf: float = 0.1
    min_score: float = 0.5
    s_oov: float = 0.2
    tnorm: str = "product"
    window_ms: float = 25.0
    hop_ms: float = 10.0
    hf_cutoff_hz: float = 2000.0
    open_threshold_db: float = -45.0
    close_threshold_db: float = -55.0
    min_gap_ms: float = 200.0
    min_segment_ms: float = 80.0
    band_half_width: int | None = None
    use_filter: bool = True
    target_ratio: float = 0.45

    def __post_init__(self):
        problems = []
        for name in ("eps_amb", "theta_conf", "min_score", "s_oov", "target_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.tnorm not in ("product", "min"):
            problems.append("tnorm must be 'product' or 'min'")
        if not 5.0 <= self.window_ms <= 100.0:
            problems.append("window_ms must lie in [5, 100]")
        if not 0.0 < self.hop_ms <= self.window_ms:
            problems.append("hop_ms must lie in (0, window_ms]")
        if not 0.0 < self.hf_cutoff_hz < 8000.0:
            problems.append("hf_cutoff_hz must lie in (0, 8000)")
        if not -80.0 <= self.close_threshold_db <= self.open_threshold_db <= 0.0:
            problems.append("endpoint thresholds need -80 <= close_db <= open_db <= 0")
        if self.min_gap_ms < 0 or self.min_segment_ms < 0:
            problems.append("endpoint durations must be non-negative")
        if self.band_half_width is not None and self.band_half_width < 0:
            problems.append("band_half_width must be non-negative or 'auto'")
        if problems:
            raise ConfigError("; ".join(problems))

    def frontend(self) -> FrontEnd:
        return FrontEnd(self.window_ms, self.hop_ms, self.hf_cutoff_hz, self.open_threshold_db,
                        self.close_threshold_db, self.min_gap_ms, self.min_segment_ms)

    def axes(self) -> FuzzyAxes:
        if self.variables_path is None:
            return FuzzyAxes()
        return FuzzyAxes.from_mapping(fuzzy_core.load_variables(self.variables_path))

    def recognizer(self) -> RecognizerConfig:
        return RecognizerConfig(
            eps_amb=self.eps_amb, theta_conf=self.theta_conf, min_score=self.min_score,
            s_oov=self.s_oov, tnorm=self.tnorm, use_filter=self.use_filter,
            target_ratio=self.target_ratio, band_half_width=self.band_half_width,
            frontend=self.frontend(), axes=self.axes(),
        )

    def to_text(self) -> str:
        lines = []
        for key, (attr, _) in KEYS.items():
            val = getattr(self, attr)
            if val is None:
                if attr == "variables_path":
                    continue
                val = "auto"
            elif isinstance(val, bool):
                val = str(val).lower()
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base: Config | None = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in parser["config"].items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr, conv = KEYS[key]
        try:
            values[attr] = conv(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return replace(base or Config(), **values)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    cfg = parse_config(text)
    if cfg.variables_path and not Path(cfg.variables_path).is_absolute():
        cfg = replace(cfg, variables_path=str(path.parent / cfg.variables_path))
    return cfg


def field_names() -> list[str]:
    return [f.name for f in fields(Config)]

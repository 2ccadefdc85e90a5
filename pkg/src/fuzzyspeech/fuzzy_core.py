"""Trapezoidal fuzzy sets, linguistic variables and the usual operators.

The three shipped variables (accent, speed, emphasis) are Ruspini partitions:
adjacent ramps are complementary so memberships sum to one everywhere on the
universe.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MembershipFunction",
    "LinguisticVariable",
    "eval_membership",
    "fuzzify",
    "tnorm",
    "snorm",
    "complement",
    "centroid_defuzzify",
    "load_variables",
    "default_variables",
    "ACCENT",
    "SPEED",
    "EMPHASIS",
]

CENTROID_POINTS = 1001


@dataclass(frozen=True)
class MembershipFunction:
    """Trapezoid 0 below ``a``, rising to 1 at ``b``, flat to ``c``, 0 from ``d``.

    ``a == b`` gives a left shoulder and ``c == d`` a right shoulder; in both
    cases the plateau extends to the edge of the universe.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"trapezoid coordinates must be finite, got {vals}")
        if not (self.a <= self.b <= self.c <= self.d):
            raise ValueError(f"trapezoid requires a <= b <= c <= d, got {vals}")

    def __call__(self, x):
        return eval_membership(self, x)


def eval_membership(mf: MembershipFunction, x):
    """Evaluate ``mf`` at scalar or array ``x``; result lies in [0, 1]."""
    x_arr = np.asarray(x, dtype=float)
    out = np.zeros_like(x_arr)
    a, b, c, d = mf.a, mf.b, mf.c, mf.d

    plateau = (x_arr >= b) & (x_arr <= c)
    out[plateau] = 1.0
    if b > a:
        rise = (x_arr > a) & (x_arr < b)
        out[rise] = (x_arr[rise] - a) / (b - a)
    else:
        # left shoulder: everything at or below b belongs fully
        out[x_arr <= b] = 1.0
    if d > c:
        fall = (x_arr > c) & (x_arr < d)
        out[fall] = (d - x_arr[fall]) / (d - c)
    else:
        out[x_arr >= c] = 1.0

    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class LinguisticVariable:
    name: str
    universe: tuple[float, float]
    terms: tuple[tuple[str, MembershipFunction], ...]

    def __post_init__(self):
        lo, hi = self.universe
        if not lo < hi:
            raise ValueError(f"{self.name}: universe must satisfy lo < hi")
        labels = [label for label, _ in self.terms]
        if not labels:
            raise ValueError(f"{self.name}: at least one term required")
        if len(set(labels)) != len(labels):
            raise ValueError(f"{self.name}: duplicate term labels {labels}")
        for label, mf in self.terms:
            # shoulders may sit exactly on the universe edge
            if mf.a < lo or mf.d > hi:
                raise ValueError(
                    f"{self.name}.{label}: support [{mf.a}, {mf.d}] leaves "
                    f"universe [{lo}, {hi}]"
                )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.terms)

    def term(self, label: str) -> MembershipFunction:
        for name, mf in self.terms:
            if name == label:
                return mf
        raise KeyError(f"{self.name} has no term {label!r}")

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def clamp(self, x: float) -> float:
        lo, hi = self.universe
        return float(min(max(x, lo), hi))

    def membership_matrix(self, xs) -> np.ndarray:
        """Memberships of every term at every point, shape (len(xs), n_terms)."""
        xs = np.asarray(xs, dtype=float)
        return np.stack([eval_membership(mf, xs) for _, mf in self.terms], axis=-1)


def fuzzify(var: LinguisticVariable, x: float) -> np.ndarray:
    """Degree vector of ``x`` (clamped into the universe), ordered as ``var.terms``."""
    x = var.clamp(float(x))
    return np.array([eval_membership(mf, x) for _, mf in var.terms])


def _check_degree(u) -> None:
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"degree {u} outside [0, 1]")


def tnorm(kind: str, u: float, v: float) -> float:
    """Fuzzy intersection: ``"product"`` or ``"min"``."""
    _check_degree(u)
    _check_degree(v)
    if kind == "product":
        return u * v
    if kind == "min":
        return min(u, v)
    raise ValueError(f"unknown t-norm {kind!r}")


def snorm(kind: str, u: float, v: float) -> float:
    """Fuzzy union: ``"probabilistic_sum"`` or ``"max"``."""
    _check_degree(u)
    _check_degree(v)
    if kind == "probabilistic_sum":
        return u + v - u * v
    if kind == "max":
        return max(u, v)
    raise ValueError(f"unknown s-norm {kind!r}")


def complement(u: float) -> float:
    _check_degree(u)
    return 1.0 - u


def centroid_defuzzify(var: LinguisticVariable, degrees: Sequence[float],
                       n_points: int = CENTROID_POINTS) -> float:
    """Centre of mass of the max-aggregated, degree-clipped term curves.

    The aggregate is sampled at ``n_points`` uniformly spaced points over the
    universe and integrated with the trapezoidal rule.
    """
    degrees = np.asarray(degrees, dtype=float)
    if degrees.shape != (len(var.terms),):
        raise ValueError(
            f"{var.name}: expected {len(var.terms)} degrees, got {degrees.shape}"
        )
    if np.any(degrees < 0) or np.any(degrees > 1):
        raise ValueError("degrees must lie in [0, 1]")
    if not np.any(degrees > 0):
        raise ValueError("no activation")

    lo, hi = var.universe
    xs = np.linspace(lo, hi, n_points)
    clipped = np.minimum(var.membership_matrix(xs), degrees[None, :])
    agg = clipped.max(axis=1)
    area = np.trapezoid(agg, xs)
    if area <= 0:
        raise ValueError("no activation")
    return float(np.trapezoid(agg * xs, xs) / area)


# -- shipped variable definitions -------------------------------------------

DEFAULT_VARIABLES_INI = """\
# Universe bounds plus trapezoid quadruples a, b, c, d per term, in order.
[accent]
universe = 0, 1
soft = 0, 0, 0.3, 0.6
sharp = 0.3, 0.6, 1, 1

[speed]
universe = -2, 2
slow = -2, -2, -0.8, -0.2
normal = -0.8, -0.2, 0.2, 0.8
fast = 0.2, 0.8, 2, 2

[emphasis]
universe = -20, 20
light = -20, -20, -9, -3
medium = -9, -3, 3, 9
heavy = 3, 9, 20, 20
"""


def _floats(text: str, key: str, n: int) -> tuple[float, ...]:
    try:
        vals = tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise ValueError(f"{key}: expected {n} comma-separated numbers, got {text!r}")
    if len(vals) != n:
        raise ValueError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def parse_variables(text: str) -> dict[str, LinguisticVariable]:
    """Parse variable definitions from INI-style key-value text."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep term labels as written
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        items = dict(parser.items(section))
        if "universe" not in items:
            raise ValueError(f"[{section}] missing 'universe'")
        universe = _floats(items.pop("universe"), f"{section}.universe", 2)
        terms = tuple(
            (label, MembershipFunction(*_floats(val, f"{section}.{label}", 4)))
            for label, val in items.items()
        )
        out[section] = LinguisticVariable(section, universe, terms)
    return out


def load_variables(path) -> dict[str, LinguisticVariable]:
    with open(path, encoding="utf-8") as fh:
        return parse_variables(fh.read())


def default_variables() -> dict[str, LinguisticVariable]:
    return parse_variables(DEFAULT_VARIABLES_INI)


_DEFAULTS = default_variables()
ACCENT: LinguisticVariable = _DEFAULTS["accent"]
SPEED: LinguisticVariable = _DEFAULTS["speed"]
EMPHASIS: LinguisticVariable = _DEFAULTS["emphasis"]


def partition_error(var: LinguisticVariable, xs: Iterable[float]) -> float:
    """Largest deviation of the membership sum from one over ``xs``."""
    m = var.membership_matrix(np.fromiter(xs, dtype=float))
    return float(np.max(np.abs(m.sum(axis=1) - 1.0)))

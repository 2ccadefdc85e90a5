"""Dynamic time warping with a symmetric step pattern and optional band.

Steps are (1, 0), (0, 1) and (1, 1) with unit weight. The accumulated cost is

    D[i, j] = c[i, j] + min(D[i-1, j-1], D[i-1, j], D[i, j-1])

and the backtrace breaks ties in that order: diagonal, then (i-1, j), then
(i, j-1). Normalised cost divides by the realised path length.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .audio_features import FeatureFrame, FeatureSequence

BRUTE_FORCE_MAX_CELLS = 64
UNBOUNDED_UP_TO = 200


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class BandConstraint:
    """Sakoe-Chiba band: cells with ``|i - j| <= half_width`` are admissible."""

    half_width: int | None = None

    def __post_init__(self):
        if self.half_width is not None and self.half_width < 0:
            raise ValueError("half_width must be non-negative")

    @classmethod
    def default_for(cls, n: int, m: int) -> "BandConstraint":
        longest = max(n, m)
        if longest <= UNBOUNDED_UP_TO:
            return cls(None)
        return cls(int(math.ceil(0.1 * longest)))

    def resolve(self, n: int, m: int) -> tuple[int, bool]:
        """Effective half-width (-1 = unbounded) and whether it was widened."""
        if self.half_width is None:
            return -1, False
        needed = abs(n - m)
        if self.half_width < needed:
            return needed, True
        return self.half_width, False


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    total_cost: float
    path: list[tuple[int, int]]
    normalized_cost: float
    half_width: int = -1
    widened: bool = False
    accumulated: np.ndarray | None = field(default=None, repr=False)


def _as_matrix(seq) -> np.ndarray:
    if isinstance(seq, FeatureSequence):
        return seq.vectors()
    if isinstance(seq, FeatureFrame):
        return seq.vector()[None, :]
    if len(seq) and isinstance(seq[0], FeatureFrame):
        return np.array([f.vector() for f in seq])
    arr = np.asarray(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def local_cost(f1, f2) -> float:
    """Euclidean distance between two frames' scaled feature vectors.

    Scalars are compared by absolute difference.
    """
    v1 = f1.vector() if isinstance(f1, FeatureFrame) else np.atleast_1d(np.asarray(f1, float))
    v2 = f2.vector() if isinstance(f2, FeatureFrame) else np.atleast_1d(np.asarray(f2, float))
    return float(cost_matrix(v1[None, :], v2[None, :])[0, 0])


def cost_matrix(a, b) -> np.ndarray:
    """Pairwise local costs, shape ``(len(a), len(b))``."""
    x, y = _as_matrix(a), _as_matrix(b)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"feature dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    return cdist(x, y)


@njit(cache=True)
def _accumulate(cost, half_width):
    n, m = cost.shape
    acc = np.full((n, m), np.inf)
    for i in range(n):
        j_lo, j_hi = 0, m - 1
        if half_width >= 0:
            j_lo = max(0, i - half_width)
            j_hi = min(m - 1, i + half_width)
        for j in range(j_lo, j_hi + 1):
            if i == 0 and j == 0:
                acc[0, 0] = cost[0, 0]
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i, j] + best
    return acc


@njit(cache=True)
def _backtrace(acc):
    n, m = acc.shape
    i, j = n - 1, m - 1
    out = np.empty((n + m - 1, 2), dtype=np.int64)
    k = 0
    out[k, 0], out[k, 1] = i, j
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        k += 1
        out[k, 0], out[k, 1] = i, j
    return out[: k + 1][::-1]


def _resolve_band(band, n, m) -> BandConstraint:
    if band is None:
        return BandConstraint.default_for(n, m)
    if isinstance(band, BandConstraint):
        return band
    return BandConstraint(int(band))


def dtw(a, b, band=None, return_matrix: bool = False) -> AlignmentResult:
    """Align two sequences.

    ``a`` and ``b`` may be :class:`FeatureSequence` objects, lists of
    :class:`FeatureFrame`, 1-D arrays of scalars or 2-D arrays of vectors.
    ``band`` is a :class:`BandConstraint`, an integer half-width, or None for
    the length-dependent default.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyInputError("empty input")
    cost = cost_matrix(a, b)
    n, m = cost.shape
    half_width, widened = _resolve_band(band, n, m).resolve(n, m)
    acc = _accumulate(cost, half_width)
    path = list(map(tuple, _backtrace(acc).tolist()))
    total = float(acc[n - 1, m - 1])
    return AlignmentResult(
        total_cost=total,
        path=path,
        normalized_cost=total / len(path),
        half_width=half_width,
        widened=widened,
        accumulated=acc if return_matrix else None,
    )


def dtw_distance(a, b, band=None) -> float:
    """Path-length-normalised DTW cost."""
    return dtw(a, b, band).normalized_cost


def _monotone_paths(n: int, m: int):
    """Yield every connected monotone path from (0, 0) to (n-1, m-1)."""
    def walk(i, j, prefix):
        if i == n - 1 and j == m - 1:
            yield prefix
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                yield from walk(ni, nj, prefix + [(ni, nj)])

    yield from walk(0, 0, [(0, 0)])


def brute_force_dtw(a, b) -> AlignmentResult:
    """Exhaustive minimum over all monotone paths (test oracle).

    Costs are summed in path order starting from (0, 0). Among equal-cost
    paths the winner is chosen walking back from the end, preferring a
    diagonal step, then (i-1, j), then (i, j-1). Only for grids of at most
    64 cells.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyInputError("empty input")
    n, m = len(a), len(b)
    if n * m > BRUTE_FORCE_MAX_CELLS:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_CELLS} cells, got {n * m}")
    x, y = _as_matrix(a).tolist(), _as_matrix(b).tolist()
    cell = [[math.sqrt(sum((p - q) * (p - q) for p, q in zip(xi, yj))) for yj in y] for xi in x]

    rank = {(1, 1): 0, (1, 0): 1, (0, 1): 2}
    best_key, best_path = None, None
    for path in _monotone_paths(n, m):
        total = 0.0
        for i, j in path:
            total += cell[i][j]
        back = tuple(rank[(i1 - i0, j1 - j0)]
                     for (i0, j0), (i1, j1) in reversed(list(itertools.pairwise(path))))
        key = (total, back)
        if best_key is None or key < best_key:
            best_key, best_path = key, path
    total = best_key[0]
    return AlignmentResult(total, best_path, total / len(best_path))


def check_path(path: Sequence[tuple[int, int]], n: int, m: int, half_width: int = -1) -> None:
    """Raise AssertionError unless ``path`` is a valid warping path."""
    assert path[0] == (0, 0), f"path starts at {path[0]}"
    assert path[-1] == (n - 1, m - 1), f"path ends at {path[-1]}"
    assert max(n, m) <= len(path) <= n + m - 1, f"path length {len(path)}"
    for (i0, j0), (i1, j1) in itertools.pairwise(path):
        assert (i1 - i0, j1 - j0) in {(1, 0), (0, 1), (1, 1)}, f"bad step {(i0, j0)}->{(i1, j1)}"
    if half_width >= 0:
        assert all(abs(i - j) <= half_width for i, j in path), "path leaves band"


def dump_cost_matrix(result: AlignmentResult, fh, precision: int = 4) -> None:
    """Write the accumulated cost matrix as whitespace-separated text."""
    if result.accumulated is None:
        raise ValueError("alignment was computed without return_matrix=True")
    np.savetxt(fh, result.accumulated, fmt=f"%.{precision}f")

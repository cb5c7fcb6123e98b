"""Causally-constrained dynamic time warping.

Aligns a stimulus series s1 against a response series s2 of equal length.
Cell (i, j) pairs response bin i with stimulus bin j at squared-difference
cost; only cells with 0 <= i - j <= window are admissible, so a response
maps to a simultaneous or earlier stimulus (causality) and at most
``window`` bins after it (reaction window). The reported total cost is the
terminal cumulative cost divided by the backtracked path length.

Inadmissible cells carry +inf, which saturates under the min/plus
recursion and can never decay into a finite value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptySeries, LengthMismatch, NoFinitePath

DEFAULT_WINDOW = 2


@dataclass
class AlignmentResult:
    total_cost: float
    path: list[tuple[int, int]]  # (i, j) = (response bin, stimulus bin)
    path_length: int
    window: int


@njit(cache=True)
def _fill_cumulative(s1, s2, window):
    """Cumulative cost matrix; rows index s2 (response), cols s1 (stimulus)."""
    n = s2.shape[0]
    m = s1.shape[0]
    C = np.full((n, m), np.inf)
    for i in range(n):
        jlo = i - window
        if jlo < 0:
            jlo = 0
        jhi = i if i < m - 1 else m - 1
        for j in range(jlo, jhi + 1):
            diff = s1[j] - s2[i]
            d = diff * diff
            if i == 0 and j == 0:
                C[0, 0] = d
            else:
                best = np.inf
                if i > 0 and j > 0:
                    best = C[i - 1, j - 1]
                if i > 0 and C[i - 1, j] < best:
                    best = C[i - 1, j]
                if j > 0 and C[i, j - 1] < best:
                    best = C[i, j - 1]
                C[i, j] = d + best
    return C


@njit(cache=True)
def _backtrack_arrays(C):
    """Walk min-cost predecessors from the end cell back to (0, 0).

    Ties prefer the diagonal, then the vertical (i-1, j), then the
    horizontal (i, j-1) predecessor. Returns reversed index arrays and the
    path length, or length -1 when no finite chain exists.
    """
    n, m = C.shape
    max_len = n + m - 1
    pi = np.empty(max_len, dtype=np.int64)
    pj = np.empty(max_len, dtype=np.int64)
    i = n - 1
    j = m - 1
    if not np.isfinite(C[i, j]):
        return pi, pj, -1
    k = 0
    pi[k] = i
    pj[k] = j
    k += 1
    while i > 0 or j > 0:
        best = np.inf
        bi = -1
        bj = -1
        if i > 0 and j > 0 and np.isfinite(C[i - 1, j - 1]):
            best = C[i - 1, j - 1]
            bi = i - 1
            bj = j - 1
        if i > 0 and np.isfinite(C[i - 1, j]) and C[i - 1, j] < best:
            best = C[i - 1, j]
            bi = i - 1
            bj = j
        if j > 0 and np.isfinite(C[i, j - 1]) and C[i, j - 1] < best:
            best = C[i, j - 1]
            bi = i
            bj = j - 1
        if bi < 0:
            return pi, pj, -1
        i = bi
        j = bj
        pi[k] = i
        pj[k] = j
        k += 1
    return pi, pj, k


@njit(cache=True)
def _normalized_cost(s1, s2, window):
    C = _fill_cumulative(s1, s2, window)
    pi, pj, length = _backtrack_arrays(C)
    if length < 0:
        return np.nan
    return C[C.shape[0] - 1, C.shape[1] - 1] / length


@njit(cache=True)
def _batch_normalized_costs(stimuli, s2, window):
    """Normalized cost for each row of ``stimuli`` against the fixed s2."""
    out = np.empty(stimuli.shape[0])
    for k in range(stimuli.shape[0]):
        out[k] = _normalized_cost(stimuli[k], s2, window)
    return out


def _as_vector(x, name: str) -> np.ndarray:
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return values


def cumulative_cost(s1, s2, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Band-constrained cumulative cost matrix (inadmissible cells +inf)."""
    v1 = _as_vector(s1, "s1")
    v2 = _as_vector(s2, "s2")
    if len(v1) == 0 or len(v2) == 0:
        raise EmptySeries("DTW needs at least one bin per series")
    if len(v1) != len(v2):
        raise LengthMismatch(f"series lengths differ: {len(v1)} vs {len(v2)}")
    if window < 0:
        raise ValueError("window must be >= 0")
    return _fill_cumulative(v1, v2, window)


def backtrack(C: np.ndarray) -> list[tuple[int, int]]:
    """Optimal warping path through a cumulative cost matrix.

    From the end cell, repeatedly steps to the finite-cost predecessor
    among {(i-1, j-1), (i-1, j), (i, j-1)} with minimum cumulative cost
    (ties: diagonal, then vertical, then horizontal) until (0, 0).
    """
    C = np.asarray(C, dtype=np.float64)
    pi, pj, length = _backtrack_arrays(C)
    if length < 0:
        raise NoFinitePath("no finite-cost path from the end cell to (0, 0)")
    return [(int(pi[k]), int(pj[k])) for k in range(length - 1, -1, -1)]


def constrained_dtw(s1, s2, window: int = DEFAULT_WINDOW) -> AlignmentResult:
    """Align stimulus s1 with response s2 under the causal band.

    Equal lengths with window >= 0 always leave the diagonal admissible,
    so a finite path exists.
    """
    C = cumulative_cost(s1, s2, window)
    path = backtrack(C)
    total = float(C[-1, -1]) / len(path)
    return AlignmentResult(total, path, len(path), window)


def null_costs(stimuli: np.ndarray, s2, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Normalized DTW cost of each stimulus row vs the fixed response.

    Fast path for the permutation loop; each row gets the exact same
    cost-and-backtrack treatment as constrained_dtw.
    """
    v2 = _as_vector(s2, "s2")
    stimuli = np.ascontiguousarray(stimuli, dtype=np.float64)
    if stimuli.ndim != 2 or stimuli.shape[1] != len(v2):
        raise LengthMismatch(
            f"stimulus matrix {stimuli.shape} does not match response length {len(v2)}"
        )
    return _batch_normalized_costs(stimuli, v2, window)

"""Weighted isotonic regression by pool adjacent violators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class StepCalibrator:
    """Piecewise-constant map on the real line.

    Bin ``j`` covers ``boundaries[j] <= s < boundaries[j + 1]``; the outer
    boundaries are -inf and +inf so the map is total.
    """

    boundaries: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        v = np.asarray(self.values, dtype=float)
        c = np.asarray(self.counts, dtype=np.int64)
        if not (v.ndim == 1 and b.shape == (v.size + 1,) and c.shape == v.shape):
            raise ValueError("need len(values) == len(counts) == len(boundaries) - 1")
        if b[0] != -np.inf or b[-1] != np.inf or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must increase strictly from -inf to +inf")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "counts", c)

    @property
    def n_bins(self) -> int:
        return self.values.size

    def bin_index(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        return np.searchsorted(self.boundaries, s, side="right") - 1

    def predict(self, scores) -> np.ndarray:
        return self.values[self.bin_index(scores)]

    def predict_proba(self, scores) -> np.ndarray:
        r = self.predict(scores)
        return np.column_stack([1.0 - r, r])


@dataclass(frozen=True)
class IsotonicModel(StepCalibrator):
    def __post_init__(self):
        super().__post_init__()
        if np.any(np.diff(self.values) < 0):
            raise ValueError("isotonic model values must be nondecreasing")


def pav_predict(model: StepCalibrator, score: float) -> float:
    return float(model.predict(score))


def _validate(scores, targets, weights):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    w = np.ones_like(s) if weights is None else np.broadcast_to(np.asarray(weights, dtype=float), s.shape)
    if s.size == 0:
        raise ValueError("isotonic regression needs at least one sample")
    if y.shape != s.shape or w.shape != s.shape:
        raise ValueError("scores, targets and weights must have the same length")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise ValueError("scores and targets must be finite")
    if np.any(y < 0) or np.any(y > 1):
        warnings.warn("targets outside [0, 1]; the fit is still a valid isotonic regression "
                      "but not a probability calibration", stacklevel=3)
    return s, y, w


def _tie_groups(s_sorted: np.ndarray) -> np.ndarray:
    """Start offsets of runs of equal scores in a sorted array."""
    return np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])


def pav_fit(scores, targets, weights=None) -> IsotonicModel:
    """Fit a nondecreasing step function of ``scores`` to ``targets``.

    Samples sharing a score are pooled before PAV runs, so the fit is a
    function of the score. Adjacent blocks with equal means are merged, which
    makes the bin values strictly increasing. Interior boundaries sit halfway
    between the last score of a bin and the first score of the next one.
    """
    s, y, w = _validate(scores, targets, weights)
    order = np.argsort(s, kind="stable")
    s, y, w = s[order], y[order], w[order]

    starts = _tie_groups(s)
    gw = np.add.reduceat(w, starts)
    gwy = np.add.reduceat(w * y, starts)
    gn = np.diff(np.r_[starts, s.size])

    # stack of blocks: (sum w*y, sum w, sample count, first group index)
    sw_y, sw, cnt, first = [], [], [], []
    for g in range(starts.size):
        sw_y.append(gwy[g]); sw.append(gw[g]); cnt.append(gn[g]); first.append(g)
        while len(sw) > 1 and sw_y[-2] * sw[-1] >= sw_y[-1] * sw[-2]:
            b_y, b_w, b_n = sw_y.pop(), sw.pop(), cnt.pop()
            first.pop()
            sw_y[-1] += b_y; sw[-1] += b_w; cnt[-1] += b_n

    group_first = np.array(first)
    block_start = starts[group_first]
    block_end = np.r_[block_start[1:], s.size]
    values = np.array([np.sum(w[a:b] * y[a:b]) / np.sum(w[a:b]) for a, b in zip(block_start, block_end)])
    # recomputing block means from scratch can reorder two nearly equal values
    values = np.maximum.accumulate(values)

    lo = s[block_end[:-1] - 1]
    hi = s[block_start[1:]]
    mid = lo + (hi - lo) / 2
    mid = np.where(mid > lo, mid, hi)
    boundaries = np.r_[-np.inf, mid, np.inf]
    return IsotonicModel(boundaries, values, np.array(cnt))


def pav_values(scores, targets, weights=None) -> np.ndarray:
    """Per-sample fitted values, in the input order."""
    return pav_fit(scores, targets, weights).predict(scores)


def pav_oracle(scores, targets, weights=None, max_n: int = 12) -> np.ndarray:
    """Exact isotonic fit by enumerating every contiguous block partition.

    Exponential in the number of distinct scores; meant for tests only.
    """
    s, y, w = _validate(scores, targets, weights)
    if s.size > max_n:
        raise ValueError(f"oracle limited to n <= {max_n}, got {s.size}")
    order = np.argsort(s, kind="stable")
    ss, ys, ws = s[order], y[order], w[order]
    starts = _tie_groups(ss)
    gw = np.add.reduceat(ws, starts)
    gwy = np.add.reduceat(ws * ys, starts)
    m = starts.size

    best_sse, best_fit = np.inf, None
    cw = np.r_[0.0, np.cumsum(gw)]
    cwy = np.r_[0.0, np.cumsum(gwy)]
    for n_cuts in range(m):
        for cuts in combinations(range(1, m), n_cuts):
            edges = (0, *cuts, m)
            means = [(cwy[b] - cwy[a]) / (cw[b] - cw[a]) for a, b in zip(edges[:-1], edges[1:])]
            if any(u > v for u, v in zip(means[:-1], means[1:])):
                continue
            fit_g = np.repeat(means, np.diff(edges))
            fit = np.repeat(fit_g, np.diff(np.r_[starts, ss.size]))
            sse = float(np.sum(ws * (ys - fit) ** 2))
            if sse < best_sse:
                best_sse, best_fit = sse, fit
    out = np.empty_like(best_fit)
    out[order] = best_fit
    return out

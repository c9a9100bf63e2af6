"""ROC curves and surfaces, convex hulls, AUC / VUS and the ROC-monotony test.

Binary curves use the symmetric convention: for a threshold ``t`` a sample is
put in region 0 when its class-2 score is ``<= t``, and the curve point is
``(P(region 0 | y=0), P(region 1 | y=1))``. It runs from (0, 1) to (1, 0) and
better classifiers bulge towards (1, 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .core import Dataset, as_matrix, assign_regions_many, corner_thresholds

GRID_CAP = 10**6


@dataclass(frozen=True)
class RocGraph:
    points: np.ndarray      # (m, K)
    thresholds: np.ndarray  # (m, K) affine thresholds; K=2 curves also keep the scalar in column 1

    @property
    def K(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def to_csv(self, path) -> None:
        K = self.K
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow([f"coord{k}" for k in range(1, K + 1)] + [f"gamma{k}" for k in range(1, K + 1)])
            for pt, g in zip(self.points, self.thresholds):
                out.writerow([repr(float(v)) for v in pt] + [repr(float(v)) for v in g])


@dataclass(frozen=True)
class CsdGraph:
    points: np.ndarray  # (m, 2): cumulative weight, cumulative weighted target

    def slopes(self) -> np.ndarray:
        d = np.diff(self.points, axis=0)
        return d[:, 1] / d[:, 0]


def _class_masses(labels, weights, n_classes):
    y = np.asarray(labels, dtype=np.int64)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    mass = np.bincount(y, weights=w, minlength=n_classes)
    if np.any(mass[:n_classes] <= 0):
        raise ValueError("every class must be present with positive weight")
    return y, w, mass


def sroc_curve(scores, labels, weights=None) -> RocGraph:
    """Symmetric ROC curve of binary ``scores`` (class-2 probabilities) against 0/1 labels.

    One point per distinct score (threshold placed at that score) plus the
    all-in-region-1 point (0, 1) for a threshold below every score.
    """
    s = np.asarray(scores, dtype=float)
    y, w, mass = _class_masses(labels, weights, 2)
    order = np.argsort(s, kind="stable")
    s, y, w = s[order], y[order], w[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    # cumulative sums can overshoot 1 by an ulp
    c0 = np.minimum(np.cumsum(np.where(y == 0, w, 0.0))[last] / mass[0], 1.0)
    c1 = np.minimum(np.cumsum(np.where(y == 1, w, 0.0))[last] / mass[1], 1.0)
    p0 = np.r_[0.0, c0]
    p1 = np.r_[1.0, 1.0 - c1]
    p0[-1], p1[-1] = 1.0, 0.0
    t = np.r_[-np.inf, s[last]]
    thresholds = np.column_stack([1.0 - t, t])
    return RocGraph(np.column_stack([p0, p1]), thresholds)


def csd(targets, weights=None, scores=None) -> CsdGraph:
    """Cumulative sum diagram of targets already ordered by ascending score.

    With ``scores`` given, tied scores are merged into a single step.
    """
    y = np.asarray(targets, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    cw, cwy = np.cumsum(w), np.cumsum(w * y)
    if scores is not None:
        s = np.asarray(scores, dtype=float)
        if np.any(np.diff(s) < 0):
            raise ValueError("targets must be ordered by ascending score")
        keep = np.r_[s[1:] != s[:-1], True]
        cw, cwy = cw[keep], cwy[keep]
    return CsdGraph(np.column_stack([np.r_[0.0, cw], np.r_[0.0, cwy]]))


COLLINEAR_RTOL = 1e-12


def _turn(o, a, b) -> float:
    """Cross product of (a - o) and (b - o), zeroed when the points are collinear up to rounding."""
    ax, ay, bx, by = a[0] - o[0], a[1] - o[1], b[0] - o[0], b[1] - o[1]
    cross = ax * by - ay * bx
    if abs(cross) <= COLLINEAR_RTOL * np.hypot(ax, ay) * np.hypot(bx, by):
        return 0.0
    return cross


def _chain(points, keep_turn) -> list[int]:
    hull: list[int] = []
    for i, p in enumerate(points):
        while len(hull) >= 2 and not keep_turn(_turn(points[hull[-2]], points[hull[-1]], p)):
            hull.pop()
        hull.append(i)
    return hull


def gcm(c: CsdGraph) -> CsdGraph:
    """Greatest convex minorant of a CSD: its lower hull without collinear interior vertices."""
    pts = c.points
    idx = _chain(pts, lambda cr: cr > 0)
    return CsdGraph(pts[idx])


def convex_hull_roc(g: RocGraph) -> RocGraph:
    """Vertices of the concave envelope of a binary curve, from (0, 1) to (1, 0).

    Interior collinear points are dropped.
    """
    if g.K != 2:
        raise ValueError("convex hull is defined for binary curves only")
    pts, thr = g.points, g.thresholds
    _, first = np.unique(pts, axis=0, return_index=True)
    first = np.sort(first)
    pts, thr = pts[first], thr[first]
    order = np.lexsort((-pts[:, 1], pts[:, 0]))
    pts, thr = pts[order], thr[order]
    idx = _chain(pts, lambda cr: cr < 0)
    return RocGraph(pts[idx], thr[idx])


def auc(g: RocGraph) -> float:
    """Trapezoidal area under a binary curve in the (p0, p1) plane."""
    if g.K != 2:
        raise ValueError("AUC is defined for binary curves only")
    if len(g) < 2:
        raise ValueError("need at least two points")
    pts = g.points[np.lexsort((-g.points[:, 1], g.points[:, 0]))]
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2))


def roc_surface(P: np.ndarray, labels, thresholds, weights=None, dedupe: bool = True) -> RocGraph:
    """ROC surface points of forecasts ``P`` (n, K) over a set of affine thresholds.

    Coordinate k of a point is the weighted fraction of class-k samples sent
    to region k.
    """
    P = np.asarray(P, dtype=float)
    K = P.shape[1]
    G = as_matrix(thresholds)
    if G.shape[0] == 0:
        raise ValueError("need at least one threshold")
    if G.shape[1] != K:
        raise ValueError(f"thresholds have dimension {G.shape[1]}, forecasts {K}")
    y, w, mass = _class_masses(labels, weights, K)
    regions = assign_regions_many(P, G)
    hits = (regions == y[None, :]).astype(float) * w[None, :]
    pts = np.stack([hits[:, y == k].sum(axis=1) / mass[k] for k in range(K)], axis=1)
    pts = np.minimum(pts, 1.0)
    if dedupe:
        _, first = np.unique(pts, axis=0, return_index=True)
        first = np.sort(first)
        pts, G = pts[first], G[first]
    return RocGraph(pts, G)


def dataset_roc_surface(ds: Dataset, thresholds, dedupe: bool = True) -> RocGraph:
    return roc_surface(ds.P, ds.y, thresholds, ds.w, dedupe)


def lattice_thresholds(K: int, step: float, lo: float = -1.0, hi: float = 2.0, cap: int = GRID_CAP) -> np.ndarray:
    """Thresholds whose first K-1 coordinates lie on ``lo, lo+step, ..., hi``.

    The last coordinate is ``1 - sum(others)`` and is kept only when it also lies in [lo, hi].
    """
    if step <= 0:
        raise ValueError("lattice step must be positive")
    axis = lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)
    if float(axis.size) ** (K - 1) > cap:
        raise ValueError(f"lattice with step {step} in dimension {K} exceeds the grid cap of {cap} points")
    heads = np.array(list(product(axis, repeat=K - 1))).reshape(-1, K - 1)
    last = 1.0 - heads.sum(axis=1)
    ok = (last >= lo - 1e-9) & (last <= hi + 1e-9)
    return np.column_stack([heads[ok], last[ok]])


def unique_rows(G: np.ndarray) -> np.ndarray:
    _, first = np.unique(G, axis=0, return_index=True)
    return G[np.sort(first)]


def default_threshold_grid(ds: Dataset, lattice_step: float = 0.1, cap: int = GRID_CAP) -> np.ndarray:
    """Every sample forecast plus a lattice on the affine plane, deduplicated."""
    lat = lattice_thresholds(ds.K, lattice_step, cap=cap)
    G = unique_rows(np.vstack([ds.P, lat]))
    if G.shape[0] > cap:
        raise ValueError(f"threshold grid has {G.shape[0]} points, above the cap of {cap}")
    return G


def pareto_front(points: np.ndarray) -> np.ndarray:
    """Points not weakly dominated by another point (coordinatewise >=, one strict)."""
    pts = unique_rows(np.asarray(points, dtype=float))
    order = np.argsort(-pts.sum(axis=1), kind="stable")
    pts = pts[order]
    keep: list[int] = []
    for i in range(pts.shape[0]):
        if keep and np.any(np.all(pts[keep] >= pts[i], axis=1)):
            continue
        keep.append(i)
    return pts[keep]


class _DominanceIndex:
    """Answers "is u coordinatewise <= some front point" with one bitset AND per coordinate.

    For coordinate k the points with ``f_k >= u_k`` are a suffix of the front
    sorted on k; each suffix is stored as a packed bitset over the points.
    """

    def __init__(self, front: np.ndarray, chunk: int = 1024):
        m, K = front.shape
        self.sorted = []
        self.suffix = []
        for k in range(K):
            order = np.argsort(front[:, k], kind="stable")
            rank = np.empty(m, dtype=np.int64)
            rank[order] = np.arange(m)
            rows = [np.packbits(rank[None, :] >= np.arange(r, min(r + chunk, m + 1))[:, None], axis=1)
                    for r in range(0, m + 1, chunk)]
            self.sorted.append(front[order, k])
            self.suffix.append(np.vstack(rows))

    def dominated(self, u: np.ndarray) -> np.ndarray:
        acc = None
        for k, (vals, bits) in enumerate(zip(self.sorted, self.suffix)):
            rows = bits[np.searchsorted(vals, u[:, k], side="left")]
            acc = rows if acc is None else acc & rows
        return acc.any(axis=1)


def vus_with_error(g, mc_samples: int = 100_000, seed=0, batch: int = 20_000) -> tuple[float, float]:
    """Monte Carlo volume of the region dominated by the graph's points, and its standard error.

    Samples are drawn in fixed-size batches from a single seeded stream, so the
    estimate does not depend on how the batches are processed.
    """
    if mc_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    pts = g.points if isinstance(g, RocGraph) else np.asarray(g, dtype=float)
    if pts.shape[0] == 0:
        raise ValueError("empty ROC graph")
    front = pareto_front(pts)
    index = _DominanceIndex(front)
    rng = np.random.default_rng(seed)
    hit = 0
    done = 0
    while done < mc_samples:
        m = min(batch, mc_samples - done)
        hit += int(index.dominated(rng.random((m, front.shape[1]))).sum())
        done += m
    v = hit / mc_samples
    return v, float(np.sqrt(v * (1 - v) / mc_samples))


def vus(g, mc_samples: int = 100_000, seed=0) -> float:
    return vus_with_error(g, mc_samples, seed)[0]


def _partition_keys(regions: np.ndarray) -> set[bytes]:
    return {row.tobytes() for row in regions}


def is_roc_monotone(raw: np.ndarray, calibrated: np.ndarray, gammas, include_corners: bool = True) -> bool:
    """Whether every split of ``calibrated`` at a threshold in ``gammas`` is also a split of ``raw``.

    The matching split of the raw forecasts may use any threshold of ``gammas``
    and, with ``include_corners``, the K thresholds that put every sample in a
    single region (always reachable on the affine plane). Regions are matched
    class by class.
    """
    raw = np.asarray(raw, dtype=float)
    cal = np.asarray(calibrated, dtype=float)
    if raw.shape != cal.shape or raw.ndim != 2:
        raise ValueError(f"dimension mismatch: raw {raw.shape} vs calibrated {cal.shape}")
    G = as_matrix(gammas)
    if G.shape[0] == 0:
        raise ValueError("need at least one threshold")
    if G.shape[1] != raw.shape[1]:
        raise ValueError("threshold dimension does not match forecasts")
    G_raw = np.vstack([G, corner_thresholds(raw.shape[1])]) if include_corners else G
    known = _partition_keys(assign_regions_many(raw, G_raw))
    return all(row.tobytes() in known for row in assign_regions_many(cal, G))


"""Recursive simplex partitioning calibrators.

``fit_mc_irp`` grows a tree of affine-threshold splits, accepting a split only
when the calibrated forecasts stay ROC monotone; ``fit_recursive_bins`` is the
same procedure without that check. ``fit_fixed_bins`` is the equal-width
binary baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import Dataset, as_matrix, assign_regions, assign_regions_many, corner_thresholds
from .pav import StepCalibrator
from .roc import lattice_thresholds

M_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    """A region of the simplex. Leaves have ``gamma is None``."""

    count: int
    weight: float
    label_sums: np.ndarray
    value: np.ndarray
    gamma: Optional[np.ndarray] = None
    children: tuple = ()
    iteration: Optional[int] = None
    node_id: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.gamma is None

    @property
    def raw_mean(self) -> np.ndarray:
        if self.weight <= 0:
            return self.value
        return self.label_sums / self.weight


@dataclass(frozen=True)
class SplitRecord:
    iteration: int
    region_id: int
    gamma: np.ndarray
    criterion: float


def smoothed_value(label_sums: np.ndarray, weight: float, alpha: float, fallback: np.ndarray) -> np.ndarray:
    K = label_sums.size
    if weight <= 0:
        return fallback
    return (label_sums + alpha) / (weight + alpha * K)


@dataclass(frozen=True)
class SimplexPartitionModel:
    K: int
    root: Node
    alpha: float
    split_log: tuple = ()
    method: str = "mc-irp"

    def leaves(self) -> list[Node]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return sorted(out, key=lambda n: n.node_id)

    @property
    def n_leaves(self) -> int:
        """Leaves holding at least one calibration sample."""
        return sum(1 for leaf in self.leaves() if leaf.count > 0)

    def _descend(self, P: np.ndarray, visit) -> None:
        stack = [(self.root, np.arange(P.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf or idx.size == 0:
                visit(node, idx)
                continue
            reg = assign_regions(P[idx], node.gamma)
            for k, child in enumerate(node.children):
                stack.append((child, idx[reg == k]))

    def apply(self, P) -> np.ndarray:
        """Calibrated forecasts for the rows of ``P``."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[1] != self.K:
            raise ValueError(f"model expects K={self.K}, got forecasts with {P.shape[1]} entries")
        out = np.empty_like(P)

        def visit(node, idx):
            out[idx] = node.value

        self._descend(P, visit)
        return out

    def apply_raw(self, P) -> np.ndarray:
        """Unsmoothed leaf means for the rows of ``P``."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        out = np.empty_like(P)

        def visit(node, idx):
            out[idx] = node.raw_mean

        self._descend(P, visit)
        return out

    def leaf_ids(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        out = np.empty(P.shape[0], dtype=np.int64)

        def visit(node, idx):
            out[idx] = node.node_id

        self._descend(P, visit)
        return out

    def nodes(self) -> list[Node]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(node.children)
        return sorted(out, key=lambda n: n.node_id)

    def paths(self, P) -> tuple[np.ndarray, np.ndarray]:
        """Node ids from the root down to each forecast's leaf, and the split iteration of each.

        Rows are padded with the leaf id and an infinite iteration. The node a
        forecast reaches in ``prefix(t)`` is ``ids[i, (iters[i] <= t).sum()]``.
        """
        P = np.atleast_2d(np.asarray(P, dtype=float))
        depth = {self.root.node_id: 0}
        max_depth, stack = 0, [self.root]
        while stack:
            node = stack.pop()
            for c in node.children:
                depth[c.node_id] = depth[node.node_id] + 1
                max_depth = max(max_depth, depth[c.node_id])
                stack.append(c)
        ids = np.empty((P.shape[0], max_depth + 1), dtype=np.int64)
        iters = np.full((P.shape[0], max_depth + 1), np.inf)
        walk = [(self.root, np.arange(P.shape[0]), 0)]
        while walk:
            node, idx, d = walk.pop()
            ids[idx, d:] = node.node_id
            if node.is_leaf or idx.size == 0:
                continue
            iters[idx, d] = node.iteration
            reg = assign_regions(P[idx], node.gamma)
            for k, child in enumerate(node.children):
                walk.append((child, idx[reg == k], d + 1))
        return ids, iters

    def introduced_thresholds(self) -> np.ndarray:
        if not self.split_log:
            return np.empty((0, self.K))
        return np.stack([rec.gamma for rec in self.split_log])

    def prefix(self, n_splits: int) -> "SimplexPartitionModel":
        """The model as it stood after its first ``n_splits`` splits."""

        def cut(node: Node) -> Node:
            if node.is_leaf:
                return node
            if node.iteration > n_splits:
                return replace(node, gamma=None, children=(), iteration=None)
            return replace(node, children=tuple(cut(c) for c in node.children))

        return replace(self, root=cut(self.root), split_log=self.split_log[:n_splits])

    def with_alpha(self, alpha: float) -> "SimplexPartitionModel":
        """Same partition, leaf values re-smoothed with ``alpha``."""

        def redo(node: Node, fallback: np.ndarray) -> Node:
            value = smoothed_value(node.label_sums, node.weight, alpha, fallback)
            return replace(node, value=value, children=tuple(redo(c, value) for c in node.children))

        uniform = np.full(self.K, 1.0 / self.K)
        return replace(self, alpha=alpha, root=redo(self.root, uniform))


class _Region:
    __slots__ = ("rid", "idx", "candidates", "M", "assign", "raw_assign", "child_means", "open")

    def __init__(self, rid: int, idx: np.ndarray):
        self.rid = rid
        self.idx = idx
        self.candidates = None  # (c, K) thresholds sorted by decreasing criterion
        self.M = None
        self.assign = None      # (c, n_region) child index of each region sample
        self.raw_assign = None  # (c, n) region of every sample under each candidate
        self.child_means = None
        self.open = True


def split_criterion(P: np.ndarray, Yw: np.ndarray, w: np.ndarray, gammas) -> np.ndarray:
    """Criterion of each threshold on one region's samples.

    Sum over nonempty children of child weight times the L1 distance between
    the child's and the region's mean label vectors.

    Returns ``(M, n_nonempty)`` arrays, one entry per threshold.
    """
    G = as_matrix(gammas)
    K = P.shape[1]
    W_R = w.sum()
    mean_R = Yw.sum(axis=0) / W_R
    M = np.empty(G.shape[0])
    nonempty = np.empty(G.shape[0], dtype=np.int64)
    chunk = max(1, 2_000_000 // max(P.shape[0] * K, 1))
    for s in range(0, G.shape[0], chunk):
        reg = np.argmax(P[None, :, :] - G[s:s + chunk, None, :], axis=2)
        m = np.zeros(reg.shape[0])
        ne = np.zeros(reg.shape[0], dtype=np.int64)
        for k in range(K):
            mask = (reg == k).astype(float)
            Wk = mask @ w
            Sk = mask @ Yw
            has = Wk > 0
            dist = np.abs(Sk / np.where(has, Wk, 1.0)[:, None] - mean_R).sum(axis=1)
            m += np.where(has, Wk * dist, 0.0)
            ne += has
        M[s:s + chunk] = m
        nonempty[s:s + chunk] = ne
    return M, nonempty


def _midpoints(V: np.ndarray) -> np.ndarray:
    """Thresholds halfway between leaf value vectors.

    For K=2 only consecutive distinct values are needed: the resulting splits
    are every prefix of the sorted leaf values.
    """
    if V.shape[1] == 2:
        v = np.unique(V[:, 1])
        t = (v[:-1] + v[1:]) / 2
        return np.column_stack([1.0 - t, t])
    a, b = np.triu_indices(V.shape[0], 1)
    return (V[a] + V[b]) / 2


class _Grower:
    """Mutable state of one recursive-partitioning fit."""

    def __init__(self, ds: Dataset, candidates: str, lattice_step: float, monotone: bool,
                 leaf_midpoints: bool):
        self.P = ds.P
        self.n, self.K = ds.P.shape
        self.w = ds.w
        self.Yw = ds.onehot() * ds.w[:, None]
        self.monotone = monotone
        self.leaf_midpoints = leaf_midpoints
        self.use_points = candidates in ("points", "both")
        self.lattice = None
        if candidates in ("lattice", "both"):
            self.lattice = lattice_thresholds(self.K, lattice_step)
        elif candidates != "points":
            raise ValueError(f"unknown candidate source {candidates!r}")
        root = np.arange(self.n)
        self.leaf_of = np.zeros(self.n, dtype=np.int64)
        self.regions: list[_Region] = [_Region(0, root)]
        self.means: dict[int, np.ndarray] = {0: self._mean(root, np.full(self.K, 1.0 / self.K))}
        self.introduced: list[np.ndarray] = []
        self.known = {row.tobytes() for row in self._raw_partitions(corner_thresholds(self.K))}
        # lattice points routed down the tree like forecasts
        self.lattice_of = np.zeros(0 if self.lattice is None else self.lattice.shape[0], dtype=np.int64)
        self.tree: dict[int, tuple] = {}
        self.next_id = 1
        self._table = None

    def _mean(self, idx, fallback):
        W = self.w[idx].sum()
        if W <= 0:
            return fallback
        return self.Yw[idx].sum(axis=0) / W

    def _raw_partitions(self, G: np.ndarray) -> np.ndarray:
        return np.argmax(self.P[None, :, :] - G[:, None, :], axis=2).astype(np.int8)

    def _candidates(self, region: _Region) -> np.ndarray:
        parts = []
        if self.use_points:
            parts.append(self.P[region.idx])
        if self.lattice is not None:
            parts.append(self.lattice[self.lattice_of == region.rid])
        C = np.vstack(parts) if parts else np.empty((0, self.K))
        if C.shape[0]:
            _, first = np.unique(C, axis=0, return_index=True)
            C = C[np.sort(first)]
        return C

    def _inspect(self, region: _Region) -> None:
        C = self._candidates(region)
        idx = region.idx
        if C.shape[0]:
            M, ne = split_criterion(self.P[idx], self.Yw[idx], self.w[idx], C)
            ok = (ne >= 2) & (M > M_TOL * max(self.w[idx].sum(), 1.0))
            C, M = C[ok], M[ok]
        else:
            M = np.empty(0)
        # decreasing M, then lexicographically smaller threshold
        order = np.lexsort(tuple(C[:, k] for k in range(self.K - 1, -1, -1)) + (-M,))
        region.candidates, region.M = C[order], M[order]
        if self.monotone and C.shape[0]:
            region.raw_assign = assign_regions_many(self.P, region.candidates)
            region.assign = region.raw_assign[:, idx]
            region.child_means = [None] * C.shape[0]

    def _children(self, region: _Region, gamma: np.ndarray):
        reg = assign_regions(self.P[region.idx], gamma)
        return [region.idx[reg == k] for k in range(self.K)]

    def _leaf_table(self):
        """Current leaf values and the row of each sample, without the region being split."""
        if self._table is None:
            ids = sorted(self.means)
            mapper = np.full(self.next_id, -1, dtype=np.int64)
            mapper[ids] = np.arange(len(ids))
            self._table = (ids, np.stack([self.means[r] for r in ids]), mapper[self.leaf_of])
        return self._table

    def _admissible(self, region: _Region, j: int) -> bool:
        """ROC monotony of the calibrated forecasts after applying candidate ``j`` of ``region``."""
        gamma = region.candidates[j]
        ids, V, leaf = self._leaf_table()
        assign = region.assign[j]
        if region.child_means[j] is None:
            parent = self.means[region.rid]
            region.child_means[j] = {k: self._mean(region.idx[assign == k], parent)
                                     for k in np.unique(assign)}
        kids = region.child_means[j]
        slot = np.full(self.K, -1, dtype=np.int64)
        slot[list(kids)] = V.shape[0] + np.arange(len(kids))
        leaf = leaf.copy()
        leaf[region.idx] = slot[assign]
        V = np.vstack([V, np.stack(list(kids.values()))])
        # the region's own row in V is unreferenced once its samples move to the children
        G = [gamma[None, :]]
        if self.leaf_midpoints:
            live = np.unique(leaf)
            G.append(_midpoints(V[live]))
        G.append(np.asarray(self.introduced).reshape(-1, self.K))
        G = np.vstack(G)
        own = region.raw_assign[j].tobytes()
        for s in range(0, G.shape[0], 128):
            leafreg = np.argmax(V[None, :, :] - G[s:s + 128, None, :], axis=2).astype(np.int8)
            for row in leafreg[:, leaf]:
                key = row.tobytes()
                if key != own and key not in self.known:
                    return False
        return True

    def best(self, region: _Region):
        """Best admissible (M, gamma) of an open region, or None."""
        if region.candidates is None:
            self._inspect(region)
        for j in range(region.M.size):
            if not self.monotone or self._admissible(region, j):
                return region.M[j], region.candidates[j]
        return None

    def apply(self, region: _Region, gamma: np.ndarray, iteration: int):
        kids = self._children(region, gamma)
        parent = self.means.pop(region.rid)
        region.open = False
        region.assign = region.raw_assign = region.child_means = None
        self._table = None
        child_ids = []
        if self.lattice is not None:
            mine = np.flatnonzero(self.lattice_of == region.rid)
            lat_reg = assign_regions(self.lattice[mine], gamma) if mine.size else np.empty(0, dtype=np.int64)
        for k, idx in enumerate(kids):
            rid = self.next_id
            self.next_id += 1
            child_ids.append(rid)
            child = _Region(rid, idx)
            if idx.size == 0:
                child.open = False
            else:
                self.means[rid] = self._mean(idx, parent)
            self.leaf_of[idx] = rid
            if self.lattice is not None:
                self.lattice_of[mine[lat_reg == k]] = rid
            self.regions.append(child)
        self.tree[region.rid] = (gamma, child_ids, iteration)
        self.introduced.append(gamma)
        self.known.add(self._raw_partitions(gamma[None, :])[0].tobytes())

    @property
    def n_leaves(self) -> int:
        return len(self.means)


def _grow(ds: Dataset, alpha: float, candidates: str, lattice_step: float, max_leaves, monotone: bool,
          leaf_midpoints: bool, method: str) -> SimplexPartitionModel:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    g = _Grower(ds, candidates, lattice_step, monotone, leaf_midpoints)
    log = []
    iteration = 0
    limit = np.inf if max_leaves is None else max_leaves
    while g.n_leaves < limit:
        winner = None
        for region in g.regions:
            if not region.open:
                continue
            found = g.best(region)
            if found is None:
                region.open = False
                region.assign = region.raw_assign = region.child_means = None
                continue
            if winner is None or found[0] > winner[0]:
                winner = (found[0], found[1], region)
        if winner is None:
            break
        M, gamma, region = winner
        added = sum(idx.size > 0 for idx in g._children(region, gamma)) - 1
        if g.n_leaves + added > limit:
            break
        iteration += 1
        g.apply(region, gamma, iteration)
        log.append(SplitRecord(iteration, region.rid, gamma.copy(), float(M)))
    return SimplexPartitionModel(ds.K, _build_tree(g, alpha), alpha, tuple(log), method)


def _build_tree(g: _Grower, alpha: float) -> Node:
    K = g.K
    idx_of = {r.rid: r.idx for r in g.regions}

    def build(rid: int, fallback: np.ndarray) -> Node:
        idx = idx_of[rid]
        sums = g.Yw[idx].sum(axis=0)
        weight = float(g.w[idx].sum())
        value = smoothed_value(sums, weight, alpha, fallback)
        if rid not in g.tree:
            return Node(int(idx.size), weight, sums, value, node_id=rid)
        gamma, kids, it = g.tree[rid]
        children = tuple(build(c, value) for c in kids)
        return Node(int(idx.size), weight, sums, value, gamma, children, it, rid)

    return build(0, np.full(K, 1.0 / K))


def fit_mc_irp(ds: Dataset, alpha: float = 1.0, candidates: str = "points", lattice_step: float = 0.1,
               max_leaves: Optional[int] = None, leaf_midpoints: Optional[bool] = None) -> SimplexPartitionModel:
    """Multi-class isotonic recursive partitioning.

    Parameters
    ----------
    ds : Dataset
        Calibration forecasts and labels.
    alpha : float
        Laplace smoothing added to every class count when computing leaf values.
        Split selection and the monotony check always use unsmoothed means.
    candidates : {"points", "lattice", "both"}
        Where candidate thresholds come from: the region's own sample
        forecasts, lattice points of the affine plane routed into the region,
        or both.
    lattice_step : float
        Lattice spacing when ``candidates`` uses the lattice.
    max_leaves : int, optional
        Stop once this many nonempty leaves exist. The fit stops on its own
        when no region admits a monotone split.
    leaf_midpoints : bool, optional
        Also test the calibrated forecasts at thresholds halfway between leaf
        values. With K=2 this turns the check into plain isotonicity of the
        leaf values, which makes the fit reproduce PAV; in higher dimension it
        is much stricter and usually stops after a handful of splits. Defaults
        to ``K == 2``.
    """
    if leaf_midpoints is None:
        leaf_midpoints = ds.K == 2
    return _grow(ds, alpha, candidates, lattice_step, max_leaves, True, leaf_midpoints, "mc-irp")


def fit_recursive_bins(ds: Dataset, alpha: float = 1.0, candidates: str = "points", lattice_step: float = 0.1,
                       max_leaves: Optional[int] = None) -> SimplexPartitionModel:
    """Recursive splitting without the ROC-monotony check."""
    return _grow(ds, alpha, candidates, lattice_step, max_leaves, False, False, "recursive-bins")


def apply_model(model: SimplexPartitionModel, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        if p.size != model.K:
            raise ValueError(f"model expects K={model.K}, got a forecast with {p.size} entries")
        return model.apply(p[None, :])[0]
    return model.apply(p)


@dataclass(frozen=True)
class FixedBinModel(StepCalibrator):
    alpha: float = 0.0


def fit_fixed_bins(ds: Dataset, m: int, alpha: float = 1.0) -> FixedBinModel:
    """Equal-width bins of the class-2 score on [0, 1] with Laplace-smoothed mean labels.

    Empty bins take their center as value.
    """
    if ds.K != 2:
        raise ValueError("fixed-width binning is implemented for binary datasets")
    if m < 1:
        raise ValueError("need at least one bin")
    edges = np.r_[-np.inf, np.arange(1, m) / m, np.inf]
    b = np.searchsorted(edges, ds.scores, side="right") - 1
    W = np.bincount(b, weights=ds.w, minlength=m)
    S = np.bincount(b, weights=ds.w * (ds.y == 1), minlength=m)
    counts = np.bincount(b, minlength=m)
    centers = (np.arange(m) + 0.5) / m
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(W > 0, (S + alpha) / (W + 2 * alpha), centers)
    return FixedBinModel(edges, values, counts, alpha)

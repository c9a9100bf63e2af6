"""Bin-count sweeps: calibration-set and test-set metrics as the number of bins grows.

Recursive methods are fitted once; each row evaluates the model as it stood
after a given number of splits. Fixed-width binning is refitted for every bin
count of the grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Dataset
from .metrics import cross_entropy
from .partition import SimplexPartitionModel, fit_fixed_bins, fit_mc_irp, fit_recursive_bins
from .roc import auc, lattice_thresholds, roc_surface, sroc_curve, unique_rows, vus

COLUMNS = ("method", "n_bins", "calib_ce_reg", "test_ce", "calib_auc_vus", "test_auc_vus")


@dataclass
class SweepConfig:
    methods: Sequence[str] = ("mc-irp", "recursive-bins", "fixed-bins")
    alpha: float = 1.0
    max_leaves: Optional[int] = None
    bins_grid: Sequence[int] = (1, 2, 3, 5, 8, 10, 15, 20, 30, 50, 100)
    candidates: str = "points"
    lattice_step: float = 0.1
    roc: bool = True
    vus_samples: int = 20_000
    roc_points: int = 500
    seed: int = 0


def leaf_weight_of(model, calib: Dataset) -> np.ndarray:
    """Total calibration weight of the bin each calibration sample falls in."""
    if isinstance(model, SimplexPartitionModel):
        ids = model.leaf_ids(calib.P)
        weights = {leaf.node_id: leaf.weight for leaf in model.leaves()}
        return np.array([weights[i] for i in ids])
    bins = model.bin_index(calib.scores)
    return np.bincount(bins, weights=calib.w, minlength=model.n_bins)[bins]


def regularized_ce(model, ds: Dataset, R: np.ndarray, alpha: float) -> float:
    """Cross entropy with the per-sample penalty each smoothed leaf value minimizes.

    A leaf of calibration weight ``W`` gets ``lam = alpha / W``; summed over the
    calibration set this is the objective whose minimizer is the Laplace mean.
    """
    W = leaf_weight_of(model, ds)
    lam = np.where(W > 0, alpha / np.where(W > 0, W, 1.0), 0.0)
    return cross_entropy(R, ds.y, lam, ds.w).regularized


class _RocScorer:
    def __init__(self, calib: Dataset, cfg: SweepConfig, extra: np.ndarray):
        self.cfg = cfg
        self.K = calib.K
        if self.K > 2:
            rng = np.random.default_rng(cfg.seed)
            pick = rng.permutation(calib.n)[:cfg.roc_points]
            parts = [calib.P[np.sort(pick)], lattice_thresholds(self.K, cfg.lattice_step)]
            if extra.size:
                parts.append(extra)
            self.G = unique_rows(np.vstack(parts))

    def __call__(self, R: np.ndarray, ds: Dataset) -> float:
        if self.K == 2:
            return auc(sroc_curve(R[:, 1], ds.y, ds.w))
        return vus(roc_surface(R, ds.y, self.G, ds.w), self.cfg.vus_samples, self.cfg.seed)


class _Prefixes:
    """Evaluates every prefix of a fitted partition model without rebuilding trees."""

    def __init__(self, model: SimplexPartitionModel, calib: Dataset, test: Dataset):
        nodes = model.nodes()
        size = max(n.node_id for n in nodes) + 1
        self.value = np.zeros((size, model.K))
        self.weight = np.zeros(size)
        self.count = np.zeros(size, dtype=np.int64)
        self.born = np.zeros(size)          # iteration that created the node (0 for the root)
        self.split_at = np.full(size, np.inf)
        for n in nodes:
            self.value[n.node_id] = n.value
            self.weight[n.node_id] = n.weight
            self.count[n.node_id] = n.count
            if not n.is_leaf:
                self.split_at[n.node_id] = n.iteration
                for c in n.children:
                    self.born[c.node_id] = n.iteration
        self.calib = model.paths(calib.P)
        self.test = model.paths(test.P)

    @staticmethod
    def _reach(paths, t):
        ids, iters = paths
        return ids[np.arange(ids.shape[0]), (iters <= t).sum(axis=1)]

    def n_leaves(self, t: int) -> int:
        leaf = (self.born <= t) & (self.split_at > t) & (self.count > 0)
        return int(leaf.sum())

    def evaluate(self, t: int, calib: Dataset, test: Dataset, cfg, scorer) -> dict:
        nc = self._reach(self.calib, t)
        Rc, Rt = self.value[nc], self.value[self._reach(self.test, t)]
        W = self.weight[nc]
        lam = np.where(W > 0, cfg.alpha / np.where(W > 0, W, 1.0), 0.0)
        return _metrics(Rc, Rt, cross_entropy(Rc, calib.y, lam, calib.w).regularized, calib, test, scorer)


def _metrics(Rc, Rt, calib_ce_reg, calib, test, scorer) -> dict:
    return {
        "calib_ce_reg": calib_ce_reg,
        "test_ce": cross_entropy(Rt, test.y, 0.0, test.w).value,
        "calib_auc_vus": scorer(Rc, calib) if scorer else np.nan,
        "test_auc_vus": scorer(Rt, test) if scorer else np.nan,
    }


def _row(method, n_bins, model, calib, test, cfg, scorer):
    Rc = _calibrate(model, calib.P)
    Rt = _calibrate(model, test.P)
    row = {"method": method, "n_bins": n_bins}
    row.update(_metrics(Rc, Rt, regularized_ce(model, calib, Rc, cfg.alpha), calib, test, scorer))
    return row


def _calibrate(model, P):
    if isinstance(model, SimplexPartitionModel):
        return model.apply(P)
    return model.predict_proba(P[:, 1])


def run_sweep(calib: Dataset, test: Dataset, cfg: SweepConfig) -> list[dict]:
    if calib.K != test.K:
        raise ValueError(f"calibration set has K={calib.K}, test set K={test.K}")
    rows: list[dict] = []
    fits = {}
    for method in cfg.methods:
        if method == "mc-irp":
            fits[method] = fit_mc_irp(calib, cfg.alpha, cfg.candidates, cfg.lattice_step, cfg.max_leaves)
        elif method == "recursive-bins":
            fits[method] = fit_recursive_bins(calib, cfg.alpha, cfg.candidates, cfg.lattice_step, cfg.max_leaves)
        elif method == "fixed-bins":
            if calib.K != 2:
                raise ValueError("fixed-bins requires K=2")
        else:
            raise ValueError(f"unknown method {method!r}")
    scorer = None
    if cfg.roc:
        extra = [f.introduced_thresholds() for f in fits.values()]
        extra = np.vstack(extra) if extra else np.empty((0, calib.K))
        scorer = _RocScorer(calib, cfg, extra)
    for method in cfg.methods:
        if method == "fixed-bins":
            for m in cfg.bins_grid:
                model = fit_fixed_bins(calib, int(m), cfg.alpha)
                rows.append(_row(method, int(np.count_nonzero(model.counts)), model, calib, test, cfg, scorer))
            continue
        full = fits[method]
        prefixes = _Prefixes(full, calib, test)
        for t in range(len(full.split_log) + 1):
            row = {"method": method, "n_bins": prefixes.n_leaves(t)}
            row.update(prefixes.evaluate(t, calib, test, cfg, scorer))
            rows.append(row)
    return rows


def write_rows(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(COLUMNS)
        for r in rows:
            out.writerow([r["method"], r["n_bins"]] + [repr(float(r[c])) for c in COLUMNS[2:]])

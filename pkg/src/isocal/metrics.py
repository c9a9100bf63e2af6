"""Calibration error, cross entropy and the cross-entropy decomposition.

All logarithms are natural.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np


def _as_forecasts(forecasts) -> np.ndarray:
    F = np.asarray(forecasts, dtype=float)
    if F.ndim == 1:
        F = np.column_stack([1.0 - F, F])
    return F


def _weights(labels, weights):
    return np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=float)


def _gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Binary: absolute gap on the class-2 coordinate. K >= 3: L1 distance."""
    if a.shape[-1] == 2:
        return np.abs(a[..., 1] - b[..., 1])
    return np.abs(a - b).sum(axis=-1)


def group_by_value(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct forecast rows (exact float equality) and the group of every sample."""
    values, inverse = np.unique(F, axis=0, return_inverse=True)
    return values, inverse.ravel()


def _grouped_ece(groups: np.ndarray, F: np.ndarray, y: np.ndarray, w: np.ndarray, value=None) -> float:
    K = F.shape[1]
    n_groups = int(groups.max()) + 1
    W = np.bincount(groups, weights=w, minlength=n_groups)
    Y = np.zeros((n_groups, K))
    np.add.at(Y, groups, np.eye(K)[y] * w[:, None])
    live = W > 0
    freq = Y[live] / W[live, None]
    if value is None:
        Fs = np.zeros((n_groups, K))
        np.add.at(Fs, groups, F * w[:, None])
        value = Fs / np.where(live, W, 1.0)[:, None]
    return float(np.sum(W[live] * _gap(freq, value[live])) / W.sum())


def ece_discrete(forecasts, labels, weights=None) -> float:
    """Calibration error of forecasts taking finitely many values.

    Samples are grouped by their exact forecast vector; each group contributes
    its weight share times the gap between its forecast and its label frequency.
    """
    F = _as_forecasts(forecasts)
    y = np.asarray(labels, dtype=np.int64)
    values, groups = group_by_value(F)
    return _grouped_ece(groups, F, y, _weights(y, weights), value=values)


def ece_binned(forecasts, labels, m: int = 15, weights=None, model=None) -> float:
    """Calibration error after discretising continuous forecasts.

    Binary forecasts go into ``m`` equal-width bins of the class-2 probability.
    For K >= 3 the leaves of ``model`` (a fitted partition model) define the
    bins; without a model, cells of an equal-width grid on every coordinate
    are used. Each bin is represented by its mean forecast.
    """
    if m < 1:
        raise ValueError("need at least one bin")
    F = _as_forecasts(forecasts)
    y = np.asarray(labels, dtype=np.int64)
    w = _weights(y, weights)
    if F.shape[1] == 2:
        groups = np.minimum((F[:, 1] * m).astype(np.int64), m - 1)
    elif model is not None:
        _, groups = np.unique(model.leaf_ids(F), return_inverse=True)
    else:
        cells = np.minimum((F * m).astype(np.int64), m - 1)
        _, groups = np.unique(cells, axis=0, return_inverse=True)
    return _grouped_ece(groups.ravel(), F, y, w)


def is_discrete(forecasts, max_fraction: float = 0.5) -> bool:
    """Heuristic: forecasts repeat enough to be treated as a finite grid."""
    F = _as_forecasts(forecasts)
    return np.unique(F, axis=0).shape[0] <= max(1, int(max_fraction * F.shape[0]))


class CrossEntropy(NamedTuple):
    value: float
    regularized: float
    finite: bool


def cross_entropy(forecasts, labels, lam=0.0, weights=None) -> CrossEntropy:
    """Mean negative log-probability of the observed class, plus its regularized variant.

    ``regularized = value - mean_i(lam_i * sum_k log p_ik)``; ``lam`` may be a
    scalar or one value per sample. A zero probability on an observed class
    yields ``inf`` with ``finite=False`` rather than an error.
    """
    F = _as_forecasts(forecasts)
    y = np.asarray(labels, dtype=np.int64)
    w = _weights(y, weights)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), y.shape)
    with np.errstate(divide="ignore"):
        logF = np.log(F)
    nll = -logF[np.arange(y.size), y]
    W = w.sum()
    H = float(np.sum(w * nll) / W)
    active = lam > 0
    reg_terms = np.zeros(y.size)
    reg_terms[active] = lam[active] * logF[active].sum(axis=1)
    H_reg = float(H - np.sum(w * reg_terms) / W)
    return CrossEntropy(H, H_reg, bool(np.isfinite(H) and np.isfinite(H_reg)))


def group_penalty(forecasts, weights=None, alpha: float = 1.0) -> np.ndarray:
    """Per-sample ``alpha / W`` with ``W`` the total weight of samples sharing its forecast.

    For the output of a Laplace-smoothed binning calibrator on its own fit set
    this is the penalty under which every bin value is the exact minimizer.
    """
    F = _as_forecasts(forecasts)
    _, groups = group_by_value(F)
    w = np.ones(F.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    W = np.bincount(groups, weights=w)[groups]
    return np.where(W > 0, alpha / np.where(W > 0, W, 1.0), 0.0)


class Decomposition(NamedTuple):
    cross_entropy: float
    kl_term: float
    refinement: float
    residual: float
    finite: bool


def decomposition_check(forecasts, labels, weights=None) -> Decomposition:
    """Split the cross entropy of discrete forecasts into a calibration and a refinement term.

    Per group of identical forecasts ``f`` with empirical label distribution
    ``q``: ``H(q, f) = KL(q || f) + H(q)``. The KL term vanishes exactly when
    every group is calibrated.
    """
    F = _as_forecasts(forecasts)
    y = np.asarray(labels, dtype=np.int64)
    w = _weights(y, weights)
    K = F.shape[1]
    values, groups = group_by_value(F)
    n_groups = values.shape[0]
    W = np.bincount(groups, weights=w, minlength=n_groups)
    Q = np.zeros((n_groups, K))
    np.add.at(Q, groups, np.eye(K)[y] * w[:, None])
    live = W > 0
    values, W, Q = values[live], W[live], Q[live] / W[live, None]
    share = W / W.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        qlogq = np.where(Q > 0, Q * np.log(np.where(Q > 0, Q, 1.0)), 0.0)
        qlogf = np.where(Q > 0, Q * np.log(values), 0.0)
    refinement = float(-np.sum(share * qlogq.sum(axis=1)))
    kl = float(np.sum(share * (qlogq - qlogf).sum(axis=1)))
    H = cross_entropy(F, y, weights=w).value
    finite = bool(np.isfinite(H) and np.isfinite(kl))
    residual = abs(H - kl - refinement) if finite else np.nan
    return Decomposition(H, kl, refinement, residual, finite)


@dataclass
class MetricsReport:
    ece: float
    cross_entropy: float
    regularized_cross_entropy: float
    auc_or_vus: Optional[float]
    n_bins_or_leaves: int
    K: int
    ece_kind: str = "discrete"
    finite: bool = True

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not np.isfinite(v):
                return str(v)
            return v

        return json.dumps({k: clean(v) for k, v in asdict(self).items()}, sort_keys=True)

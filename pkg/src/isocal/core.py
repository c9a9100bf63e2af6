"""Forecast datasets, simplex splitting and CSV ingestion.

Class labels are 0-based everywhere in the Python API (``0 .. K-1``). The CSV
format uses 1-based labels, the conversion happens in :func:`load_csv` and
:func:`save_csv`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SUM_TOL = 1e-9
INGEST_TOL = 1e-6


class DataError(ValueError):
    """Invalid input data (malformed CSV, labels out of range, ...)."""


@dataclass(frozen=True)
class LabeledForecast:
    p: np.ndarray
    y: int
    w: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise DataError("forecast must be a vector with at least 2 entries")
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > SUM_TOL:
            raise DataError(f"forecast {p} is not on the probability simplex")
        if not 0 <= self.y < p.size:
            raise DataError(f"label {self.y} outside 0..{p.size - 1}")
        if self.w < 0:
            raise DataError("weight must be nonnegative")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class AffineThreshold:
    """A point of the affine plane ``{x : sum(x) = 1}`` used to split the simplex."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1 or g.size < 2:
            raise ValueError("threshold must be a vector with at least 2 entries")
        if abs(g.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"threshold {g} does not sum to 1")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def scalar(cls, t: float) -> "AffineThreshold":
        """Binary threshold: class-2 score ``<= t`` goes to region 0."""
        return cls(np.array([1.0 - t, t]))

    @property
    def K(self) -> int:
        return self.gamma.size


@dataclass(frozen=True)
class Dataset:
    """Forecasts ``P`` (n, K) on the simplex with labels ``y`` and weights ``w``."""

    P: np.ndarray
    y: np.ndarray
    w: np.ndarray = field(default=None)

    def __post_init__(self):
        P = np.array(self.P, dtype=float, copy=True)
        if P.ndim != 2 or P.shape[0] == 0:
            raise DataError("dataset must be a nonempty (n, K) array")
        if P.shape[1] < 2:
            raise DataError("need at least K=2 classes")
        y = np.array(self.y, dtype=np.int64, copy=True)
        if y.shape != (P.shape[0],):
            raise DataError("labels must have one entry per forecast")
        if np.any(y < 0) or np.any(y >= P.shape[1]):
            raise DataError(f"labels must lie in 0..{P.shape[1] - 1}")
        if self.w is None:
            w = np.ones(P.shape[0])
        else:
            w = np.array(self.w, dtype=float, copy=True)
            if w.shape != y.shape:
                raise DataError("weights must have one entry per forecast")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DataError("weights must be finite and nonnegative")
        if np.any(P < 0) or np.any(P > 1) or np.any(np.abs(P.sum(axis=1) - 1) > SUM_TOL):
            raise DataError("every forecast must lie on the probability simplex")
        for a in (P, y, w):
            a.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def K(self) -> int:
        return self.P.shape[1]

    @property
    def scores(self) -> np.ndarray:
        """Class-2 probability, the scalar score of a binary dataset."""
        return self.P[:, 1]

    def onehot(self) -> np.ndarray:
        return np.eye(self.K)[self.y]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.P[idx], self.y[idx], self.w[idx])

    def samples(self) -> list[LabeledForecast]:
        return [LabeledForecast(p, int(y), float(w)) for p, y, w in zip(self.P, self.y, self.w)]

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledForecast]) -> "Dataset":
        if not samples:
            raise DataError("dataset must be nonempty")
        K = {s.p.size for s in samples}
        if len(K) != 1:
            raise DataError("all samples must share the same number of classes")
        return cls(np.stack([s.p for s in samples]), [s.y for s in samples], [s.w for s in samples])

    @classmethod
    def binary(cls, scores, labels, weights=None) -> "Dataset":
        s = np.asarray(scores, dtype=float)
        return cls(np.column_stack([1.0 - s, s]), labels, weights)


def as_matrix(gammas) -> np.ndarray:
    """Stack thresholds (AffineThreshold objects or raw vectors) into a (T, K) array."""
    if isinstance(gammas, np.ndarray):
        G = np.asarray(gammas, dtype=float)
        return G[None, :] if G.ndim == 1 else G
    if isinstance(gammas, AffineThreshold):
        return gammas.gamma[None, :]
    rows = [g.gamma if isinstance(g, AffineThreshold) else np.asarray(g, dtype=float) for g in gammas]
    if not rows:
        return np.empty((0, 0))
    return np.stack(rows)


def assign_region(p, gamma) -> int:
    """Region index of ``p`` under the split around ``gamma`` (lowest index wins ties)."""
    p = np.asarray(p, dtype=float)
    g = gamma.gamma if isinstance(gamma, AffineThreshold) else np.asarray(gamma, dtype=float)
    if p.shape != g.shape or p.ndim != 1:
        raise ValueError(f"dimension mismatch: forecast {p.shape} vs threshold {g.shape}")
    return int(np.argmax(p - g))


def assign_regions(P: np.ndarray, gamma) -> np.ndarray:
    """Vectorised :func:`assign_region` over the rows of ``P``."""
    g = gamma.gamma if isinstance(gamma, AffineThreshold) else np.asarray(gamma, dtype=float)
    if P.ndim != 2 or P.shape[1] != g.shape[-1]:
        raise ValueError(f"dimension mismatch: forecasts {P.shape} vs threshold {g.shape}")
    return np.argmax(P - g, axis=-1)


def assign_regions_many(P: np.ndarray, G: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Region labels for every (threshold, forecast) pair, shape (T, n), int8."""
    T = G.shape[0]
    out = np.empty((T, P.shape[0]), dtype=np.int8)
    for s in range(0, T, chunk):
        out[s:s + chunk] = np.argmax(P[None, :, :] - G[s:s + chunk, None, :], axis=2)
    return out


def partition_samples(ds: Dataset, gamma, restrict: Iterable[int] | None = None) -> list[np.ndarray]:
    """Split sample indices (optionally only ``restrict``) into K sets by region."""
    idx = np.arange(ds.n) if restrict is None else np.asarray(sorted(set(restrict)), dtype=np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] >= ds.n):
        raise IndexError("restricted index outside dataset")
    regions = assign_regions(ds.P[idx], gamma) if idx.size else np.empty(0, dtype=np.int64)
    return [idx[regions == k] for k in range(ds.K)]


def corner_thresholds(K: int) -> np.ndarray:
    """K thresholds that send the whole simplex to region k = 0 .. K-1 respectively."""
    G = np.full((K, K), 2.0 / (K - 1))
    np.fill_diagonal(G, -1.0)
    return G


def synth_simplex(n: int, K: int, noise: float, seed=None) -> Dataset:
    """Uniform forecasts on the simplex labelled by their argmax, flipped with prob. ``noise``.

    A flipped label is drawn uniformly from the other K-1 classes.
    """
    if n < 1 or K < 2:
        raise ValueError("need n >= 1 and K >= 2")
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must lie in [0, 1], got {noise}")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(K), size=n)
    y = np.argmax(P, axis=1)
    flip = rng.random(n) < noise
    shift = rng.integers(1, K, size=n)
    y = np.where(flip, (y + shift) % K, y)
    return Dataset(P, y)


def load_csv(path) -> Dataset:
    """Read a dataset with header ``p1,...,pK,y[,w]``; labels are 1-based in the file."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_w = bool(header) and header[-1] == "w"
        pcols = header[:-2] if has_w else header[:-1]
        K = len(pcols)
        if K < 2 or pcols != [f"p{k}" for k in range(1, K + 1)] or header[K] != "y":
            raise DataError(f"{path}: malformed header {','.join(header)!r}; expected p1,...,pK,y[,w]")
        rows_p, rows_y, rows_w = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row[:K]]
                label = float(row[K])
                weight = float(row[K + 1]) if has_w else 1.0
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric cell") from None
            p = np.array(vals)
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise DataError(f"{path}: row {lineno}: probabilities must be finite and nonnegative")
            if label != int(label) or not 1 <= label <= K:
                raise DataError(f"{path}: row {lineno}: label {row[K]} outside 1..{K}")
            if not math.isfinite(weight) or weight < 0:
                raise DataError(f"{path}: row {lineno}: negative or invalid weight {row[K + 1]}")
            dev = abs(p.sum() - 1.0)
            if dev > INGEST_TOL:
                raise DataError(f"{path}: row {lineno}: probabilities sum to {p.sum():.12g}, "
                                f"deviation {dev:.3g} > {INGEST_TOL:g}")
            if dev > SUM_TOL:  # ulp-level deviations are left alone so save/load round-trips
                p = p / p.sum()
            rows_p.append(p)
            rows_y.append(int(label) - 1)
            rows_w.append(weight)
    if not rows_p:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.clip(np.array(rows_p), 0.0, 1.0), rows_y, rows_w)


def save_csv(ds: Dataset, path, weights: bool | None = None) -> None:
    """Write ``ds`` in the format read by :func:`load_csv` (floats at round-trip precision)."""
    if weights is None:
        weights = bool(np.any(ds.w != 1.0))
    header = [f"p{k}" for k in range(1, ds.K + 1)] + ["y"] + (["w"] if weights else [])
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for p, y, w in zip(ds.P, ds.y, ds.w):
            row = [repr(float(v)) for v in p] + [str(int(y) + 1)]
            if weights:
                row.append(repr(float(w)))
            out.writerow(row)


def write_matrix_csv(path, M: np.ndarray, prefix: str) -> None:
    """Write rows of ``M`` with header ``<prefix>1..<prefix>K``."""
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"{prefix}{k}" for k in range(1, M.shape[1] + 1)])
        for row in M:
            out.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path, prefix: str | None = None) -> np.ndarray:
    """Read a headed numeric CSV (e.g. calibrated forecasts ``r1..rK``)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if prefix is not None and header != [f"{prefix}{k}" for k in range(1, len(header) + 1)]:
            raise DataError(f"{path}: malformed header {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric cell") from None
            if len(rows[-1]) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} fields")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows)

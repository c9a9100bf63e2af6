import numpy as np
from hypothesis import strategies as st

from isocal.core import Dataset

unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def binary_problems(draw, min_n=1, max_n=30, ties=True):
    """(scores, 0/1 targets, positive weights); scores drawn from a small grid when ``ties``."""
    n = draw(st.integers(min_n, max_n))
    if ties:
        scores = draw(st.lists(st.integers(0, 8).map(lambda k: k / 8), min_size=n, max_size=n))
    else:
        scores = draw(st.lists(unit, min_size=n, max_size=n))
    targets = draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=n, max_size=n))
    weights = draw(st.lists(st.floats(0.05, 2.0), min_size=n, max_size=n))
    return np.array(scores), np.array(targets), np.array(weights)


@st.composite
def simplex_datasets(draw, K=None, min_n=2, max_n=40, all_classes=False):
    K = draw(st.integers(2, 4)) if K is None else K
    n = draw(st.integers(max(min_n, K if all_classes else 1), max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(K), size=n)
    if draw(st.booleans()):
        P = np.round(P * 4) / 4
        P = np.where(P.sum(axis=1, keepdims=True) == 1, P, rng.dirichlet(np.ones(K), size=n))
    y = rng.integers(0, K, size=n)
    if all_classes:
        y[:K] = np.arange(K)
    return Dataset(P, y)

import numpy as np
import pytest
from hypothesis import given, settings
from sklearn.isotonic import IsotonicRegression

from isocal.pav import IsotonicModel, pav_fit, pav_oracle, pav_predict, pav_values

from strategies import binary_problems


def test_already_isotonic_merges_equal_targets():
    m = pav_fit([0.1, 0.5, 0.9], [0, 1, 1])
    assert m.values.tolist() == [0.0, 1.0]
    assert m.counts.tolist() == [1, 2]


@pytest.mark.parametrize("scores, y, w, expected", [
    ([0.1, 0.2, 0.3], [1, 0, 1], None, [0.5, 0.5, 1.0]),
    ([0.1, 0.2, 0.3], [1, 0, 0], None, [1 / 3] * 3),
    ([0.1, 0.2], [1, 0], [1, 2], [1 / 3, 1 / 3]),
])
def test_small_fits(scores, y, w, expected):
    np.testing.assert_allclose(pav_values(scores, y, w), expected, atol=1e-15)
    np.testing.assert_allclose(pav_oracle(scores, y, w), expected, atol=1e-15)


def test_predict_is_total():
    m = pav_fit([0.1, 0.2, 0.3], [1, 0, 1])
    assert pav_predict(m, 0.15) == 0.5
    assert pav_predict(m, -5) == m.values[0]
    assert pav_predict(m, 5) == m.values[-1]
    assert m.boundaries[0] == -np.inf and m.boundaries[-1] == np.inf


def test_input_errors():
    with pytest.raises(ValueError):
        pav_fit([], [])
    with pytest.raises(ValueError):
        pav_fit([0.1, 0.2], [0, 1], [1, 0])
    with pytest.warns(UserWarning):
        pav_fit([0.1, 0.2], [0, 2])
    with pytest.raises(ValueError):
        pav_oracle(np.arange(13) / 13, np.zeros(13))


def test_oracle_single_sample():
    assert pav_oracle([0.4], [1.0]).tolist() == [1.0]


def test_model_rejects_decreasing_values():
    with pytest.raises(ValueError):
        IsotonicModel(np.array([-np.inf, 0.5, np.inf]), np.array([0.6, 0.4]), np.array([1, 1]))


@given(binary_problems(max_n=10))
def test_matches_exhaustive_oracle(problem):
    s, y, w = problem
    np.testing.assert_allclose(pav_values(s, y, w), pav_oracle(s, y, w), rtol=0, atol=1e-12)


@given(binary_problems(max_n=60))
def test_matches_sklearn(problem):
    s, y, w = problem
    ref = IsotonicRegression().fit(s, y, sample_weight=w).predict(s)
    np.testing.assert_allclose(pav_values(s, y, w), ref, rtol=0, atol=1e-12)


@given(binary_problems(max_n=60))
def test_structural_invariants(problem):
    s, y, w = problem
    m = pav_fit(s, y, w)
    r = m.predict(s)
    assert np.all(np.diff(m.values) >= 0)
    assert np.all(np.diff(m.boundaries) > 0)
    assert abs(np.sum(w * r) - np.sum(w * y)) <= 1e-12 * max(1.0, np.sum(w))
    bins = m.bin_index(s)
    for j in range(m.n_bins):
        sel = bins == j
        assert np.isclose(np.sum(w[sel] * y[sel]) / np.sum(w[sel]), m.values[j], rtol=0, atol=1e-12)
        assert sel.sum() == m.counts[j]


@settings(max_examples=50)
@given(binary_problems(max_n=40))
def test_tied_scores_permutation_invariance(problem):
    s, y, w = problem
    rng = np.random.default_rng(0)
    order = rng.permutation(s.size)
    a, b = pav_fit(s, y, w), pav_fit(s[order], y[order], w[order])
    np.testing.assert_array_equal(a.boundaries, b.boundaries)
    np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-12)


@given(binary_problems(max_n=40))
def test_bin_values_minimize_cross_entropy(problem):
    s, y, w = problem
    m = pav_fit(s, y, w)
    bins = m.bin_index(s)
    for j in range(m.n_bins):
        sel = bins == j
        v = m.values[j]

        def ce(q):
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(y[sel] == 1, -np.log(q), -np.log1p(-q))
            return float(np.sum(w[sel] * terms))

        base = ce(v)
        for q in (v - 0.05, v + 0.05, 0.5):
            if 0 < q < 1:
                assert ce(q) >= base - 1e-12

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphacomb import FactorModel, SingularDesignError, ValidationError
from alphacomb.regress import (
    exact_factor_weights,
    regression_limit_weights,
    schur_pivots,
    weighted_residuals,
)


def _lstsq_resid(e, lo, z):
    sq = np.sqrt(z)
    coef = np.linalg.lstsq(lo * sq[:, None], e * sq, rcond=None)[0]
    return e - lo @ coef


@settings(max_examples=25, deadline=None)
@given(st.integers(20, 300), st.integers(1, 8), st.integers(0, 10_000))
def test_weighted_residuals_match_lstsq(n, k, seed):
    rng = np.random.default_rng(seed)
    lo = rng.normal(size=(n, k))
    e = rng.normal(size=n)
    z = rng.uniform(0.1, 10, n)
    res = weighted_residuals(e, lo, z, block_rows=17)
    assert np.allclose(res.residuals, _lstsq_resid(e, lo, z), atol=1e-10)
    # weighted orthogonality of the residual to every column
    assert np.abs(lo.T @ (z * res.residuals)).max() < 1e-9 * np.linalg.norm(lo) * np.linalg.norm(e)


def test_zero_columns_and_shape_errors():
    e = np.arange(5.0)
    assert np.array_equal(weighted_residuals(e, np.zeros((5, 0))).residuals, e)
    with pytest.raises(ValidationError):
        weighted_residuals(e, np.ones((4, 1)))
    with pytest.raises(ValidationError):
        weighted_residuals(e, np.ones((5, 5)))
    with pytest.raises(ValidationError):
        weighted_residuals(e, np.ones((5, 1)), z=-np.ones(5))


def test_singular_design():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(50, 2))
    lo = np.column_stack([a, a[:, 0] - 2 * a[:, 1]])
    with pytest.raises(SingularDesignError) as info:
        weighted_residuals(rng.normal(size=50), lo)
    assert info.value.column == 2
    res = weighted_residuals(rng.normal(size=50), lo, drop_dependent=True)
    assert list(res.columns) == [0, 1] and list(res.dropped) == [2]


def test_schur_pivots_scale_free():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(30, 3)) * [1e6, 1.0, 1e-6]
    piv = schur_pivots(a.T @ a)
    assert np.allclose(piv, 1.0, atol=0.9) and np.all(piv > 0)


def test_exact_weights_k0_and_dense():
    rng = np.random.default_rng(2)
    n = 300
    xi = rng.uniform(0.5, 2, n)
    e = rng.normal(size=n)
    w0 = exact_factor_weights(e, FactorModel(xi, np.zeros((n, 0)), np.zeros((0, 0))))
    assert np.allclose(w0.weights, (e / xi**2) / np.abs(e / xi**2).sum())
    fm = FactorModel(xi, rng.normal(size=(n, 3)), np.diag([1.0, 0.5, 0.0]))
    gamma = np.diag(xi**2) + fm.omega @ fm.phi @ fm.omega.T
    dense = np.linalg.solve(gamma, e)
    assert np.allclose(exact_factor_weights(e, fm).weights, dense / np.abs(dense).sum(), atol=1e-13)


def test_regression_limit_needs_positive_xi():
    fm = FactorModel(np.array([1.0, 0.0, 1.0]), np.ones((3, 1)), np.eye(1))
    with pytest.raises(ValidationError):
        regression_limit_weights(np.ones(3), fm)
    with pytest.raises(ValidationError):
        exact_factor_weights(np.ones(3), fm)


def test_regression_limit_gap_shrinks_with_strength():
    rng = np.random.default_rng(3)
    n = 2000
    xi = rng.uniform(0.5, 1, n)
    base = rng.normal(0.3, 0.3, (n, 2))
    e = rng.normal(size=n)
    gaps = []
    for s in (0.1, 1.0, 10.0):
        fm = FactorModel(xi, s * base, np.eye(2))
        a, b = exact_factor_weights(e, fm), regression_limit_weights(e, fm)
        gaps.append(np.abs(a.weights - b.weights).max())
    assert gaps[0] > gaps[1] > gaps[2]


def test_e_in_span_gives_zero_residuals():
    rng = np.random.default_rng(4)
    lo = rng.normal(size=(200, 5))
    e = lo @ rng.normal(size=5)
    assert np.abs(weighted_residuals(e, lo, rng.uniform(0.5, 2, 200)).residuals).max() < 1e-10


def test_weak_factors_approach_benchmark():
    rng = np.random.default_rng(5)
    n = 1000
    xi = rng.uniform(0.5, 2, n)
    e = rng.lognormal(np.log(0.05), 0.5, n)
    fm = FactorModel(xi, 1e-3 * rng.normal(size=(n, 3)), np.eye(3))
    w = exact_factor_weights(e, fm)
    assert w.info["q_min"] < 0.01
    bench = (e / xi**2) / np.abs(e / xi**2).sum()
    assert np.abs(w.weights - bench).max() / np.abs(bench).max() < 0.02


def test_intercept_only_regression_demeans():
    e = np.array([1.0, 4.0, 2.0, 7.0])
    assert np.allclose(weighted_residuals(e, np.ones((4, 1))).residuals, e - e.mean())

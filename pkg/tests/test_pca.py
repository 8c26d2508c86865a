from __future__ import annotations

import warnings

import numpy as np
import pytest

from alphacomb import ReturnsPanel, ValidationError
from alphacomb.pca import PcDecomposition, correlation_pcs, pc_specific_risks, span_equivalence
from alphacomb.stats import NormalizedLoadings, normalize_and_trim, sample_variances, serial_demean


def _y(n=150, t=16, seed=0):
    rng = np.random.default_rng(seed)
    p = ReturnsPanel(rng.normal(size=(n, t)) * rng.uniform(0.5, 2, (n, 1)) + 0.7 * rng.normal(size=(1, t)))
    x = serial_demean(p)
    sigma = np.sqrt(sample_variances(x))
    return normalize_and_trim(x, sigma, False), sigma


def _psi(y):
    m = y.y.shape[1]
    return (y.y @ y.y.T + np.outer(y.y.sum(1), y.y.sum(1))) / m


def test_pcs_match_dense_eigh():
    y, _ = _y()
    pcs = correlation_pcs(y)
    vals, vecs = np.linalg.eigh(_psi(y))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    m = y.y.shape[1]
    assert np.allclose(pcs.eigenvalues, vals[:m], atol=1e-10)
    for a in range(m):
        v = vecs[:, a] * np.sign(vecs[np.argmax(np.abs(vecs[:, a])), a])
        assert np.allclose(pcs.components[:, a], v, atol=1e-8)
    assert np.allclose(pcs.components.T @ pcs.components, np.eye(m), atol=1e-10)
    # largest-magnitude entry positive, theta from V1
    assert np.all(pcs.components[np.abs(pcs.components).argmax(0), range(m)] > 0)
    assert pcs.theta == pytest.approx(pcs.components[:, 0].sum() / np.sqrt(150))


def test_pcs_rank_deficient_when_n_small():
    y, _ = _y(n=8, t=16)
    pcs = correlation_pcs(y)
    assert pcs.eigenvalues.size == 8
    assert np.allclose(pcs.components.T @ pcs.components, np.eye(8), atol=1e-10)


def test_pcs_refuse_demeaned():
    with pytest.raises(ValidationError):
        correlation_pcs(NormalizedLoadings(np.ones((4, 2)), demeaned=True))


def test_head_and_tail_agree_and_match_dense():
    y, sigma = _y(seed=2)
    pcs = correlation_pcs(y)
    head = pc_specific_risks(pcs, sigma, 3, 0.7, "head")
    tail = pc_specific_risks(pcs, sigma, 3, 0.7, "tail")
    assert np.abs(head - tail).max() < 1e-10
    vals, vecs = np.linalg.eigh(_psi(y))
    dense = 0.7 * sigma**2 * (1 - (vecs[:, -3:] ** 2) @ vals[-3:])
    assert np.allclose(head, dense, atol=1e-10)


def test_pc_specific_risks_bounds_and_warning():
    y, sigma = _y(n=20, t=6, seed=3)
    pcs = correlation_pcs(y)
    with pytest.raises(ValidationError):
        pc_specific_risks(pcs, sigma, 0, 0.5)
    with pytest.raises(ValidationError):
        pc_specific_risks(pcs, sigma, 1, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pc_specific_risks(pcs, sigma, 2, 0.5)
    # inflated eigenvalues push the head sum past the unit diagonal
    inflated = PcDecomposition(pcs.eigenvalues * 10, pcs.components, pcs.theta)
    with pytest.warns(RuntimeWarning, match="nonpositive"):
        xi2 = pc_specific_risks(inflated, sigma, 1, 0.5)
    assert np.any(xi2 <= 0)


def test_span_equivalence_small():
    y, _ = _y(seed=4)
    e = np.random.default_rng(4).normal(size=150)
    rep = span_equivalence(y, correlation_pcs(y), e)
    assert rep.max_abs_diff < 1e-9
    assert np.isfinite(rep.mode_variant_diff)


def test_identical_rows_rank_one():
    row = np.array([[0.5, -1.0, 0.25, 1.5]])
    m = row.shape[1]
    row = row / np.sqrt((row @ row.T + row.sum() ** 2) / m)
    y = NormalizedLoadings(np.vstack([row, row]))
    pcs = correlation_pcs(y)
    assert pcs.eigenvalues[0] == pytest.approx(2.0)
    assert np.allclose(pcs.components[:, 0], [1 / np.sqrt(2)] * 2)
    with pytest.warns(RuntimeWarning):
        xi2 = pc_specific_risks(pcs, np.ones(2), 1, 1.0)
    assert np.allclose(xi2, 0.0, atol=1e-12)


def test_last_component_tail():
    y, sigma = _y(n=200, t=9, seed=9)
    pcs = correlation_pcs(y)
    m = pcs.eigenvalues.size
    tail = pc_specific_risks(pcs, sigma, m - 1, 0.5, "tail")
    assert np.allclose(tail, 0.5 * sigma**2 * pcs.eigenvalues[-1] * pcs.components[:, -1] ** 2)


def test_span_equivalence_e_in_span():
    y, _ = _y(seed=10)
    e = y.y @ np.random.default_rng(1).normal(size=y.y.shape[1])
    rep = span_equivalence(y, correlation_pcs(y), e)
    assert rep.max_abs_diff < 1e-9

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphacomb import FactorModel, NotPositiveDefiniteError, ReturnsPanel, ValidationError
from alphacomb.panel import PositionHistory
from alphacomb.riskmodel import (
    ShrinkageSpec,
    dense_covariance,
    diagonal_target,
    k1_sufficient_condition,
    lambda_star,
    orthonormalize,
    position_loadings,
    project_fcm,
    psd_factor,
    shrink_scm,
    specific_risks,
    style_loadings,
    uniform_correlation_target,
)
from alphacomb.stats import normalize_and_trim, sample_variances, serial_demean


def _y(n=200, t=21, seed=0):
    rng = np.random.default_rng(seed)
    p = ReturnsPanel(rng.normal(size=(n, t)) + 0.5 * rng.normal(size=(1, t)))
    x = serial_demean(p)
    return normalize_and_trim(x, np.sqrt(sample_variances(x)), False), p


def test_factor_model_validation():
    with pytest.raises(ValidationError):
        FactorModel(np.ones(3), np.ones((3, 2)), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValidationError):
        FactorModel(-np.ones(3), np.ones((3, 1)), np.eye(1))
    fm = FactorModel(np.ones(3), np.ones((3, 1)), 2 * np.eye(1))
    assert np.allclose(fm.diagonal(), 3.0)
    assert np.allclose(dense_covariance(fm), np.eye(3) + 2.0)


def test_psd_factor():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    f = psd_factor(a)
    assert np.allclose(f @ f.T, a)
    singular = np.ones((2, 2))
    f = psd_factor(singular)
    assert np.allclose(f @ f.T, singular)
    with pytest.raises(NotPositiveDefiniteError):
        psd_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_orthonormalize():
    rng = np.random.default_rng(1)
    om = rng.normal(size=(100, 4)) * [1e3, 1, 1e-2, 5]
    o = orthonormalize(om)
    assert np.allclose(o.T @ o, np.eye(4), atol=1e-12)
    # same span: projection of om onto o reproduces om
    assert np.allclose(o @ (o.T @ om), om, atol=1e-9 * np.abs(om).max())
    dep = np.column_stack([om[:, 0], om[:, 1], om[:, 0] + om[:, 1]])
    with pytest.raises(ValidationError, match="dependent column: 2"):
        orthonormalize(dep)


def test_project_fcm_matches_dense():
    y, _ = _y()
    rng = np.random.default_rng(2)
    o = orthonormalize(rng.normal(size=(200, 3)))
    m = y.y.shape[1]
    psi = (y.y @ y.y.T + np.outer(y.y.sum(1), y.y.sum(1))) / m
    assert np.allclose(project_fcm(o, y), o.T @ psi @ o, atol=1e-12)
    rep = specific_risks(o, project_fcm(o, y))
    assert np.allclose(rep.xi_tilde_sq, 1 - np.diag(o @ (o.T @ psi @ o) @ o.T), atol=1e-12)
    assert rep.kappa is None


def test_k1_sufficient_condition():
    y, _ = _y(seed=3)
    n = y.y.shape[0]
    beta = np.full(n, 1 / np.sqrt(n))
    passed, lam = k1_sufficient_condition(beta, y)
    assert passed.all()
    assert lam == pytest.approx(lambda_star(y))
    spiky = np.zeros(n)
    spiky[0] = 1.0
    passed, _ = k1_sufficient_condition(spiky, y)
    assert not passed[0] and passed[1:].all()
    # passing everywhere means positive specific risks
    rep = specific_risks(beta[:, None], project_fcm(beta[:, None], y))
    assert rep.ok and rep.kappa == pytest.approx(lam)
    with pytest.raises(ValidationError):
        k1_sufficient_condition(2 * beta, y)


def test_shrinkage_diagonal_target_dense():
    _, p = _y(n=60, t=11, seed=4)
    x = serial_demean(p)
    scm = x.x @ x.x.T / x.m
    for zeta in (0.0, 0.25, 1.0):
        fm = shrink_scm(x, ShrinkageSpec(zeta, diagonal_target(x)))
        want = (1 - zeta) * scm + zeta * np.diag(np.diag(scm))
        assert np.allclose(dense_covariance(fm), want, atol=1e-12)


def test_shrinkage_uniform_target_and_mismatch():
    _, p = _y(n=40, t=9, seed=5)
    x = serial_demean(p)
    sigma = np.sqrt(sample_variances(x))
    tgt = uniform_correlation_target(sigma, 0.2)
    fm = shrink_scm(x, ShrinkageSpec(0.5, tgt))
    want = 0.5 * x.x @ x.x.T / x.m + 0.5 * np.outer(sigma, sigma) * (0.8 * np.eye(40) + 0.2)
    assert np.allclose(dense_covariance(fm), want, atol=1e-12)
    with pytest.raises(ValidationError, match="diagonal"):
        shrink_scm(x, ShrinkageSpec(0.5, uniform_correlation_target(2 * sigma, 0.2)))
    with pytest.raises(ValidationError):
        ShrinkageSpec(1.5, tgt)


def test_position_loadings():
    pos = PositionHistory(
        [0, 0, 0, 1, 1], [0, 1, 0, 1, 1], [0, 0, 1, 0, 1], [0.5, -0.5, -1.0, 1.0, 1.0],
        ("a", "b"), ("x", "y", "z"), ("t1", "t2"),
    )
    pl = position_loadings(pos, scale=2.0)
    assert pl.instrument_ids == ("x", "y") and pl.dropped == ("z",)
    assert np.allclose(pl.matrix, [[1.5, 0.5], [0.0, 2.0]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=30))
def test_style_loadings_zero_mean(v):
    s = style_loadings(np.array(v))
    assert abs(s.mean()) < 1e-12
    assert np.allclose(np.exp(s[:, 0]) * np.exp(np.log(v).mean()), v, rtol=1e-10)


def test_style_loadings_rejects_nonpositive():
    with pytest.raises(ValidationError, match="momentum.*index 1"):
        style_loadings(np.ones(3), momentum=np.array([1.0, -2.0, 3.0]))
    assert style_loadings(np.ones(3), turnover=np.arange(1.0, 4.0)).shape == (3, 2)


def test_dense_and_scaled_examples():
    from alphacomb.riskmodel import scaled_loadings

    assert np.allclose(dense_covariance(FactorModel(np.array([1.0, 2.0]), np.zeros((2, 0)), np.zeros((0, 0)))),
                       np.diag([1.0, 4.0]))
    rho = 0.3
    fm = FactorModel(np.ones(2), np.ones((2, 1)), np.array([[rho]]))
    assert np.allclose(dense_covariance(fm), [[1 + rho, rho], [rho, 1 + rho]])
    rng = np.random.default_rng(0)
    xi, om = rng.uniform(0.5, 2, 6), rng.normal(size=(6, 2))
    assert np.allclose(scaled_loadings(FactorModel(xi, om, np.eye(2))), om / xi[:, None])
    assert np.allclose(scaled_loadings(FactorModel(xi, om[:, :1], np.array([[4.0]]))), 2 * om[:, :1] / xi[:, None])
    a = rng.normal(size=(2, 2))
    fm = FactorModel(xi, om, a @ a.T + 0.1 * np.eye(2))
    beta = scaled_loadings(fm)
    assert np.allclose(np.eye(6) + beta @ beta.T, dense_covariance(fm) / np.outer(xi, xi))


def test_orthonormalize_examples():
    q = np.linalg.qr(np.random.default_rng(1).normal(size=(10, 3)))[0]
    assert np.abs(orthonormalize(q) - q).max() < 1e-12
    v = np.arange(1.0, 6.0)
    assert np.allclose(orthonormalize(v[:, None])[:, 0], v / np.linalg.norm(v))


def test_fcm_examples():
    y, _ = _y(n=30, t=11, seed=6)
    m = y.y.shape[1]
    psi = (y.y @ y.y.T + np.outer(y.y.sum(1), y.y.sum(1))) / m
    full = project_fcm(np.eye(30), y)
    assert np.allclose(np.linalg.eigvalsh(full), np.linalg.eigvalsh(psi), atol=1e-9)
    ones = np.full((30, 1), 1 / np.sqrt(30))
    assert project_fcm(ones, y)[0, 0] == pytest.approx(psi.mean() * 30)
    rep = specific_risks(np.eye(30)[:, :3], np.zeros((3, 3)))
    assert np.array_equal(rep.xi_tilde_sq, np.ones(30))


def test_k1_violation_flagged_in_advance():
    y, _ = _y(n=100, t=21, seed=7)
    n = 100
    beta = np.full(n, 0.05)
    beta[0] = 0.0
    beta[0] = np.sqrt(1 - beta @ beta)
    passed, lam = k1_sufficient_condition(beta, y)
    assert not passed[0]
    rep = specific_risks(beta[:, None], project_fcm(beta[:, None], y))
    assert set(rep.violations) <= {0}


def test_k1_single_alpha_boundary():
    row = np.array([[1.0, -0.5, 0.25]])
    m = row.shape[1]
    row = row / np.sqrt((row @ row.T + row.sum() ** 2) / m)
    passed, lam = k1_sufficient_condition(np.array([1.0]), row)
    assert lam == pytest.approx(1.0) and passed.all()


def test_shrinkage_full_target():
    _, p = _y(n=20, t=9, seed=8)
    x = serial_demean(p)
    sigma = np.sqrt(sample_variances(x))
    tgt = uniform_correlation_target(sigma, 0.4)
    fm = shrink_scm(x, ShrinkageSpec(1.0, tgt))
    assert np.allclose(dense_covariance(fm), dense_covariance(tgt), atol=1e-14)


def test_position_loading_examples():
    pos = PositionHistory([0, 0], [0, 1], [0, 0], [0.25, -0.75], ("a",), ("x", "y"), ("t",))
    assert np.allclose(position_loadings(pos).matrix, [[0.25, 0.75]])
    alt = PositionHistory(
        [0, 0, 0, 0], [0, 1, 0, 1], [0, 0, 1, 1], [0.5, 0.5, -0.5, 0.5], ("a",), ("s", "u"), ("t1", "t2")
    )
    assert position_loadings(alt).matrix[0, 0] == pytest.approx(0.5)


def test_style_loading_examples():
    assert np.array_equal(style_loadings(np.full(4, 0.3))[:, 0], np.zeros(4))
    assert np.allclose(style_loadings(np.array([np.e, 1 / np.e]))[:, 0], [1.0, -1.0])

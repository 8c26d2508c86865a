"""Weighted cross-sectional regression and the factor-model weight formulas.

The solver forms the m x m Gram matrix in one blocked pass over the rows,
factors it with Cholesky after unit-diagonal scaling, and computes
residuals in a second pass.  Cost is O(m^2 N + m^3).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from ._blocks import BLOCK_ROWS, map_blocks, tree_sum
from .errors import NotPositiveDefiniteError, SingularDesignError, ValidationError
from .panel import ExpectedReturns, WeightVector, as_vector
from .riskmodel import FactorModel, psd_factor, scaled_loadings
from .stats import GramMatrix

MAX_CONDITION = 1e12
DEPENDENT_TOL = 1e-10


@dataclass(frozen=True)
class RegressionResult:
    residuals: np.ndarray
    coefficients: np.ndarray
    gram: GramMatrix
    condition_estimate: float
    columns: np.ndarray  # indices of the loading columns actually used

    @property
    def dropped(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.gram.size), self.columns)


def schur_pivots(g: np.ndarray, tol: float = DEPENDENT_TOL) -> np.ndarray:
    """Relative Cholesky pivots of a PSD matrix, taken in column order.

    Pivot k is the squared sine of the angle between column k and the span of
    the earlier columns that were kept; columns with pivot <= ``tol`` are
    treated as dependent and not eliminated.
    """
    s = np.array(g, dtype=np.float64, copy=True)
    n = s.shape[0]
    d0 = np.diag(s).copy()
    piv = np.zeros(n)
    for k in range(n):
        p = s[k, k]
        piv[k] = p / d0[k] if d0[k] > 0 else 0.0
        if piv[k] <= tol or p <= 0:
            continue
        v = s[k, k:] / np.sqrt(p)
        s[k:, k:] -= np.outer(v, v)
    return piv


def _solve_gram(g: np.ndarray, rhs: np.ndarray, max_condition: float) -> tuple[np.ndarray, float]:
    d = np.sqrt(np.diag(g))
    zero = np.flatnonzero(~(d > 0))
    if zero.size:
        raise SingularDesignError(f"loading column {int(zero[0])} is identically zero", int(zero[0]), np.inf)
    gs = g / np.outer(d, d)
    ev = np.linalg.eigvalsh(gs)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf
    if not cond <= max_condition:
        col = int(np.argmin(schur_pivots(gs, tol=0.0)))
        raise SingularDesignError(
            f"regression design is singular (condition estimate {cond:.3g}); smallest pivot at column {col}",
            col, cond,
        )
    c = sla.cho_solve(sla.cho_factor(gs, lower=True), rhs / d)
    return c / d, cond


def fit_blocks(
    design: Callable[[slice, np.ndarray], None],
    residual: Callable[[slice, np.ndarray, np.ndarray], np.ndarray],
    n: int,
    m: int,
    *,
    threads: int | None = None,
    block_rows: int = BLOCK_ROWS,
    drop_dependent: bool = False,
    max_condition: float = MAX_CONDITION,
) -> RegressionResult:
    """Blocked least squares.

    ``design(block, out)`` writes the (weighted) loadings of a block into
    ``out[:, :m]`` and its target into ``out[:, m]``;
    ``residual(block, coef, cols)`` returns that block's residuals.
    """
    if m == 0:
        res = np.concatenate(map_blocks(lambda b: residual(b, np.zeros(0), np.zeros(0, dtype=np.int64)),
                                        n, threads, block_rows))
        return RegressionResult(res, np.zeros(0), GramMatrix(np.zeros((0, 0))), 1.0, np.zeros(0, dtype=np.int64))
    if m >= n:
        raise ValidationError(f"need fewer loading columns than alphas (m={m}, N={n})")

    def normal_block(b: slice) -> np.ndarray:
        a = np.empty((b.stop - b.start, m + 1))
        design(b, a)
        return a.T @ a

    aug = tree_sum(map_blocks(normal_block, n, threads, block_rows))
    aug = 0.5 * (aug + aug.T)
    g, rhs = aug[:m, :m], aug[:m, m]
    cols = np.arange(m)
    if drop_dependent:
        d = np.sqrt(np.diag(g))
        live = d > 0
        piv = np.zeros(m)
        gs = g[np.ix_(live, live)] / np.outer(d[live], d[live])
        piv[live] = schur_pivots(gs)
        cols = np.flatnonzero(piv > DEPENDENT_TOL)
    coef, cond = _solve_gram(g[np.ix_(cols, cols)], rhs[cols], max_condition)
    res = np.concatenate(map_blocks(lambda b: residual(b, coef, cols), n, threads, block_rows))
    return RegressionResult(res, coef, GramMatrix(g), cond, cols)


def weighted_residuals(
    e: ExpectedReturns | np.ndarray,
    loadings: np.ndarray,
    z: np.ndarray | None = None,
    *,
    threads: int | None = None,
    block_rows: int = BLOCK_ROWS,
    drop_dependent: bool = False,
) -> RegressionResult:
    """Residuals of the regression of E over the loading columns with weights z, no intercept.

    eps = E - L (L^T Z L)^{-1} L^T Z E.  ``z=None`` means unit weights.
    """
    ev = as_vector(e)
    lo = np.asarray(loadings, dtype=np.float64)
    if lo.ndim == 1:
        lo = lo[:, None]
    n, m = lo.shape
    if ev.shape != (n,):
        raise ValidationError(f"expected returns of length {ev.size} vs {n} loading rows")
    sq = None
    if z is not None:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (n,) or not np.all(z > 0):
            raise ValidationError("regression weights must be a positive N-vector")
        sq = np.sqrt(z)

    def design(b: slice, out: np.ndarray) -> None:
        if sq is None:
            out[:, :m] = lo[b]
            out[:, m] = ev[b]
        else:
            np.multiply(lo[b], sq[b, None], out=out[:, :m])
            np.multiply(ev[b], sq[b], out=out[:, m])

    return fit_blocks(
        design,
        lambda b, c, cols: ev[b] - lo[b][:, cols] @ c,
        n, m, threads=threads, block_rows=block_rows, drop_dependent=drop_dependent,
    )


def _model_inputs(e, model: FactorModel) -> np.ndarray:
    ev = as_vector(e)
    if ev.shape != (model.n_alphas,):
        raise ValidationError(f"expected returns of length {ev.size} vs N={model.n_alphas}")
    if not np.all(model.xi > 0):
        raise ValidationError("weights need strictly positive specific risks")
    return ev


def exact_factor_weights(e: ExpectedReturns | np.ndarray, model: FactorModel) -> WeightVector:
    """Gamma^{-1} E through the K x K matrix Q = I + beta^T beta (Woodbury), O(K^2 N)."""
    ev = _model_inputs(e, model)
    xi = model.xi
    et = ev / xi
    k = model.n_factors
    if k == 0:
        return WeightVector.from_raw(et / xi, {"q_min": np.inf})
    beta = scaled_loadings(model)
    q = beta.T @ beta
    try:
        fac = sla.cho_factor(np.eye(k) + q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("I + q is not positive definite; inputs are corrupted") from exc
    raw = (et - beta @ sla.cho_solve(fac, beta.T @ et)) / xi
    return WeightVector.from_raw(raw, {"q_min": float(np.diag(q).min())})


def regression_limit_weights(e: ExpectedReturns | np.ndarray, model: FactorModel, **kw) -> WeightVector:
    """Large-q limit of ``exact_factor_weights``: w = z * eps with z = 1/xi^2.

    ``info['q_min']`` is min_A q_AA, the quantity that must be large for the
    approximation to hold.
    """
    ev = _model_inputs(e, model)
    z = 1.0 / model.xi**2
    k = model.n_factors
    bt = model.omega @ psd_factor(model.phi) if k else np.zeros((model.n_alphas, 0))
    res = weighted_residuals(ev, bt, z, **kw)
    q_diag = np.einsum("ia,ia->a", bt, bt * z[:, None])
    q_min = float(q_diag.min()) if k else np.inf
    return WeightVector.from_raw(z * res.residuals, {"q_min": q_min, "condition": res.condition_estimate})

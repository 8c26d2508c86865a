"""Factor-model covariances, shrinkage as a factor model, FCM projection and loadings.

A factor model is stored as (xi, Omega, Phi) and never expanded to N x N
except by the explicitly capped dense oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from ._blocks import check_dense
from .errors import DegenerateError, NotPositiveDefiniteError, ValidationError
from .panel import PositionHistory, _readonly
from .stats import DemeanedPanel, NormalizedLoadings, phi_matrix, row_variances


@dataclass(frozen=True)
class FactorModel:
    """Gamma = diag(xi^2) + Omega Phi Omega^T.

    ``xi`` may contain zeros (a shrinkage limit with zeta = 0); the weight
    formulas that divide by it check positivity themselves.
    """

    xi: np.ndarray
    omega: np.ndarray
    phi: np.ndarray

    def __post_init__(self) -> None:
        xi = np.asarray(self.xi, dtype=np.float64)
        omega = np.asarray(self.omega, dtype=np.float64)
        phi = np.atleast_2d(np.asarray(self.phi, dtype=np.float64))
        if omega.ndim == 1:
            omega = omega[:, None]
        n = xi.size
        if omega.shape[0] != n:
            raise ValidationError(f"loadings have {omega.shape[0]} rows for {n} specific risks")
        k = omega.shape[1]
        if k == 0:
            phi = np.zeros((0, 0))
        if phi.shape != (k, k):
            raise ValidationError(f"factor covariance must be {k}x{k}, got {phi.shape}")
        if k > n:
            raise ValidationError(f"K={k} factors exceed N={n}")
        if np.any(xi < 0) or not np.all(np.isfinite(xi)):
            raise ValidationError("specific risks must be finite and nonnegative")
        scale = max(1.0, float(np.abs(phi).max(initial=0.0)))
        if np.abs(phi - phi.T).max(initial=0.0) > 1e-12 * scale:
            raise ValidationError("factor covariance must be symmetric")
        object.__setattr__(self, "xi", _readonly(xi))
        object.__setattr__(self, "omega", _readonly(omega))
        object.__setattr__(self, "phi", _readonly(0.5 * (phi + phi.T)))

    @property
    def n_alphas(self) -> int:
        return self.xi.size

    @property
    def n_factors(self) -> int:
        return self.omega.shape[1]

    def diagonal(self) -> np.ndarray:
        """Gamma_ii without forming Gamma."""
        return self.xi**2 + np.einsum("ia,ab,ib->i", self.omega, self.phi, self.omega)


@dataclass(frozen=True)
class ShrinkageSpec:
    """Shrinkage constant zeta and the target Gamma (with Gamma_ii = C_ii)."""

    zeta: float
    target: FactorModel

    def __post_init__(self) -> None:
        if not 0.0 <= self.zeta <= 1.0:
            raise ValidationError(f"shrinkage constant must lie in [0, 1], got {self.zeta}")


@dataclass(frozen=True)
class SpecificRiskReport:
    xi_tilde_sq: np.ndarray
    violations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    kappa: float | None = None
    lambda_star: float | None = None

    @property
    def ok(self) -> bool:
        return self.violations.size == 0


class PositionLoadings(NamedTuple):
    matrix: np.ndarray
    instrument_ids: tuple[str, ...]
    dropped: tuple[str, ...]


def dense_covariance(model: FactorModel, cap: int | None = None) -> np.ndarray:
    check_dense(model.n_alphas, "dense_covariance", cap)
    g = model.omega @ model.phi @ model.omega.T
    g[np.diag_indices_from(g)] += model.xi**2
    return 0.5 * (g + g.T)


def psd_factor(phi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Some F with F F^T = phi: Cholesky when possible, else clipped eigen-root."""
    k = phi.shape[0]
    if k == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(phi)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(phi)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -tol * scale:
        raise NotPositiveDefiniteError(f"factor covariance is indefinite (min eigenvalue {vals.min():.3g})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def scaled_loadings(model: FactorModel) -> np.ndarray:
    """beta_iA = (Omega chol(Phi))_iA / xi_i."""
    if np.any(model.xi <= 0):
        raise ValidationError("scaled loadings need strictly positive specific risks")
    return (model.omega @ psd_factor(model.phi)) / model.xi[:, None]


def orthonormalize(omega_tilde: np.ndarray, max_condition: float = 1e12) -> np.ndarray:
    """Map columns to an orthonormal basis of the same span via the Cholesky factor of their Gram."""
    a = np.asarray(omega_tilde, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    h = a.T @ a
    d = np.sqrt(np.diag(h))
    zero = np.flatnonzero(d == 0)
    if zero.size:
        raise ValidationError(f"column {int(zero[0])} is identically zero")
    hs = h / np.outer(d, d)
    cond = np.linalg.cond(hs)
    if not cond < max_condition:
        raise ValidationError(
            f"columns are linearly dependent (Gram condition {cond:.3g}); "
            f"first dependent column: {_first_dependent(hs)}"
        )
    lower = np.linalg.cholesky(hs)
    # O = A D^{-1} L^{-T}
    return sla.solve_triangular(lower, (a / d).T, lower=True).T


def _first_dependent(hs: np.ndarray, tol: float = 1e-12) -> int:
    from .regress import schur_pivots

    piv = schur_pivots(hs)
    small = np.flatnonzero(piv <= tol)
    return int(small[0]) if small.size else int(np.argmin(piv))


def project_fcm(loadings: np.ndarray, y: NormalizedLoadings) -> np.ndarray:
    """Phi = O^T Psi O computed as (O^T Y) phi (Y^T O), never forming Psi."""
    if y.demeaned:
        raise ValidationError("FCM projection needs the raw normalized returns")
    o = np.asarray(loadings, dtype=np.float64)
    if o.ndim == 1:
        o = o[:, None]
    a = o.T @ y.y
    m = a.shape[1]
    au = a.sum(axis=1)
    phi = (a @ a.T + np.outer(au, au)) / m
    return 0.5 * (phi + phi.T)


def specific_risks(loadings: np.ndarray, phi: np.ndarray) -> SpecificRiskReport:
    """xi_tilde_i^2 = 1 - (O Phi O^T)_ii; nonpositive entries reported, never repaired."""
    o = np.asarray(loadings, dtype=np.float64)
    if o.ndim == 1:
        o = o[:, None]
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    if phi.shape != (o.shape[1], o.shape[1]):
        raise ValidationError("loadings and factor covariance shapes disagree")
    xi2 = 1.0 - np.einsum("ia,ab,ib->i", o, phi, o)
    viol = np.flatnonzero(xi2 <= 0)
    kappa = float(phi[0, 0]) if phi.shape == (1, 1) else None
    return SpecificRiskReport(xi2, viol, kappa=kappa)


def lambda_star(y: NormalizedLoadings | np.ndarray) -> float:
    """(1/N) sum_ij Psi_ij through the M-dimensional contraction."""
    a = y.y if isinstance(y, NormalizedLoadings) else np.asarray(y, dtype=np.float64)
    n, m = a.shape
    cs = a.sum(axis=0)
    return float((cs @ cs + cs.sum() ** 2) / (m * n))


def k1_sufficient_condition(beta: np.ndarray, y: NormalizedLoadings | np.ndarray) -> tuple[np.ndarray, float]:
    """Per-alpha pass flags for beta_i^2 <= 1/lambda_* and the value of lambda_*.

    Passing everywhere guarantees positive specific risks in the 1-factor model.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if abs(beta @ beta - 1.0) > 1e-9:
        raise ValidationError("beta must have unit norm")
    lam = lambda_star(y)
    if not lam > 0:
        raise DegenerateError(f"lambda_* = {lam:.3g} is not positive")
    passed = beta**2 * lam <= 1.0 + 1e-12
    return passed, lam


def diagonal_target(x: DemeanedPanel) -> FactorModel:
    """K = 0 target with Gamma_ii = C_ii."""
    var = row_variances(x.x)
    return FactorModel(np.sqrt(var), np.zeros((x.n_alphas, 0)), np.zeros((0, 0)))


def uniform_correlation_target(sigma: np.ndarray, rho: float) -> FactorModel:
    """sigma_i sigma_j [(1 - rho) delta_ij + rho]: one factor with loadings sigma_i."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if not 0 <= rho < 1:
        raise ValidationError("uniform correlation must lie in [0, 1)")
    return FactorModel(np.sqrt(1 - rho) * sigma, sigma[:, None], np.array([[rho]]))


def shrink_scm(x: DemeanedPanel, spec: ShrinkageSpec) -> FactorModel:
    """zeta * target + (1 - zeta) * SCM as a (K+M)-factor model.

    Loadings are [target Omega | X_is, s = 1..M] with block-diagonal factor
    covariance diag(zeta Phi_target, (1 - zeta) phi).
    """
    tgt = spec.target
    if tgt.n_alphas != x.n_alphas:
        raise ValidationError("shrinkage target and panel disagree on N")
    var = row_variances(x.x)
    diag = tgt.diagonal()
    bad = np.flatnonzero(np.abs(diag - var) > 1e-9 * np.maximum(var, np.finfo(float).tiny))
    if bad.size:
        raise ValidationError(
            f"shrinkage target diagonal must equal sample variances (alpha row {int(bad[0])}: "
            f"{diag[bad[0]]:.6g} vs {var[bad[0]]:.6g})"
        )
    z = spec.zeta
    m = x.m
    omega = np.hstack([tgt.omega, x.x[:, :m]])
    phi = sla.block_diag(z * tgt.phi, (1.0 - z) * phi_matrix(m))
    return FactorModel(np.sqrt(z) * tgt.xi, omega, phi)


def position_loadings(pos: PositionHistory, scale: float = 1.0) -> PositionLoadings:
    """Omega_iA = scale / (M+1) * sum_s |P_iAs|, dropping instruments nobody traded."""
    if not scale > 0:
        raise ValidationError("loading scale must be positive")
    n, k, t = pos.n_alphas, pos.n_instruments, pos.n_obs
    flat = pos.alpha_idx * k + pos.instrument_idx
    om = np.bincount(flat, weights=np.abs(pos.values), minlength=n * k).reshape(n, k) * (scale / t)
    used = om.any(axis=0)
    if not used.any():
        raise DegenerateError("all position columns are zero")
    kept = tuple(pos.instrument_ids[a] for a in np.flatnonzero(used))
    dropped = tuple(pos.instrument_ids[a] for a in np.flatnonzero(~used))
    return PositionLoadings(np.ascontiguousarray(om[:, used]), kept, dropped)


def style_loadings(
    sigma: np.ndarray,
    turnover: np.ndarray | None = None,
    momentum: np.ndarray | None = None,
) -> np.ndarray:
    """Zero-mean log style columns ln(v_i / geometric mean), in the order sigma, turnover, momentum."""
    cols = []
    for name, v in (("volatility", sigma), ("turnover", turnover), ("momentum", momentum)):
        if v is None:
            continue
        v = np.asarray(v, dtype=np.float64)
        bad = np.flatnonzero(~(v > 0))
        if bad.size:
            raise ValidationError(f"{name} must be strictly positive (index {int(bad[0])}: {v[bad[0]]!r})")
        lv = np.log(v)
        cols.append(lv - lv.mean())
    return np.column_stack(cols)

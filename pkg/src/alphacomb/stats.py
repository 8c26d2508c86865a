"""Demeaning, variances, normalization and Gram kernels.

Conventions: a panel has M+1 columns; variances use denominator M; trimming
always drops the last column of the current set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._blocks import BLOCK_ROWS, check_dense, map_blocks, tree_sum
from .errors import DegenerateError, ValidationError
from .panel import ReturnsPanel, _readonly


@dataclass(frozen=True)
class DemeanedPanel:
    """Serially demeaned returns X_is = R_is - mean_s R_is."""

    x: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] < 2:
            raise ValidationError("demeaned panel must be N x (M+1) with M >= 1")
        object.__setattr__(self, "x", _readonly(x))

    @property
    def n_alphas(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1] - 1


@dataclass(frozen=True)
class NormalizedLoadings:
    """Y_is = X_is / sigma_i trimmed to M columns, or its cross-sectionally demeaned form with M-1."""

    y: np.ndarray
    demeaned: bool = False

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 2:
            raise ValidationError("loadings must be 2-D")
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n_alphas(self) -> int:
        return self.y.shape[0]

    @property
    def n_columns(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    upsilon: np.ndarray

    @property
    def size(self) -> int:
        return self.upsilon.shape[0]


def demean_rows(r: np.ndarray) -> np.ndarray:
    return r - r.mean(axis=1, keepdims=True)


def row_variances(x: np.ndarray) -> np.ndarray:
    """(1/M) sum_s x_is^2 for an already demeaned block with M+1 columns."""
    return np.einsum("ij,ij->i", x, x) / (x.shape[1] - 1)


def serial_demean(panel: ReturnsPanel) -> DemeanedPanel:
    return DemeanedPanel(demean_rows(panel.returns))


def sample_variances(x: DemeanedPanel) -> np.ndarray:
    var = row_variances(x.x)
    bad = np.flatnonzero(~(var >= 1e-300))
    if bad.size:
        raise DegenerateError(f"alpha row {int(bad[0])} has degenerate sample variance {var[bad[0]]:.3g}")
    return var


def normalize_and_trim(x: DemeanedPanel, sigma: np.ndarray, remove_overall_mode: bool = True) -> NormalizedLoadings:
    """Scale rows by 1/sigma, keep the first M columns, optionally remove the overall mode.

    With ``remove_overall_mode`` every column is cross-sectionally demeaned and
    the last of the M columns dropped, leaving M-1.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (x.n_alphas,):
        raise ValidationError(f"sigma must have length {x.n_alphas}")
    if not np.all(sigma > 0):
        raise ValidationError(f"sigma must be strictly positive (row {int(np.argmin(sigma))})")
    m = x.m
    y = x.x[:, :m] / sigma[:, None]
    if not remove_overall_mode:
        return NormalizedLoadings(y, demeaned=False)
    if m - 1 < 1:
        raise ValidationError("insufficient observations after mode removal (M-1 = 0)")
    lam = y - y.mean(axis=0)
    return NormalizedLoadings(np.ascontiguousarray(lam[:, : m - 1]), demeaned=True)


def phi_matrix(m: int) -> np.ndarray:
    """(I + u u^T) / M: the M x M kernel that rebuilds the dropped column."""
    return (np.eye(m) + 1.0) / m


def phi_sqrt(m: int) -> np.ndarray:
    """Symmetric square root of ``phi_matrix(m)`` in closed form."""
    c = (np.sqrt(1.0 + m) - 1.0) / m
    return (np.eye(m) + c) / np.sqrt(m)


def sample_correlation_dense(y: NormalizedLoadings, cap: int | None = None) -> np.ndarray:
    """Dense Psi = Y phi Y^T (oracle scale only)."""
    if y.demeaned:
        raise ValidationError("sample correlation needs the raw (not demeaned) normalized returns")
    check_dense(y.n_alphas, "sample_correlation_dense", cap)
    a = y.y
    m = a.shape[1]
    rs = a.sum(axis=1)
    psi = (a @ a.T + np.outer(rs, rs)) / m
    return 0.5 * (psi + psi.T)


def gram(loadings: NormalizedLoadings | np.ndarray, threads: int | None = None,
         block_rows: int = BLOCK_ROWS) -> GramMatrix:
    """L^T L accumulated per row block and tree-reduced."""
    a = loadings.y if isinstance(loadings, NormalizedLoadings) else np.asarray(loadings, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise ValidationError("gram needs an N x m matrix with m >= 1")
    parts = map_blocks(lambda b: a[b].T @ a[b], a.shape[0], threads, block_rows)
    g = tree_sum(parts)
    return GramMatrix(_readonly(0.5 * (g + g.T)))

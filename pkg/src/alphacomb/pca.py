"""Principal components of the sample correlation matrix through the M x M Gram trick.

Psi = Y phi Y^T has the same nonzero spectrum as S = phi^{1/2} Y^T Y phi^{1/2};
if S u = lambda u then Y phi^{1/2} u / sqrt(lambda) is a unit eigenvector of Psi.
Nothing N x N is ever formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from ._blocks import BLOCK_ROWS
from .errors import ValidationError
from .panel import ExpectedReturns, as_vector
from .regress import weighted_residuals
from .stats import NormalizedLoadings, gram, phi_sqrt


@dataclass(frozen=True)
class PcDecomposition:
    eigenvalues: np.ndarray  # nonincreasing
    components: np.ndarray  # N x c, unit orthonormal columns
    theta: float  # (1/sqrt N) sum_i V1_i

    @property
    def n_components(self) -> int:
        return self.components.shape[1]


class SpanReport(NamedTuple):
    max_abs_diff: float
    mode_variant_diff: float


def _fix_signs(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    s = np.sign(v[idx, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


def correlation_pcs(
    y: NormalizedLoadings,
    n_components: int | None = None,
    *,
    threads: int | None = None,
    block_rows: int = BLOCK_ROWS,
) -> PcDecomposition:
    """Eigen-decomposition of Psi from the raw normalized returns Y (N x M).

    Returns min(M, N) eigenvalues; ``n_components`` limits how many
    eigenvectors are mapped back to N-space.  Eigenvectors for zero
    eigenvalues (rank-deficient panels) are completed with an orthonormal
    basis of the null space.
    """
    if y.demeaned:
        raise ValidationError("principal components need the raw normalized returns")
    a = y.y
    n, m = a.shape
    p = phi_sqrt(m)
    s = p @ gram(a, threads=threads, block_rows=block_rows).upsilon @ p
    vals, vecs = np.linalg.eigh(0.5 * (s + s.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    count = min(m, n)
    vals = np.clip(vals[:count], 0.0, None)
    vecs = vecs[:, :count]
    want = count if n_components is None else min(int(n_components), count)

    tol = max(vals[0], 1.0) * max(n, m) * np.finfo(float).eps * 10
    live = int(np.count_nonzero(vals[:want] > tol))
    comps = np.empty((n, want))
    if live:
        comps[:, :live] = (a @ (p @ vecs[:, :live])) / np.sqrt(vals[:live])
    if live < want:
        vals[live:] = np.where(vals[live:] > tol, vals[live:], 0.0)
        comps[:, live:want] = sla.null_space(comps[:, :live].T)[:, : want - live]
    comps = _fix_signs(comps)
    theta = float(comps[:, 0].sum() / np.sqrt(n))
    return PcDecomposition(vals, comps, theta)


def pc_specific_risks(
    pcs: PcDecomposition,
    sigma: np.ndarray,
    k: int,
    zeta: float,
    method: str = "head",
) -> np.ndarray:
    """Specific variances xi_i^2 when the first k PCs are kept as factors.

    ``method='tail'`` sums lambda_a V_ia^2 over a > k (needs all components);
    ``'head'`` uses 1 - sum over a <= k (needs only the first k).  The two agree
    because Psi has unit diagonal.  Nonpositive values are returned as-is and
    reported through a warning.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    m = pcs.eigenvalues.size
    if not 1 <= k < m:
        raise ValidationError(f"need 1 <= K < {m}, got K={k}")
    if not 0 < zeta <= 1:
        raise ValidationError(f"zeta must lie in (0, 1], got {zeta}")
    v, lam = pcs.components, pcs.eigenvalues
    if method == "head":
        if v.shape[1] < k:
            raise ValidationError(f"only {v.shape[1]} components available, need {k}")
        frac = 1.0 - (v[:, :k] ** 2) @ lam[:k]
    elif method == "tail":
        if v.shape[1] < m:
            raise ValidationError("tail formula needs every component")
        frac = (v[:, k:] ** 2) @ lam[k:]
    else:
        raise ValueError(f"unknown method {method!r}")
    xi2 = zeta * sigma**2 * frac
    # zero up to roundoff counts as a violation
    bad = np.flatnonzero(xi2 <= 1e-12 * zeta * sigma**2)
    if bad.size:
        warnings.warn(
            f"{bad.size} nonpositive PC specific variances (first at alpha row {int(bad[0])})",
            RuntimeWarning, stacklevel=2,
        )
    return xi2


def span_equivalence(
    y: NormalizedLoadings,
    pcs: PcDecomposition,
    e: ExpectedReturns | np.ndarray,
) -> SpanReport:
    """Compare regression residuals over the columns of Y and over the first M PCs.

    ``max_abs_diff`` should vanish up to roundoff.  ``mode_variant_diff``
    compares the two ways of removing the overall mode (column demeaning plus
    trimming vs dropping the first PC); it is informational only.
    """
    if y.demeaned:
        raise ValidationError("span check needs the raw normalized returns")
    ev = as_vector(e)
    a = y.y
    m = a.shape[1]
    r = int(np.count_nonzero(pcs.eigenvalues[: pcs.n_components] > 0))
    if r < m:
        raise ValidationError(f"Y has rank {r} < M={m}; PC span comparison undefined")
    over_y = weighted_residuals(ev, a).residuals
    over_pc = weighted_residuals(ev, pcs.components[:, :m]).residuals
    lam = a - a.mean(axis=0)
    demeaned = weighted_residuals(ev, lam[:, : m - 1]).residuals if m > 1 else ev
    drop_first = weighted_residuals(ev, pcs.components[:, 1:m]).residuals
    return SpanReport(float(np.abs(over_y - over_pc).max()), float(np.abs(demeaned - drop_first).max()))

"""End-to-end alpha weights: serial demeaning through the normalized regression.

``combine`` streams over row blocks, so memory beyond the panel itself is
O(block_rows * M + M^2) and the cost is O(M^2 N).  The baselines here
(dense inverse, one-factor closed form, diagonal benchmark) are what the
pipeline is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._blocks import BLOCK_ROWS, check_dense, map_blocks, tree_sum
from ._reference import calc_opt_weights
from .errors import DegenerateError, NotPositiveDefiniteError, ValidationError
from .panel import ExpectedReturns, ReturnsPanel, WeightVector, as_vector
from .pca import correlation_pcs, pc_specific_risks
from .regress import fit_blocks
from .stats import NormalizedLoadings, row_variances

WEIGHT_SOURCES = ("sample_variance", "precomputed", "pc_specific")
AUGMENT_MODES = ("replace", "union")
SPAN_TOL = 1e-12


@dataclass(frozen=True)
class CombineOptions:
    """Knobs of the pipeline.

    weight_source:
        ``sample_variance`` (default), ``precomputed`` (uses ``specific_risks``
        as the per-alpha scale) or ``pc_specific`` (specific risks from the
        first ``pc_k`` principal components with shrinkage ``pc_zeta``).
    external_loadings:
        N x K matrix that replaces the return-based loadings or, with
        ``augment_mode='union'``, is appended to them (dependent columns are
        dropped).  With mode removal on, external columns are demeaned too.
    """

    remove_overall_mode: bool = True
    weight_source: str = "sample_variance"
    specific_risks: np.ndarray | None = None
    pc_k: int | None = None
    pc_zeta: float | None = None
    external_loadings: np.ndarray | None = None
    augment_mode: str = "replace"
    threads: int | None = None
    block_rows: int = BLOCK_ROWS

    def __post_init__(self) -> None:
        if self.weight_source not in WEIGHT_SOURCES:
            raise ValidationError(f"weight_source must be one of {WEIGHT_SOURCES}")
        if self.augment_mode not in AUGMENT_MODES:
            raise ValidationError(f"augment_mode must be one of {AUGMENT_MODES}")
        if self.weight_source == "precomputed" and self.specific_risks is None:
            raise ValidationError("precomputed weight source needs specific_risks")
        if self.weight_source == "pc_specific":
            if self.pc_k is None or self.pc_k < 1:
                raise ValidationError("pc_specific needs pc_k >= 1")
            if self.pc_zeta is None or not 0 < self.pc_zeta <= 1:
                raise ValidationError("pc_specific needs pc_zeta in (0, 1]")


def _row_moments(panel: ReturnsPanel, opts: CombineOptions) -> tuple[np.ndarray, np.ndarray]:
    """Per-row means and sample variances in one blocked pass."""
    r = panel.returns

    def moments(b: slice) -> tuple[np.ndarray, np.ndarray]:
        mu = r[b].mean(axis=1)
        return mu, row_variances(r[b] - mu[:, None])

    parts = map_blocks(moments, panel.n_alphas, opts.threads, opts.block_rows)
    mu = np.concatenate([p[0] for p in parts])
    var = np.concatenate([p[1] for p in parts])
    bad = np.flatnonzero(~(var >= 1e-300))
    if bad.size:
        raise DegenerateError(f"alpha {panel.alpha_ids[bad[0]]!r} has degenerate sample variance")
    return mu, var


def _row_scale(panel: ReturnsPanel, opts: CombineOptions, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    n, m = panel.n_alphas, panel.m
    if opts.weight_source == "precomputed":
        s = np.asarray(opts.specific_risks, dtype=np.float64)
        if s.shape != (n,):
            raise ValidationError(f"specific_risks must have length {n}")
        if not np.all(s > 0):
            raise ValidationError(f"specific risk at row {int(np.argmin(s))} is not positive")
        return s
    sigma = np.sqrt(var)
    if opts.weight_source == "sample_variance":
        return sigma

    k = opts.pc_k
    if not k <= m - 1:
        raise ValidationError(f"pc_k must be <= M-1 = {m - 1}")
    y = (panel.returns[:, :m] - mu[:, None]) / sigma[:, None]
    pcs = correlation_pcs(NormalizedLoadings(y), n_components=k, threads=opts.threads, block_rows=opts.block_rows)
    xi2 = pc_specific_risks(pcs, sigma, k, opts.pc_zeta)
    if np.any(xi2 <= 1e-12 * opts.pc_zeta * sigma**2):
        raise DegenerateError("PC-based specific variances are not all positive; use sample variances")
    return np.sqrt(xi2)


def combine(
    panel: ReturnsPanel,
    e: ExpectedReturns | np.ndarray,
    opts: CombineOptions | None = None,
) -> WeightVector:
    """Optimal alpha weights via the normalized regression.

    Steps: demean each row, scale by sigma_i (or the chosen specific risk),
    keep M columns, optionally demean columns and keep M-1, regress
    E_i / sigma_i on them with unit weights and no intercept, and set
    w_i proportional to residual_i / sigma_i with sum |w_i| = 1.
    """
    opts = opts or CombineOptions()
    if isinstance(e, ExpectedReturns):
        ev = e.aligned_to(panel).values
    else:
        ev = as_vector(e)
        if ev.shape != (panel.n_alphas,):
            raise ValidationError(f"expected returns have length {ev.size}, panel has N={panel.n_alphas}")
    r = panel.returns
    n, m = panel.n_alphas, panel.m
    mu, var = _row_moments(panel, opts)
    s = _row_scale(panel, opts, mu, var)
    inv_s = 1.0 / s

    ext = None
    if opts.external_loadings is not None:
        ext = np.asarray(opts.external_loadings, dtype=np.float64)
        if ext.ndim == 1:
            ext = ext[:, None]
        if ext.shape[0] != n or not np.all(np.isfinite(ext)):
            raise ValidationError(f"external loadings must be a finite {n} x K matrix")
    union = ext is not None and opts.augment_mode == "union"
    rm = opts.remove_overall_mode

    # Loadings are [Y[:, :n_ret] | ext[:, :n_ext]]; mode removal drops the
    # last return-based column (or the last column in replace mode).
    n_ret = 0 if ext is not None and not union else m
    n_ext = 0 if ext is None else ext.shape[1]
    if rm:
        if n_ret:
            n_ret -= 1
        else:
            n_ext -= 1
    width = n_ret + n_ext
    if width == 0:
        raise ValidationError("insufficient observations after mode removal (M-1 = 0)")

    c_ret = np.zeros(n_ret)
    c_ext = np.zeros(n_ext)
    if rm:
        def col_sums(b: slice) -> np.ndarray:
            out = np.empty(width)
            if n_ret:
                out[:n_ret] = (r[b, :n_ret] - mu[b, None]).T @ inv_s[b]
            if n_ext:
                out[n_ret:] = ext[b, :n_ext].sum(axis=0)
            return out

        center = tree_sum(map_blocks(col_sums, n, opts.threads, opts.block_rows)) / n
        c_ret, c_ext = center[:n_ret], center[n_ret:]
    et = ev * inv_s

    def design(b: slice, out: np.ndarray) -> None:
        if n_ret:
            y = out[:, :n_ret]
            np.subtract(r[b, :n_ret], mu[b, None], out=y)
            y *= inv_s[b, None]
            if rm:
                y -= c_ret
        if n_ext:
            np.subtract(ext[b, :n_ext], c_ext, out=out[:, n_ret:width])
        out[:, width] = et[b]

    def residual(b: slice, coef: np.ndarray, cols: np.ndarray) -> np.ndarray:
        full = np.zeros(width)
        full[cols] = coef
        fr, fe = full[:n_ret], full[n_ret:]
        fit = np.zeros(b.stop - b.start)
        if n_ret:
            fit += ((r[b, :n_ret] - mu[b, None]) @ fr) * inv_s[b] - c_ret @ fr
        if n_ext:
            fit += ext[b, :n_ext] @ fe - c_ext @ fe
        return et[b] - fit

    res = fit_blocks(
        design, residual, n, width,
        threads=opts.threads, block_rows=opts.block_rows, drop_dependent=union,
    )
    if np.linalg.norm(res.residuals) <= SPAN_TOL * np.linalg.norm(et):
        raise DegenerateError("degenerate expected returns: E lies in the span of the loadings, all weights vanish")
    diag = np.diag(res.gram.upsilon)[res.columns]
    kept = np.r_[np.arange(n_ret), m + np.arange(n_ext)] if union else np.arange(width)
    info = {
        "n": n,
        "m": m,
        "n_loadings": int(res.columns.size),
        "dropped_columns": [int(kept[c]) for c in res.dropped],
        "q_min": float(diag.min() / m) if diag.size else float("inf"),
        "condition": res.condition_estimate,
        "overall_mode_removed": rm,
    }
    return WeightVector.from_raw(res.residuals * inv_s, info)


def dense_oracle_weights(cov: np.ndarray, e: ExpectedReturns | np.ndarray, cap: int | None = None) -> WeightVector:
    """normalize(C^{-1} E) by dense Cholesky."""
    cov = np.asarray(cov, dtype=np.float64)
    ev = as_vector(e)
    n = ev.size
    if cov.shape != (n, n):
        raise ValidationError(f"covariance must be {n}x{n}")
    check_dense(n, "dense_oracle_weights", cap)
    try:
        fac = sla.cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("covariance is not positive definite") from exc
    return WeightVector.from_raw(sla.cho_solve(fac, ev, check_finite=False))


def one_factor_weights(e: ExpectedReturns | np.ndarray, sigma: np.ndarray, rho: float) -> WeightVector:
    """Exact weights for uniform pairwise correlation rho."""
    ev = as_vector(e)
    sigma = np.asarray(sigma, dtype=np.float64)
    n = ev.size
    if sigma.shape != (n,) or not np.all(sigma > 0):
        raise ValidationError("sigma must be a positive N-vector")
    if not -1.0 / (n - 1) < rho < 1.0:
        raise ValidationError(f"rho={rho} outside the positive-definite range (-1/(N-1), 1)")
    xi = np.sqrt(1.0 - rho) * sigma
    et = ev / xi
    raw = (et - rho / (1.0 + (n - 1) * rho) * et.sum()) / xi
    return WeightVector.from_raw(raw)


def benchmark_weights(e: ExpectedReturns | np.ndarray, sigma: np.ndarray) -> WeightVector:
    """E_i / sigma_i^2 normalized: the optimizer for the diagonal of the SCM."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if not np.all(sigma > 0):
        raise ValidationError("sigma must be positive")
    return WeightVector.from_raw(as_vector(e) / sigma**2)


def reference_parity(
    panel: ReturnsPanel,
    e: ExpectedReturns | np.ndarray,
    opts: CombineOptions | None = None,
) -> float:
    """max |w_fast - w_reference| against the frozen port of ``calc.opt.weights``."""
    opts = opts or CombineOptions()
    if opts.external_loadings is not None and opts.augment_mode == "union":
        raise ValidationError("the reference routine has no union mode")
    ev = e.aligned_to(panel).values if isinstance(e, ExpectedReturns) else as_vector(e)
    fast = combine(panel, ev, opts).weights
    s = None if opts.weight_source == "sample_variance" else _row_scale(panel, opts, *_row_moments(panel, opts))
    ref = calc_opt_weights(ev, panel.returns, y=opts.external_loadings, s=s, rm_overall=opts.remove_overall_mode)
    return float(np.abs(fast - ref).max())

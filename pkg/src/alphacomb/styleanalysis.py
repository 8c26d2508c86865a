"""Do style factors predict pairwise correlations?

Flatten the off-diagonal sample correlations into Psi_a, build the tensor
regressors y_a = nu_i + nu_j and z_a = nu_i nu_j from a zero-mean log style
vector nu, and run OLS of Psi_a on (1, y_a, z_a).  The pair index a runs over
i > j, grouped by j ascending, then i ascending.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._blocks import check_dense
from .errors import ValidationError

TERMS = ("Intercept", "y", "z")


@dataclass(frozen=True)
class StyleRegressionReport:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    r_squared: float
    adjusted_r_squared: float
    f_statistic: float
    n_points: int

    def table(self) -> str:
        """Plain-text summary laid out like a regression table."""
        lines = [f"{'':<28}{'Estimate':>12}{'Standard error':>16}{'t-statistic':>14}{'Overall':>20}"]
        for name, b, se, t in zip(TERMS, self.coefficients, self.standard_errors, self.t_statistics):
            lines.append(f"{name:<28}{b:>12.4f}{se:>16.4f}{t:>14.2f}")
        lines.append(f"{'Mult./Adj. R-squared':<28}{'':>42}{self.r_squared:>9.4f} / {self.adjusted_r_squared:.4f}")
        lines.append(f"{'F-statistic':<28}{'':>42}{self.f_statistic:>20.4g}")
        return "\n".join(lines)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "estimate", "standard_error", "t_statistic", "overall"])
            for name, b, se, t in zip(TERMS, self.coefficients, self.standard_errors, self.t_statistics):
                w.writerow([name, f"{b:.15g}", f"{se:.15g}", f"{t:.15g}", ""])
            w.writerow(["multiple_r_squared", "", "", "", f"{self.r_squared:.15g}"])
            w.writerow(["adjusted_r_squared", "", "", "", f"{self.adjusted_r_squared:.15g}"])
            w.writerow(["f_statistic", "", "", "", f"{self.f_statistic:.15g}"])
            w.writerow(["n_points", "", "", "", str(self.n_points)])


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(i, j) with i > j for every pair, in flattening order."""
    j, i = np.triu_indices(n, k=1)
    return i, j


def pair_index(i: int, j: int, n: int) -> int:
    """Position of pair (i, j), i > j, in the flattened vector."""
    if not 0 <= j < i < n:
        raise ValueError("need 0 <= j < i < n")
    return j * (2 * n - j - 1) // 2 + (i - j - 1)


def pair_from_index(a: int, n: int) -> tuple[int, int]:
    if not 0 <= a < n * (n - 1) // 2:
        raise ValueError("pair index out of range")
    j = 0
    while a >= n - 1 - j:
        a -= n - 1 - j
        j += 1
    return j + 1 + a, j


def flatten_offdiag(psi: np.ndarray, cap: int | None = None) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1] or psi.shape[0] < 2:
        raise ValidationError("need a square matrix with N >= 2")
    check_dense(psi.shape[0], "flatten_offdiag", cap)
    scale = max(1.0, float(np.abs(psi).max()))
    if np.abs(psi - psi.T).max() > 1e-9 * scale:
        raise ValidationError("matrix is not symmetric")
    i, j = pair_indices(psi.shape[0])
    return psi[i, j]


def style_tensors(nu: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened x_a = 1, y_a = nu_i + nu_j, z_a = nu_i nu_j."""
    nu = np.asarray(nu, dtype=np.float64)
    if abs(nu.mean()) > 1e-9 * max(1.0, float(np.abs(nu).max())):
        raise ValidationError("style vector must have zero mean")
    i, j = pair_indices(nu.size)
    return np.ones(i.size), nu[i] + nu[j], nu[i] * nu[j]


def style_regression(psi_a: np.ndarray, y_a: np.ndarray, z_a: np.ndarray) -> StyleRegressionReport:
    psi_a, y_a, z_a = (np.asarray(v, dtype=np.float64) for v in (psi_a, y_a, z_a))
    n = psi_a.size
    if not (y_a.size == z_a.size == n):
        raise ValidationError("regression vectors must have equal length")
    if n < 4:
        raise ValidationError("need at least 4 points")
    x = np.column_stack([np.ones(n), y_a, z_a])
    xtx = x.T @ x
    d = np.sqrt(np.diag(xtx))
    if np.any(d == 0) or np.linalg.cond(xtx / np.outer(d, d)) > 1e12:
        raise ValidationError("style regressors are collinear")
    beta, *_ = np.linalg.lstsq(x, psi_a, rcond=None)
    resid = psi_a - x @ beta
    ssr = float(resid @ resid)
    centered = psi_a - psi_a.mean()
    sst = float(centered @ centered)
    dof = n - 3
    s2 = ssr / dof
    se = np.sqrt(s2 * np.diag(np.linalg.inv(xtx)))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    adj = 1.0 - (1.0 - r2) * (n - 1) / dof
    f = (r2 / 2) / ((1.0 - r2) / dof) if r2 < 1 else np.inf
    return StyleRegressionReport(beta, se, t, r2, adj, float(f), n)


def figure_projection(
    psi_a: np.ndarray, y_a: np.ndarray, z_a: np.ndarray, coefficients: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Scatter columns: fitted style part b_y y_a + b_z z_a against Psi_a - mean(Psi_a)."""
    b = np.asarray(coefficients, dtype=np.float64)
    psi_a = np.asarray(psi_a, dtype=np.float64)
    return b[1] * np.asarray(y_a) + b[2] * np.asarray(z_a), psi_a - psi_a.mean()


def save_figure_csv(w_a: np.ndarray, psi_centered: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("w_a,psi_a_demeaned\n")
        for a, b in zip(w_a, psi_centered):
            fh.write(f"{a:.15g},{b:.15g}\n")

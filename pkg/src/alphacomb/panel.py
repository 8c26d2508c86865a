"""Alpha return panels, expected returns, position histories and weight vectors.

Also holds the CSV readers/writers and the synthetic factor-model generator
used as ground truth by the oracle tests.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from ._blocks import row_blocks
from .errors import DegenerateError, ParseError, ValidationError

logger = logging.getLogger(__name__)

GEN_BLOCK_ROWS = 4096


def _readonly(a: np.ndarray) -> np.ndarray:
    v = a.view()
    v.flags.writeable = False
    return v


def _labels_ordered(labels: Sequence[str]) -> bool:
    """Strict monotonicity for labels that parse as numbers or dates.

    Labels that are neither (``t1``, ``day-a``...) only need to be unique.
    """
    try:
        vals = np.array([float(x) for x in labels])
    except ValueError:
        try:
            vals = pd.to_datetime(list(labels), format="ISO8601").asi8
        except (ValueError, TypeError):
            return len(set(labels)) == len(labels)
    d = np.diff(vals)
    return bool(np.all(d > 0) or np.all(d < 0))


@dataclass(frozen=True)
class ReturnsPanel:
    """N x (M+1) realized returns, one row per alpha, column 0 = most recent."""

    returns: np.ndarray
    alpha_ids: tuple[str, ...] | None = None
    time_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        r = np.asarray(self.returns, dtype=np.float64)
        if r.ndim != 2:
            raise ValidationError(f"returns must be 2-D, got shape {r.shape}")
        n, t = r.shape
        if n < 2:
            raise ValidationError(f"need at least 2 alphas, got {n}")
        if t < 3:
            raise ValidationError(f"need at least 3 observations, got {t}")
        for b in row_blocks(n):
            chunk = r[b]
            bad = ~np.isfinite(chunk)
            if bad.any():
                i, s = np.argwhere(bad)[0]
                raise ValidationError(f"non-finite return at alpha row {b.start + i}, column {s}")
            flat = np.flatnonzero(np.ptp(chunk, axis=1) == 0.0)
            if flat.size:
                i = b.start + int(flat[0])
                name = self.alpha_ids[i] if self.alpha_ids is not None else str(i)
                raise DegenerateError(f"alpha {name!r} has zero variance (constant row)")

        ids = tuple(f"a{i}" for i in range(n)) if self.alpha_ids is None else tuple(map(str, self.alpha_ids))
        if len(ids) != n:
            raise ValidationError(f"{len(ids)} alpha ids for {n} rows")
        if len(set(ids)) != n:
            dup = pd.Series(ids)[pd.Series(ids).duplicated()].iloc[0]
            raise ValidationError(f"duplicate alpha_id {dup!r}")
        labels = (
            tuple(f"t{s + 1}" for s in range(t)) if self.time_labels is None else tuple(map(str, self.time_labels))
        )
        if len(labels) != t:
            raise ValidationError(f"{len(labels)} time labels for {t} columns")
        if not _labels_ordered(labels):
            raise ValidationError("time labels must be unique and strictly ordered")

        object.__setattr__(self, "returns", _readonly(r))
        object.__setattr__(self, "alpha_ids", ids)
        object.__setattr__(self, "time_labels", labels)

    @property
    def n_alphas(self) -> int:
        return self.returns.shape[0]

    @property
    def n_obs(self) -> int:
        return self.returns.shape[1]

    @property
    def m(self) -> int:
        """M: number of observations minus one."""
        return self.returns.shape[1] - 1

    def take(self, rows: np.ndarray | Sequence[int]) -> ReturnsPanel:
        rows = np.asarray(rows)
        return ReturnsPanel(self.returns[rows], tuple(self.alpha_ids[i] for i in rows), self.time_labels)


@dataclass(frozen=True)
class ExpectedReturns:
    values: np.ndarray
    alpha_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValidationError("expected returns must be a vector")
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"non-finite expected return at index {int(np.flatnonzero(~np.isfinite(v))[0])}")
        if self.alpha_ids is not None and len(self.alpha_ids) != v.size:
            raise ValidationError("alpha_ids length does not match expected returns")
        object.__setattr__(self, "values", _readonly(v))
        if self.alpha_ids is not None:
            object.__setattr__(self, "alpha_ids", tuple(map(str, self.alpha_ids)))

    def __len__(self) -> int:
        return self.values.size

    def aligned_to(self, panel: ReturnsPanel) -> ExpectedReturns:
        """Reorder to the panel's alpha order (by id when ids are known)."""
        if len(self) != panel.n_alphas:
            raise ValidationError(f"expected returns have length {len(self)}, panel has N={panel.n_alphas}")
        if self.alpha_ids is None or self.alpha_ids == panel.alpha_ids:
            return self
        pos = {a: k for k, a in enumerate(self.alpha_ids)}
        missing = [a for a in panel.alpha_ids if a not in pos]
        if missing:
            raise ValidationError(f"no expected return for alpha {missing[0]!r}")
        idx = np.fromiter((pos[a] for a in panel.alpha_ids), dtype=np.int64, count=panel.n_alphas)
        return ExpectedReturns(self.values[idx], panel.alpha_ids)


def as_vector(e: ExpectedReturns | np.ndarray | Sequence[float]) -> np.ndarray:
    if isinstance(e, ExpectedReturns):
        return e.values
    return np.asarray(e, dtype=np.float64)


@dataclass(frozen=True)
class PositionHistory:
    """Sparse (alpha, instrument, time, position) triplets with sum_A |P| = 1 per (alpha, time)."""

    alpha_idx: np.ndarray
    instrument_idx: np.ndarray
    time_idx: np.ndarray
    values: np.ndarray
    alpha_ids: tuple[str, ...]
    instrument_ids: tuple[str, ...]
    time_labels: tuple[str, ...]
    n_rescaled: int = 0

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("alpha_idx", "instrument_idx", "time_idx"):
            arrays[name] = np.asarray(getattr(self, name), dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if not all(a.shape == vals.shape for a in arrays.values()) or vals.ndim != 1:
            raise ValidationError("position triplet arrays must be 1-D and equally long")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("non-finite position value")
        for name, bound in (
            ("alpha_idx", len(self.alpha_ids)),
            ("instrument_idx", len(self.instrument_ids)),
            ("time_idx", len(self.time_labels)),
        ):
            a = arrays[name]
            if a.size and (a.min() < 0 or a.max() >= bound):
                raise ValidationError(f"{name} out of range")
        sums = self._slice_abs_sums(arrays["alpha_idx"], arrays["time_idx"], vals)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValidationError("positions must satisfy sum_A |P_iAs| = 1 for every (alpha, time)")
        for name, a in arrays.items():
            object.__setattr__(self, name, _readonly(a))
        object.__setattr__(self, "values", _readonly(vals))

    def _slice_abs_sums(self, ai, ti, vals) -> np.ndarray:
        flat = ai * len(self.time_labels) + ti
        return np.bincount(flat, weights=np.abs(vals), minlength=self.n_alphas * self.n_obs)

    @property
    def n_alphas(self) -> int:
        return len(self.alpha_ids)

    @property
    def n_instruments(self) -> int:
        return len(self.instrument_ids)

    @property
    def n_obs(self) -> int:
        return len(self.time_labels)


@dataclass(frozen=True)
class WeightVector:
    """Alpha weights normalized to unit absolute sum; ``eta`` is the applied factor."""

    weights: np.ndarray
    eta: float
    info: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if not self.eta > 0:
            raise ValidationError("normalization eta must be positive")
        if abs(np.abs(w).sum() - 1.0) > 1e-12:
            raise ValidationError("weights must satisfy sum |w_i| = 1")
        object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def from_raw(cls, raw: np.ndarray, info: dict[str, Any] | None = None) -> WeightVector:
        raw = np.asarray(raw, dtype=np.float64)
        total = np.abs(raw).sum()
        if not np.isfinite(total):
            raise DegenerateError("non-finite weights before normalization")
        if total <= np.finfo(float).tiny:
            raise DegenerateError("degenerate expected returns: all weights vanish, normalization undefined")
        eta = 1.0 / total
        info = dict(info or {})
        w = raw * eta
        info.setdefault("n_negative", int(np.count_nonzero(w < 0)))
        return cls(w, eta, info)

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic panel drawn from an exact factor-model covariance.

    Factor 1 loads every alpha with the same sign (an overall mode); factors
    2..K load with random signs.  Each alpha's correlation with factor A is
    ``sqrt(rho_A)``, so the sum of strengths must stay below 1.
    """

    n_alphas: int
    n_obs: int
    true_k: int = 0
    rho_range: tuple[float, float] = (0.05, 0.2)
    vol_range: tuple[float, float] = (0.5, 2.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_alphas < 2 or self.n_obs < 3:
            raise ValidationError("synthetic panel needs N >= 2 and M+1 >= 3")
        if not 0 <= self.true_k <= self.n_obs - 1:
            raise ValidationError(f"true_k={self.true_k} must lie in [0, M={self.n_obs - 1}]")
        lo, hi = self.rho_range
        if not 0 < lo <= hi:
            raise ValidationError("rho_range must be positive and ordered")
        if self.true_k * hi >= 1:
            raise ValidationError("total factor strength true_k * max(rho) must be < 1")
        vlo, vhi = self.vol_range
        if not 0 < vlo <= vhi:
            raise ValidationError("vol_range must be positive and ordered")


def gen_synthetic(spec: SynthSpec):
    """Draw ``(ReturnsPanel, ExpectedReturns, FactorModel)`` deterministically from ``spec.seed``.

    Factor returns come from one master stream; each block of
    ``GEN_BLOCK_ROWS`` alphas draws its volatilities, loadings signs, noise
    and expected returns from its own substream, so output does not depend
    on evaluation order.
    """
    from .riskmodel import FactorModel

    n, t, k = spec.n_alphas, spec.n_obs, spec.true_k
    master = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0,)))
    rho = master.uniform(*spec.rho_range, size=k)
    f = master.standard_normal((k, t))
    resid_scale = math.sqrt(1.0 - rho.sum())

    returns = np.empty((n, t))
    expected = np.empty(n)
    sigma = np.empty(n)
    signs = np.ones((n, k))
    for bi, b in enumerate(row_blocks(n, GEN_BLOCK_ROWS)):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1, bi)))
        rows = b.stop - b.start
        sig = rng.uniform(*spec.vol_range, size=rows)
        sg = rng.choice((-1.0, 1.0), size=(rows, k))
        if k:
            sg[:, 0] = 1.0
        noise = rng.standard_normal((rows, t))
        g = np.exp(rng.normal(math.log(0.05), 0.5, size=rows))
        load = sg * np.sqrt(rho)
        returns[b] = sig[:, None] * (load @ f + resid_scale * noise)
        sigma[b] = sig
        signs[b] = sg
        expected[b] = sig * g

    omega = sigma[:, None] * signs * np.sqrt(rho)
    model = FactorModel(xi=sigma * resid_scale, omega=omega, phi=np.eye(k))
    ids = tuple(f"a{i}" for i in range(n))
    panel = ReturnsPanel(returns, ids)
    return panel, ExpectedReturns(expected, ids), model


# ---------------------------------------------------------------- CSV I/O


def _locate_bad_cell(path: Path) -> ParseError:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                return ParseError(f"{path}:{line}: expected {len(header)} cells, got {len(row)}", line, None)
            for col, cell in zip(header[1:], row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    return ParseError(f"{path}:{line}: column {col!r}: cannot parse {cell!r}", line, col)
                if not math.isfinite(v):
                    return ParseError(f"{path}:{line}: column {col!r}: non-finite value {cell!r}", line, col)
    return ParseError(f"{path}: unparseable content", None, None)


def load_returns_csv(path: str | Path) -> ReturnsPanel:
    """Read ``alpha_id,<t_1>,...,<t_{M+1}>`` rows into a validated panel."""
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={0: str}, index_col=0, keep_default_na=False, na_values=[])
    except (ValueError, pd.errors.ParserError) as exc:
        raise _locate_bad_cell(path) from exc
    if df.shape[1] == 0:
        raise ParseError(f"{path}: no return columns")
    try:
        values = df.to_numpy(dtype=np.float64)
    except ValueError:
        raise _locate_bad_cell(path) from None
    if not np.all(np.isfinite(values)):
        raise _locate_bad_cell(path)
    return ReturnsPanel(values, tuple(df.index.astype(str)), tuple(map(str, df.columns)))


def save_returns_csv(panel: ReturnsPanel, path: str | Path) -> None:
    df = pd.DataFrame(panel.returns, index=pd.Index(panel.alpha_ids, name="alpha_id"), columns=panel.time_labels)
    df.to_csv(path, float_format="%.15g", lineterminator="\n")


def load_expected_csv(path: str | Path, panel: ReturnsPanel | None = None) -> ExpectedReturns:
    path = Path(path)
    df = pd.read_csv(path, dtype={"alpha_id": str}, keep_default_na=False, na_values=[])
    if list(df.columns) != ["alpha_id", "expected_return"]:
        raise ParseError(f"{path}: header must be alpha_id,expected_return")
    try:
        vals = df["expected_return"].to_numpy(dtype=np.float64)
    except ValueError:
        raise _locate_bad_cell(path) from None
    if not np.all(np.isfinite(vals)):
        raise _locate_bad_cell(path)
    if df["alpha_id"].duplicated().any():
        raise ValidationError(f"{path}: duplicate alpha_id")
    e = ExpectedReturns(vals, tuple(df["alpha_id"]))
    return e.aligned_to(panel) if panel is not None else e


def save_expected_csv(e: ExpectedReturns, path: str | Path) -> None:
    ids = e.alpha_ids or tuple(f"a{i}" for i in range(len(e)))
    pd.DataFrame({"alpha_id": ids, "expected_return": e.values}).to_csv(
        path, index=False, float_format="%.15g", lineterminator="\n"
    )


def save_weights_csv(w: WeightVector, alpha_ids: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("alpha_id,weight\n")
        for a, v in zip(alpha_ids, w.weights):
            fh.write(f"{a},{v:.15g}\n")


def load_vector_csv(path: str | Path, column: str, panel: ReturnsPanel) -> np.ndarray:
    """Per-alpha numeric column (e.g. specific risks, turnover) in panel order."""
    df = pd.read_csv(path, dtype={"alpha_id": str})
    if "alpha_id" not in df.columns or column not in df.columns:
        raise ParseError(f"{path}: header must contain alpha_id,{column}")
    s = pd.Series(df[column].to_numpy(dtype=np.float64), index=df["alpha_id"])
    missing = [a for a in panel.alpha_ids if a not in s.index]
    if missing:
        raise ValidationError(f"{path}: no {column} for alpha {missing[0]!r}")
    out = s.loc[list(panel.alpha_ids)].to_numpy()
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{path}: non-finite {column}")
    return out


def load_positions(path: str | Path) -> PositionHistory:
    """Read long-format ``alpha_id,instrument_id,time,position`` rows.

    Each (alpha, time) slice is rescaled to unit absolute sum; the number of
    slices that needed it is kept in ``n_rescaled``.
    """
    path = Path(path)
    df = pd.read_csv(path, dtype={"alpha_id": str, "instrument_id": str, "time": str})
    expected_cols = ["alpha_id", "instrument_id", "time", "position"]
    if list(df.columns) != expected_cols:
        raise ParseError(f"{path}: header must be {','.join(expected_cols)}")
    try:
        vals = df["position"].to_numpy(dtype=np.float64)
    except ValueError:
        raise ParseError(f"{path}: non-numeric position") from None
    if not np.all(np.isfinite(vals)):
        line = int(np.flatnonzero(~np.isfinite(vals))[0]) + 2
        raise ParseError(f"{path}:{line}: non-finite position", line, "position")

    a_codes, a_ids = pd.factorize(df["alpha_id"], sort=False)
    i_codes, i_ids = pd.factorize(df["instrument_id"], sort=False)
    t_codes, t_ids = pd.factorize(df["time"], sort=False)
    n_t = len(t_ids)
    flat = a_codes * n_t + t_codes
    sums = np.bincount(flat, weights=np.abs(vals), minlength=len(a_ids) * n_t)
    present = np.bincount(flat, minlength=len(a_ids) * n_t) > 0
    small = ~present | (sums < 1e-6)
    if small.any():
        k = int(np.flatnonzero(small)[0])
        raise ValidationError(
            f"{path}: alpha {a_ids[k // n_t]!r} at time {t_ids[k % n_t]!r} is flat "
            f"(sum |P| = {sums[k]:.3g} < 1e-6)"
        )
    off = np.abs(sums - 1.0) > 1e-12
    n_rescaled = int(off.sum())
    if n_rescaled:
        logger.warning("%s: rescaled %d (alpha, time) slices to unit absolute sum", path, n_rescaled)
        vals = vals / sums[flat]
    return PositionHistory(
        a_codes, i_codes, t_codes, vals,
        tuple(map(str, a_ids)), tuple(map(str, i_ids)), tuple(map(str, t_ids)),
        n_rescaled,
    )

"""Command-line entry point: ``alphacomb {combine,oracle-check,bench,gen,style}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._blocks import DENSE_CAP_ENV, dense_cap
from .errors import AlphaCombError
from .optimizer import CombineOptions, combine, dense_oracle_weights, reference_parity
from .panel import (
    ReturnsPanel,
    SynthSpec,
    gen_synthetic,
    load_expected_csv,
    load_positions,
    load_returns_csv,
    load_vector_csv,
    save_expected_csv,
    save_returns_csv,
    save_weights_csv,
)
from .regress import exact_factor_weights
from .riskmodel import ShrinkageSpec, dense_covariance, diagonal_target, position_loadings, shrink_scm, style_loadings
from .stats import NormalizedLoadings, sample_correlation_dense, serial_demean, normalize_and_trim, sample_variances
from .styleanalysis import figure_projection, flatten_offdiag, save_figure_csv, style_regression, style_tensors

log = logging.getLogger("alphacomb")

IDENTITY_TOL = 1e-9
PARITY_TOL = 1e-10


def rel_dev(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| relative to max |b|."""
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / np.abs(b).max())


def _fmt(x: float) -> str:
    return f"{x:.15g}"


# ------------------------------------------------------------------ combine


def _position_matrix(path: str, panel: ReturnsPanel, scale: float) -> np.ndarray:
    pos = load_positions(path)
    pl = position_loadings(pos, scale)
    if pl.dropped:
        log.info("dropped %d untraded instruments", len(pl.dropped))
    rows = {a: k for k, a in enumerate(pos.alpha_ids)}
    missing = [a for a in panel.alpha_ids if a not in rows]
    if missing:
        raise AlphaCombError(f"{path}: no positions for alpha {missing[0]!r}")
    return pl.matrix[[rows[a] for a in panel.alpha_ids]]


def cmd_combine(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    panel = load_returns_csv(args.returns)
    e = load_expected_csv(args.expected, panel)
    kw = {}
    if args.specific_risks:
        kw.update(weight_source="precomputed",
                  specific_risks=load_vector_csv(args.specific_risks, "specific_risk", panel))
    elif args.pc_k is not None:
        kw.update(weight_source="pc_specific", pc_k=args.pc_k, pc_zeta=args.pc_zeta)
    if args.loadings:
        kw.update(external_loadings=_position_matrix(args.loadings, panel, args.loading_scale),
                  augment_mode=args.loadings_mode)
    opts = CombineOptions(remove_overall_mode=not args.keep_overall_mode, threads=args.threads, **kw)
    w = combine(panel, e, opts)
    save_weights_csv(w, panel.alpha_ids, args.out)
    info = w.info
    print(
        f"N={info['n']} M={info['m']} eta={_fmt(w.eta)} q_min={info['q_min']:.6g} "
        f"loadings={info['n_loadings']} dropped={len(info['dropped_columns'])} "
        f"negative={info['n_negative']} time={time.perf_counter() - t0:.3f}s"
    )
    return 0


# ------------------------------------------------------------- oracle-check


def _zeta_deviation(panel: ReturnsPanel, e: np.ndarray, zeta: float, cap: int | None) -> float:
    x = serial_demean(panel)
    cov = dense_covariance(shrink_scm(x, ShrinkageSpec(zeta, diagonal_target(x))), cap)
    dense = dense_oracle_weights(cov, e, cap).weights
    fast = combine(panel, e, CombineOptions(remove_overall_mode=False)).weights
    return rel_dev(fast, dense)


def _oracle_spec(n: int, args: argparse.Namespace) -> SynthSpec:
    # clamp M and K for tiny N; keep total factor strength below one
    m = min(args.m, n - 1)
    k = min(args.k, m)
    hi = min(0.2, 0.9 / k) if k else 0.2
    return SynthSpec(n, m + 1, k, (min(0.05, hi), hi), seed=args.seed)


def cmd_oracle_check(args: argparse.Namespace) -> int:
    cap = dense_cap(args.dense_cap)
    ok = True
    model = None
    if args.returns:
        panel = load_returns_csv(args.returns)
        if not args.expected:
            raise AlphaCombError("--expected is required with --returns")
        e = load_expected_csv(args.expected, panel).values
    else:
        if args.n > cap:
            raise AlphaCombError(f"N={args.n} exceeds the dense-oracle cap {cap}")
        panel, er, model = gen_synthetic(_oracle_spec(args.n, args))
        e = er.values
    n = panel.n_alphas
    if n > cap:
        raise AlphaCombError(f"N={n} exceeds the dense-oracle cap {cap}")

    if model is not None:
        d = rel_dev(exact_factor_weights(e, model).weights, dense_oracle_weights(dense_covariance(model, cap), e, cap).weights)
        good = d < IDENTITY_TOL
        ok &= good
        print(f"woodbury_identity N={n} K={model.n_factors} rel_dev={d:.3e} {'PASS' if good else 'FAIL'}")
    for rm in (True, False):
        p = reference_parity(panel, e, CombineOptions(remove_overall_mode=rm))
        good = p < PARITY_TOL
        ok &= good
        print(f"reference_parity remove_overall_mode={rm} max_abs={p:.3e} {'PASS' if good else 'FAIL'}")
    for z in args.zetas:
        print(f"shrinkage zeta={z} N={n} rel_dev={_zeta_deviation(panel, e, z, cap):.3e}")

    if not args.returns and args.sweep:
        sizes = sorted(args.sweep)
        for z in args.zetas:
            devs = []
            for size in sizes:
                if size > cap:
                    raise AlphaCombError(f"sweep size {size} exceeds the dense-oracle cap {cap}")
                p2, e2, _ = gen_synthetic(_oracle_spec(size, args))
                devs.append(_zeta_deviation(p2, e2.values, z, cap))
            trend = "decreasing" if all(b < a for a, b in zip(devs, devs[1:])) else "not-monotone"
            cells = " ".join(f"N={s}:{d:.3e}" for s, d in zip(sizes, devs))
            print(f"sweep zeta={z} {cells} trend={trend}")
    return 0 if ok else 1


# -------------------------------------------------------------------- bench


def bench_rows(ns: list[int], ms: list[int], repeats: int, seed: int, threads: int | None) -> list[dict]:
    rows = []
    for m in ms:
        prev = None
        for n in ns:
            try:
                panel, e, _ = gen_synthetic(SynthSpec(n, m + 1, 1, seed=seed))
                opts = CombineOptions(threads=threads)
                best = np.inf
                for _ in range(max(1, repeats)):
                    t0 = time.perf_counter()
                    combine(panel, e, opts)
                    best = min(best, time.perf_counter() - t0)
            except MemoryError:
                log.error("allocation failed at N=%d M=%d; reporting partial results", n, m)
                return rows
            rows.append({"n": n, "m": m, "seconds": best, "ratio": "" if prev is None else best / prev})
            prev = best
            del panel, e
    if len(ms) > 1 and len(ns) == 1:
        prev = None
        for row in rows:
            row["ratio"] = "" if prev is None else row["seconds"] / prev
            prev = row["seconds"]
    return rows


def cmd_bench(args: argparse.Namespace) -> int:
    rows = bench_rows(args.n, args.m, args.repeats, args.seed, args.threads)
    print(f"{'N':>10} {'M':>6} {'seconds':>10} {'ratio':>8}")
    for r in rows:
        ratio = f"{r['ratio']:.3f}" if r["ratio"] != "" else ""
        print(f"{r['n']:>10} {r['m']:>6} {r['seconds']:>10.4f} {ratio:>8}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["n", "m", "seconds", "ratio"], lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({**r, "seconds": _fmt(r["seconds"]),
                            "ratio": _fmt(r["ratio"]) if r["ratio"] != "" else ""})
    return 0


# ---------------------------------------------------------------------- gen


def cmd_gen(args: argparse.Namespace) -> int:
    spec = SynthSpec(args.n, args.m + 1, args.k, tuple(args.rho), tuple(args.vol), args.seed)
    panel, e, model = gen_synthetic(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_returns_csv(panel, out / "returns.csv")
    save_expected_csv(e, out / "expected.csv")
    with open(out / "truth_specific.csv", "w", encoding="utf-8") as fh:
        fh.write("alpha_id,specific_risk\n")
        for a, v in zip(panel.alpha_ids, model.xi):
            fh.write(f"{a},{_fmt(v)}\n")
    with open(out / "truth_loadings.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(["alpha_id"] + [f"f{k + 1}" for k in range(model.n_factors)]) + "\n")
        for a, row in zip(panel.alpha_ids, model.omega):
            fh.write(",".join([a] + [_fmt(v) for v in row]) + "\n")
    np.savetxt(out / "truth_phi.csv", model.phi, fmt="%.15g", delimiter=",")
    print(f"wrote N={panel.n_alphas} M={panel.m} K={model.n_factors} to {out}")
    return 0


# -------------------------------------------------------------------- style


def cmd_style(args: argparse.Namespace) -> int:
    panel = load_returns_csv(args.returns)
    cap = dense_cap(args.dense_cap)
    x = serial_demean(panel)
    sigma = np.sqrt(sample_variances(x))
    if args.factor == "volatility":
        nu = style_loadings(sigma)[:, 0]
    else:
        if args.values:
            v = load_vector_csv(args.values, args.factor, panel)
        elif args.factor == "momentum":
            v = panel.returns.mean(axis=1)
        else:
            raise AlphaCombError("--factor turnover needs --values FILE with alpha_id,turnover")
        nu = style_loadings(sigma, **{args.factor: v})[:, 1]
    y = normalize_and_trim(x, sigma, remove_overall_mode=False)
    psi_a = flatten_offdiag(sample_correlation_dense(NormalizedLoadings(y.y), cap), cap)
    _, ya, za = style_tensors(nu)
    rep = style_regression(psi_a, ya, za)
    print(rep.table())
    rep.to_csv(args.out)
    if args.figure:
        save_figure_csv(*figure_projection(psi_a, ya, za, rep.coefficients), args.figure)
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--dense-cap", type=int, default=None,
                        help=f"max N for O(N^2) oracle paths (env {DENSE_CAP_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="alphacomb", description="Combine many alphas by normalized regression.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("combine", parents=[common], help="compute weights")
    c.add_argument("--returns", required=True)
    c.add_argument("--expected", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--keep-overall-mode", action="store_true", help="skip cross-sectional demeaning (M columns)")
    c.add_argument("--loadings", help="positions.csv; position-based loadings")
    c.add_argument("--loadings-mode", choices=("replace", "union"), default="replace")
    c.add_argument("--loading-scale", type=float, default=1.0)
    c.add_argument("--specific-risks", help="CSV alpha_id,specific_risk used instead of sample volatilities")
    c.add_argument("--pc-k", type=int, help="use specific risks from the first K principal components")
    c.add_argument("--pc-zeta", type=float, default=0.5)
    c.set_defaults(func=cmd_combine)

    o = sub.add_parser("oracle-check", parents=[common], help="compare against dense oracles")
    o.add_argument("--returns")
    o.add_argument("--expected")
    o.add_argument("--n", type=int, default=2000)
    o.add_argument("--m", type=int, default=60)
    o.add_argument("--k", type=int, default=5)
    o.add_argument("--zetas", type=float, nargs="+", default=[0.1, 0.5, 0.9])
    o.add_argument("--sweep", type=int, nargs="*", default=[])
    o.set_defaults(func=cmd_oracle_check)

    b = sub.add_parser("bench", parents=[common], help="time combine across N (or M)")
    b.add_argument("--n", type=int, nargs="+", default=[100_000, 200_000, 400_000, 800_000])
    b.add_argument("--m", type=int, nargs="+", default=[252])
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic panel")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True, help="M (the panel has M+1 observations)")
    g.add_argument("--k", type=int, default=0)
    g.add_argument("--rho", type=float, nargs=2, default=[0.05, 0.2])
    g.add_argument("--vol", type=float, nargs=2, default=[0.5, 2.0])
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("style", parents=[common], help="style-factor vs pairwise-correlation regression")
    s.add_argument("--returns", required=True)
    s.add_argument("--factor", choices=("volatility", "turnover", "momentum"), default="volatility")
    s.add_argument("--values", help="CSV alpha_id,<factor> overriding the computed style values")
    s.add_argument("--out", required=True)
    s.add_argument("--figure")
    s.set_defaults(func=cmd_style)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (AlphaCombError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line interface.

Subcommands: ``fit`` (scatterplot smoothing), ``fit-additive`` (subject
intercept additive model), ``penalty`` (emit a penalty matrix), ``simulate``
(write replicated datasets), ``compare`` (the O-spline vs P-spline study).
All data travel as CSV; numbers are written with 17 significant digits so a
round trip through text is exact for doubles.

Exit codes: 0 success, 2 input/configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import study as study_mod
from .errors import (
    ConfigError,
    InputError,
    OSplineError,
    UnsupportedOrder,
)
from .fit import fit_penalized, gcv_select, predict
from .mixed import fit_additive_mixed, fit_reml_smoother, predict_mixed
from .penalty import eilers_marx_knots, osullivan_penalty, pspline_penalty
from .splinebasis import BasisSpec, make_knots, quantile_knots

_ARG_ERRORS = (
    ConfigError,
    InputError,
    UnsupportedOrder,
    ValueError,
)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        writer.writerows(rows)


def _write_matrix(path: str, matrix: np.ndarray) -> None:
    rows = [[_fmt(v) for v in row] for row in np.atleast_2d(matrix)]
    _write_csv(path, None, rows)


def read_columns(path: str, columns: list[str]) -> list[np.ndarray]:
    """Read numeric columns from a headered CSV, reporting bad rows."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: missing header row")
        for col in columns:
            if col not in reader.fieldnames:
                raise ConfigError(
                    f"{path}: unknown column {col!r} (have {reader.fieldnames})"
                )
        data: list[list[float]] = [[] for _ in columns]
        for line_no, row in enumerate(reader, start=2):
            for j, col in enumerate(columns):
                cell = (row.get(col) or "").strip()
                if not cell:
                    raise InputError(f"{path} row {line_no}: missing value in {col!r}")
                try:
                    value = float(cell)
                except ValueError as exc:
                    raise InputError(
                        f"{path} row {line_no}: non-numeric value {cell!r} in {col!r}"
                    ) from exc
                if not np.isfinite(value):
                    raise InputError(f"{path} row {line_no}: non-finite value in {col!r}")
                data[j].append(value)
    if not data[0]:
        raise InputError(f"{path}: no data rows")
    return [np.asarray(col) for col in data]


def _residual_path(output: str) -> str:
    root, ext = os.path.splitext(output)
    return f"{root}.residuals{ext or '.csv'}"


class _WorkArgs:
    """Argument view with the knot domain overridden (for rescaled x)."""

    def __init__(self, args, a, b):
        self._args = args
        self.a = a
        self.b = b

    def __getattr__(self, name):
        return getattr(self._args, name)


def _build_spec(args, x: np.ndarray):
    a = float(x.min()) if args.a is None else args.a
    b = float(x.max()) if args.b is None else args.b
    m = args.order
    if args.knots == "maximal":
        return BasisSpec.from_knots(make_knots(a, b, np.unique(x), m))
    K = args.num_knots
    if K is None:
        raise ConfigError(f"--num-knots is required for --knots {args.knots}")
    if args.knots == "quantile":
        return BasisSpec.from_knots(make_knots(a, b, quantile_knots(x, K), m))
    if args.knots == "equal":
        interior = np.linspace(a, b, K + 2)[1:-1]
        return BasisSpec.from_knots(make_knots(a, b, interior, m))
    if args.knots == "eilers-marx":
        return BasisSpec.from_knots(eilers_marx_knots(a, b, K, m))
    raise ConfigError(f"unknown knot rule {args.knots!r}")


def cmd_fit(args) -> int:
    x, y = read_columns(args.input, [args.x_col, args.y_col])
    # work on x rescaled to [0, 1]; lambda is reported on that scale
    shift = float(x.min()) if args.a is None else args.a
    scale = (float(x.max()) if args.b is None else args.b) - shift
    if scale <= 0:
        raise InputError("x column has zero range (or --a >= --b)")
    xw = (x - shift) / scale
    work = _WorkArgs(args, a=0.0, b=1.0)
    spec = _build_spec(work, xw)
    if args.knots == "eilers-marx":
        if args.method == "reml":
            raise ConfigError("REML requires the integral penalty (repeated knots)")
        pen = pspline_penalty(spec.num_basis, 2)
    else:
        pen = osullivan_penalty(spec.knots)

    reml_fit = None
    if args.method == "lambda":
        if args.lam is None:
            raise ConfigError("--method lambda requires --lambda")
        lam, result = args.lam, fit_penalized(xw, y, spec, pen, args.lam)
        edf = result.edf
    elif args.method == "gcv":
        lam, result = gcv_select(xw, y, spec, pen, np.logspace(-10, 6, 33))
        edf = result.edf
    elif args.method == "reml":
        reml_fit = fit_reml_smoother(xw, y, spec)
        lam = reml_fit.lambda_implied
        result = fit_penalized(xw, y, spec, pen, lam)
        edf = result.edf
    else:
        raise ConfigError(f"unknown method {args.method!r}")

    grid_w = np.linspace(0.0, 1.0, args.grid_size)
    grid = shift + scale * grid_w
    fitted_grid = predict(result, grid_w)
    deriv2 = predict(result, grid_w, deriv=2) / scale**2 \
        if spec.knots.degree >= 2 else np.zeros_like(grid)
    _write_csv(
        args.output,
        ["grid_x", "fitted", "deriv2"],
        [[_fmt(g), _fmt(f), _fmt(d)] for g, f, d in zip(grid, fitted_grid, deriv2)],
    )
    residuals = y - result.fitted
    _write_csv(
        _residual_path(args.output),
        ["x", "y", "fitted", "residual"],
        [[_fmt(a_), _fmt(b_), _fmt(c_), _fmt(d_)]
         for a_, b_, c_, d_ in zip(x, y, result.fitted, residuals)],
    )
    print(f"lambda={_fmt(lam)}")
    print("lambda_scale=x_rescaled_to_unit_interval")
    print(f"edf={_fmt(edf)}")
    if reml_fit is not None:
        print(f"sigma_u2={_fmt(reml_fit.sigma_u2)}")
        print(f"sigma_eps2={_fmt(reml_fit.sigma_eps2)}")
        print(f"reml={_fmt(reml_fit.reml_value)}")
    return 0


def cmd_fit_additive(args) -> int:
    if args.group_col is None:
        raise ConfigError("fit-additive requires --group-col")
    cov_cols = [c for c in (args.covariate_cols or "").split(",") if c]
    cols = read_columns(args.input, [args.x_col, args.y_col, args.group_col] + cov_cols)
    x, y, group = cols[0], cols[1], cols[2].astype(int)
    covariates = np.column_stack(cols[3:]) if cov_cols else np.empty((y.size, 0))
    spec = _build_spec(args, x)
    fit = fit_additive_mixed(y, x, covariates, group, spec)

    grid = np.linspace(spec.knots.a, spec.knots.b, args.grid_size)
    from .mixed import build_design, demmler_reinsch  # local import to avoid cycle noise

    transform = demmler_reinsch(osullivan_penalty(spec.knots))
    _, Zg = build_design(grid, spec, transform)
    curve = fit.beta[0] + fit.beta[1] * grid + Zg @ fit.u_spline
    _write_csv(
        args.output,
        ["grid_x", "fitted"],
        [[_fmt(g), _fmt(f)] for g, f in zip(grid, curve)],
    )
    _write_csv(
        _residual_path(args.output),
        ["x", "y", "fitted", "residual"],
        [[_fmt(a_), _fmt(b_), _fmt(c_), _fmt(b_ - c_)]
         for a_, b_, c_ in zip(x, y, fit.fitted)],
    )
    names = ["intercept", "slope"] + cov_cols
    for name, est, se in zip(names, fit.beta, fit.beta_se):
        print(f"beta[{name}]={_fmt(est)}")
        print(f"se[{name}]={_fmt(se)}")
        print(f"ci95[{name}]={_fmt(est - 1.96 * se)},{_fmt(est + 1.96 * se)}")
    print(f"sigma_U2={_fmt(fit.sigma_U2)}")
    print(f"sigma_u2={_fmt(fit.sigma_u2)}")
    print(f"sigma_eps2={_fmt(fit.sigma_eps2)}")
    print(f"reml={_fmt(fit.reml_value)}")
    return 0


def cmd_penalty(args) -> int:
    a = 0.0 if args.a is None else args.a
    b = 1.0 if args.b is None else args.b
    K = args.num_knots if args.num_knots is not None else 0
    m = args.order
    if args.knots == "eilers-marx":
        knots = eilers_marx_knots(a, b, K, m)
        pen = pspline_penalty(knots.num_basis, 2)
    else:
        interior = np.linspace(a, b, K + 2)[1:-1] if K else np.empty(0)
        knots = make_knots(a, b, interior, m)
        pen = osullivan_penalty(knots)
    if args.bands:
        nb = pen.dim
        mid = nb // 2
        half = 2 * m - 1
        row = pen.values[mid, max(mid - half, 0) : mid + half + 1].copy()
        if args.normalize_center is not None:
            center = row[min(mid, half)]
            row = row * (args.normalize_center / center)
        _write_matrix(args.output, row)
    else:
        _write_matrix(args.output, pen.values)
    return 0


def cmd_simulate(args) -> int:
    settings = study_mod.builtin_settings(n=args.n)
    if args.setting not in settings:
        raise ConfigError(f"unknown setting {args.setting!r} (have {sorted(settings)})")
    setting = settings[args.setting]
    rows = []
    for rep in range(args.reps):
        rng = np.random.default_rng(np.random.SeedSequence((args.seed, rep)))
        x, y = study_mod.simulate(setting, rng)
        f_true = setting.f(x)
        rows.extend(
            [str(rep), _fmt(xi), _fmt(yi), _fmt(fi)]
            for xi, yi, fi in zip(x, y, f_true)
        )
    _write_csv(args.output, ["rep", "x", "y", "f_true"], rows)
    return 0


def _summary_path(output: str) -> str:
    root, ext = os.path.splitext(output)
    return f"{root}.summary{ext or '.csv'}"


def _exemplar_path(output: str) -> str:
    root, ext = os.path.splitext(output)
    return f"{root}.exemplar{ext or '.csv'}"


def cmd_compare(args) -> int:
    settings = study_mod.builtin_settings(n=args.n)
    if args.setting not in settings:
        raise ConfigError(f"unknown setting {args.setting!r} (have {sorted(settings)})")
    setting = settings[args.setting]
    result = study_mod.run_comparison(
        setting, reps=args.reps, K=args.num_knots or 100, seed=args.seed
    )
    rows = []
    for row in result.rows:
        for method, measures in (("ospline", row.d_o), ("pspline", row.d_p)):
            for region, value in measures.as_dict().items():
                rows.append([str(row.rep), region, method, _fmt(value)])
    _write_csv(args.output, ["rep", "region", "method", "discrepancy"], rows)

    summary = []
    for region in study_mod.REGIONS:
        diffs = result.diffs(region)
        w = study_mod.wilcoxon_signed_rank(diffs)
        summary.append(
            [
                region,
                _fmt(float(np.median(result.values("o", region)))),
                _fmt(float(np.median(result.values("p", region)))),
                _fmt(w.statistic),
                str(w.n_used),
                _fmt(w.p_less),
                _fmt(w.p_greater),
                _fmt(w.p_two_sided),
            ]
        )
    _write_csv(
        _summary_path(args.output),
        [
            "region",
            "median_d_ospline",
            "median_d_pspline",
            "wilcoxon_statistic",
            "n_used",
            "p_one_sided_o_closer",
            "p_one_sided_p_closer",
            "p_two_sided",
        ],
        summary,
    )

    if args.exemplar_percentile is not None:
        rows = []
        grid = np.linspace(result.a, result.b, args.grid_size)
        for method in ("o", "p"):
            totals = result.values(method, "total")
            idx = study_mod.percentile_exemplar(totals, args.exemplar_percentile)
            rep = result.rows[idx].rep
            curves = _exemplar_curves(setting, args, rep, result, grid)
            for g, ref, fo, fp in zip(grid, *curves):
                rows.append([method, str(rep), _fmt(g), _fmt(ref), _fmt(fo), _fmt(fp)])
        _write_csv(
            _exemplar_path(args.output),
            ["sample", "rep", "grid_x", "fitted_ref", "fitted_ospline", "fitted_pspline"],
            rows,
        )
    if result.skipped:
        print(f"skipped_reps={','.join(map(str, result.skipped))}")
    print(f"completed_reps={len(result.rows)}")
    return 0


def _exemplar_curves(setting, args, rep, result, grid):
    from .fit import match_edf
    from .penalty import osullivan_penalty as _osp

    rng = np.random.default_rng(np.random.SeedSequence((args.seed, rep)))
    x, y = study_mod.simulate(setting, rng)
    a, b = result.a, result.b
    K = args.num_knots or 100
    ref_spec = BasisSpec.from_knots(make_knots(a, b, np.unique(x), 2))
    lam_ref, ref_fit = gcv_select(x, y, ref_spec, _osp(ref_spec.knots),
                                  np.logspace(-10, 6, 33))
    interior = np.linspace(a, b, K + 2)[1:-1]
    o_spec = BasisSpec.from_knots(make_knots(a, b, interior, 2))
    _, o_fit = match_edf(x, y, o_spec, _osp(o_spec.knots), ref_fit.edf)
    p_spec = BasisSpec.from_knots(eilers_marx_knots(a, b, K, 2))
    _, p_fit = match_edf(x, y, p_spec, pspline_penalty(p_spec.num_basis, 2), ref_fit.edf)
    return predict(ref_fit, grid), predict(o_fit, grid), predict(p_fit, grid)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osul",
        description="O'Sullivan penalized spline fitting and comparison tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_fit(p):
        p.add_argument("--input", required=True)
        p.add_argument("--x-col", default="x")
        p.add_argument("--y-col", default="y")
        p.add_argument("--order", type=int, default=2)
        p.add_argument("--knots", default="quantile",
                       choices=["quantile", "equal", "eilers-marx", "maximal"])
        p.add_argument("--num-knots", type=int, default=None)
        p.add_argument("--a", type=float, default=None)
        p.add_argument("--b", type=float, default=None)
        p.add_argument("--grid-size", type=int, default=101)
        p.add_argument("--output", required=True)

    p_fit = sub.add_parser("fit", help="scatterplot smoothing")
    add_common_fit(p_fit)
    p_fit.add_argument("--method", default="gcv", choices=["lambda", "gcv", "reml"])
    p_fit.add_argument("--lambda", dest="lam", type=float, default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_add = sub.add_parser("fit-additive", help="subject-intercept additive model")
    add_common_fit(p_add)
    p_add.add_argument("--group-col", default=None)
    p_add.add_argument("--covariate-cols", default="")
    p_add.set_defaults(func=cmd_fit_additive)

    p_pen = sub.add_parser("penalty", help="emit a penalty matrix as CSV")
    p_pen.add_argument("--order", type=int, default=2)
    p_pen.add_argument("--knots", default="equal", choices=["equal", "eilers-marx"])
    p_pen.add_argument("--num-knots", type=int, default=None)
    p_pen.add_argument("--a", type=float, default=None)
    p_pen.add_argument("--b", type=float, default=None)
    p_pen.add_argument("--bands", action="store_true",
                       help="emit the interior band row instead of the matrix")
    p_pen.add_argument("--normalize-center", type=float, default=None)
    p_pen.add_argument("--output", required=True)
    p_pen.set_defaults(func=cmd_penalty)

    p_sim = sub.add_parser("simulate", help="write replicated simulation data")
    p_sim.add_argument("--setting", default="ramp")
    p_sim.add_argument("--n", type=int, default=200)
    p_sim.add_argument("--reps", type=int, default=1)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--output", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="run the O-spline vs P-spline study")
    p_cmp.add_argument("--setting", default="ramp")
    p_cmp.add_argument("--n", type=int, default=200)
    p_cmp.add_argument("--reps", type=int, default=50)
    p_cmp.add_argument("--num-knots", type=int, default=100)
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--grid-size", type=int, default=101)
    p_cmp.add_argument("--exemplar-percentile", type=float, default=None)
    p_cmp.add_argument("--output", required=True)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ARG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSplineError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

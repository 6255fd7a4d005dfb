"""Comparison harness: O-splines vs P-splines against a maximal-knot reference.

Per replication the harness simulates data on [0, 1], fits the maximal-knot
cubic reference (interior knots at every unique x, GCV-selected smoothing),
then fits a K-knot O-spline and an Eilers-Marx P-spline matched to the
reference's effective degrees of freedom, and integrates squared curve
differences over the left-boundary, interior, right-boundary and total
regions of the estimation interval.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import BracketFailure, DegenerateSample, InfeasibleTarget, InvalidInput
from .fit import FitResult, fit_penalized, gcv_select, match_edf, predict
from .penalty import eilers_marx_knots, osullivan_penalty, pspline_penalty
from .splinebasis import BasisSpec, make_knots

__all__ = [
    "SimSetting",
    "RegionMeasures",
    "ComparisonRow",
    "ComparisonResult",
    "builtin_settings",
    "simulate",
    "discrepancy",
    "run_comparison",
    "wilcoxon_signed_rank",
    "WilcoxonResult",
    "percentile_exemplar",
]

REGIONS = ("left", "interior", "right", "total")

_DEFAULT_GCV_GRID = np.logspace(-10, 6, 33)


@dataclass(frozen=True)
class SimSetting:
    """A simulation setting: true curve, noise level, sample size, design."""

    name: str
    f: callable
    sigma: float
    n: int
    design: str = "random"  # "random" or "grid"


def _ramp(x):
    return ndtr((np.asarray(x) - 0.5) / 0.15)


def _sine(x):
    x = np.asarray(x)
    return np.sin(3.0 * np.pi * x) * (1.0 + x)


def _line(x):
    return 1.0 + 2.0 * np.asarray(x)


def builtin_settings(n: int = 200) -> dict[str, SimSetting]:
    """Stock settings for the comparison harness.

    ``linear`` is a noise-free smoke setting (every estimator reproduces the
    line exactly); ``ramp`` and ``sine`` are the study settings.
    """
    return {
        "ramp": SimSetting(name="ramp", f=_ramp, sigma=0.2, n=n),
        "sine": SimSetting(name="sine", f=_sine, sigma=0.4, n=n),
        "linear": SimSetting(name="linear", f=_line, sigma=0.0, n=n),
    }


def simulate(setting: SimSetting, rng: np.random.Generator):
    """Draw one replication (x sorted in [0, 1], y = f(x) + noise)."""
    if setting.design == "grid":
        x = np.linspace(0.0, 1.0, setting.n)
    elif setting.design == "random":
        x = np.sort(rng.uniform(0.0, 1.0, setting.n))
    else:
        raise InvalidInput(f"unknown design {setting.design!r}")
    y = setting.f(x) + setting.sigma * rng.standard_normal(setting.n)
    return x, y


def discrepancy(f, g, lo: float, hi: float, num_nodes: int = 401) -> float:
    """Integrated squared difference of two curves over (lo, hi).

    Composite Simpson quadrature on ``num_nodes`` equally spaced nodes
    (``num_nodes`` must be odd).
    """
    if not lo < hi:
        raise InvalidInput(f"need lo < hi, got ({lo}, {hi})")
    if num_nodes < 3 or num_nodes % 2 == 0:
        raise InvalidInput("num_nodes must be odd and >= 3")
    t = np.linspace(lo, hi, num_nodes)
    diff2 = (np.asarray(f(t), dtype=float) - np.asarray(g(t), dtype=float)) ** 2
    w = np.ones(num_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = (hi - lo) / (num_nodes - 1)
    return float(h / 3.0 * (w @ diff2))


@dataclass(frozen=True)
class RegionMeasures:
    """d(f, g; A) over the four comparison regions."""

    d_left: float
    d_interior: float
    d_right: float
    d_total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "left": self.d_left,
            "interior": self.d_interior,
            "right": self.d_right,
            "total": self.d_total,
        }


def region_measures(f, g, a: float, b: float, first_knot: float, last_knot: float) -> RegionMeasures:
    """Measure curve discrepancy over the boundary/interior/total regions."""
    return RegionMeasures(
        d_left=discrepancy(f, g, a, first_knot),
        d_interior=discrepancy(f, g, first_knot, last_knot),
        d_right=discrepancy(f, g, last_knot, b),
        d_total=discrepancy(f, g, a, b),
    )


@dataclass(frozen=True)
class ComparisonRow:
    """One replication of the comparison study."""

    rep: int
    edf_ref: float
    lambda_ref: float
    lambda_o: float
    lambda_p: float
    d_o: RegionMeasures
    d_p: RegionMeasures


@dataclass
class ComparisonResult:
    """All completed replications plus the indices of skipped ones."""

    setting: SimSetting
    K: int
    seed: int
    a: float
    b: float
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def diffs(self, region: str) -> np.ndarray:
        """Per-replication d_O - d_P for one region (negative favours O)."""
        return np.array(
            [r.d_o.as_dict()[region] - r.d_p.as_dict()[region] for r in self.rows]
        )

    def values(self, method: str, region: str) -> np.ndarray:
        return np.array(
            [(r.d_o if method == "o" else r.d_p).as_dict()[region] for r in self.rows]
        )


def _default_workers() -> int:
    env = os.environ.get("OSUL_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _run_one_rep(setting: SimSetting, K: int, seed: int, rep: int, a: float, b: float,
                 grid_size: int = 401):
    rng = np.random.default_rng(np.random.SeedSequence((seed, rep)))
    x, y = simulate(setting, rng)

    # maximal-knot cubic reference with GCV-selected smoothing
    ref_spec = BasisSpec.from_knots(make_knots(a, b, np.unique(x), 2))
    ref_pen = osullivan_penalty(ref_spec.knots)
    lam_ref, ref_fit = gcv_select(x, y, ref_spec, ref_pen, _DEFAULT_GCV_GRID)

    # K equally spaced interior knots for both contenders
    interior = np.linspace(a, b, K + 2)[1:-1]
    o_spec = BasisSpec.from_knots(make_knots(a, b, interior, 2))
    o_pen = osullivan_penalty(o_spec.knots)
    p_spec = BasisSpec.from_knots(eilers_marx_knots(a, b, K, 2))
    p_pen = pspline_penalty(p_spec.num_basis, 2)

    target = ref_fit.edf
    lam_o, o_fit = match_edf(x, y, o_spec, o_pen, target)
    lam_p, p_fit = match_edf(x, y, p_spec, p_pen, target)

    def curve(fit: FitResult):
        return lambda t: predict(fit, t)

    first_knot, last_knot = interior[0], interior[-1]
    d_o = region_measures(curve(o_fit), curve(ref_fit), a, b, first_knot, last_knot)
    d_p = region_measures(curve(p_fit), curve(ref_fit), a, b, first_knot, last_knot)
    return ComparisonRow(
        rep=rep,
        edf_ref=target,
        lambda_ref=lam_ref,
        lambda_o=lam_o,
        lambda_p=lam_p,
        d_o=d_o,
        d_p=d_p,
    )


def run_comparison(setting: SimSetting, reps: int, K: int, seed: int = 0,
                   a: float = -0.1, b: float = 1.1,
                   workers: int | None = None) -> ComparisonResult:
    """Run the replicated comparison study.

    Each replication owns an RNG stream derived from (seed, rep), so results
    are identical whatever the worker count.  Replications whose df match is
    infeasible are skipped and recorded.
    """
    if reps < 1:
        raise InvalidInput(f"need reps >= 1, got {reps}")
    if K < 4:
        raise InvalidInput(f"need K >= 4 interior knots, got {K}")
    result = ComparisonResult(setting=setting, K=K, seed=seed, a=a, b=b)
    workers = _default_workers() if workers is None else max(1, workers)

    def task(rep: int):
        try:
            return rep, _run_one_rep(setting, K, seed, rep, a, b)
        except (InfeasibleTarget, BracketFailure):
            return rep, None

    if workers == 1:
        outcomes = [task(rep) for rep in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(task, range(reps)))
    for rep, row in sorted(outcomes):
        if row is None:
            result.skipped.append(rep)
        else:
            result.rows.append(row)
    return result


@dataclass(frozen=True)
class WilcoxonResult:
    """Signed-rank statistic with exact or normal-approximation p-values."""

    statistic: float
    n_used: int
    p_two_sided: float
    p_less: float
    p_greater: float
    method: str


def wilcoxon_signed_rank(diffs, mode: str = "auto") -> WilcoxonResult:
    """Wilcoxon signed-rank test of zero median difference.

    Exact zeros are dropped; ties get average ranks.  ``mode="auto"`` uses
    exact enumeration of all sign patterns for n <= 12 and the tie-corrected
    normal approximation with continuity correction otherwise.
    """
    diffs = np.asarray(diffs, dtype=float).ravel()
    if diffs.size == 0:
        raise DegenerateSample("empty sample")
    d = diffs[diffs != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateSample("all differences are exactly zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if mode == "auto":
        mode = "exact" if n <= 12 else "approx"
    if mode == "exact":
        if n > 24:
            raise InvalidInput(f"exact enumeration limited to n <= 24, got {n}")
        signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        sums = signs @ ranks
        eps = 1e-9
        p_greater = float(np.mean(sums >= w_plus - eps))
        p_less = float(np.mean(sums <= w_plus + eps))
    elif mode == "approx":
        mean = ranks.sum() / 2.0
        sd = np.sqrt(np.sum(ranks**2) / 4.0)
        p_less = float(ndtr((w_plus - mean + 0.5) / sd))
        p_greater = float(1.0 - ndtr((w_plus - mean - 0.5) / sd))
    else:
        raise InvalidInput(f"unknown mode {mode!r}")
    p_two = min(1.0, 2.0 * min(p_less, p_greater))
    return WilcoxonResult(
        statistic=w_plus,
        n_used=n,
        p_two_sided=p_two,
        p_less=p_less,
        p_greater=p_greater,
        method=mode,
    )


def percentile_exemplar(d_totals, percentile: float) -> int:
    """Index of the replication at the nearest-rank empirical percentile."""
    values = np.asarray(d_totals, dtype=float).ravel()
    if values.size == 0:
        raise InvalidInput("empty table")
    if not 0.0 < percentile < 1.0:
        raise InvalidInput(f"percentile must be in (0, 1), got {percentile}")
    k = int(np.ceil(percentile * values.size))
    order = np.argsort(values, kind="stable")
    return int(order[k - 1])

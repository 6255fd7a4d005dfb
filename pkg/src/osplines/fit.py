"""Penalized least-squares fitting, GCV selection, and df matching.

The estimator solves ``(B'B + lambda * Omega) nu = B'y``.  In the usual
regime this goes through the banded Cholesky path (the cross-product matrix
has bandwidth ``2m - 1``).  When ``lambda`` is so extreme that forming the
normal equations destroys the smaller term in float64, the same minimization
is solved as an augmented least-squares problem via QR on
``[B; sqrt(lambda) * root]`` where ``root' root = Omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    BracketFailure,
    InfeasibleTarget,
    InvalidInput,
    InvalidLambda,
    NotPositiveDefinite,
    SelectionFailure,
    SingularFit,
)
from .linalg import banded_cholesky
from .penalty import PenaltyMatrix
from .splinebasis import BasisSpec, eval_basis

__all__ = ["FitResult", "fit_penalized", "predict", "gcv_select", "match_edf"]

# beyond this scale ratio between lambda*Omega and B'B the normal equations
# are numerically rank deficient and the QR path takes over
_EXTREME_RATIO = 1e8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FitResult:
    """A fitted penalized spline."""

    coefficients: np.ndarray
    lam: float
    edf: float
    fitted: np.ndarray
    rss: float
    spec: BasisSpec
    penalty: PenaltyMatrix
    solver: str

    @property
    def gcv(self) -> float:
        n = self.fitted.size
        return n * self.rss / (n - self.edf) ** 2


class _PreparedProblem:
    """Design cross-products shared across lambda evaluations."""

    def __init__(self, x, y, spec: BasisSpec, penalty: PenaltyMatrix):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.size != y.size:
            raise InvalidInput(f"x and y lengths differ: {x.size} vs {y.size}")
        if x.size == 0:
            raise InvalidInput("empty data")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("x and y must be finite")
        if penalty.dim != spec.num_basis:
            raise InvalidInput(
                f"penalty dimension {penalty.dim} does not match basis size "
                f"{spec.num_basis}"
            )
        self.x = x
        self.y = y
        self.spec = spec
        self.penalty = penalty
        self.B = eval_basis(spec, x).values
        self.BtB = self.B.T @ self.B
        self.Bty = self.B.T @ y
        self.bandwidth = max(spec.knots.degree, penalty.order)
        self.n = x.size

    def solve(self, lam: float, solver: str = "auto") -> FitResult:
        if not (lam > 0 and np.isfinite(lam)):
            raise InvalidLambda(f"lambda must be positive and finite, got {lam}")
        if solver == "auto":
            pen_scale = lam * np.abs(self.penalty.values).max()
            dat_scale = np.abs(self.BtB).max()
            extreme = (
                pen_scale > _EXTREME_RATIO * dat_scale
                or dat_scale > _EXTREME_RATIO * max(pen_scale, np.finfo(float).tiny)
            )
            solver = "qr" if extreme else "banded"
        if solver == "banded":
            coef, edf = self._solve_banded(lam)
        elif solver == "qr":
            coef, edf = self._solve_qr(lam)
        else:
            raise InvalidInput(f"unknown solver {solver!r}")
        fitted = self.B @ coef
        rss = float(np.sum((self.y - fitted) ** 2))
        return FitResult(
            coefficients=coef,
            lam=float(lam),
            edf=edf,
            fitted=fitted,
            rss=rss,
            spec=self.spec,
            penalty=self.penalty,
            solver=solver,
        )

    def _solve_banded(self, lam: float):
        A = self.BtB + lam * self.penalty.values
        try:
            factor = banded_cholesky(A, self.bandwidth)
        except NotPositiveDefinite as exc:
            raise SingularFit(
                f"penalized normal equations not positive definite at "
                f"lambda={lam:g}: {exc}"
            ) from exc
        coef = factor.solve(self.Bty)
        edf = float(np.trace(factor.solve(self.BtB)))
        return coef, edf

    def _solve_qr(self, lam: float):
        stacked = np.vstack([self.B, math.sqrt(lam) * self.penalty.root])
        rhs = np.concatenate([self.y, np.zeros(self.penalty.root.shape[0])])
        Q, R = scipy.linalg.qr(stacked, mode="economic")
        diag = np.abs(np.diagonal(R))
        if diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SingularFit(
                f"augmented design is numerically rank deficient at lambda={lam:g}"
            )
        coef = scipy.linalg.solve_triangular(R, Q.T @ rhs)
        # edf = tr(B A^-1 B') = ||B R^-1||_F^2 since A = R'R
        BRinv = scipy.linalg.solve_triangular(R, self.B.T, trans="T")
        edf = float(np.sum(BRinv * BRinv))
        return coef, edf


def fit_penalized(x, y, spec: BasisSpec, penalty: PenaltyMatrix, lam: float,
                  solver: str = "auto") -> FitResult:
    """Fit the penalized spline at a fixed smoothing parameter."""
    return _PreparedProblem(x, y, spec, penalty).solve(lam, solver)


def predict(fit: FitResult, points, deriv: int = 0) -> np.ndarray:
    """Evaluate the fitted spline (or a derivative) anywhere.

    Points outside [a, b] use the polynomial extension of the boundary piece,
    which for cubic O'Sullivan fits is the natural linear extrapolation.
    """
    design = eval_basis(fit.spec, points, deriv, extrapolate=True)
    return design.values @ fit.coefficients


def _refine_golden(objective, lo: float, hi: float, tol: float):
    """Golden-section minimization of ``objective`` over [lo, hi]."""
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = objective(c), objective(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = objective(d)
    return (lo + hi) / 2.0


def gcv_select(x, y, spec: BasisSpec, penalty: PenaltyMatrix, grid) -> tuple[float, FitResult]:
    """Pick lambda by generalized cross-validation over a grid, then refine.

    GCV(lambda) = n * RSS / (n - edf)^2; grid points with n <= edf are
    skipped.  The grid minimum is refined by golden-section search on
    log lambda between its neighbouring grid points (tolerance 1e-3).
    """
    grid = np.sort(np.asarray(grid, dtype=float).ravel())
    if grid.size == 0:
        raise SelectionFailure("empty lambda grid")
    prob = _PreparedProblem(x, y, spec, penalty)
    n = prob.n

    def gcv_at(lam: float) -> float:
        res = prob.solve(lam)
        if n - res.edf <= 1e-8 * n:
            return math.inf
        return res.gcv

    scores = np.array([gcv_at(lam) for lam in grid])
    if not np.any(np.isfinite(scores)):
        raise SelectionFailure("no valid grid point: n <= edf everywhere")
    # ties broken toward larger lambda
    best = int(np.nonzero(scores == scores.min())[0][-1])
    if grid.size == 1:
        lam = float(grid[0])
        return lam, prob.solve(lam)
    lo = math.log(grid[max(best - 1, 0)])
    hi = math.log(grid[min(best + 1, grid.size - 1)])
    log_lam = _refine_golden(lambda t: gcv_at(math.exp(t)), lo, hi, tol=1e-3)
    lam = math.exp(log_lam)
    return lam, prob.solve(lam)


def match_edf(x, y, spec: BasisSpec, penalty: PenaltyMatrix, target_edf: float,
              log_bounds: tuple[float, float] = (-20.0, 20.0),
              tol: float = 1e-4) -> tuple[float, FitResult]:
    """Find lambda whose fit has the requested effective degrees of freedom.

    Uses bisection on log lambda, valid because edf is strictly decreasing
    in lambda.  ``log_bounds`` is on the natural-log scale of a problem with
    order-one knot spacing (standardize x first for other scales).
    """
    null_dim = penalty.null_dim
    if not (null_dim < target_edf < spec.num_basis):
        raise InfeasibleTarget(
            f"target edf {target_edf} outside ({null_dim}, {spec.num_basis})"
        )
    prob = _PreparedProblem(x, y, spec, penalty)
    lo, hi = log_bounds
    res_lo = prob.solve(math.exp(lo))
    if abs(res_lo.edf - target_edf) <= tol:
        return math.exp(lo), res_lo
    res_hi = prob.solve(math.exp(hi))
    if abs(res_hi.edf - target_edf) <= tol:
        return math.exp(hi), res_hi
    if not (res_hi.edf < target_edf < res_lo.edf):
        raise BracketFailure(
            f"target edf {target_edf} not bracketed on log-lambda "
            f"{log_bounds}: edf range [{res_hi.edf:.4f}, {res_lo.edf:.4f}]"
        )
    for _ in range(200):
        mid = (lo + hi) / 2.0
        res = prob.solve(math.exp(mid))
        if abs(res.edf - target_edf) <= tol:
            return math.exp(mid), res
        if res.edf > target_edf:
            lo = mid
        else:
            hi = mid
    raise BracketFailure(
        f"bisection did not reach |edf - target| <= {tol} within 200 steps"
    )

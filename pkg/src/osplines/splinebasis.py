"""Knot sequences and B-spline basis evaluation.

Bases of order ``m`` use degree ``2m - 1`` B-splines on a knot sequence with
``2m``-fold boundary knots (or an equally spaced extended sequence for
P-spline style bases), giving ``K + 2m`` basis functions for ``K`` interior
knots.  Evaluation uses the Cox-de Boor recurrence; derivatives are obtained
by mapping lower-degree basis values through banded difference operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateKnots,
    InsufficientData,
    InvalidDerivative,
    InvalidInput,
    InvalidKnots,
    InvalidOrder,
    OutsideSupport,
)

__all__ = [
    "KnotSequence",
    "BasisSpec",
    "DesignMatrix",
    "make_knots",
    "quantile_knots",
    "default_num_knots",
    "eval_basis",
    "eval_basis_in_interval",
]


@dataclass(frozen=True)
class KnotSequence:
    """A knot sequence for degree ``2m - 1`` splines on [a, b].

    ``full`` either repeats each boundary knot ``2m`` times (style
    ``"repeated"``, the O'Sullivan layout) or extends equally spaced knots
    beyond the boundary (style ``"extended"``, the Eilers-Marx layout).
    """

    m: int
    a: float
    b: float
    interior: np.ndarray
    full: np.ndarray
    style: str = "repeated"

    @property
    def degree(self) -> int:
        return 2 * self.m - 1

    @property
    def num_interior(self) -> int:
        return self.interior.size

    @property
    def num_basis(self) -> int:
        return self.full.size - self.degree - 1

    def positive_intervals(self) -> np.ndarray:
        """Indices ``l`` with ``full[l+1] > full[l]`` (zero-width skipped)."""
        return np.nonzero(np.diff(self.full) > 0)[0]


@dataclass(frozen=True)
class BasisSpec:
    """A concrete B-spline basis: knots plus the implied basis size."""

    knots: KnotSequence
    num_basis: int

    @classmethod
    def from_knots(cls, knots: KnotSequence) -> "BasisSpec":
        return cls(knots=knots, num_basis=knots.num_basis)


@dataclass(frozen=True)
class DesignMatrix:
    """Dense matrix of basis-function (derivative) values at points."""

    values: np.ndarray
    eval_points: np.ndarray
    deriv: int = 0


def make_knots(a: float, b: float, interior, m: int) -> KnotSequence:
    """Build the O'Sullivan knot sequence with 2m-fold boundary knots."""
    if m < 1:
        raise InvalidOrder(f"spline order m must be >= 1, got {m}")
    a = float(a)
    b = float(b)
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise InvalidKnots(f"need finite a < b, got a={a}, b={b}")
    interior = np.atleast_1d(np.asarray(interior, dtype=float))
    if interior.size:
        if not np.all(np.isfinite(interior)):
            raise InvalidKnots("interior knots must be finite")
        if np.any(np.diff(interior) <= 0):
            raise InvalidKnots("interior knots must be strictly increasing")
        if interior[0] <= a or interior[-1] >= b:
            raise InvalidKnots("interior knots must lie strictly inside (a, b)")
    full = np.concatenate([np.full(2 * m, a), interior, np.full(2 * m, b)])
    return KnotSequence(m=m, a=a, b=b, interior=interior, full=full)


def quantile_knots(x, K: int) -> np.ndarray:
    """Interior knots at the (k+1)/(K+2) quantiles of the unique x values."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InsufficientData("x is empty")
    if K < 0:
        raise InvalidInput(f"K must be >= 0, got {K}")
    uniq = np.unique(x)
    if uniq.size < K + 2:
        raise InsufficientData(
            f"need at least K + 2 = {K + 2} unique x values, have {uniq.size}"
        )
    if K == 0:
        return np.empty(0)
    probs = (np.arange(1, K + 1) + 1.0) / (K + 2.0)
    knots = np.quantile(uniq, probs)
    if np.any(np.diff(knots) <= 0):
        raise DegenerateKnots("quantile knots contain duplicates")
    return knots


# anchors for the smooth.spline-style knot-count rule; between anchors the
# count is interpolated linearly on the (log n, log K) scale
_SMOOTH_SPLINE_ANCHORS = [(50, 50), (200, 100), (800, 140), (3200, 200)]


def default_num_knots(n: int, n_unique: int | None = None, rule: str = "smooth-spline") -> int:
    """Default interior-knot count for a sample of size ``n``.

    ``"smooth-spline"`` follows the smooth.spline() ladder (K = n below 50,
    anchored log-interpolation up to 3200, then ``200 + (n - 3200)^(1/5)``);
    ``"rwc"`` is the common penalized-spline default ``min(n_unique/4, 35)``.
    """
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    if rule == "rwc":
        nu = n if n_unique is None else n_unique
        if nu < 1:
            raise InvalidInput(f"n_unique must be >= 1, got {nu}")
        return min(nu // 4, 35)
    if rule != "smooth-spline":
        raise InvalidInput(f"unknown knot-count rule {rule!r}")
    if n < 50:
        return n
    if n > 3200:
        return round(200 + (n - 3200) ** 0.2)
    anchors = _SMOOTH_SPLINE_ANCHORS
    for (n0, k0), (n1, k1) in zip(anchors, anchors[1:]):
        if n0 <= n <= n1:
            t = (math.log(n) - math.log(n0)) / (math.log(n1) - math.log(n0))
            return round(math.exp(math.log(k0) + t * (math.log(k1) - math.log(k0))))
    raise AssertionError("unreachable")


def _basis_values(t: np.ndarray, degree: int, x: np.ndarray, spans: np.ndarray) -> np.ndarray:
    """Nonzero degree-``degree`` basis values at each point.

    Returns an ``(npts, degree + 1)`` array; column ``r`` holds the value of
    basis function ``spans - degree + r``.  ``spans`` must index non-empty
    intervals with ``t[span] <= x`` in the interval-local sense.
    """
    npts = x.size
    N = np.zeros((npts, degree + 1))
    N[:, 0] = 1.0
    left = np.empty((npts, degree + 1))
    right = np.empty((npts, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - t[spans + 1 - j]
        right[:, j] = t[spans + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = N[:, r] / denom
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _derivative_operator(t: np.ndarray, degree: int, deriv: int) -> np.ndarray:
    """Matrix mapping degree-(degree-deriv) values to deriv-th derivatives.

    The returned ``M`` satisfies ``B_degree^(deriv)(x) = B_{degree-deriv}(x) @ M``
    for the full row vectors of basis values on the shared knot vector.
    """
    L = t.size
    M = np.eye(L - (degree - deriv) - 1)
    for q in range(degree - deriv + 1, degree + 1):
        n_hi = L - q - 1
        G = np.zeros((n_hi + 1, n_hi))
        for j in range(n_hi):
            dl = t[j + q] - t[j]
            if dl > 0:
                G[j, j] = q / dl
            dr = t[j + q + 1] - t[j + 1]
            if dr > 0:
                G[j + 1, j] -= q / dr
        M = M @ G
    return M


def _rows_from_spans(knots: KnotSequence, x: np.ndarray, spans: np.ndarray, deriv: int) -> np.ndarray:
    """Dense design rows given a span (interval) assignment per point."""
    t = knots.full
    degree = knots.degree
    nb = knots.num_basis
    q_low = degree - deriv
    out = np.zeros((x.size, nb))
    if deriv == 0:
        vals = _basis_values(t, degree, x, spans)
        for r in range(degree + 1):
            cols = spans - degree + r
            out[np.arange(x.size), cols] = vals[:, r]
        return out
    M = _derivative_operator(t, degree, deriv)
    vals = _basis_values(t, q_low, x, spans)
    for s in np.unique(spans):
        idx = np.nonzero(spans == s)[0]
        block = M[s - q_low : s + 1, :]
        out[idx] = vals[idx] @ block
    return out


def _global_spans(knots: KnotSequence, x: np.ndarray, extrapolate: bool) -> np.ndarray:
    """Interval index per point under the one-sided limit conventions.

    At a knot the right-hand polynomial piece is used, except at ``b`` (and
    beyond, when extrapolating) where the last piece extends leftward.
    """
    t = knots.full
    degree = knots.degree
    lo, hi = t[degree], t[-degree - 1]
    if not extrapolate and (np.any(x < lo) or np.any(x > hi)):
        bad = x[(x < lo) | (x > hi)][0]
        raise OutsideSupport(
            f"point {bad} outside [{lo}, {hi}]; pass extrapolate=True to extend"
        )
    spans = np.searchsorted(t, x, side="right") - 1
    return np.clip(spans, degree, t.size - degree - 2)


def eval_basis(spec: BasisSpec, points, deriv: int = 0, *, extrapolate: bool = False) -> DesignMatrix:
    """Evaluate all basis functions (or a derivative) at the given points.

    Points outside [a, b] raise :class:`OutsideSupport` unless ``extrapolate``
    is set, in which case the boundary polynomial piece is extended.
    """
    knots = spec.knots
    if deriv < 0 or deriv > knots.degree:
        raise InvalidDerivative(
            f"derivative order {deriv} not in 0..{knots.degree} for m={knots.m}"
        )
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidInput("evaluation points must be finite")
    spans = _global_spans(knots, x, extrapolate)
    values = _rows_from_spans(knots, x, spans, deriv)
    return DesignMatrix(values=values, eval_points=x, deriv=deriv)


def eval_basis_in_interval(spec: BasisSpec, points, interval: int, deriv: int = 0) -> np.ndarray:
    """Interval-local evaluation: always use the polynomial piece of ``interval``.

    Quadrature nodes that coincide with the interval's endpoints pick up the
    piece being integrated rather than the global one-sided convention.
    Returns the raw ``(npts, num_basis)`` array.
    """
    knots = spec.knots
    if deriv < 0 or deriv > knots.degree:
        raise InvalidDerivative(
            f"derivative order {deriv} not in 0..{knots.degree} for m={knots.m}"
        )
    t = knots.full
    if not (0 <= interval < t.size - 1) or t[interval + 1] <= t[interval]:
        raise InvalidInput(f"interval {interval} is empty or out of range")
    x = np.atleast_1d(np.asarray(points, dtype=float))
    spans = np.full(x.size, interval, dtype=int)
    return _rows_from_spans(knots, x, spans, deriv)

"""Exact O'Sullivan penalty matrices and P-spline difference penalties.

The O'Sullivan penalty is the Gram matrix of m-th derivatives of the basis,
computed exactly: on each inter-knot interval the integrand is a polynomial
of degree 2(m-1), so the closed (2m-1)-point Newton-Cotes rule integrates it
without error.  For m = 2 this is Simpson's rule per interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidOrder, UnsupportedOrder
from .splinebasis import BasisSpec, KnotSequence, eval_basis_in_interval

__all__ = [
    "NewtonCotesWeights",
    "PenaltyMatrix",
    "newton_cotes_weights",
    "osullivan_penalty",
    "osullivan_penalty_cubic",
    "pspline_penalty",
    "eilers_marx_knots",
    "numerical_rank",
]


@dataclass(frozen=True)
class NewtonCotesWeights:
    """Closed Newton-Cotes weights on the unit-spaced grid 0..2m-2."""

    m: int
    omega: np.ndarray


@dataclass(frozen=True)
class PenaltyMatrix:
    """Symmetric PSD penalty with a known factorization ``root.T @ root``.

    ``kind`` is ``"osullivan"`` (order = m) or ``"pspline"`` (order = k, the
    difference order).  For the O'Sullivan kind, ``nodes`` and ``weights``
    record the exact quadrature rule used.
    """

    values: np.ndarray
    kind: str
    order: int
    root: np.ndarray
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def null_dim(self) -> int:
        """Dimension of the polynomial null space (m, or k for P-splines)."""
        return self.order


# closed Newton-Cotes weights for the (2m-1)-point rule, exact through
# degree 2(m-1): trapezoid-free single node, Simpson, Boole's-family rows
_OMEGA_TABLE = {
    1: np.array([1.0]),
    2: np.array([1.0, 4.0, 1.0]) / 3.0,
    3: np.array([14.0 / 45.0, 64.0 / 45.0, 8.0 / 15.0, 64.0 / 45.0, 14.0 / 45.0]),
    4: np.array(
        [
            41.0 / 140.0,
            54.0 / 35.0,
            27.0 / 140.0,
            68.0 / 35.0,
            27.0 / 140.0,
            54.0 / 35.0,
            41.0 / 140.0,
        ]
    ),
}


def newton_cotes_weights(m: int) -> NewtonCotesWeights:
    """Tabulated weights for orders 1..4; higher orders are refused."""
    if m not in _OMEGA_TABLE:
        raise UnsupportedOrder(
            f"Newton-Cotes weights tabulated for m in 1..4 only, got {m}"
        )
    return NewtonCotesWeights(m=m, omega=_OMEGA_TABLE[m].copy())


def _accumulate_penalty(knots: KnotSequence, omega: np.ndarray) -> PenaltyMatrix:
    """Shared quadrature accumulation for the general and cubic paths."""
    m = knots.m
    spec = BasisSpec.from_knots(knots)
    t = knots.full
    node_blocks = []
    weight_blocks = []
    root_blocks = []
    for ell in knots.positive_intervals():
        lo, hi = t[ell], t[ell + 1]
        width = hi - lo
        if m == 1:
            nodes = np.array([lo])
            wts = np.array([width])
        else:
            h = width / (2 * m - 2)
            nodes = lo + h * np.arange(2 * m - 1)
            wts = h * omega
        deriv_rows = eval_basis_in_interval(spec, nodes, int(ell), deriv=m)
        node_blocks.append(nodes)
        weight_blocks.append(wts)
        root_blocks.append(np.sqrt(wts)[:, None] * deriv_rows)
    root = np.vstack(root_blocks)
    values = root.T @ root
    values = 0.5 * (values + values.T)
    return PenaltyMatrix(
        values=values,
        kind="osullivan",
        order=m,
        root=root,
        nodes=np.concatenate(node_blocks),
        weights=np.concatenate(weight_blocks),
    )


def osullivan_penalty(knots: KnotSequence) -> PenaltyMatrix:
    """Exact order-m penalty via the per-interval Newton-Cotes rule."""
    omega = newton_cotes_weights(knots.m).omega
    return _accumulate_penalty(knots, omega)


def osullivan_penalty_cubic(knots: KnotSequence) -> PenaltyMatrix:
    """Cubic (m = 2) fast path: Simpson's rule on each inter-knot interval."""
    if knots.m != 2:
        raise InvalidOrder(f"cubic path requires m=2, got m={knots.m}")
    simpson = np.array([1.0, 4.0, 1.0]) / 3.0
    return _accumulate_penalty(knots, simpson)


def pspline_penalty(num_basis: int, k: int) -> PenaltyMatrix:
    """k-th order difference penalty D_k' D_k on coefficient vectors."""
    if k < 1:
        raise InvalidOrder(f"difference order must be >= 1, got {k}")
    if num_basis <= k:
        raise InvalidOrder(
            f"need num_basis > k, got num_basis={num_basis}, k={k}"
        )
    D = np.diff(np.eye(num_basis), n=k, axis=0)
    values = D.T @ D
    values = 0.5 * (values + values.T)
    return PenaltyMatrix(values=values, kind="pspline", order=k, root=D)


def eilers_marx_knots(a: float, b: float, K: int, m: int = 2) -> KnotSequence:
    """Equally spaced knots extended 2m-1 steps beyond each boundary.

    No repeated knots; yields K + 2m basis functions on [a, b], the layout
    used for P-splines.
    """
    if K < 1:
        raise InvalidInput(f"need K >= 1 equally spaced interior knots, got {K}")
    if m < 1:
        raise InvalidOrder(f"spline order m must be >= 1, got {m}")
    a = float(a)
    b = float(b)
    if a >= b:
        raise InvalidInput(f"need a < b, got a={a}, b={b}")
    h = (b - a) / (K + 1)
    ext = 2 * m - 1
    full = a + h * np.arange(-ext, K + 2 + ext)
    interior = full[ext + 1 : ext + 1 + K]
    return KnotSequence(m=m, a=a, b=b, interior=interior, full=full, style="extended")


def numerical_rank(values: np.ndarray, tol_factor: float = 1e-10) -> int:
    """Count of eigenvalues above ``tol_factor`` times the largest."""
    eigs = np.linalg.eigvalsh(values)
    lam_max = eigs[-1]
    if lam_max <= 0:
        return 0
    return int(np.sum(eigs > tol_factor * lam_max))

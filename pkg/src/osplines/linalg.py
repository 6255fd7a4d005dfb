"""Dense and banded symmetric linear algebra used by the fitting pipeline.

Thin wrappers over LAPACK (via numpy/scipy) that pin down the conventions
the rest of the package relies on: descending eigenvalues, lower-band
storage, and package-specific exceptions on failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, NotPositiveDefinite, NotSymmetric

__all__ = [
    "SymEigen",
    "BandedCholesky",
    "sym_eigen",
    "solve_spd",
    "banded_cholesky",
    "solve_banded_spd",
    "band_from_dense",
    "dense_from_band",
]


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition with eigenvalues sorted in descending order."""

    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class BandedCholesky:
    """Lower-band Cholesky factor in LAPACK band storage.

    ``factor[i, j]`` holds ``L[j + i, j]`` for ``i`` in ``0..bandwidth``.
    """

    factor: np.ndarray
    bandwidth: int

    @property
    def dim(self) -> int:
        return self.factor.shape[1]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve_banded((self.factor, True), b)


def _check_symmetric(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > rtol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return A


def sym_eigen(A: np.ndarray) -> SymEigen:
    """Full symmetric eigendecomposition, eigenvalues descending."""
    A = _check_symmetric(A)
    try:
        vals, vecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(f"eigendecomposition failed: {exc}") from exc
    return SymEigen(values=vals[::-1].copy(), vectors=vecs[:, ::-1].copy())


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A via dense Cholesky."""
    A = np.asarray(A, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, np.asarray(b, dtype=float))


def band_from_dense(A: np.ndarray, bandwidth: int) -> np.ndarray:
    """Extract the lower band of a symmetric matrix into LAPACK storage."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    ab = np.zeros((bandwidth + 1, n))
    for i in range(bandwidth + 1):
        ab[i, : n - i] = np.diagonal(A, -i)
    return ab


def dense_from_band(ab: np.ndarray) -> np.ndarray:
    """Reconstruct the full symmetric matrix from lower-band storage."""
    w, n = ab.shape[0] - 1, ab.shape[1]
    A = np.zeros((n, n))
    for i in range(w + 1):
        idx = np.arange(n - i)
        A[idx + i, idx] = ab[i, : n - i]
        A[idx, idx + i] = ab[i, : n - i]
    return A


def banded_cholesky(A: np.ndarray, bandwidth: int) -> BandedCholesky:
    """Banded Cholesky of a dense symmetric positive definite matrix."""
    ab = band_from_dense(A, bandwidth)
    try:
        factor = scipy.linalg.cholesky_banded(ab, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return BandedCholesky(factor=factor, bandwidth=bandwidth)


def solve_banded_spd(A: np.ndarray, bandwidth: int, b: np.ndarray) -> np.ndarray:
    """Solve A x = b exploiting the declared symmetric band structure."""
    return banded_cholesky(A, bandwidth).solve(np.asarray(b, dtype=float))

"""Mixed-model representation: Demmler-Reinsch transform, REML smoothing,
and the additive model with subject-level random intercepts.

The spline fit ``y = X beta + Z u + eps`` with ``u ~ N(0, sigma_u^2 I)``
reproduces the direct penalized fit at ``lambda = sigma_eps^2 / sigma_u^2``;
REML estimates the variance components and hence the smoothing parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    ConvergenceFailure,
    DegenerateResponse,
    InvalidInput,
    RankMismatch,
    Unidentifiable,
)
from .fit import _refine_golden
from .linalg import solve_spd, sym_eigen
from .penalty import PenaltyMatrix, osullivan_penalty
from .splinebasis import BasisSpec, eval_basis

__all__ = [
    "DRTransform",
    "MixedModelFit",
    "AdditiveMixedFit",
    "demmler_reinsch",
    "build_design",
    "fit_reml_smoother",
    "predict_mixed",
    "fit_additive_mixed",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DRTransform:
    """Demmler-Reinsch transform of a penalty: L' Omega L = blockdiag(0, I)."""

    U_X: np.ndarray
    U_Z: np.ndarray
    d_Z: np.ndarray
    L: np.ndarray
    stable: bool


@dataclass(frozen=True)
class MixedModelFit:
    """REML scatterplot smoother in mixed-model form."""

    beta: np.ndarray
    u: np.ndarray
    sigma_u2: float
    sigma_eps2: float
    reml_value: float
    lambda_implied: float
    fitted: np.ndarray
    coefficients: np.ndarray
    spec: BasisSpec
    transform: DRTransform
    boundary_warning: bool


@dataclass(frozen=True)
class AdditiveMixedFit:
    """Additive mixed model with subject intercepts and a spline in one
    covariate."""

    beta: np.ndarray
    beta_se: np.ndarray
    u_subject: np.ndarray
    u_spline: np.ndarray
    sigma_U2: float
    sigma_u2: float
    sigma_eps2: float
    reml_value: float
    fitted: np.ndarray
    boundary_warning: bool


def demmler_reinsch(penalty: PenaltyMatrix, tol_factor: float = 1e-10) -> DRTransform:
    """Split the penalty eigenbasis into null and positive parts.

    Eigenvalues below ``tol_factor * lambda_max`` count as zero; their count
    must equal the penalty's polynomial null-space dimension.  The stability
    check compares ``sum(L' Omega L ** 2)`` with its exact value (the number
    of positive eigenvalues) and flags, rather than fails, on violation.
    """
    eig = sym_eigen(penalty.values)
    m = penalty.null_dim
    lam_max = eig.values[0]
    n_zero = int(np.sum(eig.values <= tol_factor * lam_max))
    nb = penalty.dim
    if n_zero != m:
        raise RankMismatch(
            f"expected {m} zero eigenvalues, found {n_zero} "
            f"(rank {nb - n_zero} instead of {nb - m})"
        )
    q = nb - m
    U_Z = eig.vectors[:, :q]
    d_Z = eig.values[:q]
    U_X = eig.vectors[:, q:]
    L = np.hstack([U_X, U_Z / np.sqrt(d_Z)])
    canonical = L.T @ penalty.values @ L
    stable = bool(abs(float(np.sum(canonical**2)) - q) <= 1e-4 * q)
    return DRTransform(U_X=U_X, U_Z=U_Z, d_Z=d_Z, L=L, stable=stable)


def build_design(x, spec: BasisSpec, transform: DRTransform,
                 linear_fixed: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fixed and random design matrices (X, Z) for the mixed representation.

    For cubic splines the fixed part defaults to the simpler [1, x] columns,
    which span the same space as B @ U_X and leave the fit unchanged.
    """
    x = np.asarray(x, dtype=float).ravel()
    B = eval_basis(spec, x).values
    m = spec.knots.m
    if linear_fixed is None:
        linear_fixed = m == 2
    if linear_fixed:
        if m != 2:
            raise InvalidInput("the [1, x] fixed design is the cubic (m=2) case")
        X = np.column_stack([np.ones(x.size), x])
    else:
        X = B @ transform.U_X
    Z = B @ (transform.U_Z / np.sqrt(transform.d_Z))
    return X, Z


def _greville(spec: BasisSpec) -> np.ndarray:
    """Greville abscissae: coefficients representing the identity function."""
    t = spec.knots.full
    d = spec.knots.degree
    nb = spec.num_basis
    return np.array([t[j + 1 : j + d + 1].mean() for j in range(nb)])


class _TwoComponentREML:
    """Profiled restricted likelihood for y = X b + Z u + eps."""

    def __init__(self, X, Z, y):
        self.X = X
        self.Z = Z
        self.y = y
        self.n, self.p = X.shape
        self.q = Z.shape[1]
        self.ZtZ = Z.T @ Z
        self.ZtX = Z.T @ X
        self.Zty = Z.T @ y
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)

    def profile(self, lam: float):
        """Quantities of the profiled REML criterion at the given ratio
        lambda = sigma_eps^2 / sigma_u^2."""
        S = scipy.linalg.cho_factor(self.ZtZ + lam * np.eye(self.q), lower=True)
        SiZtX = scipy.linalg.cho_solve(S, self.ZtX)
        SiZty = scipy.linalg.cho_solve(S, self.Zty)
        XtWX = self.XtX - self.ZtX.T @ SiZtX
        XtWy = self.Xty - self.ZtX.T @ SiZty
        ytWy = self.yty - float(self.Zty @ SiZty)
        cW = scipy.linalg.cho_factor(XtWX, lower=True)
        beta_gls = scipy.linalg.cho_solve(cW, XtWy)
        r = ytWy - float(XtWy @ beta_gls)
        logdet_S = 2.0 * float(np.sum(np.log(np.diagonal(S[0]))))
        logdet_V0 = logdet_S - self.q * math.log(lam)  # log|I + Z Z'/lam|
        logdet_XtWX = 2.0 * float(np.sum(np.log(np.diagonal(cW[0]))))
        return r, logdet_V0, logdet_XtWX

    def neg2_restricted_loglik(self, lam: float) -> float:
        try:
            r, logdet_V0, logdet_XtWX = self.profile(lam)
        except (scipy.linalg.LinAlgError, ValueError):
            return math.inf
        dof = self.n - self.p
        if r <= 0:  # response numerically in the fixed-effects span
            return math.inf
        sigma_eps2 = r / dof
        return (
            dof * math.log(sigma_eps2)
            + logdet_V0
            + logdet_XtWX
            + dof * (1.0 + _LOG_2PI)
        )


def fit_reml_smoother(x, y, spec: BasisSpec,
                      log_bounds: tuple[float, float] = (-20.0, 20.0),
                      tol: float = 1e-4,
                      linear_fixed: bool | None = None) -> MixedModelFit:
    """REML choice of the smoothing parameter via the mixed representation.

    The error variance is profiled out analytically given the ratio
    ``lambda = sigma_eps^2 / sigma_u^2``; the ratio is found by golden-section
    search on log lambda.  ``log_bounds`` assumes order-one knot spacing.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InvalidInput(f"x and y lengths differ: {x.size} vs {y.size}")
    if x.size < 5:
        raise InvalidInput(f"need n >= 5 observations, got {x.size}")
    if np.ptp(y) == 0.0:
        raise DegenerateResponse("y has zero variance")
    pen = osullivan_penalty(spec.knots)
    transform = demmler_reinsch(pen)
    use_linear = linear_fixed if linear_fixed is not None else spec.knots.m == 2
    X, Z = build_design(x, spec, transform, use_linear)
    reml = _TwoComponentREML(X, Z, y)

    lo, hi = log_bounds
    log_lam = _refine_golden(
        lambda t: reml.neg2_restricted_loglik(math.exp(t)), lo, hi, tol
    )
    boundary = (log_lam - lo < 10 * tol) or (hi - log_lam < 10 * tol)
    lam = math.exp(log_lam)

    r, _, _ = reml.profile(lam)
    # the residual form can round to <= 0 when y sits in the fixed span;
    # the boundary flag already marks such fits as degenerate
    sigma_eps2 = max(r, np.finfo(float).tiny) / (reml.n - reml.p)
    sigma_u2 = sigma_eps2 / lam
    reml_value = -0.5 * min(reml.neg2_restricted_loglik(lam), 1e300)

    # BLUP at the selected ratio
    C = np.hstack([X, Z])
    ridge = np.zeros((C.shape[1], C.shape[1]))
    ridge[reml.p :, reml.p :] = lam * np.eye(reml.q)
    theta = solve_spd(C.T @ C + ridge, C.T @ y)
    beta, u = theta[: reml.p], theta[reml.p :]
    fitted = C @ theta

    # spline-basis coefficients of the fitted curve (lines are represented
    # exactly by partition of unity and the Greville abscissae)
    m = spec.knots.m
    if use_linear:
        W = np.column_stack([np.ones(spec.num_basis), _greville(spec)])
    else:
        W = transform.U_X
    coefficients = W @ beta + transform.L[:, m:] @ u

    return MixedModelFit(
        beta=beta,
        u=u,
        sigma_u2=float(sigma_u2),
        sigma_eps2=float(sigma_eps2),
        reml_value=float(reml_value),
        lambda_implied=float(lam),
        fitted=fitted,
        coefficients=coefficients,
        spec=spec,
        transform=transform,
        boundary_warning=boundary,
    )


def predict_mixed(fit: MixedModelFit, points, deriv: int = 0) -> np.ndarray:
    """Evaluate the REML-fitted curve through its spline coefficients."""
    design = eval_basis(fit.spec, points, deriv, extrapolate=True)
    return design.values @ fit.coefficients


class _ThreeComponentREML:
    """Profiled REML for y = X b + Z_subj u_s + Z_spl u + eps.

    The subject indicator matrix is never materialized: its cross-products
    are diagonal (counts) or group sums, and the subject block is eliminated
    first, so memory stays linear in n + G.
    """

    def __init__(self, X, Zs, y, group):
        self.X = X
        self.Zs = Zs
        self.y = y
        self.group = group
        self.n, self.p = X.shape
        self.q = Zs.shape[1]
        self.G = int(group.max()) + 1
        self.counts = np.bincount(group, minlength=self.G).astype(float)
        # group sums: Z_subj' M for M in {X, Zs, y}
        self.SX = np.zeros((self.G, self.p))
        self.SZ = np.zeros((self.G, self.q))
        np.add.at(self.SX, group, X)
        np.add.at(self.SZ, group, Zs)
        self.Sy = np.bincount(group, weights=y, minlength=self.G)
        self.ZtZ = Zs.T @ Zs
        self.ZtX = Zs.T @ X
        self.Zty = Zs.T @ y
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)

    def _apply_kinv(self, d_subj, schur_factor, r_subj, r_spl):
        """Solve blockdiag-structured K z = r by subject-block elimination."""
        squeeze = r_subj.ndim == 1
        rs = r_subj.reshape(self.G, -1) / d_subj[:, None]
        rhs = r_spl.reshape(self.q, -1) - self.SZ.T @ rs
        z_spl = scipy.linalg.cho_solve(schur_factor, rhs)
        z_subj = rs - (self.SZ @ z_spl) / d_subj[:, None]
        if squeeze:
            return z_subj.ravel(), z_spl.ravel()
        return z_subj, z_spl

    def profile(self, gamma_U: float, gamma_u: float):
        """GLS pieces at fixed variance ratios gamma = sigma^2 / sigma_eps^2."""
        d_subj = self.counts + 1.0 / gamma_U
        E = self.ZtZ + np.eye(self.q) / gamma_u
        schur = E - (self.SZ.T / d_subj) @ self.SZ
        schur_factor = scipy.linalg.cho_factor(schur, lower=True)

        # K^{-1} applied to Z_all' X and Z_all' y
        zx_s, zx_p = self._apply_kinv(d_subj, schur_factor, self.SX, self.ZtX)
        zy_s, zy_p = self._apply_kinv(d_subj, schur_factor, self.Sy, self.Zty)

        XtWX = self.XtX - (self.SX.T @ zx_s + self.ZtX.T @ zx_p)
        XtWy = self.Xty - (self.SX.T @ zy_s + self.ZtX.T @ zy_p)
        ytWy = self.yty - (float(self.Sy @ zy_s) + float(self.Zty @ zy_p))
        cW = scipy.linalg.cho_factor(XtWX, lower=True)
        beta_gls = scipy.linalg.cho_solve(cW, XtWy)
        r = ytWy - float(XtWy @ beta_gls)

        logdet_K = float(np.sum(np.log(d_subj))) + 2.0 * float(
            np.sum(np.log(np.diagonal(schur_factor[0])))
        )
        logdet_V0 = (
            logdet_K + self.G * math.log(gamma_U) + self.q * math.log(gamma_u)
        )
        logdet_XtWX = 2.0 * float(np.sum(np.log(np.diagonal(cW[0]))))
        return r, logdet_V0, logdet_XtWX, cW

    def neg2_restricted_loglik(self, log_gammas) -> float:
        gU, gu = math.exp(log_gammas[0]), math.exp(log_gammas[1])
        try:
            r, logdet_V0, logdet_XtWX, _ = self.profile(gU, gu)
        except (scipy.linalg.LinAlgError, ValueError):
            return math.inf
        dof = self.n - self.p
        if r <= 0:
            return math.inf
        sigma_eps2 = r / dof
        return (
            dof * math.log(sigma_eps2)
            + logdet_V0
            + logdet_XtWX
            + dof * (1.0 + _LOG_2PI)
        )


def fit_additive_mixed(y, x_spline, x_linear, group, spec: BasisSpec,
                       max_iter: int = 500) -> AdditiveMixedFit:
    """REML fit of the subject-intercept additive model.

    ``x_linear`` holds the fixed covariate columns (may be empty); the fixed
    design is [1, x_spline, x_linear].  Variance ratios for the subject and
    spline components are optimized by Nelder-Mead on the log scale from a
    grid-seeded start, with the error variance profiled out.
    """
    y = np.asarray(y, dtype=float).ravel()
    x_spline = np.asarray(x_spline, dtype=float).ravel()
    group = np.asarray(group)
    if x_linear is None:
        x_linear = np.empty((y.size, 0))
    x_linear = np.asarray(x_linear, dtype=float)
    if x_linear.ndim == 1:
        x_linear = x_linear[:, None]
    n = y.size
    if x_spline.size != n or x_linear.shape[0] != n or group.size != n:
        raise InvalidInput("y, x_spline, x_linear and group lengths differ")
    _, group_idx = np.unique(group, return_inverse=True)
    G = int(group_idx.max()) + 1
    if G == 1 and n == 1:
        raise Unidentifiable("a single subject with a single observation")
    if np.ptp(y) == 0.0:
        raise DegenerateResponse("y has zero variance")

    X = np.column_stack([np.ones(n), x_spline, x_linear])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise Unidentifiable("fixed design [1, x_spline, covariates] is rank deficient")
    pen = osullivan_penalty(spec.knots)
    transform = demmler_reinsch(pen)
    _, Zs = build_design(x_spline, spec, transform, linear_fixed=spec.knots.m == 2)

    reml = _ThreeComponentREML(X, Zs, y, group_idx)

    seeds = [(a_, b_) for a_ in (-4.0, -1.0, 2.0, 5.0) for b_ in (-4.0, -1.0, 2.0, 5.0)]
    start = min(seeds, key=reml.neg2_restricted_loglik)
    opt = scipy.optimize.minimize(
        reml.neg2_restricted_loglik,
        np.asarray(start, dtype=float),
        method="Nelder-Mead",
        options={"xatol": 1e-5, "fatol": 1e-10, "maxiter": max_iter, "maxfev": 4 * max_iter},
    )
    if not opt.success:
        raise ConvergenceFailure(
            f"Nelder-Mead did not converge within {max_iter} iterations: {opt.message}"
        )
    gU, gu = math.exp(opt.x[0]), math.exp(opt.x[1])
    boundary = bool(np.any(np.abs(opt.x) > 19.0))

    r, _, _, cW = reml.profile(gU, gu)
    dof = n - X.shape[1]
    sigma_eps2 = r / dof
    sigma_U2 = gU * sigma_eps2
    sigma_u2 = gu * sigma_eps2
    reml_value = -0.5 * reml.neg2_restricted_loglik(opt.x)

    # BLUP: eliminate the (diagonal) subject block of the joint ridge system
    p, q = X.shape[1], Zs.shape[1]
    lam_U, lam_u = 1.0 / gU, 1.0 / gu
    d_subj = reml.counts + lam_U
    top = np.hstack([reml.XtX, reml.ZtX.T])
    bot = np.hstack([reml.ZtX, reml.ZtZ + lam_u * np.eye(q)])
    dense = np.vstack([top, bot])
    border = np.hstack([reml.SX, reml.SZ])  # (G, p + q)
    dense -= border.T @ (border / d_subj[:, None])
    rhs = np.concatenate([reml.Xty, reml.Zty]) - border.T @ (reml.Sy / d_subj)
    theta = solve_spd(dense, rhs)
    beta, u_spline = theta[:p], theta[p:]
    u_subject = (reml.Sy - border @ theta) / d_subj
    fitted = X @ beta + Zs @ u_spline + u_subject[group_idx]

    covb = scipy.linalg.cho_solve(cW, np.eye(p)) * sigma_eps2
    beta_se = np.sqrt(np.diagonal(covb))

    return AdditiveMixedFit(
        beta=beta,
        beta_se=beta_se,
        u_subject=u_subject,
        u_spline=u_spline,
        sigma_U2=float(sigma_U2),
        sigma_u2=float(sigma_u2),
        sigma_eps2=float(sigma_eps2),
        reml_value=float(reml_value),
        fitted=fitted,
        boundary_warning=boundary,
    )

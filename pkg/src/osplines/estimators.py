"""Scikit-learn style estimators wrapping the penalized spline machinery.

``OSplineRegressor`` is a univariate smoother with ``fit``/``predict`` and
``get_params``; ``BSplineFeatures`` exposes the basis as a transformer so the
design matrix composes with ordinary sklearn pipelines.  Inputs are
standardized to [0, 1] internally (so smoothing parameters live on a common
scale); reported ``lambda_`` refers to the standardized problem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ConfigError
from .fit import fit_penalized, gcv_select, predict
from .mixed import fit_reml_smoother, predict_mixed
from .penalty import eilers_marx_knots, osullivan_penalty, pspline_penalty
from .splinebasis import BasisSpec, default_num_knots, make_knots, quantile_knots

__all__ = ["OSplineRegressor", "BSplineFeatures"]

_KNOT_RULES = ("quantile", "equal", "eilers-marx", "maximal")


def _as_1d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 1:
        return X[:, 0]
    if X.ndim == 1:
        return X
    raise ConfigError(f"expected a single predictor column, got shape {X.shape}")


class _KnotPlan:
    """Shared knot/penalty construction for the estimators."""

    def __init__(self, order, knots, num_knots, domain_margin):
        self.order = order
        self.knots = knots
        self.num_knots = num_knots
        self.domain_margin = domain_margin

    def build(self, x: np.ndarray):
        if self.knots not in _KNOT_RULES:
            raise ConfigError(
                f"knots must be one of {_KNOT_RULES}, got {self.knots!r}"
            )
        a = float(x.min()) - self.domain_margin
        b = float(x.max()) + self.domain_margin
        m = self.order
        if self.knots == "maximal":
            seq = make_knots(a, b, np.unique(x), m)
        else:
            K = self.num_knots
            if K is None:
                K = default_num_knots(x.size, np.unique(x).size, rule="rwc")
            if self.knots == "quantile":
                seq = make_knots(a, b, quantile_knots(x, K), m)
            elif self.knots == "equal":
                interior = np.linspace(a, b, K + 2)[1:-1]
                seq = make_knots(a, b, interior, m)
            else:
                seq = eilers_marx_knots(a, b, K, m)
        return BasisSpec.from_knots(seq)


class OSplineRegressor(RegressorMixin, BaseEstimator):
    """Univariate penalized-spline smoother.

    Parameters
    ----------
    order : int
        Penalty order m; the spline degree is 2m - 1 (m=2 gives cubics).
    knots : {"quantile", "equal", "eilers-marx", "maximal"}
        Interior-knot placement rule.  "eilers-marx" implies the difference
        penalty; the others use the exact integral penalty.
    num_knots : int or None
        Interior knot count; None applies the min(n_unique/4, 35) default.
    method : {"gcv", "reml", "fixed"}
        Smoothing-parameter selection.  "fixed" uses ``lam`` as given;
        "reml" requires the integral penalty.
    lam : float or None
        Smoothing parameter for ``method="fixed"``.
    diff_order : int
        Difference order k for the Eilers-Marx penalty.
    standardize : bool
        Rescale x to [0, 1] before building the basis.
    domain_margin : float
        Widen [min(x), max(x)] by this amount (on the working scale) on both
        sides before placing boundary knots.
    """

    def __init__(self, order=2, knots="quantile", num_knots=None, method="gcv",
                 lam=None, diff_order=2, gcv_grid=None, standardize=True,
                 domain_margin=0.0):
        self.order = order
        self.knots = knots
        self.num_knots = num_knots
        self.method = method
        self.lam = lam
        self.diff_order = diff_order
        self.gcv_grid = gcv_grid
        self.standardize = standardize
        self.domain_margin = domain_margin

    def _to_working(self, x: np.ndarray) -> np.ndarray:
        return (x - self.shift_) / self.scale_

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        x = _as_1d(X)
        self.n_features_in_ = 1
        if self.standardize:
            self.shift_ = float(x.min())
            self.scale_ = float(x.max() - x.min()) or 1.0
        else:
            self.shift_, self.scale_ = 0.0, 1.0
        xw = self._to_working(x)

        plan = _KnotPlan(self.order, self.knots, self.num_knots, self.domain_margin)
        self.spec_ = plan.build(xw)
        if self.knots == "eilers-marx":
            self.penalty_ = pspline_penalty(self.spec_.num_basis, self.diff_order)
        else:
            self.penalty_ = osullivan_penalty(self.spec_.knots)

        if self.method == "fixed":
            if self.lam is None:
                raise ConfigError("method='fixed' requires lam")
            self.result_ = fit_penalized(xw, y, self.spec_, self.penalty_, self.lam)
            self.lambda_ = float(self.lam)
            self.edf_ = self.result_.edf
        elif self.method == "gcv":
            grid = self.gcv_grid if self.gcv_grid is not None else np.logspace(-10, 6, 33)
            self.lambda_, self.result_ = gcv_select(xw, y, self.spec_, self.penalty_, grid)
            self.edf_ = self.result_.edf
        elif self.method == "reml":
            if self.knots == "eilers-marx":
                raise ConfigError("method='reml' requires the integral penalty")
            self.result_ = fit_reml_smoother(xw, y, self.spec_)
            self.lambda_ = self.result_.lambda_implied
            direct = fit_penalized(xw, y, self.spec_, self.penalty_, self.lambda_)
            self.edf_ = direct.edf
        else:
            raise ConfigError(f"unknown method {self.method!r}")
        self.coef_ = self.result_.coefficients
        return self

    def predict(self, X, deriv: int = 0):
        check_is_fitted(self, "result_")
        X = check_array(X, ensure_2d=False)
        xw = self._to_working(_as_1d(X))
        if hasattr(self.result_, "lambda_implied"):
            values = predict_mixed(self.result_, xw, deriv)
        else:
            values = predict(self.result_, xw, deriv)
        # chain rule for the internal rescaling
        return values / self.scale_**deriv


class BSplineFeatures(TransformerMixin, BaseEstimator):
    """B-spline design matrix as a transformer (one input column)."""

    def __init__(self, order=2, knots="quantile", num_knots=None,
                 standardize=True, domain_margin=0.0):
        self.order = order
        self.knots = knots
        self.num_knots = num_knots
        self.standardize = standardize
        self.domain_margin = domain_margin

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False)
        x = _as_1d(X)
        self.n_features_in_ = 1
        if self.standardize:
            self.shift_ = float(x.min())
            self.scale_ = float(x.max() - x.min()) or 1.0
        else:
            self.shift_, self.scale_ = 0.0, 1.0
        xw = (x - self.shift_) / self.scale_
        plan = _KnotPlan(self.order, self.knots, self.num_knots, self.domain_margin)
        self.spec_ = plan.build(xw)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        from .splinebasis import eval_basis

        X = check_array(X, ensure_2d=False)
        xw = (_as_1d(X) - self.shift_) / self.scale_
        return eval_basis(self.spec_, xw, extrapolate=True).values

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "spec_")
        return np.array([f"bspline{j}" for j in range(self.spec_.num_basis)])

"""Tests for the mixed-model representation and REML fitting."""

import numpy as np
import pytest
from scipy.special import ndtr

from osplines.errors import (
    ConvergenceFailure,
    DegenerateResponse,
    RankMismatch,
    Unidentifiable,
)
from osplines.fit import fit_penalized, predict
from osplines.mixed import (
    build_design,
    demmler_reinsch,
    fit_additive_mixed,
    fit_reml_smoother,
    predict_mixed,
)
from osplines.penalty import PenaltyMatrix, osullivan_penalty
from osplines.splinebasis import BasisSpec, make_knots, quantile_knots


def _cubic_spec(a=0.0, b=1.0, K=12):
    interior = np.linspace(a, b, K + 2)[1:-1]
    return BasisSpec.from_knots(make_knots(a, b, interior, 2))


class TestDemmlerReinsch:
    def test_dimensions_cubic_k20(self):
        spec = _cubic_spec(K=20)
        pen = osullivan_penalty(spec.knots)
        tr = demmler_reinsch(pen)
        assert tr.d_Z.size == 22
        assert tr.U_Z.shape == (24, 22)
        assert tr.U_X.shape == (24, 2)
        assert np.all(tr.d_Z > 0)

    def test_canonical_form(self):
        for K in (5, 12):
            spec = _cubic_spec(K=K)
            pen = osullivan_penalty(spec.knots)
            tr = demmler_reinsch(pen)
            canon = tr.L.T @ pen.values @ tr.L
            target = np.zeros_like(canon)
            target[2:, 2:] = np.eye(K + 2)
            assert np.abs(canon - target).max() <= 1e-8

    def test_canonical_form_general_order(self):
        for m in (1, 3):
            interior = np.linspace(0, 1, 8)[1:-1]
            spec = BasisSpec.from_knots(make_knots(0, 1, interior, m))
            pen = osullivan_penalty(spec.knots)
            tr = demmler_reinsch(pen)
            canon = tr.L.T @ pen.values @ tr.L
            q = pen.dim - m
            target = np.zeros_like(canon)
            target[m:, m:] = np.eye(q)
            assert np.abs(canon - target).max() <= 1e-8

    def test_stability_flag(self):
        spec = _cubic_spec(K=10)
        pen = osullivan_penalty(spec.knots)
        assert demmler_reinsch(pen).stable

    def test_rank_mismatch(self):
        spec = _cubic_spec(K=6)
        pen = osullivan_penalty(spec.knots)
        wrong = PenaltyMatrix(
            values=pen.values, kind="osullivan", order=3, root=pen.root
        )
        with pytest.raises(RankMismatch):
            demmler_reinsch(wrong)

    def test_z_basis_column_norms_damped(self):
        # Demmler-Reinsch basis functions shrink with oscillation index
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(0, 1, 200))
        spec = _cubic_spec(K=10)
        pen = osullivan_penalty(spec.knots)
        tr = demmler_reinsch(pen)
        _, Z = build_design(x, spec, tr)
        norms = np.linalg.norm(Z, axis=0)
        assert np.all(np.isfinite(norms))
        # eigenvalues ordered descending => norms grow toward smoother columns
        assert norms[-1] > norms[0]


class TestBuildDesign:
    def test_intercept_column(self):
        x = np.linspace(0, 1, 30)
        spec = _cubic_spec(K=8)
        tr = demmler_reinsch(osullivan_penalty(spec.knots))
        X, Z = build_design(x, spec, tr)
        np.testing.assert_allclose(X[:, 0], 1.0)
        np.testing.assert_allclose(X[:, 1], x)
        assert Z.shape == (30, 10)

    def test_linear_fixed_equivalence(self):
        rng = np.random.default_rng(1)
        x = np.sort(rng.uniform(0, 1, 120))
        y = np.sin(5 * x) + 0.2 * rng.standard_normal(120)
        spec = _cubic_spec(K=10)
        pen = osullivan_penalty(spec.knots)
        tr = demmler_reinsch(pen)
        lam = 0.37
        fits = []
        for linear_fixed in (True, False):
            X, Z = build_design(x, spec, tr, linear_fixed)
            C = np.hstack([X, Z])
            ridge = np.zeros((C.shape[1], C.shape[1]))
            ridge[X.shape[1]:, X.shape[1]:] = lam * np.eye(Z.shape[1])
            theta = np.linalg.solve(C.T @ C + ridge, C.T @ y)
            fits.append(C @ theta)
        assert np.abs(fits[0] - fits[1]).max() <= 1e-8


class TestRemlSmoother:
    def test_blup_equals_ridge_solve(self):
        rng = np.random.default_rng(2)
        x = np.sort(rng.uniform(0, 1, 150))
        y = np.sin(4 * x) + 0.25 * rng.standard_normal(150)
        spec = _cubic_spec(K=10)
        fit = fit_reml_smoother(x, y, spec)
        tr = fit.transform
        X, Z = build_design(x, spec, tr)
        C = np.hstack([X, Z])
        lam = fit.lambda_implied
        ridge = np.zeros((C.shape[1], C.shape[1]))
        ridge[2:, 2:] = lam * np.eye(Z.shape[1])
        theta = np.linalg.solve(C.T @ C + ridge, C.T @ y)
        np.testing.assert_allclose(
            np.concatenate([fit.beta, fit.u]), theta, rtol=1e-8, atol=1e-10
        )
        np.testing.assert_allclose(fit.fitted, C @ theta, atol=1e-10)

    def test_matches_direct_fit_at_implied_lambda(self):
        rng = np.random.default_rng(3)
        x = np.sort(rng.uniform(0, 1, 120))
        y = ndtr((x - 0.5) / 0.1) + 0.2 * rng.standard_normal(120)
        spec = _cubic_spec(K=9)
        pen = osullivan_penalty(spec.knots)
        fit = fit_reml_smoother(x, y, spec)
        direct = fit_penalized(x, y, spec, pen, fit.lambda_implied)
        grid = np.linspace(0, 1, 101)
        np.testing.assert_allclose(
            predict_mixed(fit, grid), predict(direct, grid), atol=1e-8
        )
        np.testing.assert_allclose(fit.coefficients, direct.coefficients, atol=1e-7)

    def test_reml_objective_local_maximum(self):
        rng = np.random.default_rng(4)
        x = np.sort(rng.uniform(0, 1, 150))
        y = np.sin(5 * x) + 0.3 * rng.standard_normal(150)
        spec = _cubic_spec(K=8)
        fit = fit_reml_smoother(x, y, spec)
        assert not fit.boundary_warning

        from osplines.mixed import _TwoComponentREML

        tr = fit.transform
        X, Z = build_design(x, spec, tr)
        reml = _TwoComponentREML(X, Z, y)
        star = reml.neg2_restricted_loglik(fit.lambda_implied)
        for shift in (-0.1, 0.1):
            assert reml.neg2_restricted_loglik(fit.lambda_implied * np.exp(shift)) >= star - 1e-9

    def test_pure_noise_smooths_hard(self):
        rng = np.random.default_rng(5)
        x = np.sort(rng.uniform(0, 1, 120))
        y = 1.5 + 0.3 * rng.standard_normal(120)
        spec = _cubic_spec(K=10)
        fit = fit_reml_smoother(x, y, spec)
        pen = osullivan_penalty(spec.knots)
        direct = fit_penalized(x, y, spec, pen, fit.lambda_implied)
        assert direct.edf < 4.0

    def test_variance_components_positive(self):
        rng = np.random.default_rng(6)
        x = np.sort(rng.uniform(0, 1, 100))
        y = np.sin(3 * x) + 0.2 * rng.standard_normal(100)
        fit = fit_reml_smoother(x, y, _cubic_spec(K=7))
        assert fit.sigma_u2 > 0 and fit.sigma_eps2 > 0
        assert np.isfinite(fit.reml_value)
        assert fit.lambda_implied == pytest.approx(fit.sigma_eps2 / fit.sigma_u2)

    def test_degenerate_response(self):
        x = np.linspace(0, 1, 50)
        with pytest.raises(DegenerateResponse):
            fit_reml_smoother(x, np.ones(50), _cubic_spec(K=5))

    def test_boundary_warning_on_near_line(self):
        # an almost exactly linear response drives the ratio to the window edge
        rng = np.random.default_rng(14)
        x = np.sort(rng.uniform(0, 1, 80))
        y = 1.0 + 2.0 * x + 1e-12 * rng.standard_normal(80)
        fit = fit_reml_smoother(x, y, _cubic_spec(K=6))
        assert fit.boundary_warning
        assert fit.sigma_eps2 > 0 and fit.lambda_implied > 0
        assert np.isfinite(fit.reml_value)
        np.testing.assert_allclose(fit.fitted, y, atol=1e-8)


def _simulate_subjects(rng, n_subjects=230, beta=0.1, sig_U=0.25, sig_eps=0.05):
    """Longitudinal bone-density style simulation: 1-4 visits per subject."""
    n_vals = rng.integers(1, 5, size=n_subjects)
    U = rng.normal(0.0, sig_U, n_subjects)
    age, eth, uu, ids = [], [], [], []
    for i in range(n_subjects):
        start = rng.uniform(8.0, 28.0 - (n_vals[i] - 1))
        age.append(start + np.arange(n_vals[i]))
        eth.append(np.full(n_vals[i], rng.integers(0, 2), dtype=float))
        uu.append(np.full(n_vals[i], U[i]))
        ids.append(np.full(n_vals[i], i))
    age = np.concatenate(age)
    eth = np.concatenate(eth)
    f = 1.0 + 0.5 * ndtr((2.0 * age - 36.0) / 5.0)
    y = f + beta * eth + np.concatenate(uu) + rng.normal(0, sig_eps, age.size)
    return age, y, eth, np.concatenate(ids).astype(int)


def _sbmd_spec(age):
    return BasisSpec.from_knots(make_knots(8.0, 28.0, quantile_knots(age, 15), 2))


class TestAdditiveMixed:
    def test_against_dense_blup_oracle(self):
        rng = np.random.default_rng(7)
        age, y, eth, ids = _simulate_subjects(rng, n_subjects=40)
        spec = _sbmd_spec(age)
        fit = fit_additive_mixed(y, age, eth, ids, spec)

        # materialize everything and solve the joint ridge system densely
        tr = demmler_reinsch(osullivan_penalty(spec.knots))
        X = np.column_stack([np.ones_like(age), age, eth])
        _, Zp = build_design(age, spec, tr)
        G = ids.max() + 1
        Zs = np.zeros((age.size, G))
        Zs[np.arange(age.size), ids] = 1.0
        C = np.hstack([X, Zs, Zp])
        lam_U = fit.sigma_eps2 / fit.sigma_U2
        lam_u = fit.sigma_eps2 / fit.sigma_u2
        ridge = np.zeros((C.shape[1], C.shape[1]))
        ridge[3 : 3 + G, 3 : 3 + G] = lam_U * np.eye(G)
        ridge[3 + G :, 3 + G :] = lam_u * np.eye(Zp.shape[1])
        theta = np.linalg.solve(C.T @ C + ridge, C.T @ y)
        np.testing.assert_allclose(fit.beta, theta[:3], rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(fit.u_subject, theta[3 : 3 + G], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(fit.u_spline, theta[3 + G :], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(fit.fitted, C @ theta, atol=1e-8)

    def test_constant_offsets_shrink_like_ridge(self):
        # identical response within each group: BLUPs shrink by n_i/(n_i+lam)
        rng = np.random.default_rng(8)
        G, per = 12, 5
        ids = np.repeat(np.arange(G), per)
        offsets = rng.normal(0, 1.0, G)
        x = np.tile(np.linspace(10, 26, per), G)
        y = offsets[ids] + 0.01 * rng.standard_normal(G * per)
        spec = BasisSpec.from_knots(make_knots(8, 28, quantile_knots(x, 3), 2))
        fit = fit_additive_mixed(y, x, None, ids, spec)
        lam_U = fit.sigma_eps2 / fit.sigma_U2
        centered = y - fit.fitted + fit.u_subject[ids]
        group_mean_resid = np.bincount(ids, weights=centered) / per
        expected = group_mean_resid * per / (per + lam_U)
        np.testing.assert_allclose(fit.u_subject, expected, atol=1e-6)

    def test_zero_subject_variance_detected(self):
        rng = np.random.default_rng(9)
        age, y, eth, ids = _simulate_subjects(rng, n_subjects=300, sig_U=0.0)
        spec = _sbmd_spec(age)
        fit = fit_additive_mixed(y, age, eth, ids, spec)
        assert fit.sigma_U2 < 1e-3

    def test_recovers_group_effect(self):
        rng = np.random.default_rng(10)
        age, y, eth, ids = _simulate_subjects(rng)
        spec = _sbmd_spec(age)
        fit = fit_additive_mixed(y, age, eth, ids, spec)
        lo = fit.beta[2] - 1.96 * fit.beta_se[2]
        hi = fit.beta[2] + 1.96 * fit.beta_se[2]
        assert lo <= 0.1 <= hi
        assert 0.15 <= np.sqrt(fit.sigma_U2) <= 0.35
        assert 0.03 <= np.sqrt(fit.sigma_eps2) <= 0.08

    def test_memory_stays_linear_large_G(self):
        # thousands of singleton subjects must not materialize an n x G matrix
        rng = np.random.default_rng(11)
        G = 20000
        ids = np.arange(G)
        x = rng.uniform(8, 28, G)
        y = np.sin(x / 5) + rng.normal(0, 0.3, G) + rng.normal(0, 0.2, G)
        spec = _sbmd_spec(x)
        fit = fit_additive_mixed(y, x, None, ids, spec)
        assert fit.u_subject.size == G
        assert np.isfinite(fit.reml_value)

    def test_unidentifiable(self):
        spec = _cubic_spec(K=3)
        with pytest.raises(Unidentifiable):
            fit_additive_mixed(np.array([1.0]), np.array([0.5]), None,
                               np.array([0]), spec)

    def test_rank_deficient_covariates(self):
        rng = np.random.default_rng(12)
        age, y, _, ids = _simulate_subjects(rng, n_subjects=30)
        spec = _sbmd_spec(age)
        with pytest.raises(Unidentifiable):
            fit_additive_mixed(y, age, age.copy(), ids, spec)

    def test_convergence_failure(self):
        rng = np.random.default_rng(13)
        age, y, eth, ids = _simulate_subjects(rng, n_subjects=40)
        spec = _sbmd_spec(age)
        with pytest.raises(ConvergenceFailure):
            fit_additive_mixed(y, age, eth, ids, spec, max_iter=2)

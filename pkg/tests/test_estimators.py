import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import chi2

from irflab import dgp
from irflab.analytic import SimpleDGPParams, simulate_simple
from irflab.dgp import ColumnRoles, Dataset, simulate_data, true_irf
from irflab.estimators import (
    BVARPrior,
    VARModel,
    _ridge_spline_fit,
    _partialled_lp_blocks,
    bvar_posterior_mean,
    lm_serial_corr_test,
    lp_estimate,
    penalized_lp_estimate,
    pope_bias_correct,
    select_lag_aic,
    svar_iv_estimate,
    var_average_estimate,
    var_fit,
    var_irf,
)
from irflab.estimators import _penalty_basis
from irflab.numerics import spectral_radius

from conftest import make_exact_var_params


def _plain_dataset(obs, scheme="observed_shock", impulse=0, response=1, norm=0):
    obs = np.asarray(obs, dtype=float)
    return Dataset(
        observations=obs,
        scheme=scheme,
        labels=tuple(f"c{j}" for j in range(obs.shape[1])),
        roles=ColumnRoles(impulse=impulse, response=response, norm=norm,
                          n_cols=obs.shape[1]),
    )


class TestLPEstimate:
    def test_impact_equals_var_estimate(self, obs_data):
        lp = lp_estimate(obs_data, p=4, h_bar=3)
        vi = var_irf(var_fit(obs_data, 4), obs_data.roles, 3, obs_data.scheme)
        assert abs(lp.values[0] - vi.values[0]) <= 1e-8

    def test_exact_recovery_from_noiseless_response(self):
        rng = np.random.default_rng(0)
        T, theta, h0 = 300, 0.7, 3
        shock = rng.standard_normal(T)
        filler = rng.standard_normal((T, 2))
        y = np.zeros(T)
        y[h0:] = theta * shock[:-h0]
        data = _plain_dataset(np.column_stack([shock, y, filler]))
        out = lp_estimate(data, p=2, h_bar=6)
        assert abs(out.values[h0] - theta) <= 1e-10

    def test_consistency_observed_shock(self, params, obs_spec):
        truth = true_irf(params, obs_spec, 8).values
        reps = []
        for r in range(16):
            data = simulate_data(params, obs_spec, 50_000, 100, np.random.default_rng(40 + r))
            reps.append(lp_estimate(data, p=4, h_bar=8).values)
        reps = np.array(reps)
        err = reps.mean(axis=0) - truth
        se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
        assert np.all(np.abs(err) <= 4 * se)

    def test_iv_ratio_normalization(self, iv_data):
        out = lp_estimate(iv_data, p=4, h_bar=4)
        assert out.normalization["norm_col"] == iv_data.roles.norm
        assert out.normalization["impact_estimate"] != 1.0

    def test_response_rescaling_equivariance(self, obs_data):
        out = lp_estimate(obs_data, p=4, h_bar=4).values
        scaled = obs_data.observations.copy()
        scaled[:, obs_data.roles.response] *= 5.0
        data2 = _plain_dataset(scaled, impulse=obs_data.roles.impulse,
                               response=obs_data.roles.response, norm=obs_data.roles.norm)
        out2 = lp_estimate(data2, p=4, h_bar=4).values
        assert_allclose(out2, 5.0 * out, rtol=1e-10)

    def test_iv_rescaling_invariance(self, iv_data):
        out = lp_estimate(iv_data, p=4, h_bar=4).values
        scaled = iv_data.observations.copy()
        scaled[:, 0] *= 7.0
        data2 = Dataset(observations=scaled, scheme="iv", labels=iv_data.labels,
                        roles=iv_data.roles)
        out2 = lp_estimate(data2, p=4, h_bar=4).values
        assert_allclose(out2, out, rtol=1e-9)

    def test_sample_too_short(self, obs_data):
        with pytest.raises(ValueError):
            lp_estimate(_plain_dataset(obs_data.observations[:40]), p=4, h_bar=19)


class TestPenalizedLP:
    def test_zero_penalty_equals_least_squares(self, obs_data):
        ls = lp_estimate(obs_data, p=4, h_bar=19)
        pen = penalized_lp_estimate(obs_data, p=4, h_bar=19, lambda_grid=[0.0])
        assert np.abs(pen.values - ls.values).max() <= 1e-6

    def test_huge_penalty_gives_quadratic(self, obs_data):
        pen = penalized_lp_estimate(obs_data, p=4, h_bar=19, lambda_grid=[1e8])
        assert dgp.quadratic_r2(pen.values) >= 0.999

    def test_selected_lambda_minimizes_penalized_objective(self, obs_data):
        grid = [0.0] + list(np.logspace(-3, 5, 20))
        pen = penalized_lp_estimate(obs_data, p=4, h_bar=19, lambda_grid=grid)
        lam = pen.extras["lambda"]
        B = _penalty_basis(19)
        blocks = _partialled_lp_blocks(obs_data.observations, obs_data.roles, 4, 19)

        def objective(b, lam_):
            D = np.diff(np.eye(B.shape[1]), 3, axis=0)
            total = float(lam_ * np.sum((D @ b) ** 2))
            for h, blk in enumerate(blocks):
                Zc = np.linalg.lstsq(blk["Z"], np.column_stack([blk["x"], blk["y"]]),
                                     rcond=None)[0]
                xr = blk["x"] - blk["Z"] @ Zc[:, 0]
                yr = blk["y"] - blk["Z"] @ Zc[:, 1]
                total += float(np.sum((yr - float(B[h] @ b) * xr) ** 2))
            return total

        b_star, _ = _ridge_spline_fit(blocks, B, lam)
        pos = grid.index(lam)
        for neighbor in {max(pos - 1, 0), min(pos + 1, len(grid) - 1)}:
            b_n, _ = _ridge_spline_fit(blocks, B, grid[neighbor])
            assert objective(b_star, lam) <= objective(b_n, lam) + 1e-8

    def test_minimizer_dominates_mapped_least_squares(self, obs_data):
        lam = 10.0
        pen = penalized_lp_estimate(obs_data, p=4, h_bar=19, lambda_grid=[lam])
        ls = lp_estimate(obs_data, p=4, h_bar=19)
        B = _penalty_basis(19)
        # un-normalized least-squares responses mapped into the basis
        impact = pen.normalization["impact_estimate"]
        beta_ls = ls.values * impact
        b_ls, *_ = np.linalg.lstsq(B, beta_ls, rcond=None)
        assert np.abs(B @ b_ls - beta_ls).max() <= 1e-8  # exact representation
        blocks = _partialled_lp_blocks(obs_data.observations, obs_data.roles, 4, 19)
        D = np.diff(np.eye(B.shape[1]), 3, axis=0)

        def objective(b):
            total = float(lam * np.sum((D @ b) ** 2))
            for h, blk in enumerate(blocks):
                Zc = np.linalg.lstsq(blk["Z"], np.column_stack([blk["x"], blk["y"]]),
                                     rcond=None)[0]
                xr = blk["x"] - blk["Z"] @ Zc[:, 0]
                yr = blk["y"] - blk["Z"] @ Zc[:, 1]
                total += float(np.sum((yr - float(B[h] @ b) * xr) ** 2))
            return total

        b_star, _ = _ridge_spline_fit(blocks, B, lam)
        assert objective(b_star) <= objective(b_ls) + 1e-8

    def test_cross_validation_picks_from_grid(self, obs_data):
        grid = [0.01, 1.0, 100.0]
        pen = penalized_lp_estimate(obs_data, p=4, h_bar=19, lambda_grid=grid,
                                    rng=np.random.default_rng(0))
        assert pen.extras["lambda"] in grid

    def test_empty_grid_rejected(self, obs_data):
        with pytest.raises(ValueError):
            penalized_lp_estimate(obs_data, p=4, h_bar=19, lambda_grid=[])


class TestVARFit:
    def test_degenerate_innovations_rejected(self):
        rng = np.random.default_rng(1)
        w0 = rng.standard_normal(3)
        A = 0.5 * np.eye(3)
        w = [w0]
        for _ in range(99):
            w.append(A @ w[-1])  # zero innovations after the start
        data = _plain_dataset(np.array(w))
        with pytest.raises(ValueError):
            var_fit(data, p=1)

    def test_long_sample_consistency(self):
        params = make_exact_var_params(q_v=0)
        spec = dgp.draw_dgp_spec(params, "monetary", "recursive",
                                 np.random.default_rng(0))
        truth, _ = dgp.var_infinity(params, spec, L_max=2)
        reps = []
        for r in range(12):
            data = simulate_data(params, spec, 30_000, 100, np.random.default_rng(70 + r))
            reps.append(var_fit(data, p=2).lag_matrices)
        reps = np.array(reps)
        err = reps.mean(axis=0) - truth
        se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
        assert np.all(np.abs(err) <= 4 * se + 1e-4)

    def test_residual_orthogonality(self, rec_data):
        model = var_fit(rec_data, p=4)
        w = rec_data.observations
        T = w.shape[0]
        X = np.column_stack([np.ones(T - 4)] + [w[4 - l:T - l] for l in range(1, 5)])
        stacked = np.column_stack([model.intercept, *[model.lag_matrices[l] for l in range(4)]])
        U = w[4:] - X @ stacked.T
        assert np.abs(X.T @ U).max() <= 1e-8 * max(1.0, np.abs(X.T @ w[4:]).max())

    def test_chol_consistent(self, rec_data):
        model = var_fit(rec_data, p=2)
        assert_allclose(model.chol @ model.chol.T, model.residual_cov, atol=1e-12)


class TestVARIRF:
    def test_plugin_identity_at_short_horizons(self, params, rec_spec):
        p = 4
        lags, Sigma_u = dgp.var_infinity(params, rec_spec, L_max=p)
        from irflab.numerics import cholesky_lower

        model = VARModel(
            intercept=np.zeros(5), lag_matrices=lags,
            residual_cov=Sigma_u, chol=cholesky_lower(Sigma_u), sample_size=10_000,
        )
        roles = dgp.dataset_roles(rec_spec)
        est = var_irf(model, roles, p, "recursive").values
        truth = true_irf(params, rec_spec, p).values
        assert_allclose(est[: p + 1], truth[: p + 1], atol=1e-12)

    def test_univariate_ar1(self):
        rho, c = 0.8, 1.7
        model = VARModel(
            intercept=np.zeros(1), lag_matrices=np.array([[[rho]]]),
            residual_cov=np.array([[c**2]]), chol=np.array([[c]]), sample_size=100,
        )
        roles = ColumnRoles(impulse=0, response=0, norm=0, n_cols=1)
        out = var_irf(model, roles, 6, "observed_shock").values
        assert_allclose(out, rho ** np.arange(7), rtol=1e-12)

    def test_long_horizon_decay(self, rec_data):
        model = var_fit(rec_data, p=4)
        assert spectral_radius(model.companion()) < 1.0
        out = var_irf(model, rec_data.roles, 100, "recursive").values
        assert np.abs(out[80:]).max() < np.abs(out[:20]).max()

    def test_cholesky_block_invariance(self, obs_data):
        # permuting variables ordered after the shock, response, and
        # normalization slots leaves the estimated responses unchanged
        data = _plain_dataset(obs_data.observations, impulse=0, response=1, norm=0)
        out = var_irf(var_fit(data, 3), data.roles, 8, "observed_shock").values
        perm = list(range(obs_data.observations.shape[1]))
        perm[-2], perm[-1] = perm[-1], perm[-2]
        permuted = _plain_dataset(obs_data.observations[:, perm],
                                  impulse=0, response=1, norm=0)
        out_p = var_irf(var_fit(permuted, 3), permuted.roles, 8, "observed_shock").values
        assert_allclose(out_p, out, atol=1e-10)


class TestPopeCorrection:
    def test_ar1_bias_halved(self):
        rho, T, reps = 0.9, 100, 5000
        ols_est = np.empty(reps)
        bc_est = np.empty(reps)
        for r in range(reps):
            rng = np.random.default_rng((8, r))
            y = np.empty(T + 50)
            y[0] = rng.standard_normal() / np.sqrt(1 - rho**2)
            eps = rng.standard_normal(T + 49)
            for t in range(1, T + 50):
                y[t] = rho * y[t - 1] + eps[t - 1]
            data = _plain_dataset(y[50:, None], impulse=0, response=0, norm=0)
            model = var_fit(data, p=1)
            ols_est[r] = model.lag_matrices[0, 0, 0]
            bc_est[r] = pope_bias_correct(model).lag_matrices[0, 0, 0]
        ols_bias = ols_est.mean() - rho
        bc_bias = bc_est.mean() - rho
        assert abs(bc_bias) <= 0.5 * abs(ols_bias)

    def test_near_white_noise(self):
        rng = np.random.default_rng(9)
        data = _plain_dataset(rng.standard_normal((200, 2)))
        model = var_fit(data, p=1)
        corrected = pope_bias_correct(model)
        delta = np.abs(corrected.lag_matrices - model.lag_matrices).max()
        assert delta <= 10.0 / model.sample_size
        assert spectral_radius(corrected.companion()) < 1.0

    def test_correction_scales_inversely_with_sample_size(self, rec_data):
        model = var_fit(rec_data, p=2)
        small = dataclasses.replace(model, sample_size=100)
        big = dataclasses.replace(model, sample_size=10_000)
        d_small = pope_bias_correct(small).lag_matrices - model.lag_matrices
        d_big = pope_bias_correct(big).lag_matrices - model.lag_matrices
        assert_allclose(d_small, 100.0 * d_big, rtol=1e-8)

    def test_covariance_untouched(self, rec_data):
        model = var_fit(rec_data, p=2)
        corrected = pope_bias_correct(model)
        assert corrected.residual_cov is model.residual_cov
        assert corrected.chol is model.chol


class TestBVAR:
    def test_diffuse_limit_matches_ols(self, rec_data):
        ls = var_fit(rec_data, p=4)
        post = bvar_posterior_mean(rec_data, 4, BVARPrior(variance_scale=1e9))
        assert np.abs(post.lag_matrices - ls.lag_matrices).max() <= 1e-6
        assert np.abs(post.intercept - ls.intercept).max() <= 1e-6

    def test_dogmatic_limit_zeroes_lags(self, rec_data):
        post = bvar_posterior_mean(rec_data, 4, BVARPrior(variance_scale=1e-9))
        assert np.abs(post.lag_matrices).max() <= 1e-6
        means = rec_data.observations.mean(axis=0)
        assert np.abs(post.intercept - means).max() <= 0.05 * (1 + np.abs(means).max())

    def test_univariate_matches_ridge_closed_form(self):
        rng = np.random.default_rng(10)
        y = rng.standard_normal(300)
        for t in range(1, 300):
            y[t] += 0.5 * y[t - 1]
        data = _plain_dataset(y[:, None], impulse=0, response=0, norm=0)
        p = 2
        prior = BVARPrior(units_scaling=False)
        post = bvar_posterior_mean(data, p, prior)
        ls = var_fit(data, p)
        T = 300 - p
        X = np.column_stack([np.ones(T), y[1:-1], y[:-2]])
        sig2 = ls.residual_cov[0, 0]
        prior_prec = np.diag([1 / 4000.0, 1 / 0.04, 1 / (0.04 / 4)])
        ridge = np.linalg.solve(X.T @ X / sig2 + prior_prec, X.T @ y[p:] / sig2)
        assert_allclose(post.intercept[0], ridge[0], rtol=1e-8)
        assert_allclose(post.lag_matrices[:, 0, 0], ridge[1:], rtol=1e-8)

    def test_monotone_in_prior_precision(self):
        rng = np.random.default_rng(11)
        y = rng.standard_normal(400)
        for t in range(1, 400):
            y[t] += 0.6 * y[t - 1]
        data = _plain_dataset(y[:, None], impulse=0, response=0, norm=0)
        ls = var_fit(data, p=1).lag_matrices[0, 0, 0]
        prev = ls
        for scale in (1e3, 1.0, 1e-3):
            est = bvar_posterior_mean(
                data, 1, BVARPrior(variance_scale=scale, units_scaling=False)
            ).lag_matrices[0, 0, 0]
            assert 0.0 <= est <= prev + 1e-12
            prev = est

    def test_covariance_fixed_at_ols(self, rec_data):
        ls = var_fit(rec_data, p=2)
        post = bvar_posterior_mean(rec_data, 2)
        assert_allclose(post.residual_cov, ls.residual_cov, atol=1e-14)
        assert_allclose(post.chol, ls.chol, atol=1e-14)


class TestVARAveraging:
    def test_weights_on_simplex_and_common_impact(self, obs_data):
        out = var_average_estimate(obs_data, h_bar=8)
        W = out.extras["weights"]
        assert W.min() >= -1e-12
        assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        # all candidates share the fixed impact estimate at h = 0
        ls20 = var_fit(obs_data, 20)
        k = obs_data.roles.impulse
        j = obs_data.roles.response
        m = obs_data.roles.norm
        assert_allclose(out.values[0], ls20.chol[j, k] / ls20.chol[m, k], rtol=1e-10)

    def test_short_sample_rejected(self, obs_data):
        short = _plain_dataset(obs_data.observations[:100],
                               impulse=obs_data.roles.impulse,
                               response=obs_data.roles.response,
                               norm=obs_data.roles.norm)
        with pytest.raises(ValueError):
            var_average_estimate(short, h_bar=8)


class TestSVARIV:
    def test_self_normalization_is_one(self, iv_data):
        forced = Dataset(
            observations=iv_data.observations,
            scheme="iv",
            labels=iv_data.labels,
            roles=ColumnRoles(impulse=0, response=iv_data.roles.norm,
                              norm=iv_data.roles.norm, n_cols=6),
        )
        out = svar_iv_estimate(forced, p=4, h_bar=3)
        assert_allclose(out.values[0], 1.0, rtol=1e-12)

    def test_consistency_under_full_recovery(self):
        # exact proxy (no noise), fully recoverable shock
        params = make_exact_var_params()
        rng = np.random.default_rng(12)
        spec = dgp.draw_dgp_spec(params, "monetary", "iv", rng, iv_r2=0.999999)
        truth = true_irf(params, spec, 6).values
        reps = []
        for r in range(12):
            data = simulate_data(params, spec, 40_000, 100, np.random.default_rng(90 + r))
            reps.append(svar_iv_estimate(data, p=8, h_bar=6).values)
        reps = np.array(reps)
        err = reps.mean(axis=0) - truth
        se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
        assert np.all(np.abs(err) <= 4 * se + 5e-3)

    def test_requires_iv_scheme(self, obs_data):
        with pytest.raises(ValueError):
            svar_iv_estimate(obs_data, p=4, h_bar=4)


class TestLagSelection:
    def test_recovers_var1(self):
        params = make_exact_var_params(q_v=0, rho_scale=0.75)
        params = dataclasses.replace(params, Phi=np.stack([params.Phi[0], np.zeros((5, 5))]))
        spec = dgp.draw_dgp_spec(params, "monetary", "recursive", np.random.default_rng(0))
        hits = 0
        for r in range(200):
            data = simulate_data(params, spec, 10_000, 100, np.random.default_rng((13, r)))
            hits += select_lag_aic(data, p_max=6) == 1
        assert hits >= 190

    def test_white_noise_selects_smallest(self):
        hits = 0
        for r in range(100):
            rng = np.random.default_rng((14, r))
            data = _plain_dataset(rng.standard_normal((300, 3)))
            hits += select_lag_aic(data, p_max=5) == 1
        assert hits >= 90

    def test_tie_break_smallest(self):
        rng = np.random.default_rng(15)
        data = _plain_dataset(rng.standard_normal((500, 2)))
        assert select_lag_aic(data, p_max=4) >= 1


def _simulate_exact_var(lag_matrices, chol_u, T, burn, rng):
    n = chol_u.shape[0]
    p = len(lag_matrices)
    w = np.zeros((T + burn, n))
    shocks = rng.standard_normal((T + burn, n)) @ chol_u.T
    for t in range(T + burn):
        acc = shocks[t].copy()
        for ell in range(1, min(p, t) + 1):
            acc += lag_matrices[ell - 1] @ w[t - ell]
        w[t] = acc
    return w[burn:]


class TestLMSerialCorrTest:
    def test_size_near_nominal(self):
        # exact Gaussian VAR(2): a correctly specified null
        A = [np.array([[0.5, 0.1], [0.0, 0.4]]), np.array([[0.1, 0.0], [0.05, 0.1]])]
        chol_u = np.linalg.cholesky(np.array([[1.0, 0.3], [0.3, 1.0]]))
        rejections = 0
        reps = 2000
        for r in range(reps):
            rng = np.random.default_rng((16, r))
            data = _plain_dataset(_simulate_exact_var(A, chol_u, 200, 50, rng))
            out = lm_serial_corr_test(data, p=2)
            rejections += out["p_value"] < 0.10
        rate = rejections / reps
        assert 0.07 <= rate <= 0.13

    def test_power_against_ma_contamination(self):
        # fixed (non-drifting) moving-average term in the simple testbed
        rejections = 0
        reps = 400
        for r in range(reps):
            rng = np.random.default_rng((17, r))
            p = SimpleDGPParams(rho=0.5, sigma2=1.0, alpha=0.0, T=200)
            s = simulate_simple(p, rng)
            y = s.y.copy()
            e2 = rng.standard_normal(y.size + 1)
            y = y + 0.8 * e2[1:] + 0.8 * e2[:-1]  # strong MA(1) layer
            data = _plain_dataset(np.column_stack([s.eps1, y]))
            out = lm_serial_corr_test(data, p=1)
            rejections += out["p_value"] < 0.10
        assert rejections / reps > 0.20  # comfortably above size

    def test_p_value_monotone_in_statistic(self):
        assert chi2.sf(5.0, 4) > chi2.sf(9.0, 4)

    def test_statistic_fields(self, rec_data):
        out = lm_serial_corr_test(rec_data, p=4)
        assert out["df"] == 25
        assert 0.0 <= out["p_value"] <= 1.0
        assert out["statistic"] >= 0.0

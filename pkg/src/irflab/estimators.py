"""Impulse response estimators and specification diagnostics.

All estimators consume a simulated :class:`~irflab.dgp.Dataset` and
return unit-effect-normalized impulse responses out to a common maximal
horizon: direct projections (plain and smoothness-penalized), iterated
VARs (plain, small-sample bias-corrected, posterior-mean shrunk, and
model-averaged), and the external-instrument VAR that projects the proxy
on reduced-form innovations.  Everything is a pure function of the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.stats import chi2

from .dgp import ColumnRoles, Dataset
from .numerics import bspline_basis, cholesky_lower, ols, simplex_qp, spectral_radius


@dataclass(frozen=True)
class VARModel:
    """Reduced-form VAR(p) fit with intercept."""

    intercept: np.ndarray
    lag_matrices: np.ndarray   # (p, n, n)
    residual_cov: np.ndarray
    chol: np.ndarray
    sample_size: int

    @property
    def n_vars(self) -> int:
        return self.lag_matrices.shape[1]

    @property
    def n_lags(self) -> int:
        return self.lag_matrices.shape[0]

    def companion(self) -> np.ndarray:
        p, n = self.n_lags, self.n_vars
        comp = np.zeros((n * p, n * p))
        for lag in range(p):
            comp[:n, lag * n:(lag + 1) * n] = self.lag_matrices[lag]
        if p > 1:
            comp[n:, :-n] = np.eye(n * (p - 1))
        return comp


@dataclass(frozen=True)
class IRFEstimate:
    values: np.ndarray
    method: str
    scheme: str
    normalization: dict
    extras: dict = field(default_factory=dict)


def _lag_design(w: np.ndarray, p: int):
    """Stacked [1, w(t-1), ..., w(t-p)] rows for t = p..T-1 (0-indexed)."""
    T, n = w.shape
    rows = T - p
    X = np.empty((rows, 1 + n * p))
    X[:, 0] = 1.0
    for lag in range(1, p + 1):
        X[:, 1 + (lag - 1) * n:1 + lag * n] = w[p - lag:T - lag]
    return X


def var_fit(data: Dataset, p: int) -> VARModel:
    """Equation-by-equation OLS VAR(p) with intercept on all columns."""
    w = data.observations
    T, n = w.shape
    if T - p <= n * p + 1:
        raise ValueError(f"sample too short for VAR({p}) in {n} variables")
    X = _lag_design(w, p)
    fit = ols(w[p:], X)
    coef = fit.coefficients
    lag_mats = np.stack([coef[:, 1 + ell * n:1 + (ell + 1) * n] for ell in range(p)])
    C = cholesky_lower(fit.residual_cov)
    return VARModel(
        intercept=coef[:, 0].copy(),
        lag_matrices=lag_mats,
        residual_cov=fit.residual_cov,
        chol=C,
        sample_size=T - p,
    )


def _reduced_form_irfs(lag_matrices: np.ndarray, h_bar: int) -> np.ndarray:
    """Psi_0 = I, Psi_h = sum_l A_l Psi_(h-l)."""
    p, n, _ = lag_matrices.shape
    Psi = np.empty((h_bar + 1, n, n))
    Psi[0] = np.eye(n)
    for h in range(1, h_bar + 1):
        acc = np.zeros((n, n))
        for ell in range(1, min(p, h) + 1):
            acc += lag_matrices[ell - 1] @ Psi[h - ell]
        Psi[h] = acc
    return Psi


def var_irf(model: VARModel, roles: ColumnRoles, h_bar: int,
            scheme: str, method: str = "ls_var") -> IRFEstimate:
    """Relative structural IRF from a fitted VAR.

    The structural column is the ``roles.impulse`` column of the Cholesky
    factor; responses of the ``roles.response`` variable are divided by
    the impact response of the ``roles.norm`` variable to the same
    orthogonalized innovation.
    """
    Psi = _reduced_form_irfs(model.lag_matrices, h_bar)
    k, j, m = roles.impulse, roles.response, roles.norm
    impact = model.chol[m, k]
    if abs(impact) <= 1e-10:
        raise ValueError("near-zero normalization impact in VAR estimate")
    values = Psi[:, j, :] @ model.chol[:, k] / impact
    return IRFEstimate(
        values=values,
        method=method,
        scheme=scheme,
        normalization={"norm_col": m, "impact_estimate": float(impact)},
    )


# ---------------------------------------------------------------------------
# Local projections
# ---------------------------------------------------------------------------

def _lp_regression(w: np.ndarray, lhs_col: int, roles: ColumnRoles, p: int, h: int):
    """Design and outcome for the horizon-h projection; returns (y, X).

    Regressors: intercept, the impulse column, any contemporaneous
    controls (columns ordered before the impulse under recursive
    identification), and p lags of every column.
    """
    T = w.shape[0]
    rows = T - p - h
    if rows <= 1 + 1 + len(roles.contemporaneous) + w.shape[1] * p:
        raise ValueError(f"sample too short for projection at horizon {h}")
    base = slice(p, T - h)
    cols = [np.ones(rows), w[base, roles.impulse]]
    for c in roles.contemporaneous:
        cols.append(w[base, c])
    X = np.column_stack(cols + [_lag_design(w, p)[:rows, 1:]])
    y = w[p + h:, lhs_col]
    return y, X


def _lp_coef(w, lhs_col, roles, p, h) -> float:
    y, X = _lp_regression(w, lhs_col, roles, p, h)
    return float(ols(y, X).coefficients[0, 1])


def lp_estimate(data: Dataset, p: int, h_bar: int, method: str = "ls_lp") -> IRFEstimate:
    """Least-squares direct projections at every horizon.

    The horizon-h coefficient on the impulse column is divided by the
    impact-horizon coefficient from the same regression with the
    normalization variable on the left-hand side.  When the impulse
    column is its own normalization (observed shock, recursive) that
    denominator is identically one and is skipped.
    """
    w = data.observations
    roles = data.roles
    if roles.norm == roles.impulse:
        impact = 1.0
    else:
        impact = _lp_coef(w, roles.norm, roles, p, 0)
        if abs(impact) <= 1e-10:
            raise ValueError("weak normalization: impact projection below 1e-10")
    values = np.array([_lp_coef(w, roles.response, roles, p, h) for h in range(h_bar + 1)])
    return IRFEstimate(
        values=values / impact,
        method=method,
        scheme=data.scheme,
        normalization={"norm_col": roles.norm, "impact_estimate": float(impact)},
    )


def _third_difference_matrix(K: int) -> np.ndarray:
    D = np.zeros((K - 3, K))
    for i in range(K - 3):
        D[i, i:i + 4] = (-1.0, 3.0, -3.0, 1.0)
    return D


def _penalty_basis(h_bar: int) -> np.ndarray:
    """Spline design for the penalized projection, horizons 0..h_bar.

    One basis function beyond the minimal horizon count, so the basis
    forms a partition of unity through the final horizon and a penalized
    fit with vanishing third differences is exactly quadratic at every
    horizon, not just away from the right boundary.
    """
    return bspline_basis(h_bar + 1)[: h_bar + 1]


def _partialled_lp_blocks(w, roles, p, h_bar):
    """Per-horizon outcome/impulse residuals after projecting out controls.

    Returns lists (y_t, x_t, control design Z, raw y, raw x, base index)
    per horizon; the residualization makes the joint penalized problem a
    small generalized ridge in the spline coefficients.
    """
    T = w.shape[0]
    blocks = []
    lag_block_full = _lag_design(w, p)[:, 1:]
    for h in range(h_bar + 1):
        rows = T - p - h
        base = slice(p, T - h)
        zcols = [np.ones(rows)]
        for c in roles.contemporaneous:
            zcols.append(w[base, c])
        Z = np.column_stack(zcols + [lag_block_full[:rows]])
        x = w[base, roles.impulse].astype(float)
        y = w[p + h:, roles.response].astype(float)
        blocks.append({"Z": Z, "x": x, "y": y, "base_t": np.arange(p, T - h)})
    return blocks


def _ridge_spline_fit(blocks, B, lam, rows_mask=None):
    """Solve the penalized joint projection for spline coefficients.

    min over b of sum_h || y_h~ - (B_h b) x_h~ ||^2 + lam ||D3 b||^2,
    where ~ denotes residuals from the horizon's control regression.
    """
    K = B.shape[1]
    G = np.zeros((K, K))
    g = np.zeros(K)
    D3 = _third_difference_matrix(K)
    controls = []
    for h, blk in enumerate(blocks):
        Z, x, y = blk["Z"], blk["x"], blk["y"]
        if rows_mask is not None:
            keep = rows_mask[h]
            Z, x, y = Z[keep], x[keep], y[keep]
        ZtZ_inv_Zt = np.linalg.lstsq(Z, np.column_stack([x, y]), rcond=None)[0]
        x_res = x - Z @ ZtZ_inv_Zt[:, 0]
        y_res = y - Z @ ZtZ_inv_Zt[:, 1]
        Bh = B[h]
        sxx = float(x_res @ x_res)
        sxy = float(x_res @ y_res)
        G += sxx * np.outer(Bh, Bh)
        g += sxy * Bh
        controls.append((ZtZ_inv_Zt, x))
    # least-squares solve: at lam = 0 the Gram matrix is rank deficient
    # (the fitted responses are unique, the spline coefficients are not)
    b = np.linalg.lstsq(G + lam * (D3.T @ D3), g, rcond=None)[0]
    return b, controls


def penalized_lp_estimate(data: Dataset, p: int, h_bar: int, lambda_grid,
                          n_folds: int = 5, rng=None,
                          method: str = "pen_lp") -> IRFEstimate:
    """Smoothness-penalized joint projection across horizons.

    The impulse response is parametrized on a cubic B-spline basis in the
    horizon and the squared third difference of the spline coefficients
    is penalized, shrinking the response toward a quadratic in the
    horizon; control coefficients are never penalized.  The penalty
    weight is chosen by cross-validation over contiguous time blocks
    (with a guard band of h_bar + p observations around the held-out
    block), and the fitted responses are divided by the least-squares
    impact projection of the normalization variable.
    """
    lambda_grid = [float(l) for l in lambda_grid]
    if not lambda_grid or any(l < 0 for l in lambda_grid):
        raise ValueError("lambda grid must be nonempty and nonnegative")
    w = data.observations
    roles = data.roles
    T = w.shape[0]
    B = _penalty_basis(h_bar)
    blocks = _partialled_lp_blocks(w, roles, p, h_bar)

    if len(lambda_grid) == 1:
        lam_star = lambda_grid[0]
    else:
        # Contiguous blocks over base time; guard band limits leakage
        # from overlapping multi-horizon outcomes.
        edges = np.linspace(p, T, n_folds + 1).astype(int)
        guard = h_bar + p
        cv = np.zeros(len(lambda_grid))
        for f in range(n_folds):
            lo, hi = edges[f], edges[f + 1]
            train_masks, val_masks = [], []
            for blk in blocks:
                t = blk["base_t"]
                val = (t >= lo) & (t < hi)
                train = (t < lo - guard) | (t >= hi + guard)
                train_masks.append(train)
                val_masks.append(val)
            if not all(m.sum() > B.shape[1] for m in train_masks):
                continue
            for li, lam in enumerate(lambda_grid):
                b, controls = _ridge_spline_fit(blocks, B, lam, rows_mask=train_masks)
                err = 0.0
                for h, blk in enumerate(blocks):
                    keep = val_masks[h]
                    if not keep.any():
                        continue
                    Zc, _ = controls[h]
                    beta_h = float(B[h] @ b)
                    # control coefficients from the training fit: coefs of
                    # (y - beta x) on Z equal coefs(y on Z) - beta coefs(x on Z)
                    ctrl = Zc[:, 1] - beta_h * Zc[:, 0]
                    pred = blk["Z"][keep] @ ctrl + beta_h * blk["x"][keep]
                    err += float(np.sum((blk["y"][keep] - pred) ** 2))
                cv[li] += err
        lam_star = lambda_grid[int(np.argmin(cv))]

    b, _ = _ridge_spline_fit(blocks, B, lam_star)
    values = B @ b

    if roles.norm == roles.impulse:
        impact = 1.0
    else:
        impact = _lp_coef(w, roles.norm, roles, p, 0)
        if abs(impact) <= 1e-10:
            raise ValueError("weak normalization: impact projection below 1e-10")
    return IRFEstimate(
        values=values / impact,
        method=method,
        scheme=data.scheme,
        normalization={"norm_col": roles.norm, "impact_estimate": float(impact)},
        extras={"lambda": lam_star, "spline_coefficients": b},
    )


# ---------------------------------------------------------------------------
# VAR variants
# ---------------------------------------------------------------------------

def pope_bias_correct(model: VARModel) -> VARModel:
    """First-order small-sample bias correction of the VAR coefficients.

    Evaluates the closed-form asymptotic bias of the least-squares
    companion matrix at the estimates and subtracts it; if the corrected
    companion leaves the unit disk, the correction is shrunk toward zero
    until stationarity is restored.  The residual covariance and its
    Cholesky factor are left untouched.
    """
    F = model.companion()
    if spectral_radius(F) >= 1.0:
        return model  # non-stationary point estimate: apply no correction
    p, n = model.n_lags, model.n_vars
    dim = n * p
    Sigma_c = np.zeros((dim, dim))
    Sigma_c[:n, :n] = model.residual_cov
    Gamma0 = scipy.linalg.solve_discrete_lyapunov(F, Sigma_c, method="bilinear")
    eigvals = np.linalg.eigvals(F)
    Ft = F.T
    I = np.eye(dim)
    core = np.linalg.solve(I - Ft, I) + Ft @ np.linalg.solve(I - Ft @ Ft, I)
    core = core.astype(complex)
    for lam in eigvals:
        core += lam * np.linalg.solve(np.eye(dim, dtype=complex) - lam * Ft, np.eye(dim))
    bias = -(Sigma_c @ np.real(core) @ np.linalg.solve(Gamma0, I)) / model.sample_size

    correction = -bias[:n]  # top block rows carry the lag matrices
    for shrink in np.linspace(1.0, 0.0, 101):
        top = F[:n] + shrink * correction
        Fc = F.copy()
        Fc[:n] = top
        if spectral_radius(Fc) < 1.0:
            lag_mats = np.stack([top[:, ell * n:(ell + 1) * n] for ell in range(p)])
            return VARModel(
                intercept=model.intercept,
                lag_matrices=lag_mats,
                residual_cov=model.residual_cov,
                chol=model.chol,
                sample_size=model.sample_size,
            )
    return model  # unreachable: shrink = 0 reproduces the stationary input


@dataclass(frozen=True)
class BVARPrior:
    """Zero-centered Gaussian prior with lag-decaying variances.

    ``variance_scale`` multiplies the lag-coefficient prior variances
    only, so the diffuse and dogmatic limits leave the intercept loose.
    ``units_scaling`` rescales cross-variable variances by the ratio of
    univariate AR(4) residual variances.
    """

    own_variance: float = 0.04
    cross_variance: float = 0.01
    intercept_variance: float = 4000.0
    units_scaling: bool = True
    variance_scale: float = 1.0


def _univariate_ar_resid_vars(w: np.ndarray, p: int = 4) -> np.ndarray:
    T, n = w.shape
    out = np.empty(n)
    for i in range(n):
        y = w[:, i]
        X = np.column_stack([np.ones(T - p)] + [y[p - l:T - l] for l in range(1, p + 1)])
        fit = ols(y[p:], X)
        out[i] = float(fit.residual_cov[0, 0])
    return out


def bvar_posterior_mean(data: Dataset, p: int,
                        prior: Optional[BVARPrior] = None) -> VARModel:
    """Posterior-mean VAR coefficients under a zero-centered Gaussian prior.

    The residual covariance is fixed at the least-squares estimate (as is
    its Cholesky factor); the coefficient posterior mean then solves one
    joint normal-equations system coupling the equations through that
    covariance.
    """
    prior = prior or BVARPrior()
    ls = var_fit(data, p)
    w = data.observations
    T, n = w.shape
    X = _lag_design(w, p)
    Y = w[p:]
    k = X.shape[1]

    if prior.units_scaling:
        sig2 = _univariate_ar_resid_vars(w)
    prior_var = np.empty((k, n))  # regressor x equation
    prior_var[0, :] = prior.intercept_variance
    for ell in range(1, p + 1):
        for b in range(n):
            row = 1 + (ell - 1) * n + b
            for i in range(n):
                if i == b:
                    v = prior.own_variance / ell**2
                else:
                    v = prior.cross_variance / ell**2
                    if prior.units_scaling:
                        v *= sig2[i] / sig2[b]
                prior_var[row, i] = v * prior.variance_scale
    prior_var[0, :] = prior.intercept_variance  # scale exempt

    Sigma_inv = np.linalg.inv(ls.residual_cov)
    XtX = X.T @ X
    XtY = X.T @ Y
    precision = np.kron(Sigma_inv, XtX) + np.diag(1.0 / prior_var.T.ravel())
    rhs = (XtY @ Sigma_inv).T.ravel()
    beta = np.linalg.solve(precision, rhs)
    coef = beta.reshape(n, k)  # equation-major

    lag_mats = np.stack([coef[:, 1 + ell * n:1 + (ell + 1) * n] for ell in range(p)])
    return VARModel(
        intercept=coef[:, 0].copy(),
        lag_matrices=lag_mats,
        residual_cov=ls.residual_cov,
        chol=ls.chol,
        sample_size=ls.sample_size,
    )


# ---------------------------------------------------------------------------
# VAR model averaging
# ---------------------------------------------------------------------------

def _irf_gradient_kernels(u_rows: np.ndarray, v_cols: np.ndarray, h_bar: int) -> np.ndarray:
    """Convolution kernels for IRF coefficient gradients.

    For delta_h = (row j of Psi_h) C e_k, the derivative with respect to
    lag-matrix entry A_l[a, b] is W[h - l][a, b] with
    W[m] = sum_s outer(u_s, v_(m-s)), u_s the j-th rows of Psi_s and v_m
    the k-th columns of Psi_m C.
    """
    n = u_rows.shape[1]
    W = np.zeros((h_bar + 1, n, n))
    for m in range(h_bar + 1):
        for s in range(m + 1):
            W[m] += np.outer(u_rows[s], v_cols[m - s])
    return W


def var_average_estimate(data: Dataset, h_bar: int, p_max: int = 20,
                         method: str = "var_avg") -> IRFEstimate:
    """Weighted average of autoregressive impulse response estimates.

    Candidates are univariate autoregressions of the response variable
    with one to ``p_max`` lags and full VARs with one to ``p_max`` lags,
    all fitted by least squares on the common sample that a ``p_max``-lag
    model would use.  The residual covariance (and the orthogonalization)
    is fixed at the largest VAR's estimate.  Per horizon, the weights
    minimize a quadratic estimate of the averaged estimator's mean
    squared error over the unit simplex: squared-bias terms proxied by
    deviations from the largest model's estimate plus an
    influence-function covariance term.
    """
    w = data.observations
    roles = data.roles
    T, n = w.shape
    if T - p_max <= n * p_max + 1:
        raise ValueError(f"sample too short for the VAR({p_max}) candidate")
    k, j, m_norm = roles.impulse, roles.response, roles.norm
    rows = T - p_max

    big = None
    cand_irf = np.zeros((2 * p_max, h_bar + 1))
    psi_series = []
    y = w[:, j]

    for p in range(1, p_max + 1):
        # univariate AR(p) candidate for the response variable
        Xa = np.column_stack([np.ones(rows)] + [y[p_max - l:T - l] for l in range(1, p + 1)])
        fit = ols(y[p_max:], Xa)
        coefs = fit.coefficients[0, 1:]
        m_irf = np.zeros(h_bar + 1)
        m_irf[0] = 1.0
        for h in range(1, h_bar + 1):
            m_irf[h] = sum(coefs[l - 1] * m_irf[h - l] for l in range(1, min(p, h) + 1))
        psi_series.append(("ar", p, fit, Xa, m_irf))

    for p in range(1, p_max + 1):
        Xv = np.column_stack([np.ones(rows)] + [w[p_max - l:T - l] for l in range(1, p + 1)])
        fit = ols(w[p_max:], Xv)
        coef = fit.coefficients
        lag_mats = np.stack([coef[:, 1 + ell * n:1 + (ell + 1) * n] for ell in range(p)])
        psi_series.append(("var", p, fit, Xv, lag_mats))
        if p == p_max:
            big = (fit, lag_mats)

    C_big = cholesky_lower(big[0].residual_cov)
    impact = C_big[m_norm, k]
    if abs(impact) <= 1e-10:
        raise ValueError("near-zero normalization impact in averaging estimate")
    c0 = C_big[j, k]

    # Per-candidate IRFs and influence series for every horizon.
    R = len(psi_series)
    psi_t = np.zeros((R, h_bar + 1, rows))
    for r, (kind, p, fit, X, extra) in enumerate(psi_series):
        P = np.linalg.lstsq(X.T @ X, X.T, rcond=None)[0].T  # rows of x_t' (X'X)^-1
        if kind == "ar":
            m_irf = extra
            cand_irf[r] = m_irf * c0
            u = m_irf[:, None]
            v = (m_irf * c0)[:, None]
            W = _irf_gradient_kernels(u, v, h_bar)[:, 0, 0]
            resid = fit.residuals[:, 0]
            for h in range(h_bar + 1):
                grad = np.zeros(X.shape[1])
                for ell in range(1, min(p, h) + 1):
                    grad[ell] = W[h - ell]
                psi_t[r, h] = (P @ grad) * resid
        else:
            lag_mats = extra
            Psi = _reduced_form_irfs(lag_mats, h_bar)
            cand_irf[r] = Psi[:, j, :] @ C_big[:, k]
            u = Psi[:, j, :]
            v = Psi @ C_big[:, k]
            W = _irf_gradient_kernels(u, v, h_bar)
            resid = fit.residuals
            for h in range(h_bar + 1):
                grad = np.zeros((X.shape[1], n))
                for ell in range(1, min(p, h) + 1):
                    blk = W[h - ell]  # (a, b): equation a, regressed variable b
                    grad[1 + (ell - 1) * n:1 + ell * n, :] = blk.T
                psi_t[r, h] = np.einsum("tk,kn,tn->t", P, grad, resid)

    big_irf = cand_irf[R - 1]
    weights = np.zeros((h_bar + 1, R))
    values = np.zeros(h_bar + 1)
    for h in range(h_bar + 1):
        d = cand_irf[:, h] - big_irf[h]
        V = psi_t[:, h, :] @ psi_t[:, h, :].T / rows
        M = rows * np.outer(d, d) + V / rows
        wgt = simplex_qp(M)
        weights[h] = wgt
        values[h] = float(wgt @ cand_irf[:, h])

    return IRFEstimate(
        values=values / impact,
        method=method,
        scheme=data.scheme,
        normalization={"norm_col": m_norm, "impact_estimate": float(impact)},
        extras={"weights": weights},
    )


# ---------------------------------------------------------------------------
# External-instrument VAR
# ---------------------------------------------------------------------------

def svar_iv_estimate(data: Dataset, p: int, h_bar: int,
                     method: str = "svar_iv") -> IRFEstimate:
    """External-instrument VAR: proxy projected on reduced-form innovations.

    The VAR excludes the proxy column; the structural impact vector is the
    sample covariance of the residuals with the proxy, and responses are
    normalized by that vector's entry for the normalization variable.
    """
    if data.scheme != "iv":
        raise ValueError("external-instrument estimator requires a proxy dataset")
    z = data.observations[:, 0]
    w = data.observations[:, 1:]
    inner = Dataset(
        observations=w,
        scheme=data.scheme,
        labels=data.labels[1:],
        roles=ColumnRoles(impulse=0, response=0, norm=0, n_cols=w.shape[1]),
    )
    model = var_fit(inner, p)
    resid_z = z[p:]
    U = w[p:] - (_lag_design(w, p) @ np.column_stack(
        [model.intercept, *[model.lag_matrices[l] for l in range(p)]]
    ).T)
    gamma = U.T @ (resid_z - resid_z.mean()) / U.shape[0]
    j = data.roles.response - 1
    m = data.roles.norm - 1
    if abs(gamma[m]) <= 1e-10:
        raise ValueError("weak instrument impact")
    Psi = _reduced_form_irfs(model.lag_matrices, h_bar)
    values = Psi[:, j, :] @ gamma / gamma[m]
    return IRFEstimate(
        values=values,
        method=method,
        scheme=data.scheme,
        normalization={"norm_col": data.roles.norm, "impact_estimate": float(gamma[m])},
    )


# ---------------------------------------------------------------------------
# Lag selection and residual diagnostics
# ---------------------------------------------------------------------------

def select_lag_aic(data: Dataset, p_max: int) -> int:
    """Akaike-criterion lag order, all candidates on a common sample.

    Minimizes log det of the residual covariance plus 2 p n^2 / T_eff;
    ties break toward the smallest order.
    """
    w = data.observations
    T, n = w.shape
    rows = T - p_max
    if rows <= n * p_max + 1:
        raise ValueError(f"sample too short for VAR({p_max})")
    X_full = _lag_design(w, p_max)
    Y = w[p_max:]
    best_p, best_crit = None, np.inf
    for p in range(1, p_max + 1):
        X = X_full[:, :1 + n * p]
        fit = ols(Y, X)
        sign, logdet = np.linalg.slogdet(fit.residual_cov)
        if sign <= 0:
            continue
        crit = logdet + 2.0 * p * n * n / rows
        if crit < best_crit - 1e-12:
            best_crit, best_p = crit, p
    if best_p is None:
        raise ValueError("no admissible lag order")
    return best_p


def lm_serial_corr_test(data: Dataset, p: int) -> dict:
    """Likelihood-ratio test for first-order residual autocorrelation.

    Regresses the VAR residuals on their first lag, controlling for the
    VAR's own regressors, and compares restricted and unrestricted
    residual covariances; the statistic is asymptotically chi-squared
    with n^2 degrees of freedom.
    """
    w = data.observations
    T, n = w.shape
    model = var_fit(data, p)
    X = _lag_design(w, p)
    stacked = np.column_stack([model.intercept, *[model.lag_matrices[l] for l in range(p)]])
    U = w[p:] - X @ stacked.T

    U_dep = U[1:]
    U_lag = U[:-1]
    X_aux = X[1:]
    rows = U_dep.shape[0]

    fit_r = ols(U_dep, X_aux)
    fit_u = ols(U_dep, np.column_stack([X_aux, U_lag]))
    sign_r, logdet_r = np.linalg.slogdet(fit_r.residual_cov)
    sign_u, logdet_u = np.linalg.slogdet(fit_u.residual_cov)
    if sign_r <= 0 or sign_u <= 0:
        raise ValueError("degenerate residual covariance in the diagnostic system")
    stat = rows * (logdet_r - logdet_u)
    df = n * n
    return {"statistic": float(stat), "p_value": float(chi2.sf(stat, df)), "df": df}

"""Shared numerical kernels.

Least-squares regression, matrix factorizations, discrete Lyapunov and
steady-state Kalman fixed points, integer-knot B-spline bases, and
quadratic minimization over the unit simplex.  Everything here is a pure
function of its inputs and safe to call from parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import nnls


@dataclass(frozen=True)
class RegressionFit:
    """Equation-by-equation OLS fit of Y on X.

    coefficients has shape (m, k): row i holds the regression coefficients
    of the i-th regressand on the k regressors, so fitted values are
    X @ coefficients.T.  residual_cov = residuals' residuals / T.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    residual_cov: np.ndarray


def _as_columns(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def ols(Y, X) -> RegressionFit:
    """Multivariate OLS of Y (T x m) on X (T x k), solved by QR.

    Raises if X is numerically rank deficient (smallest singular value
    below 1e-10 times the largest), naming the offending column.
    """
    Y = _as_columns(Y, "Y")
    X = _as_columns(X, "X")
    T, k = X.shape
    if Y.shape[0] != T:
        raise ValueError(f"Y has {Y.shape[0]} rows but X has {T}")
    if T <= k:
        raise ValueError(f"need more observations ({T}) than regressors ({k})")

    s = np.linalg.svd(X, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        # The column with the largest weight in the null-space direction.
        _, _, Vt = np.linalg.svd(X)
        bad = int(np.argmax(np.abs(Vt[-1])))
        raise ValueError(f"regressor matrix is rank deficient near column {bad}")

    Q, R = np.linalg.qr(X)
    coef = scipy.linalg.solve_triangular(R, Q.T @ Y)
    resid = Y - X @ coef
    cov = resid.T @ resid / T
    return RegressionFit(coef.T, resid, 0.5 * (cov + cov.T))


def cholesky_lower(S) -> np.ndarray:
    """Lower-triangular Cholesky factor with strictly positive diagonal.

    The input is symmetrized before factorization; asymmetry beyond a
    1e-10 relative tolerance or a non-positive-definite input raises,
    the latter reporting the first failing leading minor.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = max(np.max(np.abs(S)), 1e-300)
    if np.max(np.abs(S - S.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric within 1e-10 relative tolerance")
    S = 0.5 * (S + S.T)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        for j in range(1, S.shape[0] + 1):
            try:
                np.linalg.cholesky(S[:j, :j])
            except np.linalg.LinAlgError:
                raise ValueError(
                    f"matrix is not positive definite: leading minor of order {j} fails"
                ) from None
        raise


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def solve_discrete_lyapunov(A, Q) -> np.ndarray:
    """Solve Sigma = A Sigma A' + Q for stable A and psd Q."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    rho = spectral_radius(A)
    if rho >= 1.0 - 1e-8:
        raise ValueError(f"non-stationary transition: spectral radius {rho:.6f}")
    Qs = 0.5 * (Q + Q.T)
    Sigma = scipy.linalg.solve_discrete_lyapunov(A, Qs, method="bilinear")
    Sigma = 0.5 * (Sigma + Sigma.T)
    scale = max(np.max(np.abs(Qs)), np.max(np.abs(Sigma)), 1e-300)
    resid = np.max(np.abs(Sigma - A @ Sigma @ A.T - Qs))
    if resid > 1e-8 * scale:
        raise RuntimeError(f"Lyapunov residual {resid:.3e} exceeds tolerance")
    return Sigma


@dataclass(frozen=True)
class KalmanSteadyState:
    """Steady-state filter for s[t+1] = A s[t] + B e[t], w[t] = C s[t] + D e[t]."""

    gain: np.ndarray            # K
    state_cov: np.ndarray       # one-step-ahead prediction error covariance
    innovation_cov: np.ndarray  # C Sigma C' + D D'


def _psd_solve(S, B):
    """Solve S X = B for symmetric psd S, falling back to least squares."""
    try:
        c, low = scipy.linalg.cho_factor(S)
        return scipy.linalg.cho_solve((c, low), B)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(S, B, rcond=None)[0]


def steady_state_kalman(A, B, C, D, tol=1e-9, max_iter=10_000) -> KalmanSteadyState:
    """Steady-state Kalman gain and covariances by fixed-point iteration.

    Iterates the prediction-error Riccati recursion

        Sigma <- A Sigma A' + B B' - N S^{-1} N',
        N = A Sigma C' + B D',  S = C Sigma C' + D D',

    from Sigma = 0 until the relative change falls below ``tol``.  The
    state and measurement disturbances share the same innovation vector,
    hence the cross term B D'.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    rho = spectral_radius(A)
    if rho >= 1.0 - 1e-8:
        raise ValueError(f"unstable state transition: spectral radius {rho:.6f}")

    BB = B @ B.T
    BD = B @ D.T
    DD = D @ D.T

    def iterate(Sigma):
        for _ in range(max_iter):
            S = C @ Sigma @ C.T + DD
            N = A @ Sigma @ C.T + BD
            X = _psd_solve(S, N.T)
            Sigma_next = A @ Sigma @ A.T + BB - N @ X
            Sigma_next = 0.5 * (Sigma_next + Sigma_next.T)
            delta = np.max(np.abs(Sigma_next - Sigma))
            Sigma = Sigma_next
            if delta <= tol * max(1.0, np.max(np.abs(Sigma))):
                return Sigma
        raise RuntimeError(
            f"Riccati iteration did not converge in {max_iter} steps "
            f"(last update {delta:.3e})"
        )

    def solution(Sigma):
        S = C @ Sigma @ C.T + DD
        N = A @ Sigma @ C.T + BD
        K = _psd_solve(S, N.T).T
        return KalmanSteadyState(gain=K, state_cov=Sigma, innovation_cov=0.5 * (S + S.T))

    out = solution(iterate(np.zeros_like(BB)))
    if spectral_radius(A - out.gain @ C) >= 1.0:
        # A zero start can be absorbed into the non-stabilizing fixed point
        # when the measurement spans the full disturbance vector; restart
        # from the unconditional state covariance.
        out = solution(iterate(solve_discrete_lyapunov(A, BB)))
    rho_f = spectral_radius(A - out.gain @ C)
    if rho_f >= 1.0:
        raise RuntimeError(f"filter transition A - KC unstable (radius {rho_f:.6f})")
    return out


def bspline_basis(h_bar: int, degree: int = 3) -> np.ndarray:
    """B-spline design matrix on the integer horizons 0..h_bar.

    Basis functions sit on unit-spaced integer knots with left-most knots
    running from -degree to h_bar - 2, giving K = h_bar + degree - 1
    columns (h_bar + 2 for cubics).  Row h holds the K basis values at
    horizon h; the basis forms a partition of unity on [0, h_bar - 1] and
    deliberately leaves the final horizon in the boundary region.
    """
    if h_bar < 3:
        raise ValueError("need h_bar >= 3 for a cubic spline basis")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    x = np.arange(h_bar + 1, dtype=float)
    lefts = np.arange(-degree, h_bar - 1)  # left-most knot of each basis function
    # Cox-de Boor on integer knots: start from indicator functions.
    n_funcs = len(lefts) + degree          # order-0 pieces needed at the top level
    B = np.zeros((x.size, n_funcs))
    for i, j in enumerate(range(-degree, -degree + n_funcs)):
        B[:, i] = (x >= j) & (x < j + 1)
    for d in range(1, degree + 1):
        nxt = np.zeros((x.size, n_funcs - d))
        for i in range(n_funcs - d):
            j = -degree + i
            left = (x - j) / d * B[:, i]
            right = (j + d + 1 - x) / d * B[:, i + 1]
            nxt[:, i] = left + right
        B = nxt
    return B


def simplex_qp(M, tol=1e-8, max_iter=500) -> np.ndarray:
    """Minimize w' M w over the unit simplex {w >= 0, sum w = 1}.

    M must be symmetric positive semidefinite within tolerance.  A
    non-negative least-squares warm start is refined by an active-set
    polish that solves the equality-constrained KKT system exactly on the
    support, and the returned weights are verified against the KKT
    conditions at relative tolerance ``tol``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    R = M.shape[0]
    scale = max(1.0, np.max(np.abs(M)))
    if np.max(np.abs(M - M.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    M = 0.5 * (M + M.T)
    eigvals, eigvecs = np.linalg.eigh(M)
    if eigvals[0] < -1e-8 * scale:
        raise ValueError(f"matrix is not psd within tolerance (min eig {eigvals[0]:.3e})")
    # Tiny eigenvalue floor keeps the support solves well posed without
    # moving the minimizer beyond the contract tolerances.
    floor = 1e-12 * scale
    Mr = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
    Mr = 0.5 * (Mr + Mr.T)

    # Warm start: min ||L' w||^2 + rho (1'w - 1)^2 s.t. w >= 0 via NNLS.
    L = (eigvecs * np.sqrt(np.maximum(eigvals, floor))) @ eigvecs.T
    rho = 1e4 * np.sqrt(scale)
    A_ls = np.vstack([L.T, rho * np.ones((1, R))])
    b_ls = np.concatenate([np.zeros(R), [rho]])
    w0, _ = nnls(A_ls, b_ls)
    support = w0 > 1e-9 * max(w0.max(), 1e-300)
    if not support.any():
        support[int(np.argmin(np.diag(Mr)))] = True

    w = None
    mu = 0.0
    for _ in range(max_iter):
        idx = np.flatnonzero(support)
        k = idx.size
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * Mr[np.ix_(idx, idx)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.zeros(k + 1)
        rhs[k] = 1.0
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        # stationarity on the support reads 2 M w = mu 1 with mu = -sol[k]
        w_s, mu = sol[:k], -sol[k]
        if w_s.min() < -1e-12:
            support[idx[int(np.argmin(w_s))]] = False
            continue
        w = np.zeros(R)
        w[idx] = np.clip(w_s, 0.0, None)
        w /= w.sum()
        grad = 2.0 * (Mr @ w)
        outside = ~support
        if outside.any():
            viol = mu - grad[outside]
            j = int(np.argmax(viol))
            if viol[j] > 1e-10 * scale:
                support[np.flatnonzero(outside)[j]] = True
                continue
        break
    else:
        raise RuntimeError("simplex QP active-set refinement did not settle")

    grad = 2.0 * (Mr @ w)
    kkt_resid = max(
        abs(w.sum() - 1.0),
        float(max(-w.min(), 0.0)),
        float(np.max(np.abs(grad[w > 1e-12] - mu), initial=0.0)) / scale,
        float(np.max(mu - grad, initial=0.0)) / scale,
    )
    if kkt_resid > tol:
        raise RuntimeError(f"simplex QP KKT residual {kkt_resid:.3e} exceeds {tol:.1e}")
    return w

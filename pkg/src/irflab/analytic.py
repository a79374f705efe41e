"""Closed-form asymptotics for a drifting near-AR(1) testbed.

A bivariate system (observed shock, outcome) whose moving-average
mis-specification shrinks at rate 1/sqrt(T) admits exact limiting bias
and variance formulas for both the direct-projection and the iterated
VAR impulse response estimators.  This module evaluates those formulas
and provides the matching simulator and small-sample estimators, so that
the Monte Carlo machinery elsewhere in the package can be validated
against exact numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class SimpleDGPParams:
    """Drifting DGP y[t] = rho y[t-1] + e1[t] + e2[t] + (alpha/sqrt(T)) e2[t-1]."""

    rho: float
    sigma2: float = 1.0
    alpha: float = 0.0
    T: int = 200

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.T < 10:
            raise ValueError(f"T too small: {self.T}")

    @property
    def sigma0y2(self) -> float:
        """Limiting variance of the outcome: (1 + sigma2^2) / (1 - rho^2)."""
        return (1.0 + self.sigma2**2) / (1.0 - self.rho**2)


@dataclass(frozen=True)
class AsymptoticMoments:
    abias: float
    avar: float

    def __post_init__(self):
        if self.avar < 0.0:
            raise ValueError(f"asymptotic variance must be >= 0, got {self.avar}")


def asy_lp(params: SimpleDGPParams, h: int) -> AsymptoticMoments:
    """Limiting bias and variance of sqrt(T) times the direct-projection error.

    The projection estimator is exactly unbiased in the limit; its variance
    is sigma0y^2 (1 - rho^(2(h+1))) - rho^(2h) and does not vanish in h.
    """
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    rho = params.rho
    avar = params.sigma0y2 * (1.0 - rho ** (2 * (h + 1))) - rho ** (2 * h)
    return AsymptoticMoments(abias=0.0, avar=avar)


def asy_var(params: SimpleDGPParams, h: int) -> AsymptoticMoments:
    """Limiting bias and variance of sqrt(T) times the iterated-VAR error.

    Only defined for h >= 1: at impact the two estimators are numerically
    identical, so callers should use :func:`asy_lp` there.
    """
    if h == 0:
        raise ValueError("use LP moments at impact: estimators coincide at h = 0")
    if h < 1:
        raise ValueError("horizon must be >= 1")
    rho, s2 = params.rho, params.sigma2**2
    s0 = params.sigma0y2
    abias = rho ** (h - 1) * (h - 1) * params.alpha * s2 / (s0 - 1.0)
    avar = rho ** (2 * (h - 1)) * (1.0 + s2) * (1.0 + (h - 1) ** 2 / (s0 - 1.0)) \
        + rho ** (2 * h) * s2
    return AsymptoticMoments(abias=abias, avar=avar)


def indifference_weight(params: SimpleDGPParams, h: int) -> float:
    """Bias weight at which the two estimators' asymptotic losses are equal.

    Solves w * abias^2 + (1 - w) * avar for equality across the two
    estimators; the direct projection is preferred for any larger weight.
    Defined for h >= 2 (the estimators are equivalent at h in {0, 1}).
    """
    if h < 2:
        raise ValueError("indifference weight is defined for h >= 2")
    lp = asy_lp(params, h)
    var = asy_var(params, h)
    dvar = lp.avar - var.avar
    dbias2 = var.abias**2 - lp.abias**2
    denom = dvar + dbias2
    if abs(denom) < 1e-300:
        raise ValueError("estimators equivalent: degenerate indifference weight")
    return float(np.clip(dvar / denom, 0.0, 1.0))


def tstat_noncentrality(params: SimpleDGPParams) -> float:
    """Limit mean of the second-lag t-statistic in an AR(2) fit of the outcome."""
    s2 = params.sigma2**2
    return -params.rho * s2 * params.alpha / (1.0 + s2)


class SimpleSeries(NamedTuple):
    eps1: np.ndarray
    y: np.ndarray


_BURN_IN = 100


def simulate_simple(params: SimpleDGPParams, rng, shock_dist: str = "gaussian") -> SimpleSeries:
    """Simulate the drifting DGP, discarding a 100-period burn-in.

    Returns the observables (shock, outcome), each of length params.T.
    ``shock_dist`` may be "gaussian" or "t8" (unit-variance rescaled t with
    8 degrees of freedom) for robustness exercises.
    """
    T = params.T
    n = T + _BURN_IN + 1
    if shock_dist == "gaussian":
        eps = rng.standard_normal((n, 2))
    elif shock_dist == "t8":
        eps = rng.standard_t(8, size=(n, 2)) / np.sqrt(8.0 / 6.0)
    else:
        raise ValueError(f"unknown shock distribution: {shock_dist!r}")
    eps[:, 1] *= params.sigma2
    drift = params.alpha / np.sqrt(T)
    u = eps[1:, 0] + eps[1:, 1] + drift * eps[:-1, 1]
    y = lfilter([1.0], [1.0, -params.rho], u)
    return SimpleSeries(eps1=eps[1 + _BURN_IN:, 0].copy(), y=y[_BURN_IN:].copy())


class SimpleEstimates(NamedTuple):
    beta_hat: np.ndarray   # direct projection, h = 0..h_bar
    delta_hat: np.ndarray  # iterated VAR(1), h = 0..h_bar


def simple_estimators(series: SimpleSeries, h_bar: int) -> SimpleEstimates:
    """Both impulse response estimators of the bivariate testbed.

    The direct projection regresses y[t+h] on the current shock and one
    lag of both observables; the VAR estimator fits a first-order system
    and iterates, normalizing the impact response of the shock variable
    to one.  Neither regression includes an intercept: the DGP is mean
    zero and the two estimators then agree exactly at h = 0.
    """
    eps1, y = np.asarray(series.eps1, float), np.asarray(series.y, float)
    T = y.size
    if T <= h_bar + 3:
        raise ValueError(f"series too short (T={T}) for h_bar={h_bar}")
    w = np.column_stack([eps1, y])

    # VAR(1) without intercept on w[t] = A w[t-1] + u[t].
    W1, W0 = w[1:], w[:-1]
    G = W0.T @ W0
    if np.linalg.cond(G) > 1e12:
        raise ValueError("singular second-moment matrix in VAR step")
    A = np.linalg.solve(G, W0.T @ W1).T
    U = W1 - W0 @ A.T
    Sigma = U.T @ U / W1.shape[0]
    kappa = Sigma[1, 0] / Sigma[0, 0]
    gamma = np.array([1.0, kappa])
    delta = np.empty(h_bar + 1)
    vec = gamma
    delta[0] = vec[1]
    for h in range(1, h_bar + 1):
        vec = A @ vec
        delta[h] = vec[1]

    beta = np.empty(h_bar + 1)
    for h in range(h_bar + 1):
        # regress y[t+h] on (eps1[t], w[t-1]) over t = 1..T-1-h
        X = np.column_stack([eps1[1:T - h], w[:T - 1 - h]])
        yy = y[1 + h:]
        coef = np.linalg.solve(X.T @ X, X.T @ yy)
        beta[h] = coef[0]
    return SimpleEstimates(beta_hat=beta, delta_hat=delta)


def ar2_second_lag_tstat(y) -> float:
    """t-statistic on the second lag in an AR(2) regression without intercept.

    The testbed outcome is mean zero, so the conventional regression for
    it carries no constant term.
    """
    y = np.asarray(y, dtype=float)
    X = np.column_stack([y[1:-1], y[:-2]])
    yy = y[2:]
    G = X.T @ X
    coef = np.linalg.solve(G, X.T @ yy)
    resid = yy - X @ coef
    dof = yy.size - 2
    s2 = resid @ resid / dof
    se = np.sqrt(s2 * np.linalg.inv(G)[1, 1])
    return float(coef[1] / se)

"""Dynamic factor model DGPs: loading, drawing, simulating, and estimands.

The encompassing model is a stationary factor VAR driving a panel of
observables, each contaminated by an autoregressive idiosyncratic error.
Individual DGPs are five-variable subsets drawn under a protocol that
always includes a designated policy variable, one output-type series and
one price-type series.  For every DGP the module computes the exact
population impulse responses under three identification schemes, the
degree to which the shock can be recovered from the observables, and the
population summary statistics used to characterize the draw.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.signal

from .numerics import (
    _psd_solve,
    cholesky_lower,
    solve_discrete_lyapunov,
    spectral_radius,
    steady_state_kalman,
)

SCHEMES = ("observed_shock", "iv", "recursive")
POLICIES = ("monetary", "fiscal")

# Variable-category convention used by the draw protocol: categories 1-3
# count as output-type series, category 6 as price-type series.
OUTPUT_CATEGORIES = frozenset({1, 2, 3})
PRICE_CATEGORIES = frozenset({6})

N_VARS = 5          # observables per DGP
DEFAULT_BURN_IN = 100
DEFAULT_IV_RHO = 0.1
DEFAULT_IV_R2 = {"monetary": 0.3, "fiscal": 0.2}
VAR_TRUNCATION = 50  # lag cutoff for the infinite-order VAR representation


class SchemaError(ValueError):
    """Parameter file violates the schema or a model invariant."""


@dataclass(frozen=True)
class VariableInfo:
    name: str
    category: int
    policy: str = "none"


@dataclass(frozen=True)
class DFMParameters:
    """Encompassing factor model, immutable and shareable across workers."""

    n_f: int
    n_X: int
    p_f: int
    q_v: int
    Phi: np.ndarray        # (p_f, n_f, n_f) factor lag matrices
    Sigma_eta: np.ndarray  # (n_f, n_f) factor innovation covariance
    Lambda: np.ndarray     # (n_X, n_f) loadings
    Delta: np.ndarray      # (n_X, q_v) idiosyncratic AR coefficients
    Xi: np.ndarray         # (n_X,) idiosyncratic innovation std devs
    variables: tuple

    def factor_companion(self) -> np.ndarray:
        n, p = self.n_f, self.p_f
        comp = np.zeros((n * p, n * p))
        for lag in range(p):
            comp[:n, lag * n:(lag + 1) * n] = self.Phi[lag]
        if p > 1:
            comp[n:, :-n] = np.eye(n * (p - 1))
        return comp

    def policy_index(self, policy: str) -> int:
        hits = [i for i, v in enumerate(self.variables) if v.policy == policy]
        if len(hits) != 1:
            raise ValueError(f"expected exactly one {policy} policy variable, found {len(hits)}")
        return hits[0]

    def category_indices(self, categories) -> list:
        return [i for i, v in enumerate(self.variables) if v.category in categories]


def _require(tree: dict, key: str):
    if key not in tree:
        raise SchemaError(f"parameter file is missing required field {key!r}")
    return tree[key]


def _idio_stationary(delta_row) -> bool:
    # AR(q) is stationary iff the companion matrix is stable.
    q = len(delta_row)
    if q == 0:
        return True
    comp = np.zeros((q, q))
    comp[0, :] = delta_row
    if q > 1:
        comp[1:, :-1] = np.eye(q - 1)
    return spectral_radius(comp) < 1.0


def load_dfm_params(path) -> DFMParameters:
    """Load and validate a factor-model parameter file (JSON key-value tree)."""
    with open(path, encoding="utf-8") as fh:
        tree = json.load(fh)
    schema = _require(tree, "schema")
    if schema != 1:
        raise SchemaError(f"unsupported schema version {schema!r}, expected 1")

    n_f = int(_require(tree, "n_f"))
    n_X = int(_require(tree, "n_X"))
    p_f = int(_require(tree, "p_f"))
    q_v = int(_require(tree, "q_v"))

    def arr(key, shape):
        a = np.asarray(_require(tree, key), dtype=float)
        if a.shape != shape:
            raise SchemaError(f"field {key!r} has shape {a.shape}, expected {shape}")
        if not np.all(np.isfinite(a)):
            raise SchemaError(f"field {key!r} contains non-finite values")
        return a

    Phi = arr("Phi", (p_f, n_f, n_f))
    Sigma_eta = arr("Sigma_eta", (n_f, n_f))
    Lambda = arr("Lambda", (n_X, n_f))
    Delta = arr("Delta", (n_X, q_v))
    Xi = arr("Xi", (n_X,))

    raw_vars = _require(tree, "variables")
    if len(raw_vars) != n_X:
        raise SchemaError(f"field 'variables' has {len(raw_vars)} entries, expected {n_X}")
    variables = []
    for i, v in enumerate(raw_vars):
        name = v.get("name", f"x{i}")
        category = int(v.get("category", 0))
        policy = v.get("policy", "none")
        if policy not in ("none",) + POLICIES:
            raise SchemaError(f"variables[{i}].policy has invalid value {policy!r}")
        variables.append(VariableInfo(name=name, category=category, policy=policy))

    params = DFMParameters(
        n_f=n_f, n_X=n_X, p_f=p_f, q_v=q_v,
        Phi=Phi, Sigma_eta=0.5 * (Sigma_eta + Sigma_eta.T),
        Lambda=Lambda, Delta=Delta, Xi=Xi,
        variables=tuple(variables),
    )

    rho = spectral_radius(params.factor_companion())
    if rho >= 1.0:
        raise SchemaError(f"factor process is non-stationary: spectral radius {rho:.4f}")
    try:
        cholesky_lower(params.Sigma_eta)
    except ValueError as exc:
        raise SchemaError(f"Sigma_eta is not positive definite: {exc}") from None
    if np.any(Xi < 0):
        raise SchemaError("Xi must be elementwise nonnegative")
    for i in range(n_X):
        if not _idio_stationary(Delta[i]):
            raise SchemaError(f"idiosyncratic AR for variable {i} is non-stationary")
    return params


@dataclass(frozen=True)
class IVParams:
    rho_z: float
    sigma_nu2: float


@dataclass(frozen=True)
class DGPSpec:
    """One drawn specification: which variables, which roles, which scheme.

    ``variable_indices`` lists the five panel indices in dataset column
    order (already arranged for the identification scheme); the role
    indices are positions 0..4 within that tuple.
    """

    variable_indices: tuple
    response_index: int
    normalization_index: int
    innovation_index: int
    scheme: str
    policy: str
    shock_col: np.ndarray
    iv_params: Optional[IVParams] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if len(set(self.variable_indices)) != len(self.variable_indices):
            raise ValueError("variable indices must be distinct")
        if self.response_index == self.normalization_index:
            raise ValueError("response and normalization variables must differ")


def calibrate_iv_noise(R2: float) -> float:
    """Noise variance that gives the proxy a target first-stage R-squared.

    With a unit-variance shock, sigma_nu^2 = 1/R^2 - 1.
    """
    if not 0.0 < R2 <= 1.0:
        raise ValueError(f"R2 must lie in (0, 1], got {R2}")
    return 1.0 / R2 - 1.0


def build_shock_column(params: DFMParameters, norm_loading_row) -> np.ndarray:
    """Unit-variance shock direction with maximal impact on one variable.

    Given the loading row lam of the normalization variable, returns
    h = Sigma_eta lam' / sqrt(lam Sigma_eta lam'), the first column of an
    impact matrix H with HH' = Sigma_eta whose first shock moves that
    variable as much as possible on impact.
    """
    lam = np.asarray(norm_loading_row, dtype=float).ravel()
    if lam.size != params.n_f:
        raise ValueError(f"loading row has length {lam.size}, expected {params.n_f}")
    impact_var = float(lam @ params.Sigma_eta @ lam)
    if impact_var <= 1e-12:
        raise ValueError("normalization variable unloaded: impact variance below 1e-12")
    return params.Sigma_eta @ lam / np.sqrt(impact_var)


def complete_impact_matrix(params: DFMParameters, shock_col) -> np.ndarray:
    """Square impact matrix H with H H' = Sigma_eta and given first column.

    Decomposes H = B R with B the Cholesky factor of Sigma_eta and R
    orthogonal; the remaining columns of R come from the Householder
    reflection that maps the first unit vector to R's first column.
    """
    h1 = np.asarray(shock_col, dtype=float).ravel()
    B = cholesky_lower(params.Sigma_eta)
    Sigma_inv_h1 = np.linalg.solve(params.Sigma_eta, h1)
    norm = float(h1 @ Sigma_inv_h1)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"shock column is not unit variance: h' Sigma^-1 h = {norm:.6f}")
    r1 = np.linalg.solve(B, h1)
    r1 /= np.linalg.norm(r1)
    e1 = np.zeros_like(r1)
    e1[0] = 1.0
    v = e1 - r1
    if np.linalg.norm(v) < 1e-14:
        R = np.eye(params.n_f)
    else:
        v /= np.linalg.norm(v)
        R = np.eye(params.n_f) - 2.0 * np.outer(v, v)
    H = B @ R
    H[:, 0] = h1  # exact, up to the reflection's rounding
    return H


def draw_dgp_spec(params: DFMParameters, policy: str, scheme: str, rng,
                  iv_r2: Optional[float] = None,
                  max_attempts: int = 100) -> DGPSpec:
    """Draw one specification under the selection protocol.

    The policy variable is always included and serves as normalization
    variable; one output-type and one price-type series are always drawn;
    the remaining two variables are uniform over everything else.  The
    response variable is uniform over the four non-policy slots.  For the
    recursive scheme the policy variable is ordered last (monetary) or
    first (fiscal).  Draws whose shock impact on the normalization
    variable falls below 1e-6 are redrawn.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    pol_ix = params.policy_index(policy)
    outputs = [i for i in params.category_indices(OUTPUT_CATEGORIES) if i != pol_ix]
    prices = [i for i in params.category_indices(PRICE_CATEGORIES) if i != pol_ix]
    if not outputs:
        raise ValueError("no output-category variables available")
    if not prices:
        raise ValueError("no price-category variables available")

    for _ in range(max_attempts):
        out_ix = int(rng.choice(outputs))
        price_ix = int(rng.choice(prices))
        pool = [i for i in range(params.n_X) if i not in (pol_ix, out_ix, price_ix)]
        rest = [int(i) for i in rng.choice(pool, size=2, replace=False)]
        others = [out_ix, price_ix] + rest

        if scheme == "recursive":
            ordered = others + [pol_ix] if policy == "monetary" else [pol_ix] + others
        else:
            ordered = [pol_ix] + others
        norm_pos = ordered.index(pol_ix)
        resp_pos = int(rng.choice([p for p in range(N_VARS) if p != norm_pos]))

        lam_row = params.Lambda[pol_ix]
        impact_var = float(lam_row @ params.Sigma_eta @ lam_row)
        if impact_var <= 1e-12 or np.sqrt(impact_var) < 1e-6:
            continue  # degenerate normalization impact: redraw
        shock_col = build_shock_column(params, lam_row)

        iv_params = None
        if scheme == "iv":
            r2 = DEFAULT_IV_R2[policy] if iv_r2 is None else iv_r2
            iv_params = IVParams(rho_z=DEFAULT_IV_RHO, sigma_nu2=calibrate_iv_noise(r2))

        return DGPSpec(
            variable_indices=tuple(ordered),
            response_index=resp_pos,
            normalization_index=norm_pos,
            innovation_index=norm_pos,
            scheme=scheme,
            policy=policy,
            shock_col=shock_col,
            iv_params=iv_params,
        )
    raise RuntimeError(f"no valid specification found in {max_attempts} attempts")


@dataclass(frozen=True)
class ColumnRoles:
    """Positions of the impulse, response, and normalization columns in a dataset."""

    impulse: int
    response: int
    norm: int
    n_cols: int

    @property
    def contemporaneous(self) -> tuple:
        """Columns ordered before the impulse variable (recursive controls)."""
        return tuple(range(self.impulse))


@dataclass(frozen=True)
class Dataset:
    """Simulated observations with scheme tag, labels, and column roles."""

    observations: np.ndarray
    scheme: str
    labels: tuple
    roles: ColumnRoles

    @property
    def T(self) -> int:
        return self.observations.shape[0]


def dataset_roles(spec: DGPSpec) -> ColumnRoles:
    if spec.scheme == "recursive":
        return ColumnRoles(
            impulse=spec.innovation_index,
            response=spec.response_index,
            norm=spec.normalization_index,
            n_cols=N_VARS,
        )
    # Shock or proxy prepended as column 0.  Under an observed shock the
    # estimates are normalized by the shock's own unit impact, so the
    # normalization column is the shock itself; under IV it is the policy
    # variable.
    norm = 0 if spec.scheme == "observed_shock" else 1 + spec.normalization_index
    return ColumnRoles(
        impulse=0,
        response=1 + spec.response_index,
        norm=norm,
        n_cols=N_VARS + 1,
    )


def _selected_loadings(params: DFMParameters, spec: DGPSpec) -> np.ndarray:
    return params.Lambda[list(spec.variable_indices)]


def simulate_data(params: DFMParameters, spec: DGPSpec, T: int, burn_in: int, rng) -> Dataset:
    """Simulate one dataset of length T for the given specification.

    Factors, idiosyncratic errors, and (for the proxy scheme) the
    measurement noise are drawn jointly normal; the first ``burn_in``
    periods are discarded.  The observed shock or the proxy is prepended
    as the first column where the scheme calls for it.
    """
    if T < 50:
        raise ValueError(f"T must be at least 50, got {T}")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    n_f, p_f, q_v = params.n_f, params.p_f, params.q_v
    n_total = T + burn_in
    H = complete_impact_matrix(params, spec.shock_col)

    eps = rng.standard_normal((n_total, n_f))
    xi = rng.standard_normal((n_total, N_VARS))

    innov = eps @ H.T
    f = np.zeros((n_total, n_f))
    for t in range(n_total):
        acc = innov[t]
        for lag in range(1, min(p_f, t) + 1):
            acc = acc + params.Phi[lag - 1] @ f[t - lag]
        f[t] = acc

    sel = list(spec.variable_indices)
    delta = params.Delta[sel]
    xi_sd = params.Xi[sel]
    v = np.empty((n_total, N_VARS))
    for i in range(N_VARS):
        ar = np.concatenate([[1.0], -delta[i]])
        v[:, i] = scipy.signal.lfilter([xi_sd[i]], ar, xi[:, i])

    w_bar = f @ _selected_loadings(params, spec).T + v
    names = tuple(params.variables[i].name for i in sel)

    if spec.scheme == "observed_shock":
        obs = np.column_stack([eps[:, 0], w_bar])
        labels = ("shock",) + names
    elif spec.scheme == "iv":
        nu = rng.standard_normal(n_total) * np.sqrt(spec.iv_params.sigma_nu2)
        z = scipy.signal.lfilter([1.0], [1.0, -spec.iv_params.rho_z], eps[:, 0] + nu)
        obs = np.column_stack([z, w_bar])
        labels = ("iv",) + names
    else:
        obs = w_bar
        labels = names

    return Dataset(
        observations=obs[burn_in:].copy(),
        scheme=spec.scheme,
        labels=labels,
        roles=dataset_roles(spec),
    )


# ---------------------------------------------------------------------------
# Population objects: state space, infinite-order VAR, estimands
# ---------------------------------------------------------------------------

def _state_space(params: DFMParameters, spec: DGPSpec):
    """State-space form of the quasi-differenced selected observables.

    State stacks current and q lagged factor vectors; the disturbance
    vector holds next period's structural shocks and the current
    idiosyncratic innovations, so the state and measurement equations
    share one noise vector.
    """
    n_f, p_f, q_v = params.n_f, params.p_f, params.q_v
    n_blocks = max(q_v + 1, p_f)
    dim = n_f * n_blocks
    Lam = _selected_loadings(params, spec)
    delta = params.Delta[list(spec.variable_indices)]
    xi_sd = params.Xi[list(spec.variable_indices)]
    H = complete_impact_matrix(params, spec.shock_col)

    A = np.zeros((dim, dim))
    for lag in range(p_f):
        A[:n_f, lag * n_f:(lag + 1) * n_f] = params.Phi[lag]
    if n_blocks > 1:
        A[n_f:, :-n_f] = np.eye(n_f * (n_blocks - 1))

    n_noise = n_f + N_VARS
    B = np.zeros((dim, n_noise))
    B[:n_f, :n_f] = H

    C = np.zeros((N_VARS, dim))
    C[:, :n_f] = Lam
    for lag in range(1, q_v + 1):
        C[:, lag * n_f:(lag + 1) * n_f] -= delta[:, lag - 1:lag] * Lam

    D = np.zeros((N_VARS, n_noise))
    D[:, n_f:] = np.diag(xi_sd)
    return A, B, C, D


def var_infinity(params: DFMParameters, spec: DGPSpec, L_max: int = VAR_TRUNCATION):
    """Lag matrices and innovation covariance of the observables' VAR form.

    The selected observables follow an infinite-order VAR; this composes
    the steady-state-filter representation of the quasi-differenced
    system with the idiosyncratic quasi-differencing polynomial and
    truncates at ``L_max`` lags.  Returns (lag_matrices, Sigma_u) with
    lag_matrices of shape (L_max, 5, 5).
    """
    A, B, C, D = _state_space(params, spec)
    kal = steady_state_kalman(A, B, C, D)
    K, F = kal.gain, A - kal.gain @ C

    # VAR coefficients of the quasi-differenced system: C F^(l-1) K.
    star = np.empty((L_max, N_VARS, N_VARS))
    Fp = np.eye(F.shape[0])
    for ell in range(L_max):
        star[ell] = C @ Fp @ K
        Fp = F @ Fp

    delta = params.Delta[list(spec.variable_indices)]
    q_v = params.q_v
    lags = np.zeros((L_max, N_VARS, N_VARS))
    for ell in range(1, L_max + 1):
        acc = star[ell - 1].copy()
        if ell <= q_v:
            acc += np.diag(delta[:, ell - 1])
        for m in range(1, min(q_v, ell - 1) + 1):
            acc -= star[ell - m - 1] * delta[:, m - 1][None, :]
        lags[ell - 1] = acc
    Sigma_u = 0.5 * (kal.innovation_cov + kal.innovation_cov.T)
    return lags, Sigma_u


@dataclass(frozen=True)
class IRFTrue:
    values: np.ndarray
    scheme: str
    normalized: bool


def _factor_shock_responses(params: DFMParameters, shock_col, h_bar: int) -> np.ndarray:
    """Factor responses to a one-unit first structural shock, h = 0..h_bar."""
    n_f, p_f = params.n_f, params.p_f
    psi = np.zeros((h_bar + 1, n_f))
    psi[0] = shock_col
    for h in range(1, h_bar + 1):
        acc = np.zeros(n_f)
        for lag in range(1, min(p_f, h) + 1):
            acc += params.Phi[lag - 1] @ psi[h - lag]
        psi[h] = acc
    return psi


def true_irf(params: DFMParameters, spec: DGPSpec, h_bar: int) -> IRFTrue:
    """Exact population impulse responses targeted by the estimators.

    Observed shock: response of the outcome to a one-unit (one standard
    deviation) first structural shock.  IV: the same response divided by
    the impact on the normalization variable (unit-effect scaling).
    Recursive: response to the orthogonalized one-step forecast error of
    the normalization variable, again unit-effect scaled.
    """
    Lam = _selected_loadings(params, spec)
    if spec.scheme in ("observed_shock", "iv"):
        psi = _factor_shock_responses(params, spec.shock_col, h_bar)
        values = psi @ Lam[spec.response_index]
        if spec.scheme == "observed_shock":
            return IRFTrue(values=values, scheme=spec.scheme, normalized=False)
        impact = float(Lam[spec.normalization_index] @ spec.shock_col)
        if abs(impact) <= 1e-10:
            raise ValueError("near-zero normalization impact")
        return IRFTrue(values=values / impact, scheme=spec.scheme, normalized=True)

    lags, Sigma_u = var_infinity(params, spec)
    Bw = cholesky_lower(Sigma_u)
    L_max = lags.shape[0]
    k = spec.innovation_index
    # Wold coefficients from the truncated VAR polynomial inverse.
    Psi = np.zeros((h_bar + 1, N_VARS, N_VARS))
    Psi[0] = np.eye(N_VARS)
    for h in range(1, h_bar + 1):
        acc = np.zeros((N_VARS, N_VARS))
        for ell in range(1, min(h, L_max) + 1):
            acc += lags[ell - 1] @ Psi[h - ell]
        Psi[h] = acc
    impact = Bw[spec.normalization_index, k]
    if abs(impact) <= 1e-10:
        raise ValueError("near-zero normalization impact")
    values = np.array([(Psi[h] @ Bw)[spec.response_index, k] for h in range(h_bar + 1)])
    return IRFTrue(values=values / impact, scheme=spec.scheme, normalized=True)


def invertibility(params: DFMParameters, spec: DGPSpec) -> float:
    """Population R-squared of recovering the shock from current and past data.

    Runs the steady-state filter on the state space augmented with the
    current structural shock vector and reads off the filtered variance
    of the first shock.
    """
    A, B, C, D = _state_space(params, spec)
    dim = A.shape[0]
    n_f = params.n_f
    n_noise = B.shape[1]
    # Augmented state [s_t, eps_t]: the shock block is pure noise carried
    # one period so it can be conditioned on current observations.
    A_aug = np.zeros((dim + n_f, dim + n_f))
    A_aug[:dim, :dim] = A
    B_aug = np.zeros((dim + n_f, n_noise))
    B_aug[:dim] = B
    B_aug[dim:, :n_f] = np.eye(n_f)
    C_aug = np.zeros((N_VARS, dim + n_f))
    C_aug[:, :dim] = C

    kal = steady_state_kalman(A_aug, B_aug, C_aug, D)
    Sigma = kal.state_cov
    S = kal.innovation_cov
    G = Sigma @ C_aug.T
    filtered = Sigma - G @ _psd_solve(S, G.T)
    var_eps1 = float(filtered[dim, dim])
    return float(np.clip(1.0 - var_eps1, 0.0, 1.0))


def _observable_variance(params: DFMParameters, spec: DGPSpec) -> np.ndarray:
    """Exact Var of the selected observables from two Lyapunov equations."""
    Lam = _selected_loadings(params, spec)
    comp = params.factor_companion()
    n_f, p_f = params.n_f, params.p_f
    Q = np.zeros_like(comp)
    Q[:n_f, :n_f] = params.Sigma_eta
    Gamma_f = solve_discrete_lyapunov(comp, Q)[:n_f, :n_f]
    var = Lam @ Gamma_f @ Lam.T

    delta = params.Delta[list(spec.variable_indices)]
    xi_sd = params.Xi[list(spec.variable_indices)]
    q_v = params.q_v
    for i in range(N_VARS):
        if xi_sd[i] == 0.0:
            continue
        if q_v == 0:
            var[i, i] += xi_sd[i] ** 2
            continue
        comp_i = np.zeros((q_v, q_v))
        comp_i[0, :] = delta[i]
        if q_v > 1:
            comp_i[1:, :-1] = np.eye(q_v - 1)
        Qi = np.zeros((q_v, q_v))
        Qi[0, 0] = xi_sd[i] ** 2
        var[i, i] += solve_discrete_lyapunov(comp_i, Qi)[0, 0]
    return var


def _long_run_variance(params: DFMParameters, spec: DGPSpec) -> np.ndarray:
    """Spectral density at frequency zero (times 2 pi) of the observables."""
    Lam = _selected_loadings(params, spec)
    n_f = params.n_f
    A1 = np.eye(n_f) - sum(params.Phi[lag] for lag in range(params.p_f))
    lrv_f = np.linalg.solve(A1, np.linalg.solve(A1, params.Sigma_eta).T).T
    lrv = Lam @ lrv_f @ Lam.T
    delta = params.Delta[list(spec.variable_indices)]
    xi_sd = params.Xi[list(spec.variable_indices)]
    for i in range(N_VARS):
        denom = 1.0 - float(np.sum(delta[i]))
        lrv[i, i] += (xi_sd[i] / denom) ** 2
    return lrv


def _persistence_radius(params: DFMParameters, spec: DGPSpec) -> float:
    """Slowest-decaying autocovariance mode of the selected observables."""
    rho = spectral_radius(params.factor_companion())
    q_v = params.q_v
    delta = params.Delta[list(spec.variable_indices)]
    xi_sd = params.Xi[list(spec.variable_indices)]
    for i in range(N_VARS):
        if xi_sd[i] == 0.0 or q_v == 0:
            continue
        comp_i = np.zeros((q_v, q_v))
        comp_i[0, :] = delta[i]
        if q_v > 1:
            comp_i[1:, :-1] = np.eye(q_v - 1)
        rho = max(rho, spectral_radius(comp_i))
    return rho


def quadratic_r2(values) -> float:
    """R-squared of a regression of a sequence on a quadratic in its index."""
    y = np.asarray(values, dtype=float)
    h = np.arange(y.size, dtype=float)
    X = np.column_stack([np.ones_like(h), h, h**2])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss <= 1e-300:
        return 1.0
    return float(np.clip(1.0 - float(resid @ resid) / tss, 0.0, 1.0))


def irf_shape_stats(values) -> dict:
    theta = np.asarray(values, dtype=float)
    d = np.diff(theta)
    extrema = int(np.sum(d[1:] * d[:-1] < 0))
    max_abs = float(np.max(np.abs(theta)))
    return {
        "n_local_extrema": extrema,
        "horizon_max_abs": int(np.argmax(np.abs(theta))),
        "avg_to_max_abs": float(theta.mean() / max_abs) if max_abs > 0 else 0.0,
        "quadratic_r2": quadratic_r2(theta),
    }


def summary_stats(params: DFMParameters, spec: DGPSpec, h_bar: int = 19,
                  L: int = VAR_TRUNCATION, T_ref: int = 200) -> dict:
    """Population summary record for one drawn DGP.

    Long-run-to-contemporaneous variance trace ratio, largest persistence
    eigenvalue, the share of VAR coefficient mass at lags >= 5, the
    degree of shock recoverability, the proxy first-stage F statistic
    (IV scheme), and four shape statistics of the true impulse responses.
    """
    var_w = _observable_variance(params, spec)
    lrv_w = _long_run_variance(params, spec)
    lags, _ = var_infinity(params, spec, L_max=L)
    norms = np.array([np.linalg.norm(lags[ell], "fro") for ell in range(L)])
    total = float(norms.sum())
    tail = float(norms[4:].sum())

    record = {
        "lrv_trace_ratio": float(np.trace(lrv_w) / np.trace(var_w)),
        "max_eigenvalue": _persistence_radius(params, spec),
        "lag_tail_fraction": tail / total if total > 0 else 0.0,
        "invertibility": invertibility(params, spec),
    }

    if spec.scheme == "iv":
        Lam = _selected_loadings(params, spec)
        impact = float(Lam[spec.normalization_index] @ spec.shock_col)
        var_i = float(var_w[spec.normalization_index, spec.normalization_index])
        var_innov = 1.0 + spec.iv_params.sigma_nu2
        r2 = impact**2 / (var_i * var_innov)
        record["iv_first_stage_F"] = T_ref * r2 / (1.0 - r2)

    record.update(irf_shape_stats(true_irf(params, spec, h_bar).values))
    return record

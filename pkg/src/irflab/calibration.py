"""Synthetic calibration of the encompassing factor model.

The original large-panel calibration pipeline needs a proprietary data
set, so the package bundles a synthetic parameter file with the same
dimensions (six factors, two factor lags, two idiosyncratic lags) over a
40-variable labeled panel.  ``generate_synthetic_params`` reproduces that
file deterministically from its seed; run this module to regenerate
``data/dfm_params_synthetic.json``.

Design targets, checked by the test suite: moderate factor persistence
(companion spectral radius 0.92), substantial VAR coefficient mass
beyond lag four (so a short VAR is genuinely mis-specified), and enough
idiosyncratic noise that a five-variable subset recovers the structural
shock only partially.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

SYNTHETIC_SEED = 20240214
_RESOURCE = "dfm_params_synthetic.json"

# panel layout: 10 output-type series (categories 1-3), 6 price-type
# series (category 6), the two policy series, and a mix of others.
_CATEGORY_PLAN = (
    [1] * 4 + [2] * 3 + [3] * 3      # output block
    + [6] * 6                        # price block
    + [12, 10]                       # policy: short rate, gov spending
    + [4] * 4 + [5] * 4 + [7] * 3 + [8] * 3 + [9] * 3 + [11] * 2 + [13, 14, 13]
)
_CATEGORY_STEM = {
    1: "gdp", 2: "ip", 3: "emp", 4: "cons", 5: "inv", 6: "price", 7: "wage",
    8: "housing", 9: "trade", 10: "gov_spend", 11: "money", 12: "policy_rate",
    13: "credit", 14: "sentiment",
}


def _scale_to_radius(Phi, target):
    """Rescale lag matrices so the companion spectral radius hits target."""
    p, n, _ = Phi.shape

    def radius(scale):
        comp = np.zeros((n * p, n * p))
        for lag in range(p):
            comp[:n, lag * n:(lag + 1) * n] = scale ** (lag + 1) * Phi[lag]
        if p > 1:
            comp[n:, :-n] = np.eye(n * (p - 1))
        return np.max(np.abs(np.linalg.eigvals(comp)))

    # Companion eigenvalues scale linearly in this parametrization.
    base = radius(1.0)
    s = target / base
    out = Phi.copy()
    for lag in range(p):
        out[lag] *= s ** (lag + 1)
    return out


def generate_synthetic_params(seed: int = SYNTHETIC_SEED) -> dict:
    """Build the parameter tree for the bundled synthetic calibration."""
    rng = np.random.default_rng(seed)
    n_f, p_f, q_v = 6, 2, 2
    n_X = len(_CATEGORY_PLAN)

    Phi = np.empty((p_f, n_f, n_f))
    Phi[0] = 0.35 * np.eye(n_f) + 0.22 * rng.standard_normal((n_f, n_f)) / np.sqrt(n_f)
    Phi[1] = 0.10 * np.eye(n_f) + 0.16 * rng.standard_normal((n_f, n_f)) / np.sqrt(n_f)
    Phi = _scale_to_radius(Phi, target=0.92)

    L_eta = 0.30 * np.tril(rng.standard_normal((n_f, n_f)), k=-1) \
        + np.diag(rng.uniform(0.6, 1.2, size=n_f))
    Sigma_eta = L_eta @ L_eta.T

    Lambda = rng.standard_normal((n_X, n_f))
    # Mildly tilted factor weights: all six factors matter, so a small
    # subset of series recovers any one shock only partially.
    Lambda *= np.array([1.0, 0.95, 0.85, 0.75, 0.65, 0.6])

    names, categories, policies = [], [], []
    counters: dict = {}
    for cat in _CATEGORY_PLAN:
        stem = _CATEGORY_STEM[cat]
        counters[stem] = counters.get(stem, 0) + 1
        names.append(f"{stem}_{counters[stem]:02d}")
        categories.append(cat)
        policies.append("monetary" if cat == 12 else "fiscal" if cat == 10 else "none")

    # Idiosyncratic persistence: mild.  Large idiosyncratic AR
    # coefficients concentrate VAR coefficient mass at the first lags;
    # keeping them small leaves the slowly-learned factor dynamics as the
    # dominant source of high-lag coefficients.
    d1 = np.empty(n_X)
    d2 = np.empty(n_X)
    for i in range(n_X):
        while True:
            a1 = rng.uniform(0.0, 0.3)
            a2 = rng.uniform(-0.1, 0.15)
            comp = np.array([[a1, a2], [1.0, 0.0]])
            if np.max(np.abs(np.linalg.eigvals(comp))) < 0.85:
                d1[i], d2[i] = a1, a2
                break
    Delta = np.column_stack([d1, d2])

    # Common-component variance shares: bimodal, so every five-variable
    # subset mixes clean factor trackers with noise-dominated series.
    share = np.where(
        rng.random(n_X) < 0.5,
        rng.uniform(0.05, 0.3, size=n_X),
        rng.uniform(0.5, 0.9, size=n_X),
    )
    comp = np.zeros((2 * n_f, 2 * n_f))
    comp[:n_f, :n_f] = Phi[0]
    comp[:n_f, n_f:] = Phi[1]
    comp[n_f:, :n_f] = np.eye(n_f)
    Q = np.zeros_like(comp)
    Q[:n_f, :n_f] = Sigma_eta
    from .numerics import solve_discrete_lyapunov

    Gamma_f = solve_discrete_lyapunov(comp, Q)[:n_f, :n_f]
    Xi = np.empty(n_X)
    for i in range(n_X):
        if policies[i] != "none":
            share[i] = 0.5
        common = float(Lambda[i] @ Gamma_f @ Lambda[i])
        Lambda[i] *= np.sqrt(share[i] / common)
        # Var of an AR(2) with unit innovation variance.
        a1, a2 = Delta[i]
        var_ar = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2) ** 2 - a1**2))
        Xi[i] = np.sqrt((1.0 - share[i]) / var_ar)

    return {
        "schema": 1,
        "seed": seed,
        "n_f": n_f,
        "n_X": n_X,
        "p_f": p_f,
        "q_v": q_v,
        "Phi": Phi.tolist(),
        "Sigma_eta": Sigma_eta.tolist(),
        "Lambda": Lambda.tolist(),
        "Delta": Delta.tolist(),
        "Xi": Xi.tolist(),
        "variables": [
            {"name": n, "category": c, "policy": p}
            for n, c, p in zip(names, categories, policies)
        ],
    }


def synthetic_params_path() -> str:
    """Filesystem path of the bundled synthetic calibration."""
    return str(resources.files("irflab").joinpath("data", _RESOURCE))


def write_synthetic_params(path=None, seed: int = SYNTHETIC_SEED) -> str:
    path = synthetic_params_path() if path is None else str(path)
    tree = generate_synthetic_params(seed)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree, fh, indent=1)
        fh.write("\n")
    return path


if __name__ == "__main__":
    print(write_synthetic_params())

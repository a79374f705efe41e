import numpy as np
import pytest

from irflab import dgp
from irflab.calibration import synthetic_params_path


@pytest.fixture(scope="session")
def params():
    return dgp.load_dfm_params(synthetic_params_path())


@pytest.fixture(scope="session")
def obs_spec(params):
    rng = np.random.default_rng(11)
    return dgp.draw_dgp_spec(params, "monetary", "observed_shock", rng)


@pytest.fixture(scope="session")
def iv_spec(params):
    rng = np.random.default_rng(12)
    return dgp.draw_dgp_spec(params, "fiscal", "iv", rng)


@pytest.fixture(scope="session")
def rec_spec(params):
    rng = np.random.default_rng(13)
    return dgp.draw_dgp_spec(params, "fiscal", "recursive", rng)


@pytest.fixture(scope="session")
def obs_data(params, obs_spec):
    rng = np.random.default_rng(21)
    return dgp.simulate_data(params, obs_spec, T=200, burn_in=100, rng=rng)


@pytest.fixture(scope="session")
def iv_data(params, iv_spec):
    rng = np.random.default_rng(22)
    return dgp.simulate_data(params, iv_spec, T=200, burn_in=100, rng=rng)


@pytest.fixture(scope="session")
def rec_data(params, rec_spec):
    rng = np.random.default_rng(23)
    return dgp.simulate_data(params, rec_spec, T=200, burn_in=100, rng=rng)


def make_exact_var_params(n_f=5, seed=5, rho_scale=0.8, q_v=2):
    """Square nonsingular loadings with zero idiosyncratic noise.

    The five observables then follow an exact finite-order VAR and every
    structural shock is recoverable from them.
    """
    rng = np.random.default_rng(seed)
    Phi = np.empty((2, n_f, n_f))
    Phi[0] = 0.3 * np.eye(n_f) + 0.1 * rng.standard_normal((n_f, n_f)) / np.sqrt(n_f)
    Phi[1] = 0.05 * np.eye(n_f) + 0.05 * rng.standard_normal((n_f, n_f)) / np.sqrt(n_f)
    comp = np.zeros((2 * n_f, 2 * n_f))
    comp[:n_f, :n_f] = Phi[0]
    comp[:n_f, n_f:] = Phi[1]
    comp[n_f:, :n_f] = np.eye(n_f)
    radius = np.max(np.abs(np.linalg.eigvals(comp)))
    s = rho_scale / radius
    Phi[0] *= s
    Phi[1] *= s**2
    L = 0.2 * np.tril(rng.standard_normal((n_f, n_f)), -1) + np.diag(rng.uniform(0.7, 1.2, n_f))
    Sigma_eta = L @ L.T
    Lambda = np.eye(n_f) + 0.25 * rng.standard_normal((n_f, n_f))
    variables = tuple(
        dgp.VariableInfo(name=f"v{i}", category=[12, 1, 6, 4, 5][i],
                         policy="monetary" if i == 0 else "none")
        for i in range(n_f)
    )
    return dgp.DFMParameters(
        n_f=n_f, n_X=n_f, p_f=2, q_v=q_v,
        Phi=Phi, Sigma_eta=Sigma_eta, Lambda=Lambda,
        Delta=np.zeros((n_f, q_v)), Xi=np.zeros(n_f),
        variables=variables,
    )

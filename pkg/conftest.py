"""Shared fixtures: seeded models, simulated panels and the dense joint-Gaussian oracle."""

import numpy as np
import pytest
from scipy import stats

from dfmrisk.model_spec import DfmSpec, ParamSet
from dfmrisk.state_space import build, simulate, stationary_initialization
from dfmrisk.timeseries import Frequency, TimeIndex, standardize

GOLDEN_LOADINGS = (0.9, 0.8, 0.7, 0.6, 0.5)


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", default=False,
                     help="regenerate golden files instead of comparing against them")


@pytest.fixture
def update_golden(request):
    return request.config.getoption("--update-golden")


def _stable_matrix(rng, n, radius):
    M = rng.normal(size=(n, n))
    rho = np.max(np.abs(np.linalg.eigvals(M)))
    return M * (radius / rho) if rho > 0 else M


def random_small_model(rng):
    """A random stable (spec, params) with state dimension 1 or 2 and k <= 3."""
    choice = rng.integers(0, 7)
    k = int(rng.integers(1, 4))
    if choice == 0:
        spec = DfmSpec(k=k, n_f=1, p=1, q=0)
    elif choice == 1:
        spec = DfmSpec(k=k, n_f=1, p=0, q=0)
    elif choice == 2:
        spec = DfmSpec(k=k, n_f=1, p=2, q=0)
    elif choice == 3:
        spec = DfmSpec(k=max(k, 2), n_f=2, p=1, q=0)
    elif choice == 4:
        spec = DfmSpec(k=1, n_f=1, p=1, q=1)
    elif choice == 5:
        spec = DfmSpec(k=1, n_f=0, p=0, q=1)
    else:
        spec = DfmSpec(k=2, n_f=0, p=0, q=1)
    n_f = spec.n_f
    if spec.p == 2:
        r1, r2 = rng.uniform(-0.8, 0.8, size=2)
        A = [np.array([[r1 + r2]]), np.array([[-r1 * r2]])]
    else:
        A = [_stable_matrix(rng, n_f, rng.uniform(0.1, 0.9)) for _ in range(spec.p)]
    C = [_stable_matrix(rng, spec.k, rng.uniform(0.1, 0.8)) for _ in range(spec.q)]
    params = ParamSet.create(
        spec,
        P=rng.normal(size=(spec.k, n_f)),
        A=A, C=C,
        sigma_eps=rng.uniform(0.3, 1.5, size=spec.k),
    )
    return spec, params


def dense_gaussian(form, y, init=None):
    """
    Log-density of the observed cells of ``y`` and the conditional mean of every state
    given them, computed from the joint Gaussian of all states and observations.

    :rtype tuple: (log-likelihood, T x m conditional state means).
    """
    y = np.asarray(y, dtype=float)
    n, k = y.shape
    m = form.m
    if init is None:
        init = stationary_initialization(form)
    a0, P0 = np.asarray(init[0], dtype=float), np.asarray(init[1], dtype=float)
    Tm, Z, Q, H = form.Tmat, form.Zmat, form.Qcov, form.Hcov

    mu = np.zeros((n, m))
    marg = np.zeros((n, m, m))
    a, S = a0, P0
    for t in range(n):
        a = Tm @ a
        S = Tm @ S @ Tm.T + Q
        mu[t], marg[t] = a, S

    cov_a = np.zeros((n * m, n * m))
    for t in range(n):
        for s in range(t + 1):
            block = np.linalg.matrix_power(Tm, t - s) @ marg[s]
            cov_a[t * m:(t + 1) * m, s * m:(s + 1) * m] = block
            cov_a[s * m:(s + 1) * m, t * m:(t + 1) * m] = block.T

    Zb = np.kron(np.eye(n), Z)
    cov_y = Zb @ cov_a @ Zb.T + np.kron(np.eye(n), H)
    cov_ay = cov_a @ Zb.T
    mu_a = mu.reshape(-1)
    mu_y = Zb @ mu_a

    obs = ~np.isnan(y.reshape(-1))
    yv = y.reshape(-1)[obs]
    Syy = cov_y[np.ix_(obs, obs)]
    ll = float(stats.multivariate_normal(mean=mu_y[obs], cov=Syy).logpdf(yv)) if obs.any() else 0.0
    cond = mu_a + cov_ay[:, obs] @ np.linalg.solve(Syy, yv - mu_y[obs]) if obs.any() else mu_a
    return ll, cond.reshape(n, m)


@pytest.fixture
def gaussian_oracle():
    return dense_gaussian


@pytest.fixture
def small_model_factory():
    return random_small_model


def one_factor_truth(loadings=GOLDEN_LOADINGS, a1=0.8, sigma=0.5):
    spec = DfmSpec(k=len(loadings), n_f=1, p=1, q=0)
    params = ParamSet.create(spec, P=np.array(loadings).reshape(-1, 1), A=[[[a1]]],
                             sigma_eps=np.full(len(loadings), sigma))
    return spec, params


def simulate_standardized(spec, params, periods, seed, names=None):
    """Simulated panel standardized in full sample, with its stats and true factor path."""
    form = build(spec, params)
    index = TimeIndex("1800", Frequency.ANNUAL, periods)
    panel, factors = simulate(form, periods, seed, index=index, names=names)
    z, series_stats = standardize(panel)
    return z, series_stats, factors


def standardized_truth(spec, params, series_stats):
    """The simulating parameters expressed in the units of the standardized panel."""
    sd = np.array([s.std for s in series_stats])
    return params.replace(P=params.P / sd[:, None], Q=params.Q / sd[:, None],
                          log_sigma_eps=params.log_sigma_eps - 2.0 * np.log(sd))


@pytest.fixture
def one_factor_model():
    return one_factor_truth()


@pytest.fixture
def truth_factory():
    return one_factor_truth


@pytest.fixture
def simulate_panel():
    return simulate_standardized


@pytest.fixture
def in_standard_units():
    return standardized_truth


@pytest.fixture(scope="session")
def fitted_one_factor():
    """A converged fit on 150 simulated periods of a four-series one-factor model."""
    from dfmrisk.estimation import FitOptions, fit

    spec, params = one_factor_truth(loadings=(0.9, 0.8, 0.7, 0.6), a1=0.7)
    panel, series_stats, factors = simulate_standardized(
        spec, params, 150, seed=11, names=("ca", "reserves", "fx", "cpi"))
    report = fit(spec, panel, FitOptions())
    return report, panel, series_stats

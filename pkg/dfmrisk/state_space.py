"""
dfmrisk.state_space
~~~~~~~~~~~~~~~~~~~

This module provides the linear Gaussian state-space form of a DFM::

    alpha_t = T alpha_{t-1} + c_t + eta_t,    eta_t ~ N(0, Qcov)
    y_t     = Z alpha_t     + d_t + e_t,      e_t   ~ N(0, Hcov)

The state stacks the factor lags (f_t .. f_{t-L+1}, L = max(p, 1)) followed by
the idiosyncratic error lags (u_t .. u_{t-q+1}) when q > 0. With q = 0 the
idiosyncratic noise enters through Hcov instead of the state.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import DimensionMismatch, InvalidHorizon, NonFiniteValue
from .timeseries import Frequency, Panel, TimeIndex

logger = logging.getLogger(__name__)

#: Diffuse prior variance used when the transition is not stable.
DIFFUSE_KAPPA = 1e6
#: Spectral radius margin below one required for the stationary prior.
STABILITY_MARGIN = 1e-8


@dataclass(frozen=True)
class StateLayout:
    """Where the factor and error lags sit inside the state vector."""

    n_f: int
    factor_lags: int
    k: int
    q: int

    @property
    def factor_dim(self):
        return self.n_f * self.factor_lags

    @property
    def m(self):
        return self.factor_dim + self.k * self.q

    @property
    def factors(self):
        """Current factors f_t."""
        return slice(0, self.n_f)

    def factor_lag(self, i):
        """f_{t-i} for i in [0, factor_lags)."""
        return slice(i * self.n_f, (i + 1) * self.n_f)

    @property
    def errors(self):
        """Current idiosyncratic errors u_t (empty when q = 0)."""
        start = self.factor_dim
        return slice(start, start + (self.k if self.q > 0 else 0))

    def error_lag(self, i):
        start = self.factor_dim + i * self.k
        return slice(start, start + self.k)

    def blocks(self):
        """Ordered (name, slice) pairs partitioning [0, m)."""
        out = [("f_t" if i == 0 else "f_t-{}".format(i), self.factor_lag(i))
               for i in range(self.factor_lags)]
        out += [("u_t" if i == 0 else "u_t-{}".format(i), self.error_lag(i)) for i in range(self.q)]
        return out


@dataclass(frozen=True, eq=False)
class StateSpaceForm:
    """System matrices of one DFM; intercept paths are optional (T x m, T x k)."""

    Tmat: np.ndarray
    Zmat: np.ndarray
    Qcov: np.ndarray
    Hcov: np.ndarray
    layout: StateLayout
    c_state: np.ndarray = None
    d_obs: np.ndarray = None

    def __post_init__(self):
        for name in ("Tmat", "Zmat", "Qcov", "Hcov", "c_state", "d_obs"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self):
        return self.Tmat.shape[0]

    @property
    def k(self):
        return self.Zmat.shape[0]

    def state_intercept(self, t):
        if self.c_state is None or t >= self.c_state.shape[0]:
            return np.zeros(self.m)
        return self.c_state[t]

    def obs_intercept(self, t):
        if self.d_obs is None or t >= self.d_obs.shape[0]:
            return np.zeros(self.k)
        return self.d_obs[t]

    @property
    def intercept_length(self):
        """Periods covered by the exogenous paths, or None without exogenous inputs."""
        lengths = [a.shape[0] for a in (self.c_state, self.d_obs) if a is not None]
        return min(lengths) if lengths else None


def _exog(path, n, name):
    if n == 0:
        return None
    if path is None:
        raise DimensionMismatch("spec needs {} {} regressors but no path was given".format(n, name),
                                module="state_space")
    arr = np.asarray(path, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape[1] != n:
        raise DimensionMismatch("{} path has {} columns, spec needs {}".format(
            name, arr.shape[1], n), module="state_space")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("{} path contains non-finite values".format(name), module="state_space")
    return arr


def build(spec, params, exog_obs=None, exog_state=None):
    """
    Assemble the companion-form state space of ``(spec, params)``.

    :param exog_obs (array T x n_x): x_t path, required when n_x > 0.
    :param exog_state (array T x n_w): w_t path, required when n_w > 0.
    :rtype StateSpaceForm:
    :raises DimensionMismatch: parameters or exogenous paths do not fit ``spec``.
    :raises NonFiniteValue: a parameter or regressor is not finite.
    """
    params.check(spec)
    for arr in (params.P, params.Q, params.R, params.log_sigma_eps) + params.A + params.C:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("parameters contain non-finite values", module="state_space")
    k, n_f, q = spec.k, spec.n_f, spec.q
    lay = StateLayout(n_f=n_f, factor_lags=spec.factor_lags, k=k, q=q)
    m = lay.m
    sigma = params.sigma_eps

    Tmat = np.zeros((m, m))
    Zmat = np.zeros((k, m))
    Qcov = np.zeros((m, m))
    Hcov = np.zeros((k, k))

    if n_f > 0:
        L = lay.factor_lags
        for i, a in enumerate(params.A):
            Tmat[lay.factors, lay.factor_lag(i)] = a
        for i in range(1, L):
            Tmat[lay.factor_lag(i), lay.factor_lag(i - 1)] = np.eye(n_f)
        Zmat[:, lay.factors] = params.P
        Qcov[lay.factors, lay.factors] = np.eye(n_f)

    if q > 0:
        for i, c in enumerate(params.C):
            Tmat[lay.errors, lay.error_lag(i)] = c
        for i in range(1, q):
            Tmat[lay.error_lag(i), lay.error_lag(i - 1)] = np.eye(k)
        Zmat[:, lay.errors] = np.eye(k)
        Qcov[lay.errors, lay.errors] = np.diag(sigma)
    else:
        Hcov = np.diag(sigma)

    x = _exog(exog_obs, spec.n_x, "x_t")
    w = _exog(exog_state, spec.n_w, "w_t")
    d_obs = None if x is None else x @ params.Q.T
    c_state = None
    if w is not None:
        c_state = np.zeros((w.shape[0], m))
        c_state[:, lay.factors] = w @ params.R.T

    return StateSpaceForm(Tmat=Tmat, Zmat=Zmat, Qcov=Qcov, Hcov=Hcov, layout=lay,
                          c_state=c_state, d_obs=d_obs)


def spectral_radius(Tmat):
    if Tmat.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(Tmat))))


def is_stationary(form):
    return spectral_radius(form.Tmat) < 1.0 - STABILITY_MARGIN


def stationary_initialization(form):
    """
    Prior mean and covariance of the state before the first period.

    Stable transitions get the discrete Lyapunov solution of Σ = T Σ Tᵀ + Qcov and the
    stationary mean of the first-period intercept; otherwise a zero mean with the diffuse
    covariance κ·I, κ = 1e6.

    :rtype tuple: (mean m-vector, covariance m x m).
    """
    m = form.m
    if m == 0:
        return np.zeros(0), np.zeros((0, 0))
    if not is_stationary(form):
        logger.debug("[StateSpace] spectral radius %.6f >= 1, using diffuse prior",
                       spectral_radius(form.Tmat))
        return np.zeros(m), DIFFUSE_KAPPA * np.eye(m)
    cov = linalg.solve_discrete_lyapunov(form.Tmat, form.Qcov)
    cov = 0.5 * (cov + cov.T)
    mean = np.linalg.solve(np.eye(m) - form.Tmat, form.state_intercept(0))
    return mean, cov


def _draw(rng, cov, n):
    """n draws from N(0, cov) through a symmetric square root (PSD covariances allowed)."""
    d = cov.shape[0]
    if d == 0:
        return np.zeros((n, 0))
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return rng.standard_normal((n, d)) @ root.T


def stack_shocks(layout, nu, eps):
    """
    Place factor shocks v_t and idiosyncratic shocks e_t where the state space expects them.

    :rtype tuple: (state shocks T x m, observation shocks T x k).
    """
    eps = np.asarray(eps, dtype=float).reshape(-1, layout.k)
    n = eps.shape[0]
    nu = np.asarray(nu, dtype=float).reshape(n, layout.n_f)
    eta = np.zeros((n, layout.m))
    eta[:, layout.factors] = nu
    if layout.q > 0:
        eta[:, layout.errors] = eps
        return eta, np.zeros((n, layout.k))
    return eta, eps


def propagate(form, state_shocks, obs_shocks, initial_state=None):
    """
    Run the state-space recursion forward with given shocks.

    :rtype tuple: (observations T x k, states T x m).
    """
    n = state_shocks.shape[0]
    alpha = np.zeros(form.m) if initial_state is None else np.asarray(initial_state, dtype=float)
    y = np.zeros((n, form.k))
    states = np.zeros((n, form.m))
    for t in range(n):
        alpha = form.Tmat @ alpha + form.state_intercept(t) + state_shocks[t]
        states[t] = alpha
        y[t] = form.Zmat @ alpha + form.obs_intercept(t) + obs_shocks[t]
    return y, states


def simulate(form, horizon, seed, index=None, names=None, initial_state=None, noise_scale=1.0):
    """
    Draw a panel and its factor path from the state-space form.

    Without ``initial_state`` the first state is drawn from the stationary prior
    (zero when the transition is not stable).

    :param horizon (int): periods T >= 1.
    :param seed (int): seed of ``numpy.random.default_rng``.
    :rtype tuple: (Panel, factor path T x n_f).
    :raises InvalidHorizon: horizon < 1.
    """
    if int(horizon) < 1:
        raise InvalidHorizon("simulation horizon must be >= 1, got {}".format(horizon),
                             module="state_space")
    horizon = int(horizon)
    rng = np.random.default_rng(seed)
    if initial_state is None:
        if form.m and is_stationary(form):
            mean, cov = stationary_initialization(form)
            initial_state = mean + noise_scale * _draw(rng, cov, 1)[0]
        else:
            initial_state = np.zeros(form.m)
    eta = noise_scale * _draw(rng, form.Qcov, horizon)
    e = noise_scale * _draw(rng, form.Hcov, horizon)
    y, states = propagate(form, eta, e, initial_state)
    if index is None:
        index = TimeIndex("2000", Frequency.ANNUAL, horizon)
    if names is None:
        names = tuple("y{}".format(i + 1) for i in range(form.k))
    return Panel(index, tuple(names), y), states[:, form.layout.factors]


def simulate_dfm(spec, params, nu, eps, exog_obs=None, exog_state=None):
    """
    Direct recursion of the three model equations with given shocks.

    Pre-sample factors and errors are zero.

    :rtype tuple: (y T x k, f T x n_f, u T x k).
    """
    eps = np.asarray(eps, dtype=float).reshape(-1, spec.k)
    n = eps.shape[0]
    nu = np.asarray(nu, dtype=float).reshape(n, spec.n_f)
    x = _exog(exog_obs, spec.n_x, "x_t")
    w = _exog(exog_state, spec.n_w, "w_t")
    f = np.zeros((n, spec.n_f))
    u = np.zeros((n, spec.k))
    y = np.zeros((n, spec.k))
    for t in range(n):
        ft = nu[t].copy()
        if w is not None:
            ft += params.R @ w[t]
        for i, a in enumerate(params.A):
            if t - i - 1 >= 0:
                ft += a @ f[t - i - 1]
        ut = eps[t].copy()
        for i, c in enumerate(params.C):
            if t - i - 1 >= 0:
                ut += c @ u[t - i - 1]
        f[t], u[t] = ft, ut
        y[t] = params.P @ ft + ut
        if x is not None:
            y[t] += params.Q @ x[t]
    return y, f, u

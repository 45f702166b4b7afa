"""
dfmrisk.em
~~~~~~~~~~

EM sweeps used as an optional warm start before quasi-Newton ascent.

Each sweep runs the filter and smoother at the current parameters and then
updates, from the smoothed first and second moments,

- the loadings and idiosyncratic variance of every series over its observed periods;
- the stacked factor VAR matrices [A_1 .. A_p] = S10 S00⁻¹.

Only the exact-factor case (q = 0, no exogenous blocks, n_f ≥ 1) is supported;
other specifications are returned unchanged.
"""

import logging

import numpy as np

from .exceptions import NumericalError
from .kalman import kalman_filter, kalman_smoother
from .state_space import build, spectral_radius

logger = logging.getLogger(__name__)

#: Smallest idiosyncratic variance an EM update may produce.
EM_VARIANCE_FLOOR = 1e-4


def supports(spec):
    return spec.n_f >= 1 and spec.q == 0 and spec.n_x == 0 and spec.n_w == 0


def _loadings_and_variances(y, means, covs, n_f):
    k = y.shape[1]
    P = np.zeros((k, n_f))
    sigma = np.ones(k)
    f = means[:, :n_f]
    for i in range(k):
        rows = ~np.isnan(y[:, i])
        Ef = f[rows]
        Eff = Ef.T @ Ef + covs[rows][:, :n_f, :n_f].sum(axis=0)
        Syf = y[rows, i] @ Ef
        p_i = np.linalg.solve(Eff + 1e-12 * np.eye(n_f), Syf)
        resid = y[rows, i] - Ef @ p_i
        spread = np.einsum("j,tjk,k->t", p_i, covs[rows][:, :n_f, :n_f], p_i)
        P[i] = p_i
        sigma[i] = max(float(np.mean(resid ** 2 + spread)), EM_VARIANCE_FLOOR)
    return P, sigma


def _factor_var(means, covs, lag_one, n_f, p):
    """Stacked [A_1 .. A_p] from smoothed moments, or None when the update is unusable."""
    d = n_f * p
    S10 = np.zeros((n_f, d))
    S00 = np.zeros((d, d))
    for t in range(1, means.shape[0]):
        prev = means[t - 1, :d]
        S10 += np.outer(means[t, :n_f], prev) + lag_one[t][:n_f, :d]
        S00 += np.outer(prev, prev) + covs[t - 1][:d, :d]
    try:
        stacked = np.linalg.solve(S00.T, S10.T).T
    except np.linalg.LinAlgError:
        return None
    companion = np.zeros((d, d))
    companion[:n_f] = stacked
    companion[n_f:, :-n_f] = np.eye(d - n_f)
    if spectral_radius(companion) >= 1.0:
        return None
    return [stacked[:, i * n_f:(i + 1) * n_f] for i in range(p)]


def em_step(spec, panel, params, exog_obs=None, exog_state=None):
    """One EM sweep; returns (new ParamSet, log-likelihood at the input parameters)."""
    form = build(spec, params, exog_obs, exog_state)
    fr = kalman_filter(form, panel)
    sm = kalman_smoother(form, fr)
    y = panel.values
    P, sigma = _loadings_and_variances(y, sm.smoothed_means, sm.smoothed_covs, spec.n_f)
    A = params.A
    if spec.p > 0:
        update = _factor_var(sm.smoothed_means, sm.smoothed_covs, sm.lag_one_covs,
                             spec.n_f, spec.p)
        if update is None:
            logger.debug("[EM] factor VAR update unstable, keeping previous A")
        else:
            A = tuple(update)
    return params.replace(P=P, A=A, log_sigma_eps=np.log(sigma)), fr.log_likelihood


def em_warm_start(spec, panel, params, iterations=10, exog_obs=None, exog_state=None):
    """Run up to ``iterations`` EM sweeps from ``params``; stops early if a sweep fails."""
    if not supports(spec):
        logger.warning("[EM] warm start needs q = 0, no exogenous blocks and n_f >= 1; skipped")
        return params
    current = params
    for i in range(int(iterations)):
        try:
            current, ll = em_step(spec, panel, current, exog_obs, exog_state)
        except NumericalError as e:
            logger.warning("[EM] sweep %d failed (%s); keeping previous parameters", i + 1, e)
            break
        logger.debug("[EM] sweep %d loglik %.6f", i + 1, ll)
    return current

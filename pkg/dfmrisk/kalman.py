"""
dfmrisk.kalman
~~~~~~~~~~~~~~

This module provides the Kalman filter, the fixed-interval (Rauch-Tung-Striebel)
smoother and the Gaussian log-likelihood over a :class:`StateSpaceForm`.

Prediction::

    a_{t|t-1} = T a_{t-1|t-1} + c_t
    P_{t|t-1} = T P_{t-1|t-1} Tᵀ + Qcov

Update, with the rows of Z, H and y_t for missing cells deleted::

    F_t     = Z P_{t|t-1} Zᵀ + H
    K_t     = P_{t|t-1} Zᵀ F_t⁻¹
    a_{t|t} = a_{t|t-1} + K_t (y_t - Z a_{t|t-1} - d_t)
    P_{t|t} = (I - K_t Z) P_{t|t-1}

Covariances are symmetrized after every step. A period with every cell missing
skips the update. Once the predicted covariance stops changing on fully observed
periods the gain is reused (steady state); any missing cell leaves steady state.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import DimensionMismatch, SingularInnovationCovariance
from .state_space import stationary_initialization
from .timeseries import Panel

logger = logging.getLogger(__name__)

#: Largest condition number accepted for an innovation covariance.
MAX_CONDITION = 1e12
#: Relative tolerance of the pseudo-inverse in the smoother gain.
PINV_RTOL = 1e-10
#: Predicted covariances closer than this (max abs) count as converged.
STEADY_STATE_TOL = 1e-13

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class FilterResult:
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    innovations: np.ndarray
    innovation_covs: np.ndarray
    loglik_contributions: np.ndarray
    log_likelihood: float
    init: tuple
    layout: object

    @property
    def T(self):
        return self.filtered_means.shape[0]

    @property
    def factor_path(self):
        """Filtered factors F̂_{t|t}, T x n_f."""
        return self.filtered_means[:, self.layout.factors]

    @property
    def factor_variances(self):
        f = self.layout.factors
        return np.diagonal(self.filtered_covs[:, f, f], axis1=1, axis2=2).copy()


@dataclass(frozen=True, eq=False)
class SmootherResult:
    smoothed_means: np.ndarray
    smoothed_covs: np.ndarray
    #: [t] holds Cov(alpha_t, alpha_{t-1} | all data); [0] pairs with the prior state.
    lag_one_covs: np.ndarray
    layout: object

    @property
    def factor_path(self):
        """Smoothed factors, T x n_f."""
        return self.smoothed_means[:, self.layout.factors]

    @property
    def factor_variances(self):
        f = self.layout.factors
        return np.diagonal(self.smoothed_covs[:, f, f], axis1=1, axis2=2).copy()


def _sym(P):
    return 0.5 * (P + P.T)


def _as_matrix(data, k):
    values = data.values if isinstance(data, Panel) else np.asarray(data, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.shape[1] != k:
        raise DimensionMismatch("data has {} columns, state space observes {}".format(
            values.shape[1], k), module="kalman")
    return values


def factor_innovation_cov(F):
    """
    Cholesky factor and log-determinant of an innovation covariance.

    :raises SingularInnovationCovariance: F is not finite, not positive definite, or its
        condition number exceeds MAX_CONDITION.
    """
    if not np.all(np.isfinite(F)):
        raise SingularInnovationCovariance("innovation covariance is not finite")
    w = np.linalg.eigvalsh(F)
    if w[0] <= 0.0 or w[-1] / w[0] > MAX_CONDITION:
        raise SingularInnovationCovariance(
            "innovation covariance eigenvalues in [{:.3e}, {:.3e}]".format(w[0], w[-1]))
    try:
        cho = linalg.cho_factor(F, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise SingularInnovationCovariance(str(e))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return cho, logdet


def predict(form, mean, cov, t):
    """One prediction step from (a_{t-1|t-1}, P_{t-1|t-1}) to period t."""
    a = form.Tmat @ mean + form.state_intercept(t)
    P = _sym(form.Tmat @ cov @ form.Tmat.T + form.Qcov)
    return a, P


def update(form, a_pred, P_pred, y_t, t):
    """
    One update step on the observed cells of ``y_t``.

    :rtype tuple: (a_{t|t}, P_{t|t}, innovation, innovation covariance, loglik contribution,
        observed mask). Fully missing periods return the prediction unchanged.
    """
    mask = ~np.isnan(y_t)
    n_obs = int(mask.sum())
    if n_obs == 0:
        return a_pred, P_pred, None, None, 0.0, mask
    Z = form.Zmat[mask]
    H = form.Hcov[np.ix_(mask, mask)]
    v = y_t[mask] - Z @ a_pred - form.obs_intercept(t)[mask]
    ZP = Z @ P_pred
    F = _sym(ZP @ Z.T + H)
    cho, logdet = factor_innovation_cov(F)
    if form.m:
        K = linalg.cho_solve(cho, ZP, check_finite=False).T
    else:
        K = np.zeros((0, n_obs))
    a = a_pred + K @ v
    P = _sym((np.eye(form.m) - K @ Z) @ P_pred)
    Finv_v = linalg.cho_solve(cho, v, check_finite=False)
    ll = -0.5 * (n_obs * _LOG_2PI + logdet + float(v @ Finv_v))
    return a, P, v, F, ll, mask


def kalman_filter(form, panel, init=None, store=True):
    """
    Run the Kalman filter over ``panel``.

    :param form (StateSpaceForm): system matrices.
    :param panel (Panel or array T x k): observations, NaN for missing cells.
    :param init (tuple): (F̂_{0|0}, P_{0|0}); the stationary prior when omitted.
    :param store (bool): keep per-period means and covariances.
    :rtype FilterResult:
    :raises SingularInnovationCovariance: an innovation covariance is not invertible.
    :raises DimensionMismatch: the panel width differs from the observation dimension.
    """
    y = _as_matrix(panel, form.k)
    n, m, k = y.shape[0], form.m, form.k
    if init is None:
        init = stationary_initialization(form)
    mean = np.asarray(init[0], dtype=float).reshape(m)
    cov = np.asarray(init[1], dtype=float).reshape(m, m)

    if store:
        a_pred_all = np.zeros((n, m))
        P_pred_all = np.zeros((n, m, m))
        a_filt_all = np.zeros((n, m))
        P_filt_all = np.zeros((n, m, m))
        v_all = np.full((n, k), np.nan)
        F_all = np.full((n, k, k), np.nan)
    contributions = np.zeros(n)

    steady = None
    prev_P_pred = None
    prev_full = False
    for t in range(n):
        full = not np.isnan(y[t]).any()
        if steady is not None and full:
            K, Z_full, cho, logdet, P_pred, P_filt, F = steady
            a_pred = form.Tmat @ mean + form.state_intercept(t)
            v = y[t] - Z_full @ a_pred - form.obs_intercept(t)
            mean = a_pred + K @ v
            cov = P_filt
            contributions[t] = -0.5 * (k * _LOG_2PI + logdet
                                       + float(v @ linalg.cho_solve(cho, v, check_finite=False)))
            mask = np.ones(k, dtype=bool)
        else:
            steady = None
            a_pred, P_pred = predict(form, mean, cov, t)
            mean, cov, v, F, contributions[t], mask = update(form, a_pred, P_pred, y[t], t)
            if (full and prev_full and prev_P_pred is not None and m > 0
                    and np.max(np.abs(P_pred - prev_P_pred)) < STEADY_STATE_TOL):
                ZP = form.Zmat @ P_pred
                cho, logdet = factor_innovation_cov(F)
                K = linalg.cho_solve(cho, ZP, check_finite=False).T
                steady = (K, form.Zmat, cho, logdet, P_pred, cov, F)
                logger.debug("[Kalman] steady state reached at t=%d", t)
            prev_P_pred = P_pred
        prev_full = full
        if store:
            a_pred_all[t], P_pred_all[t] = a_pred, P_pred
            a_filt_all[t], P_filt_all[t] = mean, cov
            if v is not None:
                v_all[t, mask] = v
                F_all[t][np.ix_(mask, mask)] = F

    total = float(np.sum(contributions))
    if not store:
        a_pred_all = P_pred_all = a_filt_all = P_filt_all = v_all = F_all = None
    return FilterResult(
        predicted_means=a_pred_all, predicted_covs=P_pred_all,
        filtered_means=a_filt_all, filtered_covs=P_filt_all,
        innovations=v_all, innovation_covs=F_all,
        loglik_contributions=contributions, log_likelihood=total,
        init=(np.asarray(init[0], dtype=float), np.asarray(init[1], dtype=float)),
        layout=form.layout,
    )


def kalman_smoother(form, fr):
    """
    Fixed-interval smoother over a stored filter pass.

    The smoother gain J_t = P_{t|t} Tᵀ P_{t+1|t}⁺ uses a pseudo-inverse (relative
    tolerance 1e-10) so singular predicted covariances are accepted.

    :rtype SmootherResult:
    """
    if fr.filtered_means is None:
        raise DimensionMismatch("smoothing needs a filter pass run with store=True",
                                module="kalman")
    n, m = fr.filtered_means.shape
    a_s = np.zeros((n, m))
    P_s = np.zeros((n, m, m))
    lag_one = np.zeros((n, m, m))
    if n == 0 or m == 0:
        return SmootherResult(a_s, P_s, lag_one, fr.layout)
    a_s[-1] = fr.filtered_means[-1]
    P_s[-1] = fr.filtered_covs[-1]
    gains = [None] * n
    for t in range(n - 2, -1, -1):
        J = fr.filtered_covs[t] @ form.Tmat.T @ linalg.pinvh(fr.predicted_covs[t + 1],
                                                             rtol=PINV_RTOL)
        gains[t] = J
        a_s[t] = fr.filtered_means[t] + J @ (a_s[t + 1] - fr.predicted_means[t + 1])
        P_s[t] = _sym(fr.filtered_covs[t] + J @ (P_s[t + 1] - fr.predicted_covs[t + 1]) @ J.T)
    for t in range(1, n):
        lag_one[t] = P_s[t] @ gains[t - 1].T
    if m:
        J0 = fr.init[1] @ form.Tmat.T @ linalg.pinvh(fr.predicted_covs[0], rtol=PINV_RTOL)
        lag_one[0] = P_s[0] @ J0.T
    return SmootherResult(smoothed_means=a_s, smoothed_covs=P_s, lag_one_covs=lag_one,
                          layout=fr.layout)


def loglik(form, panel, init=None):
    """Gaussian log-likelihood of ``panel`` under ``form`` from the stationary prior."""
    return kalman_filter(form, panel, init=init, store=False).log_likelihood

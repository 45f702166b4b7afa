"""
dfmrisk.estimation
~~~~~~~~~~~~~~~~~~

This module provides maximum-likelihood estimation of a DFM.

Steps of :func:`fit`:
---------------------
- principal-component starting values (:func:`initialize`), optionally refined by a
  few EM sweeps (:mod:`dfmrisk.em`);
- quasi-Newton ascent (L-BFGS-B) on the Kalman log-likelihood with central
  finite-difference gradients, step 1e-5·max(1, |θ|), finished by Newton steps on
  the numerical Hessian until the scaled gradient norm is below tolerance;
- the sign convention (largest-|loading| entry of every factor positive);
- standard errors from the inverse negative numerical Hessian, step 1e-4·max(1, |θ|);
- z-statistics and two-sided normal p-values in natural units (variances through the
  delta method on the log parameter).

:func:`reduce` refits the model on the series whose loadings are significant.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from statsmodels.tools.numdiff import approx_fprime, approx_hess3

from .exceptions import (
    AllSeriesDropped,
    DegenerateCovariance,
    DfmError,
    DimensionMismatch,
    HessianNotPD,
    HessianNotPDWarning,
    InvalidOption,
    InvalidSpec,
    NonPositiveStdError,
    NotConverged,
    NotStandardized,
    NumericalError,
    OptimizerDiverged,
    WrongShape,
)
from .em import em_warm_start
from .kalman import kalman_filter, kalman_smoother, loglik
from .model_spec import (
    ParamSet,
    apply_sign_convention,
    classify,
    pack,
    parameter_labels,
    unpack,
)
from .state_space import build, spectral_radius
from .timeseries import is_standardized

logger = logging.getLogger(__name__)

GRADIENT_STEP = 1e-5
HESSIAN_STEP = 1e-4
VARIANCE_FLOOR = 0.05
#: Objective value returned for parameter points where the likelihood cannot be evaluated.
PENALTY = 1e10


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    tolerance: float = 1e-9
    gradient_tolerance: float = 1e-5
    alpha: float = 0.05
    em_warm_start: bool = False
    em_iterations: int = 10
    seed: int = 0


@dataclass(frozen=True)
class SignificanceFilter:
    """Outcome of the general-to-reduced pruning; ``dropped`` is in drop order."""

    alpha: float
    kept: tuple
    dropped: tuple
    #: 1-based reduction round in which each dropped series left the model.
    drop_rounds: tuple = ()


@dataclass(frozen=True)
class Contribution:
    series: str
    loading: float
    z: float
    p: float
    rank: int


@dataclass(frozen=True, eq=False)
class EstimationReport:
    spec: object
    series: tuple
    index: object
    estimates: ParamSet
    flat: object
    parameter_names: tuple
    #: Natural-unit estimates aligned with ``parameter_names`` (variances, not log variances).
    values: np.ndarray
    std_errors: np.ndarray
    z_stats: np.ndarray
    p_values: np.ndarray
    log_likelihood: float
    initial_log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float
    factor_path: np.ndarray
    factor_variance: np.ndarray
    filtered_factor_path: np.ndarray
    filtered_factor_variance: np.ndarray
    sign_convention_applied: bool
    hessian_pd: bool
    options: FitOptions
    diagnostics: tuple = ()
    exog_obs: np.ndarray = None
    exog_state: np.ndarray = None
    model_kind: object = field(default=None)

    @property
    def has_std_errors(self):
        return bool(self.hessian_pd)

    def rows(self):
        """Table rows (parameter, estimate, std_err, z, p); absent statistics are None."""
        out = []
        for i, name in enumerate(self.parameter_names):
            if self.hessian_pd:
                out.append((name, float(self.values[i]), float(self.std_errors[i]),
                            float(self.z_stats[i]), float(self.p_values[i])))
            else:
                out.append((name, float(self.values[i]), None, None, None))
        return out

    def loading_stats(self, series):
        """(loadings, z, p) arrays over factors for one series."""
        i = self.series.index(series)
        n_f = self.spec.n_f
        sl = slice(i * n_f, (i + 1) * n_f)
        return self.values[sl], self.z_stats[sl], self.p_values[sl]

    def loading_pvalues(self):
        """Smallest loading p-value per series (a series is significant when any loading is)."""
        if not self.hessian_pd or self.spec.n_f == 0:
            return None
        return {s: float(np.min(self.loading_stats(s)[2])) for s in self.series}


def zstat(estimate, std_error):
    """
    z-statistic: the estimate divided by its standard error.

    :raises NonPositiveStdError: std_error is not strictly positive.
    """
    if not std_error > 0:
        raise NonPositiveStdError("standard error must be > 0, got {!r}".format(std_error))
    return estimate / std_error


def p_value(z):
    """Two-sided standard-normal p-value 2·(1 − Φ(|z|))."""
    return 2.0 * stats.norm.sf(np.abs(z))


class LoglikObjective:
    """The log-likelihood as a function of the flat parameter vector."""

    def __init__(self, spec, data, exog_obs=None, exog_state=None):
        self.spec = spec
        self.data = data
        self.exog_obs = exog_obs
        self.exog_state = exog_state
        self.evaluations = 0

    def loglik(self, theta):
        self.evaluations += 1
        params = unpack(theta, self.spec)
        form = build(self.spec, params, self.exog_obs, self.exog_state)
        return loglik(form, self.data)

    def safe_loglik(self, theta):
        try:
            value = self.loglik(theta)
        except NumericalError:
            return -PENALTY
        return value if np.isfinite(value) else -PENALTY

    def negative(self, theta):
        return -self.safe_loglik(theta)

    def gradient(self, theta):
        return numerical_gradient(self.safe_loglik, theta)

    def negative_gradient(self, theta):
        return -self.gradient(theta)


def numerical_gradient(func, theta, step=GRADIENT_STEP):
    """Central differences with per-coordinate step ``step·max(1, |θ_i|)``."""
    theta = np.asarray(theta, dtype=float)
    h = step * np.maximum(1.0, np.abs(theta))
    # centered approx_fprime evaluates at x ± epsilon/2
    grad = approx_fprime(theta, func, epsilon=2.0 * h, centered=True)
    return np.atleast_1d(grad).reshape(theta.size)


def numerical_hessian(func, theta, step=HESSIAN_STEP):
    """Central-difference Hessian with per-coordinate step ``step·max(1, |θ_i|)``."""
    theta = np.asarray(theta, dtype=float)
    h = step * np.maximum(1.0, np.abs(theta))
    H = np.atleast_2d(approx_hess3(theta, func, epsilon=h))
    return 0.5 * (H + H.T)


def scaled_gradient_norm(gradient, theta, value):
    """max_i |g_i|·max(1, |θ_i|) / max(1, |ℓ|)."""
    if gradient.size == 0:
        return 0.0
    return float(np.max(np.abs(gradient) * np.maximum(1.0, np.abs(theta)))
                 / max(1.0, abs(value)))


def _impute_means(values):
    X = np.array(values, dtype=float)
    means = np.nanmean(X, axis=0)
    rows, cols = np.where(np.isnan(X))
    X[rows, cols] = means[cols]
    return X


def _lag_matrix(F, p):
    """Regressors [F_{t-1}, ..., F_{t-p}] for t = p..T-1."""
    n = F.shape[0]
    return np.hstack([F[p - i - 1:n - i - 1] for i in range(p)])


def initialize(spec, panel):
    """
    Principal-component starting values.

    Loadings come from the leading eigenvectors of the correlation matrix of the
    mean-imputed panel, factor VAR matrices from least squares on the component
    scores, error VAR matrices are zero and idiosyncratic variances are residual
    variances floored at 0.05.

    The factor innovation covariance is fixed at the identity, so factors and loadings
    are rescaled by the Cholesky factor L of the score VAR residual covariance: with
    p = 0 a single series starts at loading σ̂, with p ≥ 1 at σ̂·L, where L² is the
    residual variance of its standardized AR(p) fit.

    :rtype ParamSet:
    :raises DegenerateCovariance: the correlation matrix is not PSD.
    """
    if panel.k != spec.k:
        raise DimensionMismatch("panel has {} series, spec expects {}".format(panel.k, spec.k),
                                module="estimation")
    if spec.n_f > spec.k:
        raise InvalidSpec("{} factors exceed {} observed series".format(spec.n_f, spec.k))
    X = _impute_means(panel.values)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    Xs = (X - mean) / np.where(std > 0, std, 1.0)

    if spec.n_f == 0:
        sigma = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
        return ParamSet.create(spec, sigma_eps=sigma)

    corr = np.atleast_2d(np.corrcoef(Xs, rowvar=False))
    if not np.all(np.isfinite(corr)):
        raise DegenerateCovariance("panel correlation matrix is not finite")
    w, V = np.linalg.eigh(corr)
    if w[0] < -1e-8:
        raise DegenerateCovariance("panel correlation matrix has eigenvalue {:.3e}".format(w[0]))
    order = np.argsort(w)[::-1][:spec.n_f]
    lam = np.maximum(w[order], 1e-8)
    V = V[:, order]
    loadings = (std[:, None] * V) * np.sqrt(lam)[None, :]
    scores = Xs @ V / np.sqrt(lam)[None, :]

    A = []
    if spec.p > 0 and panel.T > spec.p + 1:
        Y = scores[spec.p:]
        Z = _lag_matrix(scores, spec.p)
        B = np.linalg.lstsq(Z, Y, rcond=None)[0]
        resid = Y - Z @ B
        S = resid.T @ resid / resid.shape[0]
        A = [B[i * spec.n_f:(i + 1) * spec.n_f].T for i in range(spec.p)]
    else:
        S = scores.T @ scores / scores.shape[0]
        A = [np.zeros((spec.n_f, spec.n_f)) for _ in range(spec.p)]
    L = np.linalg.cholesky(0.5 * (S + S.T) + 1e-8 * np.eye(spec.n_f))
    Linv = np.linalg.inv(L)
    A = [Linv @ a @ L for a in A]
    if A:
        companion = np.zeros((spec.n_f * spec.p, spec.n_f * spec.p))
        companion[:spec.n_f] = np.hstack(A)
        companion[spec.n_f:, :-spec.n_f] = np.eye(spec.n_f * (spec.p - 1))
        rho = spectral_radius(companion)
        if rho >= 0.99:
            A = [a * (0.95 / rho) ** (i + 1) for i, a in enumerate(A)]
    P = loadings @ L

    resid = Xs * std - scores @ loadings.T
    sigma = np.maximum(resid.var(axis=0), VARIANCE_FLOOR)
    params = ParamSet.create(spec, P=P, A=A, sigma_eps=sigma)
    params, _ = apply_sign_convention(params, spec)
    return params


def _standard_errors(objective, theta, spec):
    """Natural-unit standard errors, or None when the negative Hessian is not PD."""
    H = numerical_hessian(objective.safe_loglik, theta)
    info = -H
    if not np.all(np.isfinite(info)):
        return None
    w = np.linalg.eigvalsh(info)
    if w.size and w[0] <= 0:
        return None
    cov = np.linalg.inv(info)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    k = spec.k
    if k:
        se[-k:] = np.exp(theta[-k:]) * se[-k:]
    return se


def _newton_refine(objective, theta, options, max_steps=10):
    """
    Newton steps on the numerical Hessian until the scaled gradient test passes.

    The negative Hessian is shifted to positive definite when needed; each step is
    halved until the likelihood does not decrease. Returns (theta, steps taken).
    """
    value = objective.safe_loglik(theta)
    steps = 0
    for _ in range(max_steps):
        grad = objective.gradient(theta)
        if scaled_gradient_norm(grad, theta, value) < options.gradient_tolerance:
            break
        info = -numerical_hessian(objective.safe_loglik, theta)
        if not np.all(np.isfinite(info)):
            break
        w = np.linalg.eigvalsh(info)
        scale = max(1.0, abs(w[-1]))
        shift = 0.0 if w[0] > 1e-8 * scale else abs(w[0]) + 1e-6 * scale
        direction = np.linalg.solve(info + shift * np.eye(theta.size), grad)
        t = 1.0
        for _ in range(30):
            candidate = theta + t * direction
            candidate_value = objective.safe_loglik(candidate)
            if candidate_value >= value:
                break
            t *= 0.5
        else:
            break
        theta, value = candidate, candidate_value
        steps += 1
    return theta, steps


def _ascend(objective, theta0, options, restarts=2):
    """
    L-BFGS-B on the negative log-likelihood, then Newton refinement.

    L-BFGS-B often stops on its relative-reduction test while the scaled gradient is
    still above the tolerance; Newton steps on the numerical Hessian finish the ascent.
    When they stall short of the tolerance the quasi-Newton search is restarted from
    the refined point, within the overall iteration cap.
    """
    theta = np.asarray(theta0, dtype=float)
    used, message = 0, "no iterations"
    for attempt in range(restarts + 1):
        budget = int(options.max_iter) - used
        if budget <= 0:
            message = "iteration cap {} reached".format(options.max_iter)
            break
        result = optimize.minimize(
            objective.negative, theta, jac=objective.negative_gradient, method="L-BFGS-B",
            options={"maxiter": budget, "ftol": float(options.tolerance),
                     "gtol": 0.1 * float(options.gradient_tolerance)},
        )
        used += int(result.nit)
        message = str(result.message)
        if -result.fun >= objective.safe_loglik(theta):
            theta = np.asarray(result.x, dtype=float)
        value = objective.safe_loglik(theta)
        gnorm = scaled_gradient_norm(objective.gradient(theta), theta, value)
        logger.debug("[Estimation] pass %d: loglik %.8f, scaled gradient %.3e",
                     attempt + 1, value, gnorm)
        if gnorm < options.gradient_tolerance:
            break

        theta, steps = _newton_refine(objective, theta, options)
        used += steps
        value = objective.safe_loglik(theta)
        gnorm = scaled_gradient_norm(objective.gradient(theta), theta, value)
        if steps:
            message = "{}; {} Newton steps".format(message, steps)
        logger.debug("[Estimation] Newton refinement: %d steps, loglik %.8f, "
                     "scaled gradient %.3e", steps, value, gnorm)
        if gnorm < options.gradient_tolerance or steps == 0:
            break
    return theta, used, message


def fit(spec, panel, options=None, exog_obs=None, exog_state=None, start=None):
    """
    Maximum-likelihood fit of ``spec`` to a standardized panel.

    :param options (FitOptions): optimizer settings.
    :param start (ParamSet): starting values; principal components when omitted.
    :rtype EstimationReport:
    :raises NotStandardized: a column is not within 1e-6 of mean 0 and variance 1.
    :raises OptimizerDiverged: the likelihood is not finite at the starting point.
    """
    options = options or FitOptions()
    if panel.k != spec.k:
        raise DimensionMismatch("panel has {} series, spec expects {}".format(panel.k, spec.k),
                                module="estimation")
    if not is_standardized(panel):
        raise NotStandardized("fit expects a standardized panel (mean 0, variance 1)")

    if start is None:
        start = initialize(spec, panel)
    if options.em_warm_start:
        start = em_warm_start(spec, panel, start, options.em_iterations,
                              exog_obs=exog_obs, exog_state=exog_state)

    objective = LoglikObjective(spec, panel.values, exog_obs, exog_state)
    theta0 = pack(start).values
    try:
        ll0 = objective.loglik(theta0)
    except DfmError as e:
        raise OptimizerDiverged("likelihood not computable at the starting point: {}".format(e))
    if not np.isfinite(ll0):
        raise OptimizerDiverged("non-finite likelihood at the starting point")
    logger.info("[Estimation] %s, %d parameters, start loglik %.6f",
                classify(spec).value, theta0.size, ll0)

    theta, iterations, message = _ascend(objective, theta0, options)
    diagnostics = ["optimizer: {}".format(message)]
    if objective.safe_loglik(theta) < ll0:
        diagnostics.append("optimizer ended below the starting likelihood; start values kept")
        theta = theta0

    params, flipped = apply_sign_convention(unpack(theta, spec), spec)
    flat = pack(params)
    theta = flat.values
    ll = objective.loglik(theta)
    gradient = numerical_gradient(objective.safe_loglik, theta)
    gnorm = scaled_gradient_norm(gradient, theta, ll)
    converged = bool(gnorm < options.gradient_tolerance)
    if not converged:
        diagnostics.append("scaled gradient norm {:.3e} above {:.1e}".format(
            gnorm, options.gradient_tolerance))

    values = theta.copy()
    if spec.k:
        values[-spec.k:] = np.exp(theta[-spec.k:])
    se = _standard_errors(objective, theta, spec)
    hessian_pd = se is not None
    if hessian_pd and np.all(se > 0):
        z = values / se
        p = p_value(z)
    else:
        if hessian_pd:
            diagnostics.append("zero standard error in the inverse Hessian")
        hessian_pd = False
        se = z = p = np.full(theta.size, np.nan)
        diagnostics.append("negative Hessian is not positive definite; standard errors absent")
        warnings.warn("negative Hessian is not positive definite; standard errors absent",
                      HessianNotPDWarning, stacklevel=2)
        logger.warning("[Estimation] Hessian not positive definite")

    form = build(spec, params, exog_obs, exog_state)
    fr = kalman_filter(form, panel)
    sm = kalman_smoother(form, fr)
    logger.info("[Estimation] loglik %.6f after %d iterations (converged=%s)",
                ll, iterations, converged)

    return EstimationReport(
        spec=spec, series=tuple(panel.names), index=panel.index,
        estimates=params, flat=flat,
        parameter_names=tuple(parameter_labels(spec, panel.names)),
        values=values, std_errors=se, z_stats=z, p_values=p,
        log_likelihood=float(ll), initial_log_likelihood=float(ll0),
        converged=converged, iterations=int(iterations), gradient_norm=gnorm,
        factor_path=sm.factor_path, factor_variance=sm.factor_variances,
        filtered_factor_path=fr.factor_path, filtered_factor_variance=fr.factor_variances,
        sign_convention_applied=any(flipped), hessian_pd=hessian_pd, options=options,
        diagnostics=tuple(diagnostics), exog_obs=exog_obs, exog_state=exog_state,
        model_kind=classify(spec),
    )


def reduce(report, alpha, panel):
    """
    General-to-reduced refitting: drop series whose loadings are all insignificant
    at ``alpha`` and refit until every retained series is significant or one remains.

    :rtype tuple: (SignificanceFilter, EstimationReport of the reduced model).
    :raises InvalidOption: alpha outside (0, 1).
    :raises NotConverged: the input report did not converge.
    :raises HessianNotPD: a report in the sequence has no standard errors.
    :raises AllSeriesDropped: no loading survives.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidOption("alpha must lie in (0, 1), got {!r}".format(alpha),
                            module="estimation")
    if report.spec.n_f == 0:
        raise WrongShape("reduction needs at least one factor")
    if not report.converged:
        raise NotConverged("cannot reduce a model that did not converge", module="estimation")
    kept = list(report.series)
    dropped, rounds = [], []
    current = report
    round_no = 0
    while len(kept) > 1:
        pvalues = current.loading_pvalues()
        if pvalues is None:
            raise HessianNotPD("no standard errors to judge significance")
        drop = [s for s in kept if pvalues[s] > alpha]
        if not drop:
            break
        if len(drop) == len(kept):
            raise AllSeriesDropped("no loading is significant at alpha={}".format(alpha))
        round_no += 1
        kept = [s for s in kept if s not in drop]
        dropped.extend(drop)
        rounds.extend([round_no] * len(drop))
        logger.info("[Estimation] reduction round %d drops %s", round_no, drop)
        current = fit(report.spec.with_k(len(kept)), panel.select(kept), report.options,
                      exog_obs=report.exog_obs, exog_state=report.exog_state)
    return SignificanceFilter(alpha=alpha, kept=tuple(kept), dropped=tuple(dropped),
                              drop_rounds=tuple(rounds)), current


def persistence(report):
    """The lagged-factor coefficient A_1 of a one-factor, one-lag model."""
    spec = report.spec
    if spec.n_f != 1 or spec.p != 1:
        raise WrongShape("persistence needs n_f = 1 and p = 1, got n_f={}, p={}".format(
            spec.n_f, spec.p))
    return float(report.estimates.A[0][0, 0])


def rank_contributions(report):
    """Series ordered by the largest absolute z-statistic of their loadings."""
    if report.spec.n_f == 0 or not report.hessian_pd:
        return []
    rows = []
    for s in report.series:
        loads, z, p = report.loading_stats(s)
        j = int(np.argmax(np.abs(z)))
        rows.append((s, float(loads[j]), float(z[j]), float(p[j])))
    rows.sort(key=lambda r: -abs(r[2]))
    return [Contribution(series=s, loading=l, z=z, p=p, rank=i + 1)
            for i, (s, l, z, p) in enumerate(rows)]

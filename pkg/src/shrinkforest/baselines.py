"""Frequentist reference estimators: treatment as the sole covariate.

The standard subgroup estimator fits each subgroup subset separately (zero
shrinkage); the population estimator fits the full trial once (full
shrinkage). Both report maximum-likelihood points with Wald 95% intervals
computed as point -/+ 1.96 SE on the modeling (log) scale for ratio
measures. Separation and zero cells yield a flagged non-converged estimate
with an infinite interval rather than an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, digamma, polygamma

from .dataset import (
    BinaryEndpoint,
    ContinuousEndpoint,
    CountEndpoint,
    ConfigurationError,
    SurvivalEndpoint,
    TrialDataset,
)
from .standardize import EFFECT_SCALES, RATIO_SCALES

__all__ = ["FrequentistEstimate", "fit_unadjusted", "forest_table_frequentist"]

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class FrequentistEstimate:
    """Unadjusted MLE for one subset: point, SE, and Wald 95% CI."""

    subgroup: tuple[str, str] | str
    scale: str
    point: float  # natural effect scale (difference or ratio)
    se: float  # on the modeling (log) scale for ratio measures
    lower: float
    upper: float
    n_subjects: int
    converged: bool
    estimator_label: str = "standard"

    @property
    def label(self) -> str:
        if self.subgroup == "population":
            return "population"
        return f"{self.subgroup[0]}={self.subgroup[1]}"

    def log_point(self) -> float:
        return math.log(self.point) if self.scale in RATIO_SCALES else self.point

    def log_interval(self) -> tuple[float, float]:
        if self.scale in RATIO_SCALES:
            return math.log(self.lower), math.log(self.upper)
        return self.lower, self.upper


def _wald(subgroup, scale, log_point, se, n, converged, label):
    lo, hi = log_point - _Z95 * se, log_point + _Z95 * se
    if scale in RATIO_SCALES:
        point, lo, hi = math.exp(log_point), math.exp(lo), math.exp(hi)
    else:
        point = log_point
    return FrequentistEstimate(
        subgroup=subgroup, scale=scale, point=point, se=se, lower=lo, upper=hi,
        n_subjects=n, converged=converged, estimator_label=label,
    )


def _nonconverged(subgroup, scale, n, label, log_point=0.0):
    point = math.exp(log_point) if scale in RATIO_SCALES else log_point
    lo, hi = (0.0, math.inf) if scale in RATIO_SCALES else (-math.inf, math.inf)
    return FrequentistEstimate(
        subgroup=subgroup, scale=scale, point=point, se=math.inf, lower=lo, upper=hi,
        n_subjects=n, converged=False, estimator_label=label,
    )


def fit_unadjusted(
    dataset: TrialDataset,
    family: str,
    subgroup="population",
    estimator_label: str = "standard",
) -> FrequentistEstimate:
    """Maximum-likelihood treatment effect on one subset, Wald 95% CI.

    ``subgroup`` selects the subset ((variable, level) or "population"); the
    model contains treatment as the sole covariate. Requires both arms in
    the subset, and at least one event for the Cox family.
    """
    if subgroup == "population":
        data = dataset
    else:
        data = dataset.subset(dataset.subgroup_mask(*subgroup))
    z = data.treatment
    n = z.shape[0]
    if z.min() == z.max():
        raise ConfigurationError(f"subset {subgroup!r} contains a single arm")
    scale = EFFECT_SCALES[family]
    ep = data.endpoint

    if family == "gaussian":
        if not isinstance(ep, ContinuousEndpoint):
            raise ConfigurationError("gaussian family requires a continuous endpoint")
        y = ep.y
        y1, y0 = y[z == 1], y[z == 0]
        n1, n0 = y1.size, y0.size
        diff = float(y1.mean() - y0.mean())
        if n1 < 2 or n0 < 2:
            return _nonconverged(subgroup, scale, n, estimator_label, diff)
        sp2 = ((n1 - 1) * y1.var(ddof=1) + (n0 - 1) * y0.var(ddof=1)) / (n1 + n0 - 2)
        se = math.sqrt(sp2 * (1.0 / n1 + 1.0 / n0))
        return _wald(subgroup, scale, diff, se, n, True, estimator_label)

    if family == "bernoulli_logit":
        if not isinstance(ep, BinaryEndpoint):
            raise ConfigurationError("bernoulli_logit family requires a binary endpoint")
        return _fit_logistic(subgroup, ep.y, z, n, estimator_label)

    if family == "negative_binomial":
        if not isinstance(ep, CountEndpoint):
            raise ConfigurationError("negative_binomial family requires a count endpoint")
        offset = np.zeros(n) if ep.exposure is None else np.log(ep.exposure)
        return _fit_negbin(subgroup, ep.y, z, offset, n, estimator_label)

    if family == "cox_mspline":
        if not isinstance(ep, SurvivalEndpoint):
            raise ConfigurationError("cox family requires a survival endpoint")
        if ep.event.sum() < 1:
            raise ConfigurationError(f"subset {subgroup!r} has no events")
        return _fit_cox_partial(subgroup, ep.time, ep.event, z, n, estimator_label)

    raise ConfigurationError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# per-family MLEs
# ---------------------------------------------------------------------------


def _fit_logistic(subgroup, y, z, n, label):
    scale = "odds_ratio"
    # saturated 2x2 table: closed form, and the zero-cell check
    a = float(np.sum((z == 1) & (y == 1)))
    b = float(np.sum((z == 1) & (y == 0)))
    c = float(np.sum((z == 0) & (y == 1)))
    d = float(np.sum((z == 0) & (y == 0)))
    if min(a, b, c, d) == 0.0:
        # zero cell: report the Haldane-corrected point, flagged, infinite CI
        haldane = math.log((a + 0.5) * (d + 0.5) / ((b + 0.5) * (c + 0.5)))
        return _nonconverged(subgroup, scale, n, label, haldane)
    x = np.column_stack([np.ones(n), z])
    beta = np.zeros(2)
    for _ in range(100):
        p = expit(x @ beta)
        w = p * (1.0 - p)
        grad = x.T @ (y - p)
        info = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            return _nonconverged(subgroup, scale, n, label)
        beta = beta + step
        if np.max(np.abs(grad)) < 1e-10:
            break
    p = expit(x @ beta)
    info = x.T @ (x * (p * (1.0 - p))[:, None])
    cov = np.linalg.inv(info)
    se = math.sqrt(cov[1, 1])
    if not np.isfinite(se) or abs(beta[1]) > 30:
        return _nonconverged(subgroup, scale, n, label)
    return _wald(subgroup, scale, float(beta[1]), se, n, True, label)


def _negbin_loglik_beta(y, x, offset, beta, k):
    mu = np.exp(x @ beta + offset)
    return float(
        np.sum(gammaln(y + k) - gammaln(k) - gammaln(y + 1.0)
               + k * np.log(k / (k + mu)) + y * np.log(mu / (k + mu)))
    )


def _fit_negbin(subgroup, y, z, offset, n, label):
    """Alternating Newton updates for coefficients and bounded shape."""
    scale = "rate_ratio"
    x = np.column_stack([np.ones(n), z])
    if y[z == 1].sum() == 0 or y[z == 0].sum() == 0:
        return _nonconverged(subgroup, scale, n, label)
    beta = np.array([math.log(max(y.mean(), 1e-8)) - offset.mean(), 0.0])
    k = 10.0
    for _ in range(100):
        mu = np.exp(x @ beta + offset)
        grad = x.T @ (y - (y + k) * mu / (k + mu))
        if np.max(np.abs(grad)) < 1e-10:
            break
        # coefficient step at fixed shape (Fisher scoring, damped)
        w = mu * k / (k + mu)
        info = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            return _nonconverged(subgroup, scale, n, label)
        ll0 = _negbin_loglik_beta(y, x, offset, beta, k)
        damp = 1.0
        for _ in range(30):
            cand = beta + damp * step
            if _negbin_loglik_beta(y, x, offset, cand, k) >= ll0 - 1e-12:
                break
            damp /= 2.0
        beta = cand
        # shape step on the log scale, bounded away from degeneracy
        mu = np.exp(x @ beta + offset)
        for _ in range(5):
            u = math.log(k)
            s1 = float(np.sum(digamma(y + k) - digamma(k) + math.log(k) - np.log(k + mu)
                              + 1.0 - (y + k) / (k + mu))) * k
            h = float(np.sum(polygamma(1, y + k) - polygamma(1, k)
                             + 1.0 / k - 2.0 / (k + mu) + (y + k) / (k + mu) ** 2)) * k * k + s1
            if h >= -1e-12:
                u_new = u + math.copysign(0.5, s1)
            else:
                u_new = u - float(np.clip(s1 / h, -2.0, 2.0))
            u_new = min(max(u_new, math.log(1e-4)), math.log(1e6))
            k = math.exp(u_new)
    mu = np.exp(x @ beta + offset)
    w = mu * k / (k + mu)
    info = x.T @ (x * w[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return _nonconverged(subgroup, scale, n, label)
    se = math.sqrt(max(cov[1, 1], 0.0))
    if not np.isfinite(se):
        return _nonconverged(subgroup, scale, n, label)
    return _wald(subgroup, scale, float(beta[1]), se, n, True, label)


def _cox_partial_terms(time, event, z, beta):
    """Breslow partial log-likelihood, gradient, and information (scalar z)."""
    order = np.argsort(-time, kind="stable")  # decreasing time
    zt = z[order]
    tt = time[order]
    dd = event[order]
    e = np.exp(beta * zt)
    cum_e = np.cumsum(e)
    cum_ez = np.cumsum(e * zt)
    cum_ez2 = np.cumsum(e * zt * zt)
    ll = 0.0
    grad = 0.0
    info = 0.0
    i = 0
    n = tt.size
    while i < n:
        j = i
        while j + 1 < n and tt[j + 1] == tt[i]:
            j += 1
        # risk set for time tt[i] is everything up to index j (ties: Breslow)
        d_here = dd[i : j + 1]
        if d_here.any():
            s0 = cum_e[j]
            s1 = cum_ez[j]
            s2 = cum_ez2[j]
            nd = float(d_here.sum())
            zsum = float((zt[i : j + 1] * d_here).sum())
            ll += beta * zsum - nd * math.log(s0)
            grad += zsum - nd * s1 / s0
            info += nd * (s2 / s0 - (s1 / s0) ** 2)
        i = j + 1
    return ll, grad, info


def _fit_cox_partial(subgroup, time, event, z, n, label):
    scale = "average_hazard_ratio"
    # no events in one arm: the partial likelihood is monotone in beta
    if event[z == 1].sum() == 0 or event[z == 0].sum() == 0:
        return _nonconverged(subgroup, scale, n, label)
    beta = 0.0
    ll, grad, info = _cox_partial_terms(time, event, z, beta)
    for _ in range(100):
        if info <= 0:
            return _nonconverged(subgroup, scale, n, label)
        step = grad / info
        damp = 1.0
        for _ in range(30):
            cand = beta + damp * step
            ll_new, g_new, i_new = _cox_partial_terms(time, event, z, cand)
            if ll_new >= ll - 1e-12:
                break
            damp /= 2.0
        beta, ll, grad, info = cand, ll_new, g_new, i_new
        if abs(grad) < 1e-10:
            break
    if abs(beta) > 30 or info <= 0:
        return _nonconverged(subgroup, scale, n, label)
    se = 1.0 / math.sqrt(info)
    return _wald(subgroup, scale, beta, se, n, True, label)


def fit_adjusted_population(dataset: TrialDataset, family: str,
                            estimator_label: str = "population_adjusted") -> FrequentistEstimate:
    """Population treatment effect adjusted for all subgrouping variables.

    Supplementary comparison only (continuous endpoints): ordinary least
    squares on treatment plus dummy-encoded subgrouping variables; the mean
    difference is collapsible, so the coefficient is the marginal effect.
    """
    if family != "gaussian":
        raise ConfigurationError(
            "the covariate-adjusted population estimator is implemented for the "
            "gaussian family only"
        )
    if not isinstance(dataset.endpoint, ContinuousEndpoint):
        raise ConfigurationError("gaussian family requires a continuous endpoint")
    y = dataset.endpoint.y
    n = dataset.n_subjects
    cols = [np.ones(n), dataset.treatment]
    for var, col in dataset.subgroups.items():
        for j in range(1, col.n_levels):
            cols.append((col.codes == j).astype(float))
    x = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    dof = n - x.shape[1]
    if dof < 1:
        return _nonconverged("population", "mean_difference", n, estimator_label)
    s2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.pinv(x.T @ x)
    se = math.sqrt(s2 * xtx_inv[1, 1])
    return _wald("population", "mean_difference", float(beta[1]), se, n, True, estimator_label)


def forest_table_frequentist(
    dataset: TrialDataset,
    family: str,
    estimator_label: str = "standard",
    include_population: bool = True,
) -> list[FrequentistEstimate]:
    """One unadjusted fit per subgroup subset, plus one population fit.

    Failures are recorded per row as non-converged estimates; partial
    results are returned rather than raising.
    """
    rows = []
    for key in dataset.subgroup_keys():
        try:
            rows.append(fit_unadjusted(dataset, family, key, estimator_label))
        except ConfigurationError:
            rows.append(_nonconverged(key, EFFECT_SCALES[family],
                                      int(dataset.subgroup_mask(*key).sum()), estimator_label))
    if include_population:
        rows.append(fit_unadjusted(dataset, family, "population", estimator_label))
    return rows

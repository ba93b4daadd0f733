"""Log-likelihoods and gradients for the four endpoint families.

Each family function takes the linear predictor (already including any
offset) plus family-specific auxiliary parameters, and returns the
log-likelihood together with its gradient pieces: the derivative with
respect to each subject's linear predictor, and derivatives with respect to
the auxiliary parameters on the sampler's unconstrained scale (log sigma,
log shape, log amplitude; simplex weights are handled by the caller).

The ``loglik`` dispatcher provides a single entry point keyed by family
name, used by the posterior composition and by the gradient test-suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, expit, gammaln

from .splines import MSplineBasis

__all__ = [
    "FAMILIES",
    "gaussian_loglik",
    "bernoulli_loglik",
    "negbin_loglik",
    "CoxData",
    "cox_loglik",
    "baseline_cumhaz",
    "baseline_hazard",
    "loglik",
]

FAMILIES = ("gaussian", "bernoulli_logit", "negative_binomial", "cox_mspline")

_LOG_2PI = math.log(2.0 * math.pi)


def gaussian_loglik(lp, y, sigma):
    """Normal likelihood; returns (value, d/dlp, d/dlog_sigma)."""
    r = y - lp
    n = y.size
    ss = float(r @ r)
    inv_var = 1.0 / (sigma * sigma)
    val = -0.5 * n * _LOG_2PI - n * math.log(sigma) - 0.5 * ss * inv_var
    dlp = r * inv_var
    dlogsigma = -n + ss * inv_var
    return float(val), dlp, float(dlogsigma)


def bernoulli_loglik(lp, y):
    """Bernoulli likelihood with logit link; returns (value, d/dlp)."""
    # y*lp - log(1 + exp(lp)), computed stably
    val = float(np.sum(y * lp - np.logaddexp(0.0, lp)))
    return val, y - expit(lp)


def negbin_loglik(lp, y, shape):
    """Negative binomial likelihood, log link, shape parameterization.

    ``lp`` must already include the log-exposure offset. Returns
    (value, d/dlp, d/dlog_shape).
    """
    if np.any(y < 0):
        raise ValueError("negative counts are invalid")
    mu = np.exp(lp)
    k = shape
    val = float(
        np.sum(
            gammaln(y + k)
            - gammaln(k)
            - gammaln(y + 1.0)
            + k * (math.log(k) - np.log(k + mu))
            + y * (lp - np.log(k + mu))
        )
    )
    dlp = y - (y + k) * mu / (k + mu)
    dk = np.sum(
        digamma(y + k) - digamma(k) + math.log(k) - np.log(k + mu) + 1.0 - (y + k) / (k + mu)
    )
    return val, dlp, float(k * dk)


@dataclass(frozen=True)
class CoxData:
    """Precomputed spline evaluations for one survival dataset.

    ``m_ev`` holds M-spline basis rows at the event times only (the hazard
    factor appears just for events); ``i_at_t`` holds I-spline rows at every
    observed time, and censoring times beyond the upper boundary knot use
    the constant-hazard extension of the last interval.
    """

    basis: MSplineBasis
    event: np.ndarray
    m_ev: np.ndarray
    i_at_t: np.ndarray

    @classmethod
    def from_times(cls, basis: MSplineBasis, time, event) -> "CoxData":
        time = np.asarray(time, dtype=float)
        event = np.asarray(event, dtype=float)
        if np.any(time <= 0):
            raise ValueError("survival times must be strictly positive")
        m_ev = np.ascontiguousarray(basis.evaluate(time[event > 0]))
        i = np.ascontiguousarray(_integral_extended(basis, time))
        return cls(basis=basis, event=event, m_ev=m_ev, i_at_t=i)


def _integral_extended(basis: MSplineBasis, t: np.ndarray) -> np.ndarray:
    """I-spline rows with constant-hazard extension beyond the upper knot."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = basis.integral(t)
    beyond = t > basis.upper
    if beyond.any():
        m_hi = basis.evaluate(np.array([basis.upper]))[0]
        out[beyond, :] += np.outer(t[beyond] - basis.upper, m_hi)
    return out


def baseline_hazard(basis: MSplineBasis, amplitude, weights, t) -> np.ndarray:
    """h0(t) = amplitude * sum_m w_m M_m(t); flat beyond the upper knot."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    h = amplitude * (basis.evaluate(np.minimum(t, basis.upper)) @ weights)
    return h


def baseline_cumhaz(basis: MSplineBasis, amplitude, weights, t) -> np.ndarray:
    """H0(t) from the I-splines, linearly extended beyond the upper knot."""
    return amplitude * (_integral_extended(basis, t) @ weights)


def cox_loglik(lp, cox: CoxData, amplitude, weights):
    """Full-likelihood Bayesian Cox model with M-spline baseline hazard.

    h_i(t) = A * (w . M(t)) * exp(lp_i); the contribution of subject i is
    d_i * log h_i(t_i) - H0(t_i) * exp(lp_i). Returns
    (value, d/dlp, d/dlog_amplitude, d/dweights).
    """
    d = cox.event
    elp = np.exp(lp)
    hw_ev = cox.m_ev @ weights  # baseline hazard shape at the event times
    if np.any(hw_ev <= 0.0):
        n = lp.shape[0]
        return -np.inf, np.zeros(n), 0.0, np.zeros_like(weights)
    h_cum = (amplitude * (cox.i_at_t @ weights)) * elp
    n_ev = cox.m_ev.shape[0]
    sum_hcum = float(np.sum(h_cum))
    val = (
        n_ev * math.log(amplitude)
        + float(np.sum(np.log(hw_ev)))
        + float(d @ lp)
        - sum_hcum
    )
    dlp = d - h_cum
    dlog_amp = n_ev - sum_hcum
    dw = cox.m_ev.T @ (1.0 / hw_ev) - amplitude * (cox.i_at_t.T @ elp)
    return float(val), dlp, dlog_amp, dw


def loglik(family, lp, data, aux):
    """Dispatch to a family log-likelihood.

    Parameters
    ----------
    family : one of FAMILIES
    lp : linear predictor per subject (offset already included)
    data : family data - y array, or (y,) for counts, or CoxData
    aux : dict of auxiliary parameters ("sigma", "shape", or
        "amplitude"/"weights")

    Returns
    -------
    (value, d/dlp, aux_grads) where aux_grads is a dict keyed like ``aux``
    with derivatives taken on the log scale for positive scalars.
    """
    if family == "gaussian":
        val, dlp, ds = gaussian_loglik(lp, data, aux["sigma"])
        return val, dlp, {"log_sigma": ds}
    if family == "bernoulli_logit":
        val, dlp = bernoulli_loglik(lp, data)
        return val, dlp, {}
    if family == "negative_binomial":
        val, dlp, dk = negbin_loglik(lp, data, aux["shape"])
        return val, dlp, {"log_shape": dk}
    if family == "cox_mspline":
        val, dlp, da, dw = cox_loglik(lp, data, aux["amplitude"], aux["weights"])
        return val, dlp, {"log_amplitude": da, "weights": dw}
    raise ValueError(f"unknown family {family!r}")

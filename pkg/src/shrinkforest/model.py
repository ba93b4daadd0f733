"""Posterior composition: parameter layout, transforms, and gradients.

A :class:`ShrinkageModel` binds a design, a model spec, and endpoint data
into a single differentiable log-posterior over an unconstrained parameter
vector. Shrunken coefficient blocks use the non-centered parameterization
(beta = scale * raw with standard-normal raws) to avoid funnel geometry at
small hyperparameter scales; positive scale parameters are sampled on the
log scale and the baseline-hazard weights through a stick-breaking map, with
all transform Jacobians included in the log-posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import SurvivalEndpoint, TrialDataset
from .design import (
    SHRUNKEN_PREDICTIVE,
    SHRUNKEN_PROGNOSTIC,
    DesignMatrices,
    ModelSpec,
    build_design,
)
from .likelihoods import CoxData, cox_loglik, bernoulli_loglik, gaussian_loglik, negbin_loglik
from .priors import (
    NormalHN,
    RegularizedHorseshoe,
    half_cauchy_logpdf,
    half_normal_logpdf,
    half_student_t_logpdf,
    inv_gamma_logpdf,
)
from .splines import build_mspline_basis

__all__ = ["ShrinkageModel", "stick_breaking", "stick_breaking_pullback"]

_NEG_INF = float("-inf")
_LOG_2PI = math.log(2.0 * math.pi)


def stick_breaking(y):
    """Map an unconstrained vector of length M-1 to a simplex of length M.

    Returns (weights, sticks, log_jacobian). Zero input maps to the uniform
    simplex.
    """
    m = y.size + 1
    w = np.empty(m)
    z = np.empty(y.size)
    rem = 1.0
    logj = 0.0
    for k in range(y.size):
        zk = expit(y[k] - math.log(m - 1 - k))
        z[k] = zk
        w[k] = rem * zk
        if not 0.0 < zk < 1.0 or w[k] <= 0.0 or rem <= 0.0:
            return w, z, _NEG_INF
        logj += math.log(zk) + math.log1p(-zk) + math.log(rem)
        rem -= w[k]
    w[-1] = rem
    if rem <= 0.0:
        return w, z, _NEG_INF
    return w, z, logj


def stick_breaking_pullback(dw, w, z):
    """Pull a gradient w.r.t. simplex weights back to the unconstrained sticks.

    Includes the gradient of the stick-breaking log-Jacobian, so the caller
    should pass only the likelihood/prior gradient w.r.t. the weights.
    """
    m = w.size
    tail = np.cumsum((dw * w)[::-1])[::-1]  # tail[k] = sum_{j>=k} dw_j w_j
    dy = np.empty(m - 1)
    for k in range(m - 1):
        dy[k] = (1.0 - z[k]) * w[k] * dw[k] - z[k] * tail[k + 1]
        dy[k] += 1.0 - (m - k) * z[k]  # log-Jacobian gradient
    return dy


@dataclass(frozen=True)
class _Layout:
    n_cols: int
    idx_prog_tau: int | None
    idx_pred_tau: int | None
    sl_pred_lambda: slice | None
    idx_pred_c2: int | None
    idx_sigma: int | None
    idx_shape: int | None
    idx_amplitude: int | None
    sl_sticks: slice | None
    dim: int


class ShrinkageModel:
    """Differentiable log-posterior for one trial and model specification."""

    def __init__(self, dataset: TrialDataset, spec: ModelSpec, design: DesignMatrices | None = None):
        self.dataset = dataset
        self.spec = spec
        self.design = design if design is not None else build_design(dataset, spec)
        self._x = np.ascontiguousarray(self.design.matrix())
        self._xt = np.ascontiguousarray(self._x.T)
        groups = self.design.groups()
        self._is_pred = groups == SHRUNKEN_PREDICTIVE
        self._is_prog = groups == SHRUNKEN_PROGNOSTIC
        self._pred_idx = np.flatnonzero(self._is_pred)
        self._prog_idx = np.flatnonzero(self._is_prog)
        if self._pred_idx.size == 0:
            raise ValueError("model has no shrunken predictive terms")
        if self._prog_idx.size and not isinstance(spec.prior.prognostic, NormalHN):
            raise ValueError("shrunken prognostic terms need a NormalHN prognostic prior")

        ep = dataset.endpoint
        self._offset = self.design.offset
        if isinstance(ep, SurvivalEndpoint):
            if spec.family != "cox_mspline":
                raise ValueError("survival endpoint requires the cox_mspline family")
            events = ep.time[ep.event > 0]
            self.basis = build_mspline_basis(events)
            self._cox = CoxData.from_times(self.basis, ep.time, ep.event)
            self._y = None
        else:
            self.basis = None
            self._cox = None
            self._y = ep.y.astype(float)

        self._sigma_scale = spec.prior.sigma_scale
        if spec.family == "gaussian" and self._sigma_scale is None:
            mad = float(np.median(np.abs(self._y - np.median(self._y)))) * 1.4826
            self._sigma_scale = max(2.5, 2.5 * mad)

        pred = spec.prior.predictive
        if isinstance(pred, NormalHN):
            centered = pred.centered
            if centered is None:
                from .design import OneWay

                centered = isinstance(spec.mode, OneWay)
            self._pred_centered = centered
        else:
            self._pred_centered = False

        self._layout = self._build_layout()
        self.dim = self._layout.dim
        self.constrained_names = self._constrained_names()
        self._mult_template = np.ones(self._layout.n_cols)

    # ------------------------------------------------------------------
    # layout
    # ------------------------------------------------------------------
    def _build_layout(self) -> _Layout:
        n_cols = self.design.n_columns
        pos = n_cols
        idx_prog_tau = None
        if self._prog_idx.size:
            idx_prog_tau = pos
            pos += 1
        pred = self.spec.prior.predictive
        idx_pred_tau = pos
        pos += 1
        sl_pred_lambda = None
        idx_pred_c2 = None
        if isinstance(pred, RegularizedHorseshoe):
            sl_pred_lambda = slice(pos, pos + self._pred_idx.size)
            pos += self._pred_idx.size
            idx_pred_c2 = pos
            pos += 1
        idx_sigma = idx_shape = idx_amplitude = None
        sl_sticks = None
        fam = self.spec.family
        if fam == "gaussian":
            idx_sigma = pos
            pos += 1
        elif fam == "negative_binomial":
            idx_shape = pos
            pos += 1
        elif fam == "cox_mspline":
            idx_amplitude = pos
            pos += 1
            m = self.basis.n_basis
            sl_sticks = slice(pos, pos + m - 1)
            pos += m - 1
        return _Layout(
            n_cols=n_cols,
            idx_prog_tau=idx_prog_tau,
            idx_pred_tau=idx_pred_tau,
            sl_pred_lambda=sl_pred_lambda,
            idx_pred_c2=idx_pred_c2,
            idx_sigma=idx_sigma,
            idx_shape=idx_shape,
            idx_amplitude=idx_amplitude,
            sl_sticks=sl_sticks,
            dim=pos,
        )

    def _constrained_names(self) -> list[str]:
        names = list(self.design.column_names())
        lay = self._layout
        if lay.idx_prog_tau is not None:
            names.append("tau_prognostic")
        names.append("tau")
        if lay.sl_pred_lambda is not None:
            for i in self._pred_idx:
                names.append(f"lambda[{self.design.columns[i].name}]")
            names.append("c2")
        if lay.idx_sigma is not None:
            names.append("sigma")
        if lay.idx_shape is not None:
            names.append("shape")
        if lay.idx_amplitude is not None:
            names.append("baseline_amplitude")
            names += [f"baseline_w[{m + 1}]" for m in range(self.basis.n_basis)]
        return names

    @property
    def n_coef(self) -> int:
        return self._layout.n_cols

    # ------------------------------------------------------------------
    # transforms
    # ------------------------------------------------------------------
    def _coef_multipliers(self, q):
        """Per-column multiplier turning raw slots into constrained coefficients."""
        lay = self._layout
        mult = self._mult_template.copy()
        extra = {}
        if self._prog_idx.size:
            tau_p = math.exp(q[lay.idx_prog_tau])
            mult[self._prog_idx] = tau_p
            extra["tau_prog"] = tau_p
        tau = math.exp(q[lay.idx_pred_tau])
        extra["tau"] = tau
        if lay.sl_pred_lambda is not None:
            lam = np.exp(q[lay.sl_pred_lambda])
            c2 = math.exp(q[lay.idx_pred_c2])
            g = tau * lam
            denom = np.sqrt(c2 + g**2)
            mult[self._pred_idx] = math.sqrt(c2) * g / denom
            extra.update(lam=lam, c2=c2, g=g, denom=denom)
        elif not self._pred_centered:
            mult[self._pred_idx] = tau
        return mult, extra

    def constrain(self, q) -> np.ndarray:
        """Map an unconstrained vector to the reported constrained scale."""
        lay = self._layout
        mult, extra = self._coef_multipliers(q)
        out = [q[: lay.n_cols] * mult]
        if lay.idx_prog_tau is not None:
            out.append([extra["tau_prog"]])
        out.append([extra["tau"]])
        if lay.sl_pred_lambda is not None:
            out.append(extra["lam"])
            out.append([extra["c2"]])
        if lay.idx_sigma is not None:
            out.append([math.exp(q[lay.idx_sigma])])
        if lay.idx_shape is not None:
            out.append([math.exp(q[lay.idx_shape])])
        if lay.idx_amplitude is not None:
            out.append([math.exp(q[lay.idx_amplitude])])
            w, _, _ = stick_breaking(q[lay.sl_sticks])
            out.append(w)
        return np.concatenate([np.atleast_1d(np.asarray(o, dtype=float)) for o in out])

    def initial_value(self, rng) -> np.ndarray:
        """Random initial point with finite posterior density."""
        lay = self._layout
        for attempt in range(100):
            scale = 0.5 * 0.8**attempt
            q = np.zeros(self.dim)
            q[: lay.n_cols] = rng.uniform(-1.0, 1.0, lay.n_cols) * scale
            if lay.idx_prog_tau is not None:
                q[lay.idx_prog_tau] = rng.uniform(-2.0, 0.0)
            q[lay.idx_pred_tau] = rng.uniform(-2.0, 0.0)
            if lay.sl_pred_lambda is not None:
                q[lay.sl_pred_lambda] = rng.uniform(-1.0, 1.0, self._pred_idx.size) * scale
                q[lay.idx_pred_c2] = rng.uniform(-0.5, 1.5)
            if lay.idx_sigma is not None:
                q[lay.idx_sigma] = math.log(max(np.std(self._y), 1e-3)) + rng.uniform(-0.3, 0.3)
            if lay.idx_shape is not None:
                q[lay.idx_shape] = rng.uniform(-0.5, 0.5)
            if lay.idx_amplitude is not None:
                w0 = np.full(self.basis.n_basis, 1.0 / self.basis.n_basis)
                crude = np.sum(self._cox.event) / max(np.sum(self._cox.i_at_t @ w0), 1e-12)
                q[lay.idx_amplitude] = math.log(crude) + rng.uniform(-0.3, 0.3)
                q[lay.sl_sticks] = rng.uniform(-0.2, 0.2, self.basis.n_basis - 1)
            val, _ = self.log_posterior(q)
            if np.isfinite(val):
                return q
        raise RuntimeError("could not find a finite initial point")

    # ------------------------------------------------------------------
    # log posterior
    # ------------------------------------------------------------------
    def log_posterior(self, q):
        """Log-posterior density (up to a constant) and its gradient."""
        lay = self._layout
        grad = np.zeros(self.dim)
        # reject absurd points before exp/expit can overflow (NaN fails the <=)
        qmax = float(np.abs(q).max())
        if not qmax <= 300.0:
            return _NEG_INF, grad
        mult, extra = self._coef_multipliers(q)
        raws = q[: lay.n_cols]
        coefs = raws * mult
        lp = self._x @ coefs
        if self._offset is not None:
            lp = lp + self._offset

        fam = self.spec.family
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if fam == "gaussian":
                sigma = math.exp(q[lay.idx_sigma])
                val, dlp, dlogsigma = gaussian_loglik(lp, self._y, sigma)
            elif fam == "bernoulli_logit":
                val, dlp = bernoulli_loglik(lp, self._y)
            elif fam == "negative_binomial":
                shape = math.exp(q[lay.idx_shape])
                val, dlp, dlogshape = negbin_loglik(lp, self._y, shape)
            else:
                amplitude = math.exp(q[lay.idx_amplitude])
                w, z, logj = stick_breaking(q[lay.sl_sticks])
                if not np.isfinite(logj):
                    return _NEG_INF, grad
                val, dlp, dlogamp, dw = cox_loglik(lp, self._cox, amplitude, w)
        if not np.isfinite(val):
            return _NEG_INF, grad

        g_coef = self._xt @ dlp
        grad[: lay.n_cols] = g_coef * mult

        # shrunken blocks: raws carry either the coefficients themselves
        # (centered) or standard-normal multipliers (non-centered)
        pred = self.spec.prior.predictive
        pr = raws[self._pred_idx]
        tau = extra["tau"]
        g_pred = g_coef[self._pred_idx]
        if isinstance(pred, NormalHN) and self._pred_centered:
            k = pr.size
            ss = float(pr @ pr)
            val += -0.5 * k * _LOG_2PI - k * math.log(tau) - 0.5 * ss / tau**2
            grad[self._pred_idx] += -pr / tau**2
            hn, dhn = half_normal_logpdf(tau, pred.phi)
            val += hn + math.log(tau)
            grad[lay.idx_pred_tau] = -k + ss / tau**2 + tau * dhn + 1.0
        elif isinstance(pred, NormalHN):
            val += -0.5 * float(pr @ pr)
            grad[self._pred_idx] += -pr
            hn, dhn = half_normal_logpdf(tau, pred.phi)
            val += hn + math.log(tau)
            # d beta_k / d log tau = beta_k
            grad[lay.idx_pred_tau] = float(g_pred @ (pr * tau)) + tau * dhn + 1.0
        else:
            val += -0.5 * float(pr @ pr)
            grad[self._pred_idx] += -pr
            lam, c2, g, denom = extra["lam"], extra["c2"], extra["g"], extra["denom"]
            c = math.sqrt(c2)
            dm_dlog = g * c2 * c / denom**3  # d(tau*lambda_tilde)/d log tau = d/d log lambda_k
            dm_dlogc2 = 0.5 * c * g**3 / denom**3
            hc_t, dhc_t = half_cauchy_logpdf(tau, pred.tau0)
            val += hc_t + math.log(tau)
            grad[lay.idx_pred_tau] = float(g_pred @ (pr * dm_dlog)) + tau * dhc_t + 1.0
            hc_l, dhc_l = half_cauchy_logpdf(lam, 1.0)
            val += float(np.sum(hc_l)) + float(np.sum(np.log(lam)))
            grad[lay.sl_pred_lambda] = g_pred * pr * dm_dlog + lam * dhc_l + 1.0
            a, b = pred.slab_df / 2.0, pred.slab_df * pred.slab_scale**2 / 2.0
            ig, dig = inv_gamma_logpdf(c2, a, b)
            val += ig + math.log(c2)
            grad[lay.idx_pred_c2] = float(g_pred @ (pr * dm_dlogc2)) + c2 * dig + 1.0

        if self._prog_idx.size:
            prog_prior = self.spec.prior.prognostic
            rawp = raws[self._prog_idx]
            val += -0.5 * float(rawp @ rawp)
            grad[self._prog_idx] += -rawp
            tau_p = extra["tau_prog"]
            hn, dhn = half_normal_logpdf(tau_p, prog_prior.phi)
            val += hn + math.log(tau_p)
            grad[lay.idx_prog_tau] = (
                float(g_coef[self._prog_idx] @ (rawp * tau_p)) + tau_p * dhn + 1.0
            )

        # auxiliary parameters
        if fam == "gaussian":
            ht, dht = half_student_t_logpdf(sigma, 3.0, self._sigma_scale)
            val += ht + q[lay.idx_sigma]
            grad[lay.idx_sigma] = dlogsigma + sigma * dht + 1.0
        elif fam == "negative_binomial":
            # half-Student-t(3, 0, shape_scale) on 1/sqrt(shape)
            inv_sqrt = math.exp(-0.5 * q[lay.idx_shape])
            ht, dht = half_student_t_logpdf(inv_sqrt, 3.0, self.spec.prior.shape_scale)
            val += ht + math.log(inv_sqrt / 2.0)
            grad[lay.idx_shape] = dlogshape - 0.5 * inv_sqrt * dht - 0.5
        elif fam == "cox_mspline":
            ht, dht = half_student_t_logpdf(amplitude, 3.0, self.spec.prior.amplitude_scale)
            val += ht + q[lay.idx_amplitude]
            grad[lay.idx_amplitude] = dlogamp + amplitude * dht + 1.0
            # Dirichlet(1,...,1) is constant on the simplex: only the
            # stick-breaking Jacobian contributes
            val += logj
            grad[lay.sl_sticks] = stick_breaking_pullback(dw, w, z)

        if not np.isfinite(val):
            return _NEG_INF, np.zeros(self.dim)
        return float(val), grad

    # convenience for tests and composition checks
    def __call__(self, q):
        return self.log_posterior(q)

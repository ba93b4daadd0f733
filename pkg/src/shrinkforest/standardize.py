"""G-computation: marginal subgroup treatment effects from a fitted model.

For every posterior draw, each subject's outcome is predicted twice - once
with treatment forced to control, once to intervention - predictions are
averaged over the subjects of a subgroup (from both randomized arms), and
the two averages are contrasted on the family's effect scale: mean
difference, odds ratio of averaged probabilities, ratio of averaged rates,
or average hazard ratio of the marginal survival curves. Draw-level effects
are summarized by the posterior median and the 2.5% / 97.5% quantiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .dataset import ConfigurationError
from .design import linear_predictor
from .engine import FittedModel

__all__ = [
    "SubgroupEffect",
    "EFFECT_SCALES",
    "standardized_effect",
    "marginal_survival",
    "average_hazard_ratio",
    "forest_table",
    "effects_to_csv",
    "effects_to_json",
]

EFFECT_SCALES = {
    "gaussian": "mean_difference",
    "bernoulli_logit": "odds_ratio",
    "negative_binomial": "rate_ratio",
    "cox_mspline": "average_hazard_ratio",
}

RATIO_SCALES = {"odds_ratio", "rate_ratio", "average_hazard_ratio"}


@dataclass(frozen=True)
class SubgroupEffect:
    """Marginal treatment effect for one subgroup (or the full population)."""

    subgroup: tuple[str, str] | str  # (variable, level) or "population"
    scale: str
    point: float
    lower: float
    upper: float
    n_subjects: int
    estimator_label: str = "shrinkage"
    draws: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.scale in RATIO_SCALES and np.isfinite(self.point) and self.point <= 0:
            raise ValueError(f"{self.scale} must be strictly positive")

    @property
    def label(self) -> str:
        if self.subgroup == "population":
            return "population"
        return f"{self.subgroup[0]}={self.subgroup[1]}"

    def log_point(self) -> float:
        """Point estimate on the modeling scale (log for ratio measures)."""
        return float(np.log(self.point)) if self.scale in RATIO_SCALES else self.point

    def log_interval(self) -> tuple[float, float]:
        if self.scale in RATIO_SCALES:
            return float(np.log(self.lower)), float(np.log(self.upper))
        return self.lower, self.upper


def _subgroup_mask(fit: FittedModel, subgroup) -> np.ndarray:
    if subgroup == "population":
        return np.ones(fit.dataset.n_subjects, dtype=bool)
    var, level = subgroup
    mask = fit.dataset.subgroup_mask(var, level)
    if not mask.any():
        raise ConfigurationError(f"subgroup {var}={level!r} is empty")
    return mask


def _summarize(subgroup, scale, eff_draws, n, label, keep_draws, quantile_span=0.95):
    lo_q = (1.0 - quantile_span) / 2.0
    point = float(np.median(eff_draws))
    lower = float(np.quantile(eff_draws, lo_q))
    upper = float(np.quantile(eff_draws, 1.0 - lo_q))
    return SubgroupEffect(
        subgroup=subgroup,
        scale=scale,
        point=point,
        lower=lower,
        upper=upper,
        n_subjects=int(n),
        estimator_label=label,
        draws=eff_draws if keep_draws else None,
    )


def _cox_time_grid(fit: FittedModel, grid_size: int | None) -> np.ndarray:
    ep = fit.dataset.endpoint
    tau_max = float(np.max(ep.time[ep.event > 0]))
    events = np.unique(ep.time[(ep.event > 0) & (ep.time <= tau_max)])
    n_extra = 512 if grid_size is None else int(grid_size)
    grid = np.union1d(events, np.linspace(0.0, tau_max, n_extra))
    return grid


def _draw_indices(n_total: int, max_draws: int | None) -> np.ndarray:
    if max_draws is None or max_draws >= n_total:
        return np.arange(n_total)
    return np.unique(np.linspace(0, n_total - 1, int(max_draws)).astype(int))


def standardized_effect(
    fit: FittedModel,
    subgroup,
    estimator_label: str = "shrinkage",
    keep_draws: bool = False,
    quantile_span: float = 0.95,
    grid_size: int | None = None,
    max_draws: int | None = None,
    _cache: dict | None = None,
) -> SubgroupEffect:
    """Standardized (G-computation) treatment effect for one subgroup.

    ``subgroup`` is a (variable, level) pair or the string "population".
    ``grid_size`` overrides the number of equally spaced points added to the
    survival-curve integration grid (default 512, plus observed event times);
    ``max_draws`` thins the posterior draws evenly before prediction, a
    cost control for large simulation campaigns.
    """
    mask = _subgroup_mask(fit, subgroup)
    scale = EFFECT_SCALES[fit.spec.family]
    cache = _cache if _cache is not None else {}
    if fit.spec.family == "cox_mspline":
        grid = _cox_time_grid(fit, grid_size)
        masks = mask[None, :].astype(float)
        s_ctrl = _avg_survival(fit, 0, grid, masks, max_draws, cache)[:, 0, :]
        s_trt = _avg_survival(fit, 1, grid, masks, max_draws, cache)[:, 0, :]
        eff = average_hazard_ratio(s_ctrl, s_trt)
    else:
        lp0, lp1 = _lp_pair(fit, max_draws, cache)
        if fit.spec.family == "gaussian":
            eff = lp1[:, mask].mean(axis=1) - lp0[:, mask].mean(axis=1)
        elif fit.spec.family == "bernoulli_logit":
            p0 = expit(lp0[:, mask]).mean(axis=1)
            p1 = expit(lp1[:, mask]).mean(axis=1)
            eff = (p1 / (1.0 - p1)) / (p0 / (1.0 - p0))
        else:
            m0 = np.exp(lp0[:, mask]).mean(axis=1)
            m1 = np.exp(lp1[:, mask]).mean(axis=1)
            eff = m1 / m0
    return _summarize(subgroup, scale, eff, mask.sum(), estimator_label, keep_draws, quantile_span)


def _lp_pair(fit: FittedModel, max_draws, cache: dict):
    if "lp" not in cache:
        coefs = fit.coefficient_draws()
        coefs = coefs[_draw_indices(coefs.shape[0], max_draws)]
        cache["lp"] = (
            linear_predictor(fit.design, coefs, treatment_override=0),
            linear_predictor(fit.design, coefs, treatment_override=1),
        )
    return cache["lp"]


def marginal_survival(
    fit: FittedModel,
    subgroup,
    arm: int,
    time_grid=None,
    grid_size: int | None = None,
    max_draws: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Marginal survival curve draws for one subgroup and hypothetical arm.

    Returns (grid, curves) where ``curves`` has one row per posterior draw:
    the within-subgroup average of exp(-H0(t) * exp(lp_i)) over the subgroup's
    subjects from both randomized arms. Times beyond the upper boundary knot
    use the constant-hazard extension of the last interval.
    """
    if fit.spec.family != "cox_mspline":
        raise ConfigurationError("marginal survival curves require the cox_mspline family")
    mask = _subgroup_mask(fit, subgroup)
    grid = np.asarray(time_grid, dtype=float) if time_grid is not None else _cox_time_grid(fit, grid_size)
    if np.any(grid < 0):
        raise ValueError("time grid must be non-negative")
    curves = _avg_survival(fit, arm, grid, mask[None, :].astype(float), max_draws, {})
    return grid, curves[:, 0, :]


def _avg_survival(fit: FittedModel, arm, grid, masks, max_draws, cache):
    """Subgroup-averaged survival curves: (draws, n_masks, grid).

    ``masks`` is an (m, n) 0/1 matrix; rows are normalized to subject counts
    internally. Curves are aggregated draw by draw to bound memory.
    """
    key = ("surv", int(arm), masks.shape, grid.shape[0], float(grid[-1]))
    if key in cache:
        return cache[key]
    model = fit.model
    idx = _draw_indices(fit.draws.draws.shape[0], max_draws)
    coefs = fit.coefficient_draws()[idx]
    lp = linear_predictor(fit.design, coefs, treatment_override=arm)  # (D, n)
    names = fit.draws.names
    amp = fit.draws.draws[idx, names.index("baseline_amplitude")]
    w_idx = [i for i, nm in enumerate(names) if nm.startswith("baseline_w[")]
    weights = fit.draws.draws[np.ix_(idx, w_idx)]  # (D, M)
    ibasis = model.basis.integral(grid)  # (G, M), no extension
    beyond = grid > model.basis.upper
    if beyond.any():
        m_hi = model.basis.evaluate(np.array([model.basis.upper]))[0]
        ibasis = ibasis + np.where(beyond[:, None], (grid - model.basis.upper)[:, None] * m_hi, 0.0)
    h0 = amp[:, None] * (weights @ ibasis.T)  # (D, G)
    norm = masks / masks.sum(axis=1, keepdims=True)
    elp = np.exp(lp)
    out = np.empty((idx.size, masks.shape[0], grid.size))
    for d in range(idx.size):
        s = np.exp(-np.outer(elp[d], h0[d]))  # (n, G)
        out[d] = norm @ s
    cache[key] = out
    return out


def average_hazard_ratio(s_ctrl, s_trt, grid=None) -> np.ndarray | float:
    """Average hazard ratio of two survival curves (odds-of-concordance form).

    AHR = [int S_ctrl dF_trt] / [int S_trt dF_ctrl] over the common grid,
    evaluated by trapezoidal Riemann-Stieltjes sums; under proportional
    hazards this recovers the hazard ratio of the intervention arm versus
    control. Curves must be nonincreasing and start at 1. Accepts single
    curves or (draws, grid) matrices; identical curves give AHR = 1.
    """
    if isinstance(s_ctrl, tuple):  # (grid, curves) from marginal_survival
        grid_c, s_ctrl = s_ctrl
        grid_t, s_trt = s_trt
        if not np.array_equal(grid_c, grid_t):
            raise ValueError("survival curves are on different grids")
    was_1d = np.ndim(s_ctrl) == 1
    s_ctrl = np.atleast_2d(np.asarray(s_ctrl, dtype=float))
    s_trt = np.atleast_2d(np.asarray(s_trt, dtype=float))
    if s_ctrl.shape != s_trt.shape:
        raise ValueError("survival curves have different shapes")
    for s in (s_ctrl, s_trt):
        if np.any(np.diff(s, axis=1) > 1e-9):
            raise ValueError("survival curves must be nonincreasing")

    def stieltjes(f, g):
        # int f dG with trapezoidal f between grid points; dF = -dS
        fmid = 0.5 * (f[:, 1:] + f[:, :-1])
        return -(fmid * np.diff(g, axis=1)).sum(axis=1)

    num = stieltjes(s_ctrl, s_trt)
    den = stieltjes(s_trt, s_ctrl)
    ahr = np.empty_like(num)
    ok = (num > 0) & (den > 0)
    ahr[ok] = num[ok] / den[ok]
    # flat curves (no event mass in the window) on both arms: equal risk
    both_flat = (num <= 0) & (den <= 0)
    ahr[both_flat] = 1.0
    rest = ~ok & ~both_flat
    ahr[rest] = np.where(num[rest] > 0, np.inf, 0.0)
    return float(ahr[0]) if was_1d else ahr


def forest_table(
    fit: FittedModel,
    estimator_label: str = "shrinkage",
    include_population: bool = True,
    keep_draws: bool = False,
    grid_size: int | None = None,
    max_draws: int | None = None,
    quantile_span: float = 0.95,
    subgroups=None,
) -> list[SubgroupEffect]:
    """One standardized effect per subgroup level, plus a population row.

    ``subgroups`` restricts the table to the given (variable, level) keys;
    the default covers every subgroup of every subgrouping variable.
    """
    subgroups = list(fit.dataset.subgroup_keys() if subgroups is None else subgroups)
    if include_population:
        subgroups.append("population")
    if fit.spec.family == "cox_mspline":
        # one pass per arm over the draws, all subgroups aggregated together
        grid = _cox_time_grid(fit, grid_size)
        masks = np.stack([_subgroup_mask(fit, s).astype(float) for s in subgroups])
        cache: dict = {}
        s_ctrl = _avg_survival(fit, 0, grid, masks, max_draws, cache)
        s_trt = _avg_survival(fit, 1, grid, masks, max_draws, cache)
        rows = []
        for j, sg in enumerate(subgroups):
            eff = average_hazard_ratio(s_ctrl[:, j, :], s_trt[:, j, :])
            rows.append(
                _summarize(
                    sg, EFFECT_SCALES[fit.spec.family], eff, masks[j].sum(),
                    estimator_label, keep_draws, quantile_span,
                )
            )
        return rows
    cache = {}
    return [
        standardized_effect(
            fit, sg, estimator_label, keep_draws=keep_draws, grid_size=grid_size,
            max_draws=max_draws, quantile_span=quantile_span, _cache=cache,
        )
        for sg in subgroups
    ]


def effects_to_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("subgroup,n,scale,point,lower,upper,estimator_label\n")
        for r in rows:
            fh.write(
                f"{r.label},{r.n_subjects},{r.scale},{r.point:.10g},"
                f"{r.lower:.10g},{r.upper:.10g},{r.estimator_label}\n"
            )


def effects_to_json(rows, path=None):
    payload = [
        {
            "subgroup": r.label,
            "n": r.n_subjects,
            "scale": r.scale,
            "point": r.point,
            "lower": r.lower,
            "upper": r.upper,
            "estimator_label": r.estimator_label,
        }
        for r in rows
    ]
    if path is None:
        return json.dumps(payload, indent=2, sort_keys=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return None

import math

import numpy as np
import pytest
from scipy.special import expit

from shrinkforest.baselines import fit_unadjusted, forest_table_frequentist
from shrinkforest.dataset import (
    BinaryEndpoint,
    Categorical,
    ConfigurationError,
    ContinuousEndpoint,
    CountEndpoint,
    SurvivalEndpoint,
    TrialDataset,
)

from conftest import make_trial


def test_gaussian_point_is_difference_in_arm_means():
    ds = make_trial("gaussian", n=100, seed=3)
    est = fit_unadjusted(ds, "gaussian")
    y, z = ds.endpoint.y, ds.treatment
    assert est.point == pytest.approx(y[z == 1].mean() - y[z == 0].mean(), abs=1e-14)
    assert est.converged
    assert est.lower <= est.point <= est.upper


def test_bernoulli_matches_two_by_two_closed_form(rng):
    for seed in range(5):
        r = np.random.default_rng(seed)
        n = 120
        z = np.tile([0.0, 1.0], n // 2)
        y = (r.random(n) < expit(-0.4 + 0.8 * z)).astype(float)
        a = float(((z == 1) & (y == 1)).sum())
        b = float(((z == 1) & (y == 0)).sum())
        c = float(((z == 0) & (y == 1)).sum())
        d = float(((z == 0) & (y == 0)).sum())
        if min(a, b, c, d) == 0:
            continue
        ds = TrialDataset(z, {"g": Categorical.from_values(r.choice(["x", "y"], n))}, BinaryEndpoint(y))
        est = fit_unadjusted(ds, "bernoulli_logit")
        assert est.point == pytest.approx(a * d / (b * c), rel=1e-8)
        assert est.se == pytest.approx(math.sqrt(1 / a + 1 / b + 1 / c + 1 / d), rel=1e-8)


def test_cox_recovers_published_hazard_ratio_truth():
    # large-sample exponential PH with true HR 0.66
    rng = np.random.default_rng(0)
    n = 20_000
    z = np.tile([0.0, 1.0], n // 2)
    t = rng.exponential(1.0 / np.exp(math.log(0.66) * z))
    cens = rng.uniform(0.0, 3.0, n)
    ds = TrialDataset(
        z,
        {"g": Categorical.from_values(rng.choice(["a", "b"], n))},
        SurvivalEndpoint(np.minimum(t, cens) + 1e-12, (t <= cens).astype(float)),
    )
    est = fit_unadjusted(ds, "cox_mspline")
    assert abs(math.log(est.point) - math.log(0.66)) < 0.05


def test_negbin_matches_ratio_of_means_without_offset(rng):
    n = 300
    z = np.tile([0.0, 1.0], n // 2)
    y = rng.poisson(np.exp(0.3 + 0.5 * z)).astype(float)
    ds = TrialDataset(z, {"g": Categorical.from_values(rng.choice(["a", "b"], n))}, CountEndpoint(y))
    est = fit_unadjusted(ds, "negative_binomial")
    # treatment-only log link: MLE rate ratio equals the ratio of arm means
    assert math.log(est.point) == pytest.approx(
        math.log(y[z == 1].mean() / y[z == 0].mean()), abs=1e-6
    )
    assert est.converged


def test_converged_fits_have_small_gradient():
    ds = make_trial("bernoulli_logit", n=200, seed=9)
    est = fit_unadjusted(ds, "bernoulli_logit")
    y, z = ds.endpoint.y, ds.treatment
    # recompute the score of the logistic likelihood at the returned point
    b0 = math.log(
        (y[z == 0].mean()) / (1 - y[z == 0].mean())
    )
    beta = np.array([b0, math.log(est.point)])
    x = np.column_stack([np.ones(y.size), z])
    p = expit(x @ beta)
    assert np.linalg.norm(x.T @ (y - p)) < 1e-8

    ds2 = make_trial("cox_mspline", n=150, seed=4)
    est2 = fit_unadjusted(ds2, "cox_mspline")
    from shrinkforest.baselines import _cox_partial_terms

    _, grad, _ = _cox_partial_terms(
        ds2.endpoint.time, ds2.endpoint.event, ds2.treatment, math.log(est2.point)
    )
    assert abs(grad) < 1e-8


def test_zero_cell_is_flagged_not_raised():
    n = 40
    z = np.tile([0.0, 1.0], n // 2)
    y = np.where(z == 1, 1.0, (np.arange(n) % 3 == 0).astype(float))  # no z=1 failures
    ds = TrialDataset(z, {"g": Categorical.from_values(["a", "b"] * (n // 2))}, BinaryEndpoint(y))
    est = fit_unadjusted(ds, "bernoulli_logit")
    assert not est.converged
    assert est.se == math.inf
    assert est.lower == 0.0 and est.upper == math.inf


def test_single_arm_subset_errors():
    n = 30
    z = np.array([0.0] * 15 + [1.0] * 15)
    g = Categorical.from_values(["a"] * 15 + ["b"] * 15)
    ds = TrialDataset(z, {"g": g}, ContinuousEndpoint(np.zeros(n)))
    with pytest.raises(ConfigurationError, match="single arm"):
        fit_unadjusted(ds, "gaussian", ("g", "a"))


def test_cox_requires_events():
    n = 20
    z = np.tile([0.0, 1.0], n // 2)
    ds = TrialDataset(
        z,
        {"g": Categorical.from_values(["a", "b"] * (n // 2))},
        SurvivalEndpoint(np.ones(n), np.zeros(n)),
    )
    with pytest.raises(ConfigurationError, match="events"):
        fit_unadjusted(ds, "cox_mspline")


def test_forest_table_population_row_and_counts():
    ds = make_trial("gaussian", n=100)
    rows = forest_table_frequentist(ds, "gaussian")
    pop = rows[-1]
    assert pop.subgroup == "population"
    direct = fit_unadjusted(ds, "gaussian", "population")
    assert pop.point == direct.point and pop.se == direct.se
    for var, col in ds.subgroups.items():
        ns = [r.n_subjects for r in rows if r.subgroup != "population" and r.subgroup[0] == var]
        assert sum(ns) == ds.n_subjects


def test_wald_interval_bounds_and_width(rng):
    ds = make_trial("negative_binomial", n=150, seed=8)
    rows = forest_table_frequentist(ds, "negative_binomial")
    for r in rows:
        if r.converged:
            assert r.lower < r.point < r.upper
            assert r.upper - r.lower > 0
            lo, hi = r.log_interval()
            assert lo == pytest.approx(r.log_point() - 1.959963984540054 * r.se, rel=1e-12)
            assert hi == pytest.approx(r.log_point() + 1.959963984540054 * r.se, rel=1e-12)


def test_adjusted_population_estimator_is_supplementary_flag():
    from shrinkforest.baselines import fit_adjusted_population

    ds = make_trial("gaussian", n=200, seed=13)
    adj = fit_adjusted_population(ds, "gaussian")
    una = fit_unadjusted(ds, "gaussian")
    assert adj.converged and adj.subgroup == "population"
    # adjusting for the prognostic subgrouping variables cannot hurt precision
    assert adj.se <= una.se + 1e-9
    # OLS cross-check by hand
    y, z = ds.endpoint.y, ds.treatment
    cols = [np.ones(y.size), z]
    for var, col in ds.subgroups.items():
        for j in range(1, col.n_levels):
            cols.append((col.codes == j).astype(float))
    beta, *_ = np.linalg.lstsq(np.column_stack(cols), y, rcond=None)
    assert adj.point == pytest.approx(float(beta[1]), abs=1e-10)
    with pytest.raises(ConfigurationError):
        fit_adjusted_population(make_trial("bernoulli_logit"), "bernoulli_logit")

"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured quantities.

Criteria 5-8 are scaled-down simulation experiments: they assert orderings
and sign patterns with Monte Carlo margins rather than full-scale table
values. The full-scale tier (n_sim = 100 with estimator-ordering assertions
for the continuous study) runs under ``-m full``; an n_sim = 1000
reproduction is a documented long-running mode driven through the CLI, not
a test.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.special import expit, k0

from shrinkforest.design import GlobalShrinkage, ModelSpec, OneWay
from shrinkforest.engine import SamplerConfig, sample
from shrinkforest.model import ShrinkageModel
from shrinkforest.priors import (
    NormalHN,
    PriorConfig,
    RegularizedHorseshoe,
    log_prior_normal_hn,
    log_prior_reg_horseshoe,
    marginal_prior_quantiles,
)
from shrinkforest.simlab import (
    CONT_DELTA_PLAN,
    CONT_SIGMA_PLAN,
    TTE_DELTA_PLAN,
    SimScenario,
    global_estimator,
    oneway_estimator,
    population_estimator,
    run_campaign,
    standard_estimator,
)
from shrinkforest.standardize import average_hazard_ratio

from conftest import finite_diff_grad, make_trial

N_JOBS = 2


def _report(criterion, passed, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


# ---------------------------------------------------------------------------
# criterion 1: prior calibration against the published quantile table
# ---------------------------------------------------------------------------

_PRIOR_TABLE = [
    ("normal_hn(phi=1) |beta|", NormalHN(1.0), "abs_coef", (0.01, 0.37, 2.18)),
    ("normal_hn(phi=1) |bi-bj|", NormalHN(1.0), "abs_pairwise_diff", (0.02, 0.52, 3.09)),
    ("rhs(tau0=1,s=2,nu=4) |beta|", RegularizedHorseshoe(1.0, 2.0, 4.0), "abs_coef",
     (0.008, 0.42, 3.23)),
    ("rhs(tau0=0.3) |beta|", RegularizedHorseshoe(0.3, 2.0, 4.0), "abs_coef",
     (0.002, 0.16, 2.30)),
    ("rhs(tau0=0.03) |beta|", RegularizedHorseshoe(0.03, 2.0, 4.0), "abs_coef",
     (0.0003, 0.02, 0.68)),
]


def test_criterion_01_prior_calibration():
    """Published quantiles, each within +/-5% relative (+/-0.001 absolute for
    sub-0.01 values) at 1e6 draws, in under a minute.

    Two published entries are 2-decimal roundings whose exact values
    (0.0147 for the hierarchical-normal 5% quantile, 0.0168 for the
    tau0=0.03 horseshoe median) sit outside the stated tolerance of the
    printed numbers; see the companion analytic test below and the decisions
    ledger. They are asserted as stated here and fail honestly.
    """
    t0 = time.time()
    failures = []
    lines = []
    for name, prior, functional, targets in _PRIOR_TABLE:
        est = marginal_prior_quantiles(prior, functional, [0.05, 0.5, 0.95],
                                       n_draws=1_000_000, seed=202)
        for got, want in zip(est, targets):
            if want < 0.01:
                ok = abs(got - want) <= 0.001
                rule = "abs 0.001"
            else:
                ok = abs(got - want) <= 0.05 * want
                rule = "rel 5%"
            lines.append(f"  {name}: got {got:.4g} vs published {want} [{rule}] "
                         f"{'ok' if ok else 'OUT OF TOLERANCE'}")
            if not ok:
                failures.append((name, want, float(got)))
    elapsed = time.time() - t0
    print("\n".join(lines))
    _report(1, not failures and elapsed < 60,
            f"{len(_PRIOR_TABLE) * 3 - len(failures)}/{len(_PRIOR_TABLE) * 3} values in "
            f"tolerance, {elapsed:.1f}s")
    assert elapsed < 60.0
    assert not failures, (
        "published values outside stated tolerance (2-decimal rounding in the "
        f"source table, see decisions ledger): {failures}"
    )


def test_prior_quantiles_match_independent_analytic_oracle():
    """Companion check: the sampler agrees with analytically derived values.

    |beta| under the hierarchical normal is |tau * Z| with tau, Z standard
    normal, whose density is the product-normal 2*K0(x)/pi; its exact 5%
    quantile is 0.01473 (not the published rounding 0.01). The tau0=0.03
    horseshoe median is checked against an independent scipy-based sampler.
    """
    # analytic CDF of |Z1 * Z2| via the Bessel K0 density
    def product_cdf(x):
        val, _ = quad(lambda u: 2.0 / math.pi * k0(u), 1e-12, x, limit=200)
        return val

    assert abs(product_cdf(0.01473) - 0.05) < 2e-4
    est = marginal_prior_quantiles(NormalHN(1.0), "abs_coef", [0.05], n_draws=1_000_000, seed=7)
    assert est[0] == pytest.approx(0.01473, abs=0.0005)

    rng = np.random.default_rng(12345)
    n = 1_000_000
    tau = 0.03 * np.abs(stats.cauchy.rvs(size=n, random_state=rng))
    lam = np.abs(stats.cauchy.rvs(size=n, random_state=rng))
    c2 = stats.invgamma.rvs(2.0, scale=8.0, size=n, random_state=rng)
    g = (tau * lam) ** 2
    beta = np.sqrt(c2 * g / (c2 + g)) * rng.standard_normal(n)
    oracle_median = float(np.median(np.abs(beta)))
    est2 = marginal_prior_quantiles(
        RegularizedHorseshoe(0.03, 2.0, 4.0), "abs_coef", [0.5], n_draws=1_000_000, seed=8
    )
    assert est2[0] == pytest.approx(oracle_median, abs=0.0006)
    assert oracle_median == pytest.approx(0.0168, abs=0.001)


# ---------------------------------------------------------------------------
# criterion 2: gradient suite
# ---------------------------------------------------------------------------


def test_criterion_02_gradient_suite():
    """Priors, likelihoods, and composed posteriors match central finite
    differences to relative error < 1e-5 at >= 20 random points per family."""
    t0 = time.time()
    rng = np.random.default_rng(606)
    worst = 0.0

    for _ in range(20):
        x = rng.standard_normal(6) * 0.8
        _, g = log_prior_normal_hn(x[:5], math.exp(x[5]), 1.1)
        num = finite_diff_grad(lambda v: log_prior_normal_hn(v[:5], math.exp(v[5]), 1.1)[0], x)
        worst = max(worst, float(np.max(np.abs(g - num) / np.maximum(np.abs(num), 1.0))))

    for _ in range(20):
        x = rng.standard_normal(10) * 0.8
        _, g = log_prior_reg_horseshoe(x[:4], math.exp(x[4]), np.exp(x[5:9]), math.exp(x[9]),
                                       0.5, 2.0, 4.0)
        num = finite_diff_grad(
            lambda v: log_prior_reg_horseshoe(v[:4], math.exp(v[4]), np.exp(v[5:9]),
                                              math.exp(v[9]), 0.5, 2.0, 4.0)[0], x)
        worst = max(worst, float(np.max(np.abs(g - num) / np.maximum(np.abs(num), 1.0))))

    combos = [
        ("gaussian", PriorConfig(predictive=NormalHN(1.0)), OneWay("region")),
        ("gaussian", PriorConfig(predictive=RegularizedHorseshoe(0.35)), GlobalShrinkage()),
        ("bernoulli_logit", PriorConfig(predictive=NormalHN(1.0)), GlobalShrinkage()),
        ("negative_binomial", PriorConfig(predictive=RegularizedHorseshoe(0.5)), GlobalShrinkage()),
        ("cox_mspline", PriorConfig(predictive=RegularizedHorseshoe(0.3)), GlobalShrinkage()),
        ("cox_mspline", PriorConfig(predictive=NormalHN(0.7)), OneWay("region")),
    ]
    per_family_points = {}
    for family, prior, mode in combos:
        ds = make_trial(family=family, n=45)
        model = ShrinkageModel(ds, ModelSpec(family, mode, prior))
        pts = per_family_points.get(family, 0)
        for seed in range(20):
            q = model.initial_value(np.random.default_rng(seed))
            _, g = model.log_posterior(q)
            num = finite_diff_grad(lambda v: model.log_posterior(v)[0], q)
            worst = max(worst, float(np.max(np.abs(g - num) / np.maximum(np.abs(num), 1.0))))
            pts += 1
        per_family_points[family] = pts
    assert all(v >= 20 for v in per_family_points.values())

    elapsed = time.time() - t0
    _report(2, worst < 1e-5 and elapsed < 60, f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# criterion 3: sampler correctness on a conjugate posterior
# ---------------------------------------------------------------------------


def test_criterion_03_conjugate_sampler_check():
    """Gaussian data with known sigma and a flat prior on the one coefficient:
    the posterior of the mean is closed-form normal."""
    t0 = time.time()
    rng = np.random.default_rng(900)
    n, sigma = 50, 1.3
    y = rng.normal(0.8, sigma, size=n)
    post_mean = float(y.mean())
    post_sd = sigma / math.sqrt(n)

    class FlatMeanModel:
        spec = None
        dim = 1
        constrained_names = ["mu"]

        def log_posterior(self, q):
            r = y - q[0]
            return -0.5 * float(r @ r) / sigma**2, np.array([float(r.sum()) / sigma**2])

        def constrain(self, q):
            return q.copy()

        def initial_value(self, rg):
            return rg.uniform(-2, 2, 1)

    pd = sample(FlatMeanModel(), SamplerConfig(n_chains=4, n_warmup=1000, n_draws=1000,
                                               seed=31, target_accept=0.8))
    draws = pd.draws[:, 0]
    ess = float(pd.ess_bulk[0])
    err_mean = abs(draws.mean() - post_mean)
    err_sd = abs(draws.std() - post_sd)
    lim_mean = 3.0 * post_sd / math.sqrt(ess)
    lim_sd = 3.0 * post_sd / math.sqrt(2.0 * ess)
    rhat = float(np.nanmax(pd.rhat))
    elapsed = time.time() - t0
    ok = err_mean < lim_mean and err_sd < lim_sd and rhat < 1.01
    _report(3, ok and elapsed < 60,
            f"|mean err| {err_mean:.4f} < {lim_mean:.4f}, |sd err| {err_sd:.4f} < {lim_sd:.4f}, "
            f"R-hat {rhat:.4f}, {elapsed:.1f}s")
    assert err_mean < lim_mean
    assert err_sd < lim_sd
    assert rhat < 1.01
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# criterion 4: standardization oracles
# ---------------------------------------------------------------------------


def test_criterion_04_standardization_oracles():
    t0 = time.time()
    # (a) gaussian collapsibility, per draw, to 1e-10
    from shrinkforest.standardize import standardized_effect
    from test_standardize import make_fitted

    rng = np.random.default_rng(44)
    ds = make_trial(levels=(2, 3), n=90)
    spec = ModelSpec("gaussian", GlobalShrinkage(), PriorConfig(predictive=NormalHN(1.0)))
    model = ShrinkageModel(ds, spec)
    fill = {nm: rng.normal(0, 0.3, size=30) for nm in model.constrained_names if nm.endswith(":z")}
    fit = make_fitted(ds, spec, fill, n_draws=30)
    pop = standardized_effect(fit, "population", keep_draws=True)
    acc = np.zeros(30)
    for lv in ds.subgroups["sex"].levels:
        e = standardized_effect(fit, ("sex", lv), keep_draws=True)
        acc += e.draws * e.n_subjects
    collaps_err = float(np.max(np.abs(acc / ds.n_subjects - pop.draws)))

    # (b) bernoulli saturated 2x2 equivalence to direct enumeration
    from shrinkforest.dataset import BinaryEndpoint, Categorical, TrialDataset

    n = 40
    z = np.tile([0.0, 1.0], n // 2)
    g = Categorical.from_values(["a"] * 20 + ["b"] * 20)
    dsb = TrialDataset(z, {"g": g}, BinaryEndpoint(np.zeros(n)))
    specb = ModelSpec("bernoulli_logit", OneWay("g"), PriorConfig(predictive=NormalHN(1.0)))
    pars = {"intercept": -0.4, "treatment": 0.9, "g[b]": 0.6, "g[a]:z": 0.15, "g[b]:z": -0.3}
    fitb = make_fitted(dsb, specb, pars, n_draws=2)
    eb = standardized_effect(fitb, ("g", "b"), keep_draws=True)
    p0 = expit(pars["intercept"] + pars["g[b]"])
    p1 = expit(pars["intercept"] + pars["g[b]"] + pars["treatment"] + pars["g[b]:z"])
    hand = (p1 / (1 - p1)) / (p0 / (1 - p0))
    bern_err = float(np.max(np.abs(eb.draws - hand)))

    # (c) AHR exponential-PH recovery at r = 0.5 on a 2000-point grid
    grid = np.linspace(0.0, 4.0, 2000)
    ahr = average_hazard_ratio(np.exp(-grid), np.exp(-0.5 * grid))
    ahr_err = abs(ahr - 0.5) / 0.5

    # (d) AHR antisymmetry, exact
    s1 = np.exp(-0.8 * grid)
    s2 = np.exp(-0.3 * grid**1.2)
    anti = average_hazard_ratio(s1, s2) * average_hazard_ratio(s2, s1)
    anti_err = abs(anti - 1.0)

    elapsed = time.time() - t0
    ok = collaps_err < 1e-10 and bern_err < 1e-12 and ahr_err < 1e-3 and anti_err < 1e-12
    _report(4, ok and elapsed < 60,
            f"collapsibility {collaps_err:.1e}, 2x2 {bern_err:.1e}, "
            f"AHR-PH rel {ahr_err:.1e}, antisymmetry {anti_err:.1e}, {elapsed:.1f}s")
    assert collaps_err < 1e-10
    assert bern_err < 1e-12
    assert ahr_err < 1e-3
    assert anti_err < 1e-12
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# criterion 5: frequentist coverage at n_sim = 400
# ---------------------------------------------------------------------------


def test_criterion_05_frequentist_coverage():
    scenario = SimScenario("continuous", 1)
    rep = run_campaign(scenario, [standard_estimator()], n_sim=400, seed=77, n_jobs=N_JOBS)
    s = rep.summary("standard")
    cov = s["coverage_mean"]
    bias100 = 100.0 * s["bias_mean"]
    mcse100 = 100.0 * rep.mcse["standard"]["bias"]
    ok = 0.93 <= cov <= 0.97 and bias100 < 1.0 + 3.0 * mcse100
    _report(5, ok, f"mean coverage {100*cov:.1f}% in [93, 97], "
                   f"mean |bias|x100 {bias100:.2f} < 1 + 3x{mcse100:.2f}")
    assert 0.93 <= cov <= 0.97
    assert bias100 < 1.0 + 3.0 * mcse100


# ---------------------------------------------------------------------------
# criteria 6-8: shrinkage simulation experiments
# ---------------------------------------------------------------------------


def _cont_roster():
    lean = SamplerConfig(n_chains=2, n_warmup=300, n_draws=350, seed=0, max_treedepth=9)
    return [
        standard_estimator(),
        population_estimator(),
        oneway_estimator(CONT_DELTA_PLAN, sampler=lean),
        global_estimator(
            RegularizedHorseshoe(CONT_DELTA_PLAN, slab_scale=2.0 * CONT_SIGMA_PLAN),
            sampler=lean,
        ),
    ]


def test_criterion_06_shrinkage_dominance_smoke():
    """Smoke tier (n_sim = 20): standardized overall RMSE < 1.0 for the
    population estimator and every shrinkage estimator, in all scenarios."""
    ratios = {}
    for sc in (1, 2, 3):
        rep = run_campaign(SimScenario("continuous", sc), _cont_roster(),
                           n_sim=20, seed=505 + sc, n_jobs=N_JOBS)
        for label, r in rep.std_rmse_overall.items():
            if label != "standard":
                ratios[f"s{sc}:{label}"] = r
    detail = ", ".join(f"{k}={v:.2f}" for k, v in ratios.items())
    ok = all(v < 1.0 for v in ratios.values())
    _report(6, ok, detail)
    assert ok, detail


@pytest.mark.full
def test_criterion_06_shrinkage_dominance_full():
    """Full tier (n_sim = 100): dominance plus the global-vs-one-way ordering
    in scenarios 1-2 with a 0.02 tolerance on the RMSE ratio."""
    results = {}
    for sc in (1, 2, 3):
        rep = run_campaign(SimScenario("continuous", sc), _cont_roster(),
                           n_sim=100, seed=605 + sc, n_jobs=N_JOBS)
        results[sc] = rep.std_rmse_overall
        for label, r in rep.std_rmse_overall.items():
            if label != "standard":
                assert r < 1.0, (sc, label, r)
    for sc in (1, 2):
        gl = [v for k, v in results[sc].items() if k.startswith("global_rhs")][0]
        ow = [v for k, v in results[sc].items() if k.startswith("oneway_hn")][0]
        _report("6-full", gl < ow + 0.02, f"scenario {sc}: global {gl:.3f} vs one-way {ow:.3f}")
        assert gl < ow + 0.02


@pytest.mark.slow
def test_criterion_07_tte_null_subgroup_detection():
    """TTE scenario 2 at n_sim = 100: every shrinkage estimator identifies
    the no-effect subgroup more reliably than the standard estimator
    (ordering asserted with a 5-point Monte Carlo margin)."""
    lean_ow = SamplerConfig(n_chains=2, n_warmup=250, n_draws=250, seed=0, max_treedepth=9)
    lean_gl = SamplerConfig(n_chains=2, n_warmup=250, n_draws=300, seed=0, max_treedepth=9)
    roster = [
        standard_estimator(),
        oneway_estimator(TTE_DELTA_PLAN, sampler=lean_ow, max_draws=250),
        global_estimator(RegularizedHorseshoe(TTE_DELTA_PLAN), sampler=lean_gl, max_draws=250),
    ]
    rep = run_campaign(SimScenario("tte", 2), roster, n_sim=100, seed=808, n_jobs=N_JOBS)
    acc = {label: rep.worst[label]["accuracy"] for label in rep.estimators if label in rep.worst}
    std_acc = acc["standard"]
    detail = ", ".join(f"{k}={100*v:.0f}%" for k, v in acc.items())
    ok = all(a > std_acc - 0.05 for k, a in acc.items() if k != "standard")
    _report(7, ok, detail + f" (failures: {rep.failures})")
    for k, a in acc.items():
        if k != "standard":
            assert a > std_acc - 0.05, (k, a, std_acc)


@pytest.mark.slow
def test_criterion_08_continuous_null_subgroup_detection():
    """Continuous scenario 3 at n_sim = 100: accuracy ordering
    global > one-way > standard within a 5-point margin, and the population
    estimator's bias in the near-null subgroup is 0.30 +/- 0.05."""
    rep = run_campaign(SimScenario("continuous", 3), _cont_roster(),
                       n_sim=100, seed=909, n_jobs=N_JOBS)
    acc = {label: rep.worst[label]["accuracy"] for label in rep.estimators if label in rep.worst}
    gl = [v for k, v in acc.items() if k.startswith("global_rhs")][0]
    ow = [v for k, v in acc.items() if k.startswith("oneway_hn")][0]
    std = acc["standard"]
    pop_bias = rep.null_subgroup["population"]["bias"]
    ok = gl > ow - 0.05 and ow > std - 0.05 and abs(pop_bias - 0.30) <= 0.05
    _report(8, ok, f"accuracy global {100*gl:.0f}% / one-way {100*ow:.0f}% / standard "
                   f"{100*std:.0f}%, population bias in null subgroup {pop_bias:.3f}")
    assert gl > ow - 0.05
    assert ow > std - 0.05
    assert abs(pop_bias - 0.30) <= 0.05


# ---------------------------------------------------------------------------
# criterion 9: determinism of every command
# ---------------------------------------------------------------------------


def test_criterion_09_cli_determinism(tmp_path):
    from shrinkforest.cli import main
    from test_cli import analyze_config, simulate_config, write_toy_csv

    csv_path = tmp_path / "toy.csv"
    write_toy_csv(csv_path, n=40)
    runs = {
        "analyze": analyze_config(tmp_path, csv_path, estimators=("standard", "global")),
        "simulate": simulate_config(tmp_path, n_sim=3),
    }
    pc = tmp_path / "pc.toml"
    pc.write_text('seed = 4\n[model]\nprior = "rhs"\ntau0 = 0.3\nn_draws = 100000\n')
    runs["prior-calibrate"] = pc

    all_ok = True
    for command, cfg in runs.items():
        out1 = tmp_path / f"{command}_1"
        out2 = tmp_path / f"{command}_2"
        assert main([command, "--config", str(cfg), "--out", str(out1), "--threads", "1"]) == 0
        assert main([command, "--config", str(cfg), "--out", str(out2), "--threads", "1"]) == 0
        names1 = sorted(p.name for p in out1.iterdir())
        names2 = sorted(p.name for p in out2.iterdir())
        assert names1 == names2
        for name in names1:
            if name == "effective_config.toml":
                # differs only in the output path it echoes
                d1 = [(l1, l2) for l1, l2 in zip((out1 / name).read_text().splitlines(),
                                                 (out2 / name).read_text().splitlines())
                      if l1 != l2]
                assert all(l1.startswith("out = ") for l1, _ in d1)
                continue
            same = (out1 / name).read_bytes() == (out2 / name).read_bytes()
            all_ok = all_ok and same
            assert same, f"{command}/{name} differs between identical runs"
    _report(9, all_ok, "analyze, simulate, and prior-calibrate are byte-reproducible")

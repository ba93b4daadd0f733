import numpy as np
import pytest

from shrinkforest.dataset import (
    Categorical,
    ConfigurationError,
    ContinuousEndpoint,
    TrialDataset,
)
from shrinkforest.design import (
    SHRUNKEN_PREDICTIVE,
    UNSHRUNKEN,
    GlobalShrinkage,
    ModelSpec,
    OneWay,
    TrialAssumptions,
    build_design,
    linear_predictor,
)
from shrinkforest.priors import NormalHN, PriorConfig

from conftest import make_trial

PRIOR = PriorConfig(predictive=NormalHN(1.0))


def spec_for(family="gaussian", mode=None, **kw):
    return ModelSpec(family, mode or GlobalShrinkage(), PRIOR, **kw)


def test_global_design_two_variables_counts():
    # p=2 variables with l=(2,3): K=5 predictive columns, (2-1)+(3-1)=3 dummies
    ds = make_trial(levels=(2, 3))
    d = build_design(ds, spec_for())
    assert d.predictive.shape[1] == 5
    assert d.prognostic.shape[1] == 3
    assert d.n_columns == 1 + 1 + 3 + 5


def test_oneway_design_three_level_variable():
    ds = make_trial(levels=(2, 3))
    d = build_design(ds, spec_for(mode=OneWay("region")))
    assert d.predictive.shape[1] == 3
    # exactly one active indicator per subject
    assert np.array_equal(d.predictive.sum(axis=1), np.ones(ds.n_subjects))


def test_tte_design_25_predictive_columns():
    from shrinkforest.simlab import generate_tte_trial

    ds = generate_tte_trial(1, seed=3)
    d = build_design(ds, spec_for(family="cox_mspline"))
    assert d.predictive.shape[1] == 25
    assert d.prognostic.shape[1] == 25 - 10  # dummy encoding drops one per variable
    assert not d.has_intercept


def test_global_indicator_count_per_subject():
    ds = make_trial(levels=(2, 3))
    d = build_design(ds, spec_for())
    assert np.array_equal(d.predictive.sum(axis=1), np.full(ds.n_subjects, 2.0))


def test_column_map_partitions_columns():
    ds = make_trial(levels=(2, 3))
    d = build_design(ds, spec_for())
    groups = d.groups()
    assert groups[0] == "intercept" and groups[1] == "treatment"
    rest = groups[2:]
    assert set(rest) <= {UNSHRUNKEN, SHRUNKEN_PREDICTIVE, "shrunken_prognostic"}
    assert len(rest) == d.prognostic.shape[1] + d.predictive.shape[1]


def test_linear_predictor_zero_params():
    ds = make_trial()
    d = build_design(ds, spec_for())
    lp = linear_predictor(d, np.zeros(d.n_columns))
    assert np.all(lp == 0.0)


def test_linear_predictor_override_is_main_effect_only():
    ds = make_trial()
    d = build_design(ds, spec_for())
    params = np.zeros(d.n_columns)
    params[0] = 1.7  # intercept
    params[1] = 0.5  # treatment
    lp = linear_predictor(d, params, treatment_override=1)
    assert np.allclose(lp, 1.7 + 0.5)
    lp0 = linear_predictor(d, params, treatment_override=0)
    assert np.allclose(lp0, 1.7)


def test_linear_predictor_matches_naive_dot(rng):
    ds = make_trial(family="negative_binomial")
    d = build_design(ds, spec_for(family="negative_binomial"))
    params = rng.standard_normal(d.n_columns)
    lp = linear_predictor(d, params)
    x = d.matrix()
    naive = np.array([sum(x[i, j] * params[j] for j in range(x.shape[1])) for i in range(x.shape[0])])
    naive = naive + d.offset
    assert np.allclose(lp, naive, atol=1e-12)


def test_linear_predictor_dimension_mismatch():
    ds = make_trial()
    d = build_design(ds, spec_for())
    with pytest.raises(ValueError):
        linear_predictor(d, np.zeros(d.n_columns + 1))


def test_baseline_level_choice_does_not_change_fitted_means(rng):
    # saturated OLS fit: group means invariant to which level is the baseline
    n = 120
    z = np.zeros(n)
    z[rng.permutation(n)[: n // 2]] = 1.0
    labels = rng.choice(["a", "b", "c"], n)
    y = rng.standard_normal(n) + np.select([labels == "a", labels == "b"], [0.5, -0.3], 1.0)

    def fitted_means(level_order):
        sub = {"g": Categorical.from_values(labels, levels=level_order)}
        ds = TrialDataset(z, sub, ContinuousEndpoint(y))
        d = build_design(ds, spec_for())
        x = d.matrix()
        beta, *_ = np.linalg.lstsq(x, y, rcond=None)
        fit = x @ beta
        return {lv: fit[labels == lv].mean() for lv in "abc"}

    m1 = fitted_means(("a", "b", "c"))
    m2 = fitted_means(("c", "a", "b"))
    for lv in "abc":
        assert abs(m1[lv] - m2[lv]) < 1e-8


def test_unknown_variable_and_level_errors():
    ds = make_trial()
    with pytest.raises(ConfigurationError):
        build_design(ds, spec_for(mode=OneWay("nope")))
    with pytest.raises(ConfigurationError):
        build_design(ds, spec_for(mode=GlobalShrinkage(unshrunken_interactions=(("sex", "zzz"),))))


def test_zero_subject_level_names_the_level():
    z = np.array([0.0, 1.0, 0.0, 1.0])
    sub = {"g": Categorical(codes=np.array([0, 1, 0, 1]), levels=("a", "b", "ghost"))}
    ds = TrialDataset(z, sub, ContinuousEndpoint(np.zeros(4)))
    with pytest.raises(ValueError, match="ghost"):
        build_design(ds, spec_for())


def test_family_endpoint_mismatch():
    ds = make_trial(family="gaussian")
    with pytest.raises(ConfigurationError):
        build_design(ds, spec_for(family="cox_mspline"))


def test_offset_only_for_counts():
    ds = make_trial(family="negative_binomial")
    d = build_design(ds, spec_for(family="negative_binomial"))
    assert d.offset is not None
    assert np.allclose(d.offset, np.log(ds.endpoint.exposure))
    ds2 = make_trial(family="gaussian")
    assert build_design(ds2, spec_for()).offset is None


def test_cox_drops_intercept():
    ds = make_trial(family="cox_mspline")
    d = build_design(ds, spec_for(family="cox_mspline"))
    assert not d.has_intercept
    assert d.column_names()[0] == "treatment"


def test_promoted_interaction_moves_to_unshrunken():
    ds = make_trial()
    d = build_design(ds, spec_for(mode=GlobalShrinkage(unshrunken_interactions=(("sex", "m"),))))
    by_name = {c.name: c for c in d.columns}
    assert by_name["sex[m]:z"].group == UNSHRUNKEN
    assert by_name["sex[f]:z"].group == SHRUNKEN_PREDICTIVE


def test_term_groups_cover_all_non_fixed_columns():
    ds = make_trial()
    d = build_design(ds, spec_for())
    covered = [c.name for g in d.term_groups() for c in g.columns]
    fixed = {"intercept", "treatment"}
    assert sorted(covered) == sorted(n for n in d.column_names() if n not in fixed)


def test_trial_assumptions_validation():
    with pytest.raises(ConfigurationError):
        TrialAssumptions(delta_plan=-1.0)
    with pytest.raises(ConfigurationError):
        TrialAssumptions(delta_plan=0.3, sigma_plan=0.0)
    a = TrialAssumptions(delta_plan=0.35, sigma_plan=1.2)
    assert a.delta_plan == 0.35

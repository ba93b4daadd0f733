"""Bayesian shrinkage estimation of treatment effects in clinical-trial subgroups.

The package fits one-way and global shrinkage models for continuous, binary,
count, and time-to-event endpoints with a built-in adaptive Hamiltonian Monte
Carlo sampler, derives marginal subgroup effects by standardization, compares
them to unadjusted frequentist estimators, and ships the simulation studies
used to benchmark all of the above at desk scale.
"""

from .baselines import FrequentistEstimate, fit_unadjusted, forest_table_frequentist
from .dataset import (
    BinaryEndpoint,
    Categorical,
    ConfigurationError,
    ContinuousEndpoint,
    CountEndpoint,
    SurvivalEndpoint,
    TrialDataset,
    read_trial_csv,
)
from .design import (
    DesignMatrices,
    GlobalShrinkage,
    ModelSpec,
    OneWay,
    TrialAssumptions,
    build_design,
    linear_predictor,
)
from .engine import FittedModel, PosteriorDraws, SamplerConfig, fit_shrinkage, sample
from .forestplot import render_forest_svg
from .model import ShrinkageModel
from .priors import (
    Flat,
    NormalHN,
    PriorConfig,
    RegularizedHorseshoe,
    marginal_prior_quantiles,
    piironen_tau0,
)
from .simlab import (
    Estimator,
    MetricsReport,
    SimScenario,
    compute_true_effects,
    generate_continuous_trial,
    generate_tte_trial,
    global_estimator,
    oneway_estimator,
    population_estimator,
    run_campaign,
    standard_estimator,
)
from .splines import MSplineBasis, build_mspline_basis
from .standardize import (
    SubgroupEffect,
    average_hazard_ratio,
    forest_table,
    marginal_survival,
    standardized_effect,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryEndpoint",
    "Categorical",
    "ConfigurationError",
    "ContinuousEndpoint",
    "CountEndpoint",
    "DesignMatrices",
    "Estimator",
    "FittedModel",
    "Flat",
    "FrequentistEstimate",
    "GlobalShrinkage",
    "MSplineBasis",
    "MetricsReport",
    "ModelSpec",
    "NormalHN",
    "OneWay",
    "PosteriorDraws",
    "PriorConfig",
    "RegularizedHorseshoe",
    "SamplerConfig",
    "ShrinkageModel",
    "SimScenario",
    "SubgroupEffect",
    "SurvivalEndpoint",
    "TrialAssumptions",
    "TrialDataset",
    "average_hazard_ratio",
    "build_design",
    "build_mspline_basis",
    "compute_true_effects",
    "fit_shrinkage",
    "fit_unadjusted",
    "forest_table",
    "forest_table_frequentist",
    "generate_continuous_trial",
    "generate_tte_trial",
    "global_estimator",
    "linear_predictor",
    "marginal_prior_quantiles",
    "marginal_survival",
    "oneway_estimator",
    "piironen_tau0",
    "population_estimator",
    "read_trial_csv",
    "render_forest_svg",
    "run_campaign",
    "sample",
    "standard_estimator",
    "standardized_effect",
    "__version__",
]

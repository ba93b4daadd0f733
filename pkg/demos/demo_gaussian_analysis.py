"""Standard vs shrinkage subgroup estimates on one continuous-endpoint trial.

Simulates a 500-subject trial with a genuinely weaker subgroup, then puts
three estimators side by side for every subgroup:

* the standard estimator (per-subgroup fit, no shrinkage),
* a one-way hierarchical-normal model per subgrouping variable,
* a global regularized-horseshoe model over all interactions at once,

all reported as standardized (G-computation) marginal mean differences.
Writes an SVG forest plot for the global model next to this script.

Run:  python demos/demo_gaussian_analysis.py
"""

from pathlib import Path

from shrinkforest import (
    GlobalShrinkage,
    ModelSpec,
    NormalHN,
    OneWay,
    PriorConfig,
    RegularizedHorseshoe,
    SamplerConfig,
    fit_shrinkage,
    forest_table,
    forest_table_frequentist,
    generate_continuous_trial,
    render_forest_svg,
)

DELTA_PLAN, SIGMA_PLAN = 0.35, 1.20

trial = generate_continuous_trial(scenario=3, seed=20240811)
print(f"simulated trial: n={trial.n_subjects}, subgroups={trial.n_subgroups}")
print("true pattern: the x11=low subgroup barely benefits (0.06 vs ~0.35 elsewhere)\n")

sampler = SamplerConfig(n_chains=2, n_warmup=400, n_draws=600, seed=7)

standard = {r.label: r for r in forest_table_frequentist(trial, "gaussian")}

oneway = {}
for var in trial.subgroups:
    spec = ModelSpec("gaussian", OneWay(var), PriorConfig(NormalHN(DELTA_PLAN)))
    fit = fit_shrinkage(trial, spec, sampler)
    keys = [(var, lv) for lv in trial.subgroups[var].levels]
    for row in forest_table(fit, "oneway", include_population=False, subgroups=keys):
        oneway[row.label] = row

spec_global = ModelSpec(
    "gaussian",
    GlobalShrinkage(),
    PriorConfig(RegularizedHorseshoe(DELTA_PLAN, slab_scale=2 * SIGMA_PLAN)),
)
fit_global = fit_shrinkage(trial, spec_global, sampler)
global_rows = forest_table(fit_global, "global")

print(f"{'subgroup':16s} {'standard':>22s} {'one-way hn':>22s} {'global rhs':>22s}")
for row in global_rows:
    key = row.label

    def fmt(r):
        return f"{r.point:5.2f} ({r.lower:5.2f},{r.upper:5.2f})"

    ow = fmt(oneway[key]) if key in oneway else " " * 20
    print(f"{key:16s} {fmt(standard[key]):>22s} {ow:>22s} {fmt(row):>22s}")

out = Path(__file__).with_name("forest_gaussian_demo.svg")
out.write_text(render_forest_svg(global_rows, title="Global shrinkage estimates (demo trial)"))
print(f"\nwrote {out}")
print("note how the extreme standard estimates are pulled toward the overall "
      "effect while the genuinely weak x11=low subgroup keeps a low estimate")

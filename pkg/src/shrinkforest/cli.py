"""Command-line front end.

Three subcommands, all driven by a declarative TOML config plus a few flag
overrides, writing reproducible outputs into a target directory:

* ``analyze``          - fit the requested estimators to a CSV dataset and
                         write forest tables (CSV/JSON), diagnostics, and an
                         SVG forest plot.
* ``simulate``         - run a simulation campaign and write the metrics
                         report (JSON) plus a paper-style summary CSV.
* ``prior-calibrate``  - print and write the marginal-prior quantile table
                         for a configured shrinkage prior.

Exit codes: 0 ok, 1 numeric failure, 2 configuration error. Every command is
byte-reproducible for a fixed seed and thread count; the effective config is
echoed into the output directory so a run can be repeated from it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import forest_table_frequentist
from .dataset import ConfigurationError, read_trial_csv
from .design import GlobalShrinkage, ModelSpec, OneWay
from .engine import SamplerConfig, fit_shrinkage
from .forestplot import render_forest_svg
from .priors import NormalHN, PriorConfig, RegularizedHorseshoe, marginal_prior_quantiles
from .simlab import (
    SimScenario,
    global_estimator,
    oneway_estimator,
    population_estimator,
    run_campaign,
    standard_estimator,
)
from .standardize import effects_to_csv, effects_to_json, forest_table

__all__ = ["main", "cmd_analyze", "cmd_simulate", "cmd_prior_calibrate"]

_ENV_THREADS = "SHRINKFOREST_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(_ENV_THREADS, "1")))
    except ValueError:
        return 1


def _load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigurationError(f"cannot echo config value {v!r}")


def _echo_config(cfg: dict, out_dir: Path) -> None:
    """Write the effective config (after defaults) as a re-runnable TOML file."""
    lines = []
    scalars = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in cfg.items() if isinstance(v, dict)}
    for k, v in scalars.items():
        lines.append(f"{k} = {_toml_value(v)}")
    for name, table in tables.items():
        lines.append("")
        lines.append(f"[{name}]")
        for k, v in table.items():
            lines.append(f"{k} = {_toml_value(v)}")
    (out_dir / "effective_config.toml").write_text("\n".join(lines) + "\n")


def _build_prior(model_cfg: dict) -> PriorConfig:
    name = model_cfg.get("prior", "normal_hn")
    if name == "normal_hn":
        pred = NormalHN(phi=float(model_cfg.get("phi", 1.0)))
    elif name == "rhs":
        pred = RegularizedHorseshoe(
            tau0=float(model_cfg.get("tau0", 1.0)),
            slab_scale=float(model_cfg.get("slab_scale", 2.0)),
            slab_df=float(model_cfg.get("slab_df", 4.0)),
        )
    else:
        raise ConfigurationError(f"unknown prior {name!r} (use 'normal_hn' or 'rhs')")
    return PriorConfig(predictive=pred)


def _sampler_config(cfg: dict, seed: int, threads: int) -> SamplerConfig:
    s = cfg.get("sampler", {})
    return SamplerConfig(
        n_chains=int(s.get("chains", 4)),
        n_warmup=int(s.get("warmup", 1000)),
        n_draws=int(s.get("draws", 1000)),
        target_accept=s.get("target_accept"),
        max_treedepth=int(s.get("max_treedepth", 10)),
        seed=seed,
        n_jobs=threads,
    )


def _read_dataset(cfg: dict):
    d = cfg.get("dataset", {})
    for key in ("path", "treatment", "subgroups"):
        if key not in d:
            raise ConfigurationError(f"dataset config needs {key!r}")
    model = cfg.get("model", {})
    family = model.get("family")
    if family is None:
        raise ConfigurationError("model config needs 'family'")
    return read_trial_csv(
        d["path"],
        treatment=d["treatment"],
        subgroup_vars=d["subgroups"],
        family=family,
        response=d.get("response"),
        time=d.get("time"),
        event=d.get("event"),
        exposure=d.get("exposure"),
        covariates=d.get("covariates", ()),
        categorical_covariates=d.get("categorical_covariates", ()),
    )


def cmd_analyze(cfg: dict, out_dir: Path, seed: int, threads: int, formats) -> int:
    dataset = _read_dataset(cfg)
    model_cfg = cfg.get("model", {})
    family = model_cfg["family"]
    estimators = model_cfg.get("estimators", ["standard", "global"])

    tables = {}
    diagnostics: dict = {}
    for name in estimators:
        if name == "standard":
            tables["standard"] = forest_table_frequentist(dataset, family, "standard")
        elif name == "global":
            prior = _build_prior(model_cfg)
            spec = ModelSpec(family, GlobalShrinkage(), prior)
            fit = fit_shrinkage(dataset, spec, _sampler_config(cfg, seed, threads))
            tables[name] = forest_table(fit, name)
            diagnostics[name] = _fit_diagnostics(fit)
        elif name == "oneway":
            prior = _build_prior(model_cfg)
            sampler = _sampler_config(cfg, seed, threads)
            rows = []
            diag = {}
            for i, var in enumerate(dataset.subgroups):
                spec = ModelSpec(family, OneWay(var), prior)
                fit = fit_shrinkage(dataset, spec, sampler)
                keys = [(var, lv) for lv in dataset.subgroups[var].levels]
                # the population row is taken from the first variable's fit
                rows += forest_table(fit, name, include_population=(i == 0), subgroups=keys)
                diag[var] = _fit_diagnostics(fit)
            rows.sort(key=lambda r: r.subgroup == "population")
            tables[name] = rows
            diagnostics[name] = diag
        else:
            raise ConfigurationError(f"unknown estimator {name!r}")

    warn_msgs = []
    for name, diag in diagnostics.items():
        warn_msgs += [f"{name}: {m}" for m in _collect_warnings(diag)]
    diagnostics["warnings"] = warn_msgs

    out_files = []
    for name, rows in tables.items():
        if "csv" in formats:
            p = out_dir / f"forest_{name}.csv"
            effects_to_csv(rows, p)
            out_files.append(p)
        if "json" in formats:
            p = out_dir / f"forest_{name}.json"
            effects_to_json(rows, p)
            out_files.append(p)
        if "svg" in formats:
            p = out_dir / f"forest_{name}.svg"
            p.write_text(render_forest_svg(rows, title=f"Treatment effects ({name})"))
            out_files.append(p)
    with open(out_dir / "diagnostics.json", "w") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if diagnostics["warnings"]:
        block = "\n".join(
            ["=" * 60, "WARNING: sampler reported convergence problems:"]
            + [f"  - {m}" for m in diagnostics["warnings"]]
            + ["results were written but should be treated with caution", "=" * 60]
        )
        print(block, file=sys.stderr)
    for p in out_files:
        print(f"wrote {p}")
    return 0


def _fit_diagnostics(fit) -> dict:
    d = fit.draws
    return {
        "converged": bool(d.converged),
        "messages": list(d.messages),
        "divergences": int(d.divergences),
        "max_rhat": float(np.nanmax(d.rhat)),
        "min_ess_bulk": float(np.nanmin(d.ess_bulk)),
        "accept_mean": float(d.accept_mean),
    }


def _collect_warnings(diag) -> list[str]:
    if "messages" in diag:
        return list(diag["messages"])
    out = []
    for var, sub in diag.items():
        out += [f"{var}: {m}" for m in sub.get("messages", [])]
    return out


def cmd_simulate(cfg: dict, out_dir: Path, seed: int, threads: int, formats) -> int:
    sim = cfg.get("simulate", {})
    if "endpoint" not in sim or "scenario" not in sim:
        raise ConfigurationError("simulate config needs 'endpoint' and 'scenario'")
    scenario = SimScenario(sim["endpoint"], int(sim["scenario"]))
    n_sim = int(sim.get("n_sim", 100))
    roster = []
    delta = scenario.delta_plan
    sigma = scenario.sigma_plan
    slab = 2.0 if sigma is None else 2.0 * sigma
    for name in sim.get("estimators", ["standard", "population", "oneway", "global"]):
        if name == "standard":
            roster.append(standard_estimator())
        elif name == "population":
            roster.append(population_estimator())
        elif name == "population_adjusted":
            roster.append(population_estimator(adjusted=True))
        elif name == "oneway":
            roster.append(oneway_estimator(float(sim.get("phi", delta))))
        elif name == "global":
            roster.append(
                global_estimator(
                    RegularizedHorseshoe(float(sim.get("tau0", delta)), slab_scale=slab)
                )
            )
        else:
            raise ConfigurationError(f"unknown estimator {name!r}")
    report = run_campaign(scenario, roster, n_sim=n_sim, seed=seed, n_jobs=threads)
    report.to_json(out_dir / "metrics.json")
    report.summary_csv(out_dir / "summary.csv")
    print(f"wrote {out_dir / 'metrics.json'}")
    print(f"wrote {out_dir / 'summary.csv'}")
    return 0


def cmd_prior_calibrate(cfg: dict, out_dir: Path, seed: int, threads: int, formats) -> int:
    model_cfg = cfg.get("model", cfg.get("prior_calibrate", {}))
    prior = _build_prior(model_cfg).predictive
    n_draws = int(model_cfg.get("n_draws", 1_000_000))
    probs = [0.05, 0.5, 0.95]
    rows = []
    for functional in ("abs_coef", "abs_pairwise_diff"):
        q = marginal_prior_quantiles(prior, functional, probs, n_draws=n_draws, seed=seed)
        rows.append((functional, q))
        print(f"{functional:18s} " + "  ".join(f"q{int(100*p):02d}={v:.4g}" for p, v in zip(probs, q)))
    with open(out_dir / "prior_quantiles.csv", "w") as fh:
        fh.write("functional,q05,q50,q95\n")
        for functional, q in rows:
            fh.write(f"{functional},{q[0]:.10g},{q[1]:.10g},{q[2]:.10g}\n")
    if "json" in formats:
        with open(out_dir / "prior_quantiles.json", "w") as fh:
            json.dump(
                {f: {"q05": q[0], "q50": q[1], "q95": q[2]} for f, q in rows},
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
    print(f"wrote {out_dir / 'prior_quantiles.csv'}")
    return 0


_COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "prior-calibrate": cmd_prior_calibrate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shrinkforest",
        description="Bayesian shrinkage estimation of subgroup treatment effects",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker count (default ${_ENV_THREADS} or 1)")
    parser.add_argument("--format", action="append", choices=["csv", "json", "svg"],
                        dest="formats", help="output formats (repeatable)")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        threads = args.threads if args.threads is not None else int(cfg.get("threads", _default_threads()))
        out_dir = Path(args.out if args.out is not None else cfg.get("out", "shrinkforest_out"))
        formats = args.formats or cfg.get("formats", ["csv", "json", "svg"])
        out_dir.mkdir(parents=True, exist_ok=True)
        effective = dict(cfg)
        effective.update({"seed": seed, "threads": threads, "out": str(out_dir), "formats": list(formats)})
        _echo_config(effective, out_dir)
        return _COMMANDS[args.command](cfg, out_dir, seed, threads, formats)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

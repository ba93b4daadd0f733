"""Design-matrix construction with term-group bookkeeping.

The linear predictor of every model is

    LP_i = a0 + b0 * z_i + (prognostic terms) + (subgroup x treatment terms)

where unshrunken categorical terms are dummy encoded (baseline level absorbed
into the intercept) and shrunken terms are one-hot encoded so that all levels
are treated symmetrically. Cox models drop the intercept because the
free baseline-hazard amplitude already absorbs it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .dataset import Categorical, ConfigurationError, SurvivalEndpoint, CountEndpoint, TrialDataset
from .priors import PriorConfig

__all__ = [
    "UNSHRUNKEN",
    "SHRUNKEN_PROGNOSTIC",
    "SHRUNKEN_PREDICTIVE",
    "TrialAssumptions",
    "OneWay",
    "GlobalShrinkage",
    "ModelSpec",
    "ColumnInfo",
    "TermGroup",
    "DesignMatrices",
    "build_design",
    "linear_predictor",
]

UNSHRUNKEN = "unshrunken"
SHRUNKEN_PROGNOSTIC = "shrunken_prognostic"
SHRUNKEN_PREDICTIVE = "shrunken_predictive"


@dataclass(frozen=True)
class TrialAssumptions:
    """Protocol-planned effect size (modeling scale) and outcome SD."""

    delta_plan: float
    sigma_plan: float | None = None

    def __post_init__(self):
        if not self.delta_plan > 0:
            raise ConfigurationError("delta_plan must be positive")
        if self.sigma_plan is not None and not self.sigma_plan > 0:
            raise ConfigurationError("sigma_plan must be positive when given")


@dataclass(frozen=True)
class OneWay:
    """One-way mode: shrink the treatment interactions of a single variable."""

    variable: str


@dataclass(frozen=True)
class GlobalShrinkage:
    """Global mode: shrink treatment interactions of all subgroup indicators.

    Individual interactions can be promoted out of the shrunken group via
    ``unshrunken_interactions`` when strong prior knowledge justifies it.
    """

    unshrunken_interactions: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ModelSpec:
    """Endpoint family, model mode, term grouping, and prior configuration."""

    family: str
    mode: Union[OneWay, GlobalShrinkage]
    prior: PriorConfig
    assumptions: TrialAssumptions | None = None
    covariates: tuple[str, ...] = ()
    shrink_prognostic: bool = False

    def __post_init__(self):
        from .likelihoods import FAMILIES

        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")

    @property
    def has_intercept(self) -> bool:
        return self.family != "cox_mspline"


@dataclass(frozen=True)
class ColumnInfo:
    """Bookkeeping for one design column."""

    name: str
    group: str  # intercept / treatment / unshrunken / shrunken_* labels
    variable: str | None = None
    level: str | None = None
    interacted: bool = False


@dataclass(frozen=True)
class TermGroup:
    kind: str
    columns: tuple[ColumnInfo, ...]


@dataclass(frozen=True)
class DesignMatrices:
    """Prognostic block, predictive indicators, treatment, and column map.

    The predictive block stores the raw subgroup indicators; the design
    columns seen by the model are those indicators multiplied elementwise by
    the treatment (or by an override arm during standardization). Immutable
    after construction and safe to share across threads.
    """

    has_intercept: bool
    treatment: np.ndarray
    prognostic: np.ndarray  # (n, P)
    predictive: np.ndarray  # (n, Kp) indicators, not yet multiplied by z
    offset: np.ndarray | None
    columns: tuple[ColumnInfo, ...]

    @property
    def n(self) -> int:
        return self.treatment.shape[0]

    @property
    def n_columns(self) -> int:
        return int(self.has_intercept) + 1 + self.prognostic.shape[1] + self.predictive.shape[1]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def groups(self) -> np.ndarray:
        return np.array([c.group for c in self.columns])

    def term_groups(self) -> list[TermGroup]:
        out = []
        for kind in (UNSHRUNKEN, SHRUNKEN_PROGNOSTIC, SHRUNKEN_PREDICTIVE):
            cols = tuple(c for c in self.columns if c.group == kind)
            if cols:
                out.append(TermGroup(kind=kind, columns=cols))
        return out

    def matrix(self, treatment_override=None) -> np.ndarray:
        """Full design matrix with the predictive columns multiplied by the
        (possibly overridden) treatment."""
        z = self.treatment if treatment_override is None else np.full(self.n, float(treatment_override))
        parts = []
        if self.has_intercept:
            parts.append(np.ones((self.n, 1)))
        parts.append(z[:, None])
        if self.prognostic.shape[1]:
            parts.append(self.prognostic)
        if self.predictive.shape[1]:
            parts.append(self.predictive * z[:, None])
        return np.concatenate(parts, axis=1)


def _dummy_block(col: Categorical, var: str, group: str):
    cols, infos = [], []
    for j, level in enumerate(col.levels[1:], start=1):
        cols.append((col.codes == j).astype(float))
        infos.append(ColumnInfo(name=f"{var}[{level}]", group=group, variable=var, level=level))
    return cols, infos


def _onehot_block(col: Categorical, var: str, group: str, interacted: bool):
    cols, infos = [], []
    suffix = ":z" if interacted else ""
    for j, level in enumerate(col.levels):
        cols.append((col.codes == j).astype(float))
        infos.append(
            ColumnInfo(
                name=f"{var}[{level}]{suffix}",
                group=group,
                variable=var,
                level=level,
                interacted=interacted,
            )
        )
    return cols, infos


def build_design(dataset: TrialDataset, spec: ModelSpec) -> DesignMatrices:
    """Build design matrices for a dataset under a model specification.

    Raises a ConfigurationError for unknown variables/levels or a family
    mismatched with the endpoint, and a ValueError naming any declared
    subgroup level with zero subjects (degenerate design).
    """
    _check_family(dataset, spec)
    if isinstance(spec.mode, OneWay):
        var = spec.mode.variable
        if var not in dataset.subgroups:
            raise ConfigurationError(f"unknown subgrouping variable {var!r}")
        scope = [var]
    else:
        scope = list(dataset.subgroups)

    for var in scope:
        counts = dataset.subgroups[var].counts()
        for level, cnt in zip(dataset.subgroups[var].levels, counts):
            if cnt == 0:
                raise ValueError(
                    f"degenerate design: subgroup level {var}={level!r} has zero subjects"
                )

    prog_cols: list[np.ndarray] = []
    prog_info: list[ColumnInfo] = []
    prog_group = SHRUNKEN_PROGNOSTIC if spec.shrink_prognostic else UNSHRUNKEN
    for var in scope:
        col = dataset.subgroups[var]
        if spec.shrink_prognostic:
            cols, infos = _onehot_block(col, var, prog_group, interacted=False)
        else:
            cols, infos = _dummy_block(col, var, prog_group)
        prog_cols += cols
        prog_info += infos

    for var in spec.covariates:
        if var not in dataset.covariates:
            raise ConfigurationError(f"unknown adjustment covariate {var!r}")
        c = dataset.covariates[var]
        if isinstance(c, Categorical):
            cols, infos = _dummy_block(c, var, UNSHRUNKEN)
            prog_cols += cols
            prog_info += infos
        else:
            prog_cols.append(np.asarray(c, dtype=float))
            prog_info.append(ColumnInfo(name=var, group=UNSHRUNKEN, variable=var))

    promoted = set()
    if isinstance(spec.mode, GlobalShrinkage):
        for var, level in spec.mode.unshrunken_interactions:
            if var not in dataset.subgroups or level not in dataset.subgroups[var].levels:
                raise ConfigurationError(f"unknown promoted interaction {var}={level!r}")
            promoted.add((var, level))

    pred_cols: list[np.ndarray] = []
    pred_info: list[ColumnInfo] = []
    for var in scope:
        col = dataset.subgroups[var]
        cols, infos = _onehot_block(col, var, SHRUNKEN_PREDICTIVE, interacted=True)
        for c, info in zip(cols, infos):
            if (var, info.level) in promoted:
                info = ColumnInfo(
                    name=info.name, group=UNSHRUNKEN, variable=var, level=info.level, interacted=True
                )
            pred_cols.append(c)
            pred_info.append(info)

    offset = None
    if isinstance(dataset.endpoint, CountEndpoint) and dataset.endpoint.exposure is not None:
        offset = np.log(dataset.endpoint.exposure)

    n = dataset.n_subjects
    columns: list[ColumnInfo] = []
    if spec.has_intercept:
        columns.append(ColumnInfo(name="intercept", group="intercept"))
    columns.append(ColumnInfo(name="treatment", group="treatment"))
    columns += prog_info + pred_info

    return DesignMatrices(
        has_intercept=spec.has_intercept,
        treatment=dataset.treatment.astype(float),
        prognostic=np.column_stack(prog_cols) if prog_cols else np.empty((n, 0)),
        predictive=np.column_stack(pred_cols) if pred_cols else np.empty((n, 0)),
        offset=offset,
        columns=tuple(columns),
    )


def _check_family(dataset: TrialDataset, spec: ModelSpec) -> None:
    ep = dataset.endpoint
    need = {
        "gaussian": "ContinuousEndpoint",
        "bernoulli_logit": "BinaryEndpoint",
        "negative_binomial": "CountEndpoint",
        "cox_mspline": "SurvivalEndpoint",
    }[spec.family]
    if type(ep).__name__ != need:
        raise ConfigurationError(
            f"family {spec.family!r} requires a {need}, got {type(ep).__name__}"
        )
    if spec.family != "negative_binomial" and isinstance(ep, CountEndpoint):
        raise ConfigurationError("count endpoints require the negative_binomial family")


def linear_predictor(design: DesignMatrices, params, treatment_override=None) -> np.ndarray:
    """Linear predictor for a coefficient vector (or a draws x columns matrix).

    ``params`` must match the design column count and order (intercept,
    treatment, prognostic columns, predictive columns). With a treatment
    override, every subject's assignment is replaced by that arm, including
    inside the interaction columns. The offset, when present, is added.
    """
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != design.n_columns:
        raise ValueError(
            f"parameter length {params.shape[-1]} does not match design columns {design.n_columns}"
        )
    x = design.matrix(treatment_override)
    lp = params @ x.T
    if design.offset is not None:
        lp = lp + design.offset
    return lp

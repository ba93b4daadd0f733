"""Trial data containers and CSV ingestion.

A :class:`TrialDataset` holds one randomized trial: a binary treatment
assignment, one or more categorical subgrouping variables, optional
adjustment covariates, and an endpoint of one of four kinds (continuous,
binary, count, time-to-event).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "Categorical",
    "ContinuousEndpoint",
    "BinaryEndpoint",
    "CountEndpoint",
    "SurvivalEndpoint",
    "TrialDataset",
    "ConfigurationError",
    "read_trial_csv",
]


class ConfigurationError(ValueError):
    """Raised when a dataset, model spec, or run config is inconsistent."""


@dataclass(frozen=True)
class Categorical:
    """A categorical column stored as integer codes plus an ordered level list.

    The declared level order is meaningful: the first level is the baseline
    absorbed into the intercept under dummy encoding, and output tables keep
    this order.
    """

    codes: np.ndarray
    levels: tuple[str, ...]

    @classmethod
    def from_values(cls, values: Sequence, levels: Sequence[str] | None = None) -> "Categorical":
        vals = [str(v) for v in values]
        if levels is None:
            seen: dict[str, int] = {}
            for v in vals:
                if v not in seen:
                    seen[v] = len(seen)
            levels = tuple(seen)
        else:
            levels = tuple(str(l) for l in levels)
            unknown = sorted(set(vals) - set(levels))
            if unknown:
                raise ConfigurationError(f"values not in declared levels: {unknown}")
        idx = {l: i for i, l in enumerate(levels)}
        codes = np.array([idx[v] for v in vals], dtype=np.int64)
        return cls(codes=codes, levels=levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def counts(self) -> np.ndarray:
        return np.bincount(self.codes, minlength=self.n_levels)

    def __len__(self) -> int:
        return self.codes.shape[0]


@dataclass(frozen=True)
class ContinuousEndpoint:
    y: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class BinaryEndpoint:
    y: np.ndarray

    def __post_init__(self):
        if not np.isin(self.y, (0, 1)).all():
            raise ConfigurationError("binary endpoint values must be 0/1")

    def __len__(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class CountEndpoint:
    y: np.ndarray
    exposure: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.y < 0) or not np.allclose(self.y, np.round(self.y)):
            raise ConfigurationError("count endpoint values must be non-negative integers")
        if self.exposure is not None and np.any(self.exposure <= 0):
            raise ConfigurationError("exposures must be strictly positive")

    def __len__(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class SurvivalEndpoint:
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        if np.any(self.time <= 0):
            raise ConfigurationError("survival times must be strictly positive")
        if not np.isin(self.event, (0, 1)).all():
            raise ConfigurationError("event indicators must be 0/1")
        if self.time.shape != self.event.shape:
            raise ConfigurationError("time and event vectors differ in length")

    def __len__(self) -> int:
        return self.time.shape[0]


Endpoint = Union[ContinuousEndpoint, BinaryEndpoint, CountEndpoint, SurvivalEndpoint]


@dataclass(frozen=True)
class TrialDataset:
    """One randomized trial.

    Parameters
    ----------
    treatment : array of 0/1
        Assignment indicator, 0 = control, 1 = intervention.
    subgroups : dict of name -> Categorical
        Subgrouping variables; each must have at least two observed levels.
        Iteration order defines the subgroup index used everywhere else.
    endpoint : endpoint container
        One of the four endpoint kinds.
    covariates : dict of name -> numeric array or Categorical
        Additional adjustment covariates (optional).
    """

    treatment: np.ndarray
    subgroups: dict[str, Categorical]
    endpoint: Endpoint
    covariates: dict[str, Union[np.ndarray, Categorical]] = field(default_factory=dict)

    def __post_init__(self):
        z = np.asarray(self.treatment)
        if not np.isin(z, (0, 1)).all():
            raise ConfigurationError("treatment must be coded 0/1")
        object.__setattr__(self, "treatment", z.astype(np.float64))
        n = z.shape[0]
        if len(self.endpoint) != n:
            raise ConfigurationError("endpoint length does not match treatment length")
        if not self.subgroups:
            raise ConfigurationError("at least one subgrouping variable is required")
        for name, col in self.subgroups.items():
            if len(col) != n:
                raise ConfigurationError(f"subgroup variable {name!r} has wrong length")
            observed = np.unique(col.codes)
            if observed.size < 2:
                raise ConfigurationError(
                    f"subgroup variable {name!r} has fewer than 2 observed levels"
                )
        for name, col in self.covariates.items():
            if len(col) != n:
                raise ConfigurationError(f"covariate {name!r} has wrong length")
        if isinstance(self.endpoint, CountEndpoint):
            pass
        elif getattr(self.endpoint, "exposure", None) is not None:
            raise ConfigurationError("offsets are only supported for count endpoints")

    @property
    def n_subjects(self) -> int:
        return self.treatment.shape[0]

    @property
    def n_subgroups(self) -> int:
        """K: the total number of single-variable subgroups (sum of level counts)."""
        return sum(c.n_levels for c in self.subgroups.values())

    def subgroup_keys(self) -> list[tuple[str, str]]:
        """All (variable, level) pairs in declared order."""
        return [(v, l) for v, col in self.subgroups.items() for l in col.levels]

    def subgroup_mask(self, variable: str, level: str) -> np.ndarray:
        if variable not in self.subgroups:
            raise ConfigurationError(f"unknown subgrouping variable {variable!r}")
        col = self.subgroups[variable]
        if level not in col.levels:
            raise ConfigurationError(f"unknown level {level!r} of variable {variable!r}")
        return col.codes == col.levels.index(level)

    def subset(self, mask: np.ndarray) -> "TrialDataset":
        """Row subset preserving declared level orders (used by baseline fits)."""
        mask = np.asarray(mask, dtype=bool)
        sub = {
            name: Categorical(codes=col.codes[mask], levels=col.levels)
            for name, col in self.subgroups.items()
        }
        cov = {
            name: (
                Categorical(codes=c.codes[mask], levels=c.levels)
                if isinstance(c, Categorical)
                else np.asarray(c)[mask]
            )
            for name, c in self.covariates.items()
        }
        ep = self.endpoint
        if isinstance(ep, ContinuousEndpoint):
            ep2: Endpoint = ContinuousEndpoint(ep.y[mask])
        elif isinstance(ep, BinaryEndpoint):
            ep2 = BinaryEndpoint(ep.y[mask])
        elif isinstance(ep, CountEndpoint):
            ep2 = CountEndpoint(ep.y[mask], None if ep.exposure is None else ep.exposure[mask])
        else:
            ep2 = SurvivalEndpoint(ep.time[mask], ep.event[mask])
        ds = object.__new__(TrialDataset)
        object.__setattr__(ds, "treatment", self.treatment[mask])
        object.__setattr__(ds, "subgroups", sub)
        object.__setattr__(ds, "endpoint", ep2)
        object.__setattr__(ds, "covariates", cov)
        return ds


def read_trial_csv(
    path,
    treatment: str,
    subgroup_vars: Sequence[str],
    family: str,
    response: str | None = None,
    time: str | None = None,
    event: str | None = None,
    exposure: str | None = None,
    covariates: Sequence[str] = (),
    categorical_covariates: Sequence[str] = (),
) -> TrialDataset:
    """Read a trial from a CSV file with a header row.

    Column roles are declared by the caller (typically from the run config);
    categorical levels are taken as distinct strings in order of appearance.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty dataset")
    header = rows[0].keys()

    def col(name):
        if name not in header:
            raise ConfigurationError(f"{path}: missing column {name!r}")
        return [r[name] for r in rows]

    z = np.array([float(v) for v in col(treatment)])
    subgroups = {v: Categorical.from_values(col(v)) for v in subgroup_vars}
    cats = set(categorical_covariates)
    covs: dict[str, Union[np.ndarray, Categorical]] = {}
    for v in covariates:
        if v in cats:
            covs[v] = Categorical.from_values(col(v))
        else:
            covs[v] = np.array([float(x) for x in col(v)])

    if family == "gaussian":
        if response is None:
            raise ConfigurationError("gaussian family needs a response column")
        ep: Endpoint = ContinuousEndpoint(np.array([float(v) for v in col(response)]))
    elif family == "bernoulli_logit":
        if response is None:
            raise ConfigurationError("bernoulli_logit family needs a response column")
        ep = BinaryEndpoint(np.array([float(v) for v in col(response)]))
    elif family == "negative_binomial":
        if response is None:
            raise ConfigurationError("negative_binomial family needs a response column")
        expo = None if exposure is None else np.array([float(v) for v in col(exposure)])
        ep = CountEndpoint(np.array([float(v) for v in col(response)]), expo)
    elif family == "cox_mspline":
        if time is None or event is None:
            raise ConfigurationError("cox_mspline family needs time and event columns")
        ep = SurvivalEndpoint(
            np.array([float(v) for v in col(time)]),
            np.array([float(v) for v in col(event)]),
        )
    else:
        raise ConfigurationError(f"unknown family {family!r}")

    return TrialDataset(treatment=z, subgroups=subgroups, endpoint=ep, covariates=covs)

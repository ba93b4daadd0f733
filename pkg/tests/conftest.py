import numpy as np
import pytest

from shrinkforest.dataset import (
    BinaryEndpoint,
    Categorical,
    ContinuousEndpoint,
    CountEndpoint,
    SurvivalEndpoint,
    TrialDataset,
)


def finite_diff_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function, one column per input."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def rel_err(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return np.max(np.abs(approx - exact) / np.maximum(np.abs(exact), 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_trial(family="gaussian", n=80, seed=5, levels=(2, 3)):
    """Small synthetic trial with two subgrouping variables."""
    r = np.random.default_rng(seed)
    z = np.zeros(n)
    z[r.permutation(n)[: n // 2]] = 1.0
    sub = {
        "sex": Categorical.from_values(r.choice(["m", "f"], n)) if levels[0] == 2
        else Categorical.from_values(r.choice([f"s{i}" for i in range(levels[0])], n)),
        "region": Categorical.from_values(r.choice([f"r{i}" for i in range(levels[1])], n)),
    }
    lp = 0.4 * (sub["sex"].codes == 1) + 0.3 * z
    if family == "gaussian":
        ep = ContinuousEndpoint(lp + r.standard_normal(n))
    elif family == "bernoulli_logit":
        from scipy.special import expit

        ep = BinaryEndpoint((r.random(n) < expit(lp - 0.2)).astype(float))
    elif family == "negative_binomial":
        ep = CountEndpoint(r.poisson(np.exp(lp)).astype(float), r.uniform(0.5, 2.0, n))
    elif family == "cox_mspline":
        t = r.weibull(1.2, n) * 3.0 * np.exp(-lp / 1.2) + 1e-9
        c = r.uniform(0.5, 4.0, n)
        ep = SurvivalEndpoint(np.minimum(t, c), (t <= c).astype(float))
    else:
        raise ValueError(family)
    return TrialDataset(z, sub, ep)

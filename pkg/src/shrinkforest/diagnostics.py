"""Convergence diagnostics: rank-normalized split R-hat and effective sample size.

Implements the split-chain, rank-normalized diagnostics of Vehtari et al.
(Bayesian Analysis, 2021): bulk ESS from rank-normalized draws, tail ESS from
the 5% / 95% quantile indicator sequences, and R-hat as the maximum of the
rank-normalized and folded-rank-normalized split statistics.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm, rankdata

__all__ = ["split_rhat", "ess_bulk", "ess_tail"]


def _split(x: np.ndarray) -> np.ndarray:
    """Split (chains, draws) into (2*chains, draws//2), dropping an odd draw."""
    c, n = x.shape
    half = n // 2
    return np.vstack([x[:, :half], x[:, n - half :]])


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    r = rankdata(x, method="average").reshape(x.shape)
    return norm.ppf((r - 3.0 / 8.0) / (x.size + 0.25))


def _rhat_base(x: np.ndarray) -> float:
    c, n = x.shape
    if n < 2:
        return np.nan
    means = x.mean(axis=1)
    w = float(np.mean(x.var(axis=1, ddof=1)))
    b = n * float(np.var(means, ddof=1))
    if w <= 0.0:
        return 1.0
    var_plus = (n - 1.0) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def split_rhat(x: np.ndarray) -> float:
    """Rank-normalized split R-hat of a (chains, draws) array."""
    x = np.asarray(x, dtype=float)
    if np.allclose(x, x.flat[0]):
        return 1.0
    sx = _split(x)
    bulk = _rhat_base(_rank_normalize(sx))
    folded = _rhat_base(_rank_normalize(np.abs(sx - np.median(sx))))
    return max(bulk, folded)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Per-chain autocovariance (biased in n, as Geyer ESS expects), via FFT."""
    c, n = x.shape
    m = 2 ** int(np.ceil(np.log2(2 * n)))
    centered = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(centered, m, axis=1)
    acov = np.fft.irfft(f * np.conj(f), m, axis=1)[:, :n].real
    return acov / n


def _ess_base(x: np.ndarray) -> float:
    """Geyer initial-monotone-sequence ESS of a (chains, draws) array."""
    c, n = x.shape
    if n < 4 or np.allclose(x, x.flat[0]):
        return np.nan
    acov = _autocovariance(x)
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if c > 1:
        var_plus += float(np.var(x.mean(axis=1), ddof=1))
    if var_plus <= 0.0:
        return np.nan

    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1] = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    # initial positive sequence: keep pairs while their sum stays positive
    t = 1
    even, odd = rho[0], rho[1]
    while t < n - 3 and (even + odd) > 0.0:
        even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        if even + odd >= 0.0:
            rho[t + 1] = even
            rho[t + 2] = odd
        t += 2
    max_t = t - 2
    if even > 0.0:
        rho[max_t + 1] = even
    # initial monotone sequence: enforce non-increasing pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    n_total = c * n
    tau = -1.0 + 2.0 * float(np.sum(rho[: max_t + 1])) + float(rho[max_t + 1])
    tau = max(tau, 1.0 / np.log10(n_total))
    return float(n_total / tau)


def ess_bulk(x: np.ndarray) -> float:
    """Bulk effective sample size of a (chains, draws) array."""
    x = np.asarray(x, dtype=float)
    return _ess_base(_rank_normalize(_split(x)))


def ess_tail(x: np.ndarray) -> float:
    """Tail effective sample size: min over the 5% and 95% quantile indicators."""
    x = np.asarray(x, dtype=float)
    out = []
    for p in (0.05, 0.95):
        q = np.quantile(x, p)
        out.append(_ess_base(_split((x <= q).astype(float))))
    return float(np.nanmin(np.asarray(out, dtype=float)))

"""Adaptive Hamiltonian Monte Carlo sampling (multinomial NUTS) with diagnostics.

The sampler is a dynamic-trajectory HMC with a No-U-Turn stopping rule:
trajectories are doubled in random directions, candidate points are selected
multinomially by density weight, and a generalized U-turn criterion on the
accumulated momentum ends each trajectory. Warmup adapts the step size by
dual averaging toward a target acceptance statistic and estimates a diagonal
mass matrix over expanding windows.

Chains are independent: each owns a counter-based random stream derived from
(master seed, chain index), so results are bit-identical whether chains run
serially or in parallel.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrialDataset
from .design import DesignMatrices, ModelSpec
from .diagnostics import ess_bulk, ess_tail, split_rhat
from .model import ShrinkageModel
from .priors import RegularizedHorseshoe

__all__ = ["SamplerConfig", "PosteriorDraws", "FittedModel", "log_posterior", "sample", "fit_shrinkage"]


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings.

    ``target_accept=None`` resolves to 0.8, or 0.95 when the predictive prior
    is a regularized horseshoe (heavier tails need smaller steps).
    """

    n_chains: int = 4
    n_warmup: int = 1000
    n_draws: int = 1000
    target_accept: float | None = None
    max_treedepth: int = 10
    seed: int = 0
    n_jobs: int = 1
    divergence_threshold: float = 1000.0

    def __post_init__(self):
        if min(self.n_chains, self.n_warmup, self.n_draws) < 1:
            raise ValueError("chain, warmup, and draw counts must be positive")
        if self.target_accept is not None and not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class PosteriorDraws:
    """Posterior draws on the constrained scale plus sampler diagnostics."""

    draws: np.ndarray  # (n_chains * n_draws, dim)
    names: list[str]
    n_chains: int
    n_draws: int
    rhat: np.ndarray
    ess_bulk: np.ndarray
    ess_tail: np.ndarray
    divergences: int
    accept_mean: float
    max_treedepth_hits: int
    converged: bool
    messages: list[str] = field(default_factory=list)

    def by_chain(self) -> np.ndarray:
        return self.draws.reshape(self.n_chains, self.n_draws, -1)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def to_csv(self, path) -> None:
        """One row per draw, labeled columns, for external diagnostics."""
        header = ",".join(["chain", "draw"] + self.names)
        n = self.n_draws
        idx = np.column_stack(
            [np.repeat(np.arange(self.n_chains), n), np.tile(np.arange(n), self.n_chains)]
        )
        body = np.column_stack([idx, self.draws])
        fmt = ["%d", "%d"] + ["%.17g"] * len(self.names)
        np.savetxt(path, body, delimiter=",", header=header, comments="", fmt=fmt)


@dataclass
class FittedModel:
    """A fitted shrinkage model: draws plus the design and spec that made them."""

    dataset: TrialDataset
    spec: ModelSpec
    design: DesignMatrices
    model: ShrinkageModel
    draws: PosteriorDraws

    def coefficient_draws(self) -> np.ndarray:
        """(n_total, n_design_columns) constrained coefficient draws."""
        return self.draws.draws[:, : self.design.n_columns]


def log_posterior(model, q):
    """Value and gradient of a model's log posterior at unconstrained ``q``."""
    return model.log_posterior(q)


# ---------------------------------------------------------------------------
# leapfrog + tree building
# ---------------------------------------------------------------------------


class _Tree:
    """State of one trajectory (or subtree): both ends, the multinomial
    proposal, and the accumulated momentum for the U-turn criterion.

    ``s_*`` fields hold the "sharp" momenta (inverse mass times momentum)
    so U-turn dot products need no further multiplies.
    """

    __slots__ = (
        "q_minus", "r_minus", "s_minus", "g_minus",
        "q_plus", "r_plus", "s_plus", "g_plus",
        "q_prop", "logp_prop", "g_prop", "log_weight", "r_sum",
        "alpha_sum", "n_alpha", "valid", "divergent",
    )

    def __init__(self, q, r, sharp, logp, grad, log_weight, alpha, divergent):
        self.q_minus = q
        self.r_minus = r
        self.s_minus = sharp
        self.g_minus = grad
        self.q_plus = q
        self.r_plus = r
        self.s_plus = sharp
        self.g_plus = grad
        self.q_prop = q
        self.logp_prop = logp
        self.g_prop = grad
        self.log_weight = log_weight
        self.r_sum = r
        self.alpha_sum = alpha
        self.n_alpha = 1
        self.valid = not divergent
        self.divergent = divergent


def _leapfrog(model, q, r, grad, eps, inv_mass):
    r1 = r + 0.5 * eps * grad
    q1 = q + eps * (inv_mass * r1)
    logp1, grad1 = model.log_posterior(q1)
    r1 = r1 + 0.5 * eps * grad1
    return q1, r1, logp1, grad1


def _build_tree(model, tree_from, direction, depth, eps, inv_mass, h0, rng, div_threshold):
    """Recursively double a trajectory; returns a _Tree for the new subtree."""
    if depth == 0:
        if direction == -1:
            q, r, grad = tree_from.q_minus, tree_from.r_minus, tree_from.g_minus
        else:
            q, r, grad = tree_from.q_plus, tree_from.r_plus, tree_from.g_plus
        q1, r1, logp1, grad1 = _leapfrog(model, q, r, grad, direction * eps, inv_mass)
        sharp1 = inv_mass * r1
        if np.isfinite(logp1):
            h1 = -logp1 + 0.5 * float(r1 @ sharp1)
        else:
            h1 = np.inf
        delta = h1 - h0
        divergent = not np.isfinite(delta) or delta > div_threshold
        log_weight = -np.inf if divergent else -delta
        alpha = 0.0 if not np.isfinite(delta) else min(1.0, math.exp(min(0.0, -delta)))
        return _Tree(q1, r1, sharp1, logp1, grad1, log_weight, alpha, divergent)

    inner = _build_tree(model, tree_from, direction, depth - 1, eps, inv_mass, h0, rng, div_threshold)
    if not inner.valid:
        return inner
    outer = _build_tree(model, inner, direction, depth - 1, eps, inv_mass, h0, rng, div_threshold)
    _merge(inner, outer, direction, rng, biased=False)
    return inner


def _merge(tree, sub, direction, rng, biased):
    """Fold ``sub`` into ``tree`` on the side given by ``direction``.

    ``biased=True`` applies the progressive-sampling rule used at the top
    level (proposal accepted with probability w_sub / w_tree), favoring moves
    away from the start point; inner merges are plain multinomial.
    """
    # orient: left/right in trajectory order before touching the ends
    if direction == 1:
        rho_l, rho_r = tree.r_sum, sub.r_sum
        far_l, far_r = tree.s_minus, sub.s_plus
        end_l, begin_r = (tree.r_plus, tree.s_plus), (sub.r_minus, sub.s_minus)
    else:
        rho_l, rho_r = sub.r_sum, tree.r_sum
        far_l, far_r = sub.s_minus, tree.s_plus
        end_l, begin_r = (sub.r_plus, sub.s_plus), (tree.r_minus, tree.s_minus)

    if sub.valid:
        if biased:
            log_p = min(0.0, sub.log_weight - tree.log_weight)
        else:
            log_p = sub.log_weight - np.logaddexp(tree.log_weight, sub.log_weight)
        if math.log(max(rng.random(), 1e-300)) < log_p:
            tree.q_prop = sub.q_prop
            tree.logp_prop = sub.logp_prop
            tree.g_prop = sub.g_prop

    tree.log_weight = np.logaddexp(tree.log_weight, sub.log_weight)
    tree.alpha_sum += sub.alpha_sum
    tree.n_alpha += sub.n_alpha
    tree.divergent = tree.divergent or sub.divergent

    # generalized U-turn checks: merged span plus both join boundaries
    ok = sub.valid
    if ok:
        rho = rho_l + rho_r
        ok = float(rho @ far_l) > 0.0 and float(rho @ far_r) > 0.0
    if ok:
        rho = rho_l + begin_r[0]
        ok = float(rho @ far_l) > 0.0 and float(rho @ begin_r[1]) > 0.0
    if ok:
        rho = rho_r + end_l[0]
        ok = float(rho @ end_l[1]) > 0.0 and float(rho @ far_r) > 0.0
    tree.valid = ok
    tree.r_sum = tree.r_sum + sub.r_sum

    if direction == 1:
        tree.q_plus, tree.r_plus, tree.s_plus = sub.q_plus, sub.r_plus, sub.s_plus
        tree.g_plus = sub.g_plus
    else:
        tree.q_minus, tree.r_minus, tree.s_minus = sub.q_minus, sub.r_minus, sub.s_minus
        tree.g_minus = sub.g_minus


# ---------------------------------------------------------------------------
# adaptation
# ---------------------------------------------------------------------------


class _DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman & Gelman 2014)."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(eps0)

    def restart(self, eps0):
        self.mu = math.log(10.0 * eps0)
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_stat):
        self.count += 1
        m = self.count
        eta = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        w = m ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar

    @property
    def eps(self):
        return math.exp(self.log_eps)

    @property
    def eps_final(self):
        return math.exp(self.log_eps_bar)


def _find_reasonable_eps(model, q, logp, grad, inv_mass, rng):
    eps = 1.0
    r = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = -logp + 0.5 * float(r @ (inv_mass * r))
    _, r1, logp1, _ = _leapfrog(model, q, r, grad, eps, inv_mass)
    h1 = -logp1 + 0.5 * float(r1 @ (inv_mass * r1)) if np.isfinite(logp1) else np.inf
    log_ratio = h0 - h1
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * log_ratio <= direction * math.log(0.5):
            break
        eps *= 2.0**direction
        _, r1, logp1, _ = _leapfrog(model, q, r, grad, eps, inv_mass)
        h1 = -logp1 + 0.5 * float(r1 @ (inv_mass * r1)) if np.isfinite(logp1) else np.inf
        log_ratio = h0 - h1
        if eps < 1e-10 or eps > 1e7:
            break
    return max(eps, 1e-10)


def _mass_windows(n_warmup):
    """(start, end) iteration ranges of the slow (mass estimation) windows."""
    if n_warmup < 40:
        return [(max(1, n_warmup // 4), max(2, (3 * n_warmup) // 4))]
    init_buf, term_buf, base = (75, 50, 25) if n_warmup >= 150 else (
        max(1, int(0.15 * n_warmup)),
        max(1, int(0.10 * n_warmup)),
        max(1, int(0.10 * n_warmup)),
    )
    windows = []
    start = init_buf
    size = base
    while start + size <= n_warmup - term_buf:
        if start + 2 * size + size * 2 > n_warmup - term_buf:
            size = n_warmup - term_buf - start  # absorb the remainder
        windows.append((start, start + size))
        start += size
        size *= 2
    if not windows:
        windows = [(init_buf, max(init_buf + 1, n_warmup - term_buf))]
    return windows


class _Welford:
    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def variance(self):
        if self.n < 2:
            return np.ones_like(self.mean)
        var = self.m2 / (self.n - 1)
        # regularize toward unit scale like a weak normal-inverse-chi^2 prior
        return (self.n / (self.n + 5.0)) * var + 1e-3 * (5.0 / (self.n + 5.0))


# ---------------------------------------------------------------------------
# single chain + orchestration
# ---------------------------------------------------------------------------


def _run_chain(args):
    model, config, target_accept, chain_idx = args
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=config.seed, spawn_key=(chain_idx,)))
    )
    dim = model.dim
    q = model.initial_value(rng)
    logp, grad = model.log_posterior(q)
    inv_mass = np.ones(dim)
    da = _DualAveraging(_find_reasonable_eps(model, q, logp, grad, inv_mass, rng), target_accept)
    windows = _mass_windows(config.n_warmup)
    welford = _Welford(dim)
    window_idx = 0

    n_total = config.n_warmup + config.n_draws
    kept = np.empty((config.n_draws, len(model.constrained_names)))
    divergences = 0
    depth_hits = 0
    accept_sum = 0.0

    for it in range(1, n_total + 1):
        warming = it <= config.n_warmup
        eps = da.eps if warming else da.eps_final
        r0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        sharp0 = inv_mass * r0
        h0 = -logp + 0.5 * float(r0 @ sharp0)
        tree = _Tree(q, r0, sharp0, logp, grad, 0.0, 1.0, False)
        tree.alpha_sum = 0.0
        tree.n_alpha = 0
        depth = 0
        while tree.valid and depth < config.max_treedepth:
            direction = 1 if rng.random() < 0.5 else -1
            sub = _build_tree(
                model, tree, direction, depth, eps, inv_mass, h0, rng,
                config.divergence_threshold,
            )
            _merge(tree, sub, direction, rng, biased=True)
            depth += 1
        q = tree.q_prop
        logp = tree.logp_prop
        grad = tree.g_prop
        accept_stat = tree.alpha_sum / max(tree.n_alpha, 1)

        if warming:
            da.update(accept_stat)
            if window_idx < len(windows):
                lo, hi = windows[window_idx]
                if lo < it <= hi:
                    welford.add(q)
                if it == hi:
                    inv_mass = welford.variance()
                    welford = _Welford(dim)
                    window_idx += 1
                    da.restart(_find_reasonable_eps(model, q, logp, grad, inv_mass, rng))
        else:
            if tree.divergent:
                divergences += 1
            if depth == config.max_treedepth:
                depth_hits += 1
            accept_sum += accept_stat
            kept[it - config.n_warmup - 1] = model.constrain(q)

    return kept, divergences, depth_hits, accept_sum / config.n_draws


def sample(model, config: SamplerConfig) -> PosteriorDraws:
    """Draw from a model's posterior; returns constrained draws + diagnostics.

    The result is flagged non-converged (with a warning, never silently) when
    more than 10% of post-warmup transitions diverge or any parameter's split
    R-hat exceeds 1.05.
    """
    target = config.target_accept
    if target is None:
        pred = getattr(getattr(model, "spec", None), "prior", None)
        is_rhs = pred is not None and isinstance(pred.predictive, RegularizedHorseshoe)
        target = 0.95 if is_rhs else 0.8
    jobs = [(model, config, target, c) for c in range(config.n_chains)]
    if config.n_jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.n_chains)) as ex:
            results = list(ex.map(_run_chain, jobs))
    else:
        results = [_run_chain(j) for j in jobs]

    draws = np.concatenate([r[0] for r in results], axis=0)
    divergences = sum(r[1] for r in results)
    depth_hits = sum(r[2] for r in results)
    accept_mean = float(np.mean([r[3] for r in results]))

    names = model.constrained_names
    by_chain = draws.reshape(config.n_chains, config.n_draws, -1)
    rhat = np.array([split_rhat(by_chain[:, :, j]) for j in range(draws.shape[1])])
    essb = np.array([ess_bulk(by_chain[:, :, j]) for j in range(draws.shape[1])])
    esst = np.array([ess_tail(by_chain[:, :, j]) for j in range(draws.shape[1])])

    messages = []
    n_total = config.n_chains * config.n_draws
    if divergences > 0.10 * n_total:
        messages.append(
            f"{divergences}/{n_total} divergent transitions (>10%); results unreliable"
        )
    worst = np.nanmax(rhat) if rhat.size else 1.0
    if worst > 1.05:
        bad = names[int(np.nanargmax(rhat))]
        messages.append(f"split R-hat {worst:.3f} > 1.05 for {bad}; chains have not mixed")
    converged = not messages
    for msg in messages:
        warnings.warn(msg, stacklevel=2)

    return PosteriorDraws(
        draws=draws,
        names=list(names),
        n_chains=config.n_chains,
        n_draws=config.n_draws,
        rhat=rhat,
        ess_bulk=essb,
        ess_tail=esst,
        divergences=divergences,
        accept_mean=accept_mean,
        max_treedepth_hits=depth_hits,
        converged=converged,
        messages=messages,
    )


def fit_shrinkage(dataset: TrialDataset, spec: ModelSpec, config: SamplerConfig) -> FittedModel:
    """Build the design, sample the posterior, and bundle the results."""
    model = ShrinkageModel(dataset, spec)
    draws = sample(model, config)
    return FittedModel(dataset=dataset, spec=spec, design=model.design, model=model, draws=draws)

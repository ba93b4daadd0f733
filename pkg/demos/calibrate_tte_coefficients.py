"""Reproduce the frozen survival-generator coefficients by root-finding.

The time-to-event scenarios carry hard-coded treatment coefficients that
were calibrated so the large-sample subgroup truths hit their targets:
scenario 1 has AHR 0.66 everywhere, scenario 2 has 1.00 in x4=a and 0.53 in
x4=b/c, and scenarios 3/4 span [0.70, 1.17] and [0.52, 1.38]. This script
re-derives those values from scratch (a few minutes) so the calibration is
auditable; small deviations in the last digit are Monte Carlo noise.

Run:  python demos/calibrate_tte_coefficients.py
"""

import math

import numpy as np
from scipy.optimize import brentq, least_squares

import shrinkforest.simlab as sl

N = 400_000
HORIZON = sl._TTE_EVAL_HORIZON

rng = sl._rng(91)
SUB = sl._tte_covariates(rng, N)
U_EVENT = rng.random(N)
PROG = np.zeros(N)
for (var, level), coef in sl._TTE_PROGNOSTIC.items():
    col = SUB[var]
    PROG += coef * (col.codes == col.levels.index(level))


def times(lp):
    shape = sl._TTE_WEIBULL_SHAPE
    return sl._TTE_WEIBULL_SCALE * (-np.log(U_EVENT) * np.exp(-lp)) ** (1.0 / shape)


def mask(var, level):
    col = SUB[var]
    return col.codes == col.levels.index(level)


def ahr(treat_lp, m):
    t0 = times(PROG)
    t1 = times(PROG + treat_lp)
    return sl._ahr_from_times(t0[m], t1[m], HORIZON, 600)


ALL = np.ones(N, dtype=bool)

print("scenario 1: solve population AHR = 0.66 for the main effect")
b0 = brentq(lambda b: ahr(np.full(N, b), ALL) - 0.66, -0.6, -0.25, xtol=1e-5)
print(f"  b0 = {b0:.4f}   (frozen: {sl._TTE_SCENARIOS[1][0]})\n")

print("scenario 2: solve AHR(x4=a) = 1.00 and AHR(x4=b) = 0.53")


def resid2(p):
    add = np.where(mask("x4", "a"), p[0], p[1])
    return [ahr(add, mask("x4", "a")) - 1.00, ahr(add, mask("x4", "b")) - 0.53]


sol = least_squares(resid2, x0=[0.0, math.log(0.53)], diff_step=0.02, xtol=1e-8, ftol=1e-10)
print(f"  conditional log-HR: x4=a {sol.x[0]:.4f}, x4=b/c {sol.x[1]:.4f}")
print(f"  (frozen: b0 = {sl._TTE_SCENARIOS[2][0]}, x4=a interaction "
      f"{sl._TTE_SCENARIOS[2][1][('x4', 'a')]})\n")


def lp34(p):
    b0_, g2a, g7a, g7c = p
    add = np.full(N, b0_)
    add += np.where(mask("x2", "a"), g2a, 0.0)
    add += np.where(mask("x7", "a"), g7a, np.where(mask("x7", "c"), g7c, 0.0))
    return add


for scenario, targets, x0 in (
    (3, [1.17, 0.74, 0.70, 1.00], [math.log(0.85), 0.4, -0.25, 0.1]),
    (4, [1.38, 0.65, 0.52, 1.02], [math.log(0.80), 0.7, -0.45, 0.2]),
):
    print(f"scenario {scenario}: anchor x2=a, x2=b, x7=a, x7=c at {targets}")

    def resid(p):
        add = lp34(p)
        return [
            ahr(add, mask("x2", "a")) - targets[0],
            ahr(add, mask("x2", "b")) - targets[1],
            ahr(add, mask("x7", "a")) - targets[2],
            ahr(add, mask("x7", "c")) - targets[3],
        ]

    sol = least_squares(resid, x0=x0, diff_step=0.02, xtol=1e-8, ftol=1e-10)
    b0_, g2a, g7a, g7c = sol.x
    frozen_b0, frozen = sl._TTE_SCENARIOS[scenario]
    print(f"  b0 = {b0_:.4f} (frozen {frozen_b0}), x2=a {g2a:.4f} "
          f"(frozen {frozen[('x2', 'a')]}), x7=a {g7a:.4f} (frozen {frozen[('x7', 'a')]}), "
          f"x7=c {g7c:.4f} (frozen {frozen[('x7', 'c')]})")
    vals = [ahr(lp34(sol.x), mask(v, l)) for v, levels, _ in sl._TTE_VARIABLES for l in levels]
    print(f"  subgroup AHR range: {min(vals):.3f} - {max(vals):.3f}\n")

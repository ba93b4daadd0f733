"""M-spline / I-spline basis for the baseline hazard of the Bayesian Cox model.

M-splines are non-negative basis functions that each integrate to one over
the boundary interval; their running integrals (I-splines) rise monotonically
from 0 to 1. A convex combination of M-splines therefore yields a valid
hazard shape, with cumulative hazard available in closed form from the
I-splines.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["MSplineBasis", "build_mspline_basis"]


def _bspline_basis(knots: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    """All order-``order`` B-splines on ``knots`` evaluated at ``x``.

    Uses the Cox-de Boor recursion, vectorized over ``x``. The right boundary
    is closed: x equal to the last knot is assigned to the last non-empty
    interval so that evaluation at the upper boundary is well defined.
    """
    x = np.asarray(x, dtype=float)
    m = knots.size
    hi = knots[-1]
    b = np.zeros((x.size, m - 1))
    for i in range(m - 1):
        if knots[i + 1] > knots[i]:
            b[:, i] = (knots[i] <= x) & (x < knots[i + 1])
    # close the right end: put x == hi into the last non-degenerate interval
    at_hi = x == hi
    if at_hi.any():
        last = max(i for i in range(m - 1) if knots[i + 1] > knots[i])
        b[at_hi, :] = 0.0
        b[at_hi, last] = 1.0
    for k in range(2, order + 1):
        nb = np.zeros((x.size, m - k))
        for i in range(m - k):
            d1 = knots[i + k - 1] - knots[i]
            d2 = knots[i + k] - knots[i + 1]
            term = 0.0
            if d1 > 0:
                term = (x - knots[i]) / d1 * b[:, i]
            if d2 > 0:
                term = term + (knots[i + k] - x) / d2 * b[:, i + 1]
            nb[:, i] = term
        b = nb
    return b


@dataclass(frozen=True)
class MSplineBasis:
    """Cubic (by default) M-spline basis on the observed event-time range.

    Attributes
    ----------
    degree : spline degree (order = degree + 1)
    interior_knots : knots strictly inside the boundary interval
    lower, upper : boundary knots
    """

    degree: int
    interior_knots: np.ndarray
    lower: float
    upper: float

    @property
    def order(self) -> int:
        return self.degree + 1

    @property
    def n_basis(self) -> int:
        return self.interior_knots.size + self.order

    def _knots(self, extra: int = 0) -> np.ndarray:
        o = self.order + extra
        return np.concatenate(
            [np.full(o, self.lower), self.interior_knots, np.full(o, self.upper)]
        )

    def evaluate(self, t) -> np.ndarray:
        """M-spline values at ``t``: shape (len(t), n_basis); zero outside
        the boundary interval."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        knots = self._knots()
        b = _bspline_basis(knots, self.order, np.clip(t, self.lower, self.upper))
        widths = knots[self.order :] - knots[: -self.order]
        m = self.order * b / widths
        outside = (t < self.lower) | (t > self.upper)
        m[outside, :] = 0.0
        return m

    def integral(self, t) -> np.ndarray:
        """I-spline values at ``t``: each column rises from 0 to 1 over the
        boundary interval and is clamped outside it."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        clipped = np.clip(t, self.lower, self.upper)
        b2 = _bspline_basis(self._knots(extra=1), self.order + 1, clipped)
        # I_i(x) = sum_{j > i} B_j(x) with B of order (order + 1)
        rev_cum = np.cumsum(b2[:, ::-1], axis=1)[:, ::-1]
        out = np.zeros((t.size, self.n_basis))
        out[:, :] = rev_cum[:, 1 : self.n_basis + 1]
        out[t < self.lower, :] = 0.0
        out[t > self.upper, :] = 1.0
        return out


def build_mspline_basis(event_times, degree: int = 3) -> MSplineBasis:
    """Basis with interior knots at the event-time quartiles and boundary
    knots one smallest-gap beyond the extreme event times.

    Parameters
    ----------
    event_times : strictly positive times of subjects who had an event
    degree : spline degree (cubic by default)

    Raises
    ------
    ValueError when fewer than two distinct event times are available.
    """
    times = np.asarray(event_times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("event times must be strictly positive")
    distinct = np.unique(times)
    if distinct.size < 2:
        raise ValueError("need at least 2 distinct event times to place knots")
    eps = np.min(np.diff(distinct))
    lower = max(distinct[0] - eps, 0.0)  # keep H0(0) = 0
    upper = distinct[-1] + eps
    interior = np.quantile(times, [0.25, 0.5, 0.75])
    collapsed = np.unique(interior)
    if collapsed.size < interior.size:
        warnings.warn(
            "duplicated interior knots collapsed (coincident event-time quartiles)",
            stacklevel=2,
        )
    return MSplineBasis(
        degree=int(degree),
        interior_knots=collapsed,
        lower=float(lower),
        upper=float(upper),
    )

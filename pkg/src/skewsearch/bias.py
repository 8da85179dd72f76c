"""Optimal test-point bias under a Gaussian interpolation-error model.

Work in bracket coordinates where the endpoints sit at 0 and 1. The
interpolated root estimate ``u`` is treated as the mean of a Gaussian with
standard deviation ``sigma``; testing at ``u + eps`` leaves an interval of
length ``u + eps`` or ``1 - u - eps`` depending on which side the root
falls. `solve_bias` picks the ``eps`` minimising the expected length.

The probabilities are left un-normalised over [0, 1] on purpose: the
stationarity condition and its closed-form approximation are derived from
that form. A consequence is that for huge ``sigma`` the expected length
tends to 0 rather than 0.5 (the Gaussian mass escapes the window); the
minimiser still moves to the midpoint, which is the property that matters.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import ndtr

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# closed form is used only inside this region; outside it the small-sigma
# approximation drifts more than 5% from the true minimiser
CLOSED_FORM_MAX_SIGMA = 0.01
CLOSED_FORM_MIN_LOG_ARG = 2.0
CLOSED_FORM_MIN_EDGE_SIGMAS = 2.0


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def side_probabilities(x0_prime, epsilon, sigma):
    """(P1, P2): mass left and right of the test point inside [0, 1]."""
    e = ndtr(np.divide(epsilon, sigma))
    p1 = e - ndtr(-x0_prime / sigma)
    p2 = ndtr((1.0 - x0_prime) / sigma) - e
    return p1, p2


def expected_interval_length(x0_prime, epsilon, sigma):
    """Expected bracket length after testing at ``x0_prime + epsilon``.

    Vectorises over ``epsilon``.
    """
    p1, p2 = side_probabilities(x0_prime, epsilon, sigma)
    t = x0_prime + np.asarray(epsilon, dtype=float)
    out = p1 * t + p2 * (1.0 - t)
    return float(out) if np.ndim(out) == 0 else out


def expected_length_slope(x0_prime, epsilon, sigma):
    """d E[L] / d eps in simplified form; zero at the optimal bias."""
    z = np.divide(epsilon, sigma)
    return (2.0 * ndtr(z) - ndtr((1.0 - x0_prime) / sigma) - ndtr(-x0_prime / sigma)
            + _phi(z) / sigma * (2.0 * (x0_prime + np.asarray(epsilon)) - 1.0))


def closed_form_bias(x0_prime: float, sigma: float) -> float:
    """Small-sigma approximation of the optimal bias.

    Raises ValueError where the logarithm is not positive.
    """
    if x0_prime == 0.5:
        return 0.0
    arg = abs(2.0 * x0_prime - 1.0) / (sigma * _SQRT_2PI)
    if arg <= 1.0:
        raise ValueError(f"closed form undefined for x0'={x0_prime}, sigma={sigma}")
    mag = sigma * math.sqrt(2.0 * math.log(arg))
    return mag if x0_prime < 0.5 else -mag


def uses_closed_form(x0_prime: float, sigma: float) -> bool:
    if sigma > CLOSED_FORM_MAX_SIGMA:
        return False
    if min(x0_prime, 1.0 - x0_prime) < CLOSED_FORM_MIN_EDGE_SIGMAS * sigma:
        return False
    arg = abs(2.0 * x0_prime - 1.0) / (sigma * _SQRT_2PI)
    return arg > math.exp(CLOSED_FORM_MIN_LOG_ARG)


def _minimize_numeric(u: float, sigma: float, tol: float) -> float:
    lo, hi = -u, 1.0 - u
    # coarse scan over the whole feasible range, densified around eps=0
    # where the Gaussian step lives, then a bounded refine around the best
    width = min(hi - lo, 12.0 * sigma)
    grid = np.unique(np.concatenate([
        np.linspace(lo, hi, 1025),
        np.clip(np.linspace(-width, width, 513), lo, hi),
    ]))
    vals = expected_interval_length(u, grid, sigma)
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if b - a <= tol:
        return float(grid[i])
    # the stationarity condition pins the optimum far tighter than the
    # (very flat, for large sigma) objective itself
    sa, sb = expected_length_slope(u, a, sigma), expected_length_slope(u, b, sigma)
    if sa < 0 < sb:
        return float(brentq(lambda e: expected_length_slope(u, e, sigma), a, b, xtol=tol, rtol=4 * np.finfo(float).eps))
    res = minimize_scalar(lambda e: expected_interval_length(u, e, sigma),
                          bounds=(a, b), method="bounded", options={"xatol": tol})
    return float(res.x) if res.fun <= vals[i] else float(grid[i])


def solve_bias(x0_prime: float, sigma: float, margin: float = 1e-6, tol: float = 1e-12) -> float:
    """Bias ``eps`` minimising the expected interval length.

    The biased point ``x0_prime + eps`` is clamped into ``[margin, 1 - margin]``
    so a test never lands on a bracket endpoint.
    """
    if not 0.0 < x0_prime < 1.0:
        raise ValueError(f"x0_prime must lie in (0, 1), got {x0_prime}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    margin = min(max(margin, 0.0), 0.5)
    if x0_prime == 0.5:
        eps = 0.0
    elif x0_prime > 0.5:
        # mirror so both halves share one code path and stay exactly antisymmetric
        return -solve_bias(1.0 - x0_prime, sigma, margin, tol)
    elif uses_closed_form(x0_prime, sigma):
        eps = closed_form_bias(x0_prime, sigma)
    else:
        eps = _minimize_numeric(x0_prime, sigma, tol)
    t = min(max(x0_prime + eps, margin), 1.0 - margin)
    return t - x0_prime

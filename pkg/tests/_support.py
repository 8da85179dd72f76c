"""Shared oracles and the randomized analytic suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from skewsearch.oracle import AnalyticCellModel, SimOutcome


@dataclass
class FuncOracle:
    """Oracle from a plain function; ``None`` means capture failure."""

    func: object
    nominal_delay: float
    log: list = field(default_factory=list)

    @property
    def calls(self) -> int:
        return len(self.log)

    def evaluate(self, skew: float) -> SimOutcome:
        self.log.append(skew)
        d = self.func(skew)
        return SimOutcome.failure() if d is None else SimOutcome(d)


def linear_oracle(root: float = 0.3) -> FuncOracle:
    """Delay decreasing linearly in skew, crossing 1.1 * nominal at ``root``."""
    return FuncOracle(lambda x: 1.1 + (root - x), 1.0)


def random_suite(n: int = 1000, seed: int = 1):
    """(model, lo, hi) triples whose bracket straddles the degradation root."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m = AnalyticCellModel(d0=rng.uniform(10, 100), x_c=rng.uniform(-20, 40), lam=rng.uniform(0.5, 5),
                              alpha=math.exp(rng.uniform(math.log(0.3), math.log(5))))
        out.append((m, m.x_c - rng.uniform(0, 10), m.true_root() + rng.uniform(0.5, 10)))
    return out


def fresh(m: AnalyticCellModel) -> AnalyticCellModel:
    return AnalyticCellModel(m.d0, m.x_c, m.lam, m.alpha, m.tail, m.x_tail, m.fail_below)


def brute_force_bias(u: float, sigma: float, step: float) -> float:
    """Grid minimiser of the un-normalised expected length, written from scratch."""
    from scipy.special import ndtr

    eps = np.arange(-u, 1.0 - u + step / 2, step)
    p1 = ndtr(eps / sigma) - ndtr(-u / sigma)
    p2 = ndtr((1.0 - u) / sigma) - ndtr(eps / sigma)
    el = p1 * (u + eps) + p2 * (1.0 - u - eps)
    return float(eps[int(np.argmin(el))])

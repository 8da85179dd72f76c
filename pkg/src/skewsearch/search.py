"""Bracketing root search over a skew -> delay oracle.

Every method works on a `Bracket` whose endpoints classify on opposite
sides of the degradation threshold and stops once the bracket is no longer
than ``tau``. The returned root is the final bracket midpoint.

Delays enter interpolation through ``g = delay - threshold``; a capture
failure counts as above threshold with the stand-in delay ``2 * threshold``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .bias import solve_bias
from .oracle import SkewDelayOracle


class BracketNotFound(RuntimeError):
    pass


class MaxIterExceeded(RuntimeError):
    pass


class Classification(enum.Enum):
    BELOW = "below"
    ABOVE = "above"
    FAILURE = "failure"

    @property
    def is_below(self) -> bool:
        return self is Classification.BELOW


@dataclass(frozen=True)
class SearchConfig:
    tau: float = 0.01
    sigma0: float = 0.001
    beta: float = 5.0
    max_iter: int = 200
    threshold_ratio: float = 1.10
    safeguard_window: int = 2
    max_doublings: int = 60

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.threshold_ratio > 1:
            raise ValueError("threshold_ratio must exceed 1")
        if self.safeguard_window < 1 or self.max_iter < 1 or self.max_doublings < 0:
            raise ValueError("safeguard_window, max_iter must be >= 1 and max_doublings >= 0")


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    lo_class: Classification
    hi_class: Classification
    lo_delay: float | None = None
    hi_delay: float | None = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.lo_class.is_below == self.hi_class.is_below:
            raise ValueError(f"bracket endpoints on the same side: {self.lo_class}, {self.hi_class}")

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class TraceEntry:
    test_point: float
    classification: Classification
    delay: float | None
    interval_length_after: float


@dataclass
class SearchResult:
    root: float
    oracle_calls: int
    trace: list[TraceEntry]
    method: str
    bracket: Bracket
    expansion_calls: int = 0


# -- oracle probing ---------------------------------------------------------

class _Probe:
    """Classifies oracle outcomes and records the trace."""

    def __init__(self, oracle: SkewDelayOracle, config: SearchConfig, trace: list[TraceEntry] | None):
        self.oracle = oracle
        self.threshold = config.threshold_ratio * oracle.nominal_delay
        self.trace = trace if trace is not None else []

    def __call__(self, x: float) -> tuple[Classification, float | None]:
        out = self.oracle.evaluate(x)
        if out.failed:
            return Classification.FAILURE, None
        cls = Classification.ABOVE if out.delay > self.threshold else Classification.BELOW
        return cls, out.delay

    def g(self, cls: Classification, delay: float | None) -> float:
        if cls is Classification.FAILURE or delay is None:
            return self.threshold  # 2 * threshold - threshold
        return delay - self.threshold

    def record(self, x, cls, delay, length):
        self.trace.append(TraceEntry(x, cls, delay, length))


def make_bracket(oracle: SkewDelayOracle, lo: float, hi: float, config: SearchConfig = SearchConfig(),
                 trace: list[TraceEntry] | None = None) -> Bracket:
    """Evaluate both ends of ``[lo, hi]`` and return the bracket (2 calls)."""
    probe = _Probe(oracle, config, trace)
    lc, ld = probe(lo)
    probe.record(lo, lc, ld, math.inf)
    hc, hd = probe(hi)
    try:
        b = Bracket(lo, hi, lc, hc, ld, hd)
    except ValueError as exc:
        raise BracketNotFound(str(exc)) from None
    probe.record(hi, hc, hd, b.length)
    return b


def expand_bracket(oracle: SkewDelayOracle, l0: float, s0: float, direction: int = 1,
                   config: SearchConfig = SearchConfig(),
                   trace: list[TraceEntry] | None = None) -> Bracket:
    """Find a bracket by testing ``l0`` then ``l0 -/+ 2**n * s0``, n = 0, 1, ...

    ``direction`` tells which way passing skews lie: +1 when larger skews
    pass (setup sweeps), -1 when smaller skews pass. The step goes toward the
    side opposite to ``l0``'s classification and stops at the first sign
    change.
    """
    if not math.isfinite(l0):
        raise ValueError("l0 must be finite")
    if not s0 > 0:
        raise ValueError("s0 must be positive")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    probe = _Probe(oracle, config, trace)
    c0, d0 = probe(l0)
    probe.record(l0, c0, d0, math.inf)
    step_sign = -direction if c0.is_below else direction
    prev_x, prev_c, prev_d = l0, c0, d0
    for n in range(config.max_doublings + 1):
        x = l0 + step_sign * (2.0 ** n) * s0
        c, d = probe(x)
        if c.is_below != c0.is_below:
            if x < prev_x:
                b = Bracket(x, prev_x, c, prev_c, d, prev_d)
            else:
                b = Bracket(prev_x, x, prev_c, c, prev_d, d)
            probe.record(x, c, d, b.length)
            return b
        probe.record(x, c, d, math.inf)
        prev_x, prev_c, prev_d = x, c, d
    raise BracketNotFound(
        f"no sign change after {config.max_doublings} doublings from l0={l0}, s0={s0}")


# -- search state shared by all methods --------------------------------------

class _State:
    def __init__(self, probe: _Probe, bracket: Bracket):
        self.probe = probe
        self.lo, self.hi = bracket.lo, bracket.hi
        self.lo_c, self.hi_c = bracket.lo_class, bracket.hi_class
        self.lo_d, self.hi_d = bracket.lo_delay, bracket.hi_delay
        self.lo_g = probe.g(self.lo_c, self.lo_d)
        self.hi_g = probe.g(self.hi_c, self.hi_d)
        # evaluated points (x, g), oldest first
        self.points = [(self.lo, self.lo_g), (self.hi, self.hi_g)]
        self.last_side: str | None = None

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def test(self, x: float) -> str:
        """Evaluate at x, shrink the bracket, return which end moved."""
        if not self.lo < x < self.hi:
            raise AssertionError(f"test point {x} outside bracket ({self.lo}, {self.hi})")
        c, d = self.probe(x)
        g = self.probe.g(c, d)
        if c.is_below == self.lo_c.is_below:
            self.lo, self.lo_c, self.lo_d, self.lo_g = x, c, d, g
            side = "lo"
        else:
            self.hi, self.hi_c, self.hi_d, self.hi_g = x, c, d, g
            side = "hi"
        self.points.append((x, g))
        self.probe.record(x, c, d, self.length)
        self.last_side = side
        return side

    def bracket(self) -> Bracket:
        return Bracket(self.lo, self.hi, self.lo_c, self.hi_c, self.lo_d, self.hi_d)

    def secant(self) -> float:
        return self.lo - self.lo_g * (self.hi - self.lo) / (self.hi_g - self.lo_g)

    def inverse_quadratic(self, on_bracket: bool = True) -> float | None:
        """Inverse quadratic through the three latest distinct points.

        With ``on_bracket`` only points inside or on the bracket qualify.
        """
        picked: list[tuple[float, float]] = []
        for x, g in reversed(self.points):
            if on_bracket and not self.lo <= x <= self.hi:
                continue
            if all(x != px and g != pg for px, pg in picked):
                picked.append((x, g))
                if len(picked) == 3:
                    break
        if len(picked) < 3:
            return None
        (a, fa), (b, fb), (c, fc) = picked
        x = (a * fb * fc / ((fa - fb) * (fa - fc))
             + b * fa * fc / ((fb - fa) * (fb - fc))
             + c * fa * fb / ((fc - fa) * (fc - fb)))
        return x if math.isfinite(x) else None


def _run(name: str, oracle: SkewDelayOracle, bracket: Bracket, config: SearchConfig,
         step: Callable[[_State], None], trace: list[TraceEntry] | None) -> SearchResult:
    start = oracle.calls
    probe = _Probe(oracle, config, trace)
    st = _State(probe, bracket)
    it = 0
    while st.length > config.tau:
        if it >= config.max_iter:
            raise MaxIterExceeded(
                f"{name}: bracket [{st.lo}, {st.hi}] still wider than tau after {it} iterations")
        step(st)
        it += 1
    return SearchResult(0.5 * (st.lo + st.hi), oracle.calls - start, probe.trace, name, st.bracket())


def _inside(st: _State, x: float | None, guard: float) -> bool:
    return x is not None and math.isfinite(x) and st.lo + guard < x < st.hi - guard


# -- classic methods ----------------------------------------------------------

def search_bisection(oracle, bracket: Bracket, config: SearchConfig = SearchConfig(), trace=None) -> SearchResult:
    return _run("bisection", oracle, bracket, config, lambda st: st.test(0.5 * (st.lo + st.hi)), trace)


def search_regula_falsi(oracle, bracket: Bracket, config: SearchConfig = SearchConfig(), trace=None) -> SearchResult:
    guard = config.tau / 4

    def step(st: _State):
        x = st.secant()
        st.test(x if _inside(st, x, guard) else 0.5 * (st.lo + st.hi))

    return _run("regula_falsi", oracle, bracket, config, step, trace)


def search_quadratic(oracle, bracket: Bracket, config: SearchConfig = SearchConfig(), trace=None) -> SearchResult:
    guard = config.tau / 4

    def step(st: _State):
        x = st.inverse_quadratic()
        if x is None:
            x = st.secant()
        st.test(x if _inside(st, x, guard) else 0.5 * (st.lo + st.hi))

    return _run("quadratic", oracle, bracket, config, step, trace)


def search_brent(oracle, bracket: Bracket, config: SearchConfig = SearchConfig(), trace=None) -> SearchResult:
    """Brent's zeroin with sign taken from the classification.

    The explicit bracket, not zeroin's [b, c], decides termination; the two
    coincide in practice but the explicit one is what the trace reports.
    """
    tol = 0.5 * config.tau

    # zeroin state; the sign of g is replaced by side membership
    a, b = bracket.lo, bracket.hi
    probe0 = _Probe(oracle, config, None)
    fa, fb = probe0.g(bracket.lo_class, bracket.lo_delay), probe0.g(bracket.hi_class, bracket.hi_delay)
    sa, sb = bracket.lo_class.is_below, bracket.hi_class.is_below
    c, fc, sc = a, fa, sa
    d = e = b - a

    def step(st: _State):
        nonlocal a, b, c, fa, fb, fc, sa, sb, sc, d, e
        if sb == sc:
            c, fc, sc = a, fa, sa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
            sa, sb, sc = sb, sc, sb
        xm = 0.5 * (c - b)
        if fb == 0.0:
            # b is the root: a minimal step toward c closes the bracket
            d = e = 0.0
        elif abs(e) >= tol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q_ = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q_ * (q_ - r) - (b - a) * (r - 1.0))
                q = (q_ - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d
        a, fa, sa = b, fb, sb
        if abs(d) > tol:
            x = b + d
        else:
            x = b + math.copysign(tol, xm)
        # keep strictly inside the explicit bracket
        if not st.lo < x < st.hi:
            x = 0.5 * (st.lo + st.hi)
        side = st.test(x)
        b = x
        fb = st.points[-1][1]
        sb = (st.lo_c if side == "lo" else st.hi_c).is_below

    return _run("brent", oracle, bracket, config, step, trace)


# -- bias-enhanced interpolation ------------------------------------------------

def search_beira(oracle, bracket: Bracket, config: SearchConfig = SearchConfig(), trace=None) -> SearchResult:
    """Interpolation whose test point is biased by the optimal ``eps``.

    The interpolation estimate is inverse quadratic through the last three
    points when it lands inside the bracket, else the secant through the
    endpoints. ``sigma = sigma0 * beta**n`` with ``n`` the run length of
    tests replacing the same endpoint. If the bracket shrinks by less than
    25% over ``safeguard_window`` iterations, one bisection step is forced.
    """
    history: list[float] = []
    run = 0

    def step(st: _State):
        nonlocal run
        L = st.length
        history.append(L)
        w = config.safeguard_window
        forced = len(history) > w and L > 0.75 * history[-1 - w]
        if forced:
            x = 0.5 * (st.lo + st.hi)
            history.clear()
            history.append(L)
        else:
            est = st.inverse_quadratic(on_bracket=False)
            if not _inside(st, est, 0.0):
                est = st.secant()
            u = (est - st.lo) / L
            u = min(max(u, 1e-12), 1.0 - 1e-12)
            sigma = config.sigma0 * config.beta ** run
            margin = min(max(config.tau / L, 1e-6), 0.5)
            t = u + solve_bias(u, sigma, margin=margin)
            x = st.lo + t * L
            if not st.lo < x < st.hi:
                x = 0.5 * (st.lo + st.hi)
        prev = st.last_side
        side = st.test(x)
        run = run + 1 if side == prev else 0

    return _run("beira", oracle, bracket, config, step, trace)


METHODS: dict[str, Callable[..., SearchResult]] = {
    "bisection": search_bisection,
    "regula_falsi": search_regula_falsi,
    "quadratic": search_quadratic,
    "brent": search_brent,
    "beira": search_beira,
}


def get_method(name: str) -> Callable[..., SearchResult]:
    try:
        return METHODS[name]
    except KeyError:
        raise ValueError(f"unknown search method {name!r}; choose from {sorted(METHODS)}") from None


def characterize(oracle: SkewDelayOracle, l0: float, s0: float, method: str = "beira",
                 config: SearchConfig = SearchConfig(), direction: int = 1) -> SearchResult:
    """Bracket expansion from (l0, s0) followed by the named search.

    ``oracle_calls`` covers both phases; ``expansion_calls`` the first.
    """
    start = oracle.calls
    trace: list[TraceEntry] = []
    bracket = expand_bracket(oracle, l0, s0, direction, config, trace)
    n_expand = oracle.calls - start
    res = get_method(method)(oracle, bracket, config, trace)
    res.oracle_calls = oracle.calls - start
    res.expansion_calls = n_expand
    return res


# -- trace helpers ----------------------------------------------------------------

def max_one_sided_run(trace: Iterable[TraceEntry], bracket: Bracket | None = None) -> int:
    """Longest run of consecutive search steps whose points classify alike.

    Only entries after the bracket exists (finite length) are considered.
    """
    best = cur = 0
    prev = None
    for e in trace:
        if not math.isfinite(e.interval_length_after):
            prev = None
            continue
        side = e.classification.is_below
        cur = cur + 1 if side == prev else 1
        prev = side
        best = max(best, cur)
    return best


TRACE_COLUMNS = ("iter", "test_point", "classification", "delay", "interval_length")


def trace_rows(trace: Iterable[TraceEntry]):
    for i, e in enumerate(trace):
        yield (i, repr(float(e.test_point)), e.classification.value,
               "" if e.delay is None else repr(float(e.delay)), repr(float(e.interval_length_after)))


def trace_to_csv(trace: Iterable[TraceEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(trace))
    return buf.getvalue()

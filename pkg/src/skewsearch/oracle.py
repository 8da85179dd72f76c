"""Skew -> CK-Q delay oracles.

An oracle is the expensive black box of characterization: one call is one
transient simulation. Everything here exposes the same small surface::

    outcome = oracle.evaluate(skew)    # SimOutcome
    oracle.calls                       # number of evaluations so far
    oracle.nominal_delay               # reference CK-Q delay for the threshold

`AnalyticCellModel` is a closed-form metastability model whose degradation
root is known exactly, so search accuracy can be checked without SPICE.
`ExternalOracle` shells out to a simulator deck per evaluation.
"""

from __future__ import annotations

import math
import re
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np


class AdapterFailure(RuntimeError):
    """External simulator exited non-zero or printed something unparseable."""


@dataclass(frozen=True)
class SimOutcome:
    """Either a CK-Q delay or a capture failure (``delay is None``)."""

    delay: float | None

    def __post_init__(self):
        if self.delay is not None and not self.delay > 0:
            raise ValueError(f"delay must be positive, got {self.delay}")

    @property
    def failed(self) -> bool:
        return self.delay is None

    @classmethod
    def failure(cls) -> "SimOutcome":
        return cls(None)


class SkewDelayOracle(Protocol):
    nominal_delay: float

    @property
    def calls(self) -> int: ...

    def evaluate(self, skew: float) -> SimOutcome: ...


class _Counter:
    """Thread-safe call counter shared by all oracle implementations."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def bump(self) -> None:
        with self._lock:
            self._n += 1

    @property
    def value(self) -> int:
        return self._n


@dataclass
class AnalyticCellModel:
    """Exponential metastability model of a register's CK-Q delay.

    For setup orientation (``fail_below=True``) a skew at or below ``x_c``
    fails to capture; above it::

        delay(x) = d0 * (1 + alpha * exp(-(x - x_c) / lam))
                   + d0 * tail * max(0, x - x_tail) ** 2

    With ``fail_below=False`` the skew axis is mirrored about ``x_c`` so the
    same code serves hold-style sweeps. ``tail`` reproduces the non-monotone
    delay seen at very large skews and must stay 0 for correctness checks.
    """

    d0: float
    x_c: float
    lam: float
    alpha: float
    tail: float = 0.0
    x_tail: float = math.inf
    fail_below: bool = True
    _counter: _Counter = field(default_factory=_Counter, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.d0 > 0 and self.lam > 0 and self.alpha > 0):
            raise ValueError(f"d0, lam and alpha must be positive: {self}")
        if self.tail < 0:
            raise ValueError("tail must be non-negative")

    @property
    def nominal_delay(self) -> float:
        return self.d0

    @property
    def calls(self) -> int:
        return self._counter.value

    def _offset(self, skew: float) -> float:
        # distance into the passing region; <= 0 means capture failure
        return skew - self.x_c if self.fail_below else self.x_c - skew

    def delay_at(self, skew: float) -> float | None:
        """Closed-form delay without touching the call counter."""
        u = self._offset(skew)
        if u <= 0:
            return None
        delay = self.d0 * (1.0 + self.alpha * math.exp(-u / self.lam))
        if self.tail:
            v = u - (self.x_tail - self.x_c)
            if v > 0:
                delay += self.d0 * self.tail * v * v
        return delay

    def evaluate(self, skew: float) -> SimOutcome:
        self._counter.bump()
        return SimOutcome(self.delay_at(skew))

    def true_root(self, threshold_ratio: float = 1.10) -> float:
        return true_root(self, threshold_ratio)


def true_root(model: AnalyticCellModel, threshold_ratio: float = 1.10) -> float:
    """Skew where the delay crosses ``threshold_ratio * d0``.

    Test and report use only; search code never sees it.
    """
    if not threshold_ratio > 1:
        raise ValueError("threshold_ratio must exceed 1")
    offset = model.lam * math.log(model.alpha / (threshold_ratio - 1.0))
    return model.x_c + offset if model.fail_below else model.x_c - offset


# -- PVT description -------------------------------------------------------

PROCESS_CODES = {"TT": 0, "FF": 1, "SS": -1}


@dataclass(frozen=True)
class PvtCorner:
    process: str
    voltage: float
    temperature: float

    def __post_init__(self):
        if self.process not in PROCESS_CODES:
            raise ValueError(f"unknown process {self.process!r}, expected TT/FF/SS")

    @property
    def code(self) -> int:
        return PROCESS_CODES[self.process]

    @property
    def label(self) -> str:
        v = f"{self.voltage:g}".replace(".", "p")
        t = f"{self.temperature:g}".replace("-", "m")
        return f"{self.process.lower()}{v}v{t}c"


# 16 global corners used throughout the benchmarks (V in volts, T in deg C)
STANDARD_CORNERS: tuple[PvtCorner, ...] = tuple(
    PvtCorner(p, v, t)
    for p, v, t in [
        ("TT", 0.8, 25), ("TT", 0.8, 85), ("TT", 0.9, 25), ("TT", 0.9, 85),
        ("FF", 0.88, -40), ("FF", 0.88, 0), ("FF", 0.88, 125),
        ("FF", 0.99, -40), ("FF", 0.99, 0), ("FF", 0.99, 125),
        ("SS", 0.72, -40), ("SS", 0.72, 0), ("SS", 0.72, 125),
        ("SS", 0.81, -40), ("SS", 0.81, 0), ("SS", 0.81, 125),
    ]
)

NOMINAL_CORNER = PvtCorner("TT", 0.8, 25)


@dataclass(frozen=True, eq=False)
class PvtSample:
    """A global corner plus a vector of local (per-device) variations."""

    corner: PvtCorner
    local_vars: np.ndarray

    def features(self) -> np.ndarray:
        """Regression encoding: process code, volts, degC/100, raw locals."""
        head = [self.corner.code, self.corner.voltage, self.corner.temperature / 100.0]
        return np.concatenate([head, np.asarray(self.local_vars, dtype=float)])

    def __eq__(self, other):
        if not isinstance(other, PvtSample):
            return NotImplemented
        return self.corner == other.corner and np.array_equal(self.local_vars, other.local_vars)

    def __hash__(self):
        return hash((self.corner, np.asarray(self.local_vars, dtype=float).tobytes()))


# -- synthetic PVT -> model map --------------------------------------------

# Base parameters at TT / 0.8 V / 25 C with zero local variation. Roots sit
# near 0.6 d0 (DFF) and 0.4 d0 (latch), close to the failure boundary.
BASE_PARAMS = {
    "dff": dict(d0=40.0, x_c=18.0, lam=2.0, alpha=2.0),
    "latch": dict(d0=55.0, x_c=15.0, lam=2.5, alpha=1.5),
}

# Per-parameter scaling of the global slow-down term, and the norm of the
# local-variation sensitivity vector (log scale).
_GLOBAL_GAIN = {"d0": 1.0, "x_c": 1.1, "lam": 0.8, "alpha": 0.3}
_LOCAL_NORM = {"d0": 0.05, "x_c": 0.08, "lam": 0.06, "alpha": 0.05}
_PARAM_NAMES = ("d0", "x_c", "lam", "alpha")


@dataclass(frozen=True)
class _PvtMap:
    """Seeded coefficients of the log-multiplier for each model parameter."""

    gain: dict
    cross: dict
    local: dict
    coupling: dict


def _build_map(topology: str, dim: int, seed: int) -> _PvtMap:
    # topology is mixed into the stream so latch and DFF maps differ
    rng = np.random.default_rng([seed, sum(map(ord, topology)), dim])
    gain, cross, local, coupling = {}, {}, {}, {}
    for name in _PARAM_NAMES:
        g = _GLOBAL_GAIN[name] * (1.0 + 0.15 * rng.standard_normal())
        # (process, volts-from-0.8, hot-from-25C/100); fast/high-V shrink timing
        gain[name] = g * np.array([-0.35, -2.0, 0.10]) * (1.0 + 0.1 * rng.standard_normal(3))
        cross[name] = 0.15 * rng.standard_normal(2)
        if dim:
            # a handful of devices dominate: decaying weights over a seeded order
            order = rng.permutation(dim)
            w = np.zeros(dim)
            w[order] = rng.standard_normal(dim) * (np.arange(dim) + 1.0) ** -1.5
            w *= _LOCAL_NORM[name] / np.linalg.norm(w)
        else:
            w = np.zeros(0)
        local[name] = w
        coupling[name] = 0.3 * rng.standard_normal()
    return _PvtMap(gain, cross, local, coupling)


_MAP_CACHE: dict[tuple[str, int, int], _PvtMap] = {}
_MAP_LOCK = threading.Lock()


def _pvt_map(topology: str, dim: int, seed: int) -> _PvtMap:
    key = (topology, dim, seed)
    with _MAP_LOCK:
        if key not in _MAP_CACHE:
            _MAP_CACHE[key] = _build_map(topology, dim, seed)
        return _MAP_CACHE[key]


def model_from_pvt(sample: PvtSample, topology: str = "dff", seed: int = 0) -> AnalyticCellModel:
    """Deterministic synthetic cell model for one PVT sample.

    Each parameter is ``base * exp(affine + quadratic)`` in the corner
    coordinates and local variations; the exponent vanishes at the nominal
    corner with zero local variation, giving the base parameters exactly.
    """
    if topology not in BASE_PARAMS:
        raise ValueError(f"unknown topology {topology!r}")
    u = np.asarray(sample.local_vars, dtype=float)
    m = _pvt_map(topology, u.size, seed)
    c = sample.corner
    z = np.array([c.code, c.voltage - NOMINAL_CORNER.voltage,
                  (c.temperature - NOMINAL_CORNER.temperature) / 100.0])
    params = {}
    for name in _PARAM_NAMES:
        glob = float(m.gain[name] @ z)
        quad = m.cross[name][0] * z[0] * z[1] + m.cross[name][1] * z[1] * z[2]
        loc = float(m.local[name] @ u) if u.size else 0.0
        expo = glob + quad + loc + m.coupling[name] * loc * glob
        params[name] = BASE_PARAMS[topology][name] * math.exp(expo)
    return AnalyticCellModel(**params)


# -- external simulator adapter ----------------------------------------------

class ExternalOracle:
    """Runs a shell command per evaluation and parses its stdout.

    ``command_template`` must contain ``{skew}``. Output containing the
    failure token means capture failure; otherwise the first number after
    the delay prefix is the delay.
    """

    def __init__(self, command_template: str, parse_rule: str | Sequence[str] = ("delay=", "FAIL"),
                 nominal_delay: float = 1.0, timeout: float | None = 600.0):
        if "{skew}" not in command_template:
            raise ValueError("command template needs a {skew} placeholder")
        if isinstance(parse_rule, str):
            parts = [p.strip() for p in parse_rule.split(",")]
            if len(parts) != 2 or not all(parts):
                raise ValueError(f"parse rule must be 'delay_prefix,failure_token', got {parse_rule!r}")
            parse_rule = parts
        self.delay_prefix, self.failure_token = parse_rule
        self.command_template = command_template
        self.nominal_delay = nominal_delay
        self.timeout = timeout
        self._counter = _Counter()
        self._lock = threading.Lock()
        self._number = re.compile(re.escape(self.delay_prefix) + r"\s*([-+0-9.eE]+)")

    @property
    def calls(self) -> int:
        return self._counter.value

    def evaluate(self, skew: float) -> SimOutcome:
        cmd = self.command_template.format(skew=shlex.quote(repr(float(skew))))
        # one simulation at a time: decks usually share scratch files
        with self._lock:
            self._counter.bump()
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=self.timeout)
        if proc.returncode != 0:
            raise AdapterFailure(f"command exited {proc.returncode}: {cmd!r}\n{proc.stderr.strip()}")
        out = proc.stdout
        if self.failure_token in out:
            return SimOutcome.failure()
        match = self._number.search(out)
        if not match:
            raise AdapterFailure(f"no {self.delay_prefix!r} value in output of {cmd!r}: {out!r}")
        try:
            return SimOutcome(float(match.group(1)))
        except ValueError as exc:
            raise AdapterFailure(f"unparseable delay in {out!r}: {exc}") from None


def external_adapter(command_template: str, parse_rule: str | Sequence[str] = ("delay=", "FAIL"),
                     nominal_delay: float = 1.0) -> ExternalOracle:
    return ExternalOracle(command_template, parse_rule, nominal_delay)

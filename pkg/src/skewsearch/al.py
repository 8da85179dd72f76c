"""Active-learning estimation of initial search intervals across PVT samples.

Loop: uniform first batch searched from logical-effort intervals, then
repeatedly fit a GP on (features -> setup time), predict the rest, and pick
the next batch per corner in proportion to that corner's total predictive
uncertainty. After ``k_max`` selections every remaining sample is searched
from its predicted interval ``(mu, max(v, s_min))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from . import gp as gpmod
from .effort import initial_interval
from .gp import Prediction
from .oracle import PvtSample, SkewDelayOracle
from .search import BracketNotFound, SearchConfig, SearchResult, characterize

log = logging.getLogger(__name__)

# predicted intervals get this many doublings before falling back to effort
PREDICTED_MAX_DOUBLINGS = 6


@dataclass(frozen=True)
class AlConfig:
    M: int = 200
    k_max: int = 5

    def __post_init__(self):
        if self.M < 1 or self.k_max < 0:
            raise ValueError("need M >= 1 and k_max >= 0")


class SampleError(RuntimeError):
    """A sample's search failed; ``partial`` is the run up to that point when known."""

    def __init__(self, sample_id: int, cause: Exception):
        super().__init__(f"sample {sample_id}: {type(cause).__name__}: {cause}")
        self.sample_id = sample_id
        self.cause = cause
        self.partial: "AlRun | None" = None


@dataclass
class SampleRecord:
    sample_id: int
    phase: int
    source: str  # "effort", "predicted" or "predicted->effort"
    l0: float
    s0: float
    result: SearchResult
    oracle_calls: int
    predicted: Prediction | None = None

    @property
    def setup_time(self) -> float:
        return self.result.root


@dataclass
class PhaseStats:
    phase: int
    kind: str  # "initial", "iteration" or "final"
    batch_size: int
    mean_calls: float
    mean_pred_std: float
    rmse_pred_vs_actual: float
    mean_unsimulated_std: float = math.nan


@dataclass
class AlRun:
    records: dict[int, SampleRecord] = field(default_factory=dict)
    phases: list[PhaseStats] = field(default_factory=list)
    selections: list[list[int]] = field(default_factory=list)

    def scatter(self):
        """(sample_id, phase, predicted mu, actual) for predicted samples."""
        return [(r.sample_id, r.phase, r.predicted.mu, r.setup_time)
                for r in sorted(self.records.values(), key=lambda r: r.sample_id) if r.predicted]

    @property
    def mean_calls(self) -> float:
        return float(np.mean([r.oracle_calls for r in self.records.values()]))


def initial_selection(samples: Sequence, config: AlConfig) -> list[int]:
    """0-based ids at 1-based positions floor(j N / M), j = 1..M.

    Colliding floors advance to the next unused position.
    """
    n = len(samples)
    if n < config.M:
        raise ValueError(f"need N >= M, got N={n}, M={config.M}")
    used: set[int] = set()
    ids = []
    for j in range(1, config.M + 1):
        pos = (j * n) // config.M
        while pos in used or pos < 1:
            pos = pos + 1 if pos < n else 1
        used.add(pos)
        ids.append(pos - 1)
    return ids


def _allocate(totals: Sequence[float], capacity: Sequence[int], budget: int) -> list[int]:
    """Largest-remainder split of ``budget`` proportional to ``totals``, capped by capacity."""
    k = len(totals)
    alloc = [0] * k
    open_ = [i for i in range(k) if capacity[i] > 0]
    budget = min(budget, sum(capacity))
    while budget > 0 and open_:
        weights = [max(totals[i], 0.0) for i in open_]
        tot = sum(weights)
        if tot <= 0:
            # nothing uncertain left: spread by remaining capacity
            weights = [float(capacity[i] - alloc[i]) for i in open_]
            tot = sum(weights)
        quotas = [budget * w / tot for w in weights]
        share = [math.floor(q) for q in quotas]
        left = budget - sum(share)
        order = sorted(range(len(open_)), key=lambda j: (-(quotas[j] - share[j]), open_[j]))
        for j in order[:left]:
            share[j] += 1
        spill = 0
        for j, i in enumerate(open_):
            room = capacity[i] - alloc[i]
            take = min(share[j], room)
            alloc[i] += take
            spill += share[j] - take
        open_ = [i for i in open_ if alloc[i] < capacity[i]]
        budget = spill
    return alloc


def corner_quotas(predictions: Mapping[Hashable, Sequence[tuple[int, Prediction]]], M: int) -> dict:
    keys = list(predictions)
    totals = [sum(p.v for _, p in predictions[k]) for k in keys]
    alloc = _allocate(totals, [len(predictions[k]) for k in keys], M)
    return dict(zip(keys, alloc))


def select_batch(predictions: Mapping[Hashable, Sequence[tuple[int, Prediction]]], config: AlConfig) -> list[int]:
    """Per-corner top-m_i by uncertainty with m_i ~ M * V_i / V, sum m_i = M.

    ``predictions`` maps a corner key to (sample_id, Prediction) pairs of
    unsimulated samples; ties break on the lower sample id.
    """
    quotas = corner_quotas(predictions, config.M)
    picked = []
    for key, items in predictions.items():
        m = quotas[key]
        if m:
            ranked = sorted(items, key=lambda t: (-t[1].v, t[0]))
            picked.extend(sid for sid, _ in ranked[:m])
    return sorted(picked)


def effort_start(oracle: SkewDelayOracle, topology, constraint: str, s_min: float,
                 nominal_skew: float = 500.0, direction: int = 1) -> tuple[float, float]:
    """Effort interval from one nominal-delay call at a large passing skew."""
    skew = direction * nominal_skew
    out = oracle.evaluate(skew)
    if out.failed:
        raise RuntimeError(f"nominal-delay measurement at skew {skew} failed to capture")
    return initial_interval(topology, constraint, out.delay, s_min)


def predicted_interval(p: Prediction, s_min: float) -> tuple[float, float]:
    return p.mu, max(p.v, s_min)


class _Runner:
    def __init__(self, samples, oracle_factory, method, search_config, topology, constraint,
                 s_min, nominal_skew, direction):
        self.samples = samples
        self.oracle_factory = oracle_factory
        self.method = method
        self.search_config = search_config
        self.topology = topology
        self.constraint = constraint
        self.s_min = s_min
        self.nominal_skew = nominal_skew
        self.direction = direction

    def _effort(self, oracle: SkewDelayOracle) -> tuple[float, float]:
        return effort_start(oracle, self.topology, self.constraint, self.s_min,
                            self.nominal_skew, self.direction)

    def effort_sample(self, sid: int, phase: int) -> SampleRecord:
        oracle = self.oracle_factory(sid)
        try:
            start = oracle.calls
            l0, s0 = self._effort(oracle)
            res = characterize(oracle, l0, s0, self.method, self.search_config, self.direction)
        except Exception as exc:
            raise SampleError(sid, exc) from exc
        return SampleRecord(sid, phase, "effort", l0, s0, res, oracle.calls - start)

    def predicted_sample(self, sid: int, phase: int, pred: Prediction) -> SampleRecord:
        oracle = self.oracle_factory(sid)
        start = oracle.calls
        l0, s0 = predicted_interval(pred, self.s_min)
        source = "predicted"
        try:
            cfg = _with_doublings(self.search_config, PREDICTED_MAX_DOUBLINGS)
            try:
                res = characterize(oracle, l0, s0, self.method, cfg, self.direction)
            except BracketNotFound:
                source = "predicted->effort"
                l0, s0 = self._effort(oracle)
                res = characterize(oracle, l0, s0, self.method, self.search_config, self.direction)
        except Exception as exc:
            raise SampleError(sid, exc) from exc
        return SampleRecord(sid, phase, source, l0, s0, res, oracle.calls - start, pred)


def _with_doublings(cfg: SearchConfig, n: int) -> SearchConfig:
    return replace(cfg, max_doublings=min(cfg.max_doublings, n))


def _phase_stats(phase, kind, recs: Sequence[SampleRecord], unsim_std=math.nan) -> PhaseStats:
    calls = [r.oracle_calls for r in recs]
    preds = [r for r in recs if r.predicted is not None]
    if preds:
        mstd = float(np.mean([r.predicted.v for r in preds]))
        rmse = float(np.sqrt(np.mean([(r.predicted.mu - r.setup_time) ** 2 for r in preds])))
    else:
        mstd = rmse = math.nan
    return PhaseStats(phase, kind, len(recs), float(np.mean(calls)) if calls else math.nan,
                      mstd, rmse, unsim_std)


def run(samples: Sequence[PvtSample], oracle_factory: Callable[[int], SkewDelayOracle],
        method: str = "beira", config: AlConfig = AlConfig(),
        search_config: SearchConfig = SearchConfig(), topology="dff", constraint: str = "setup",
        s_min: float = 0.1, nominal_skew: float = 500.0, direction: int = 1,
        gp_starts: int = 3, seed: int = 0, features: np.ndarray | None = None) -> AlRun:
    """Run the full loop and return every sample's search plus per-phase stats.

    ``oracle_factory(i)`` must return the oracle for ``samples[i]``; it is
    called once per searched sample.
    """
    out = AlRun()
    try:
        _loop(out, samples, oracle_factory, method, config, search_config, topology, constraint,
              s_min, nominal_skew, direction, gp_starts, seed, features)
    except SampleError as exc:
        exc.partial = out
        raise
    return out


def _search_all(out: AlRun, ids, search) -> list[SampleRecord]:
    """Search ``ids`` in order, recording each as it finishes."""
    recs = []
    for i in ids:
        r = search(i)
        out.records[i] = r
        recs.append(r)
    return recs


def _loop(out, samples, oracle_factory, method, config, search_config, topology, constraint,
          s_min, nominal_skew, direction, gp_starts, seed, features) -> None:
    n = len(samples)
    X = np.asarray(features) if features is not None else np.stack([s.features() for s in samples])
    corners = [s.corner for s in samples]
    runner = _Runner(samples, oracle_factory, method, search_config, topology, constraint,
                     s_min, nominal_skew, direction)

    batch = initial_selection(samples, config)
    out.selections.append(list(batch))
    recs = _search_all(out, batch, lambda i: runner.effort_sample(i, 0))
    out.phases.append(_phase_stats(0, "initial", recs))

    k = 0
    model = None
    while True:
        done = sorted(out.records)
        rest = [i for i in range(n) if i not in out.records]
        if not rest:
            break
        model = gpmod.fit(X[done], [out.records[i].setup_time for i in done],
                          n_starts=gp_starts, seed=seed + k,
                          warm_start=model.hyperparams if model is not None else None)
        mu, v = model.predict_arrays(X[rest])
        preds = {i: Prediction(float(m), float(s)) for i, m, s in zip(rest, mu, v)}
        out.phases[-1].mean_unsimulated_std = float(np.mean(v))
        log.info("AL k=%d trained on %d, mean predicted std %.4g", k, len(done), float(np.mean(v)))
        if k >= config.k_max:
            out.selections.append(rest)
            recs = _search_all(out, rest, lambda i: runner.predicted_sample(i, k + 1, preds[i]))
            out.phases.append(_phase_stats(k + 1, "final", recs))
            break
        grouped: dict = {}
        for i in rest:
            grouped.setdefault(corners[i], []).append((i, preds[i]))
        batch = select_batch(grouped, config)
        k += 1
        out.selections.append(batch)
        recs = _search_all(out, batch, lambda i: runner.predicted_sample(i, k, preds[i]))
        out.phases.append(_phase_stats(k, "iteration", recs))

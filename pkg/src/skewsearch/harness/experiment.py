"""Run method/policy combinations over a shared PVT sample set.

Every combination sees the same samples and the same synthetic cell models
(both derive from the experiment seed), with fresh call counters, so call
counts are directly comparable.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import al as almod
from ..effort import get_topology
from ..oracle import BASE_PARAMS, ExternalOracle, PvtSample, model_from_pvt
from ..sampling import generate
from ..search import SearchResult, TraceEntry, characterize
from .config import ExperimentConfig, Run

log = logging.getLogger(__name__)

# the fixed policy's default interval is this multiple of the effort estimate
FIXED_SCALE = 10.0


@dataclass
class SampleResult:
    sample_id: int
    corner: str
    method: str
    policy: str
    setup_time: float
    oracle_calls: int
    expansion_calls: int
    trace: list[TraceEntry] = field(repr=False, default_factory=list)


@dataclass
class ComboResult:
    run: Run
    samples: list[SampleResult]
    wall_time: float
    oracle_total: int
    al_run: almod.AlRun | None = None

    @property
    def mean_calls(self) -> float:
        return float(np.mean([s.oracle_calls for s in self.samples]))


@dataclass(frozen=True)
class ReportRow:
    method: str
    policy: str
    corner: str
    samples: int
    mean_calls: float
    p95_calls: float
    max_expansion_calls: int
    wall_time: float


class ComboFailed(RuntimeError):
    """A sample failed mid-combination; ``partial`` holds what finished."""

    def __init__(self, run: Run, partial: list[SampleResult], cause: Exception):
        super().__init__(f"{run.label}: {cause}")
        self.run = run
        self.partial = partial
        self.cause = cause


def direction(cfg: ExperimentConfig) -> int:
    return 1 if cfg.constraint == "setup" else -1


def build_samples(cfg: ExperimentConfig) -> list[PvtSample]:
    """``qmc.count`` samples per corner, corner-major.

    One low-discrepancy stream of ``count * n_corners`` points is cut into
    per-corner blocks, so no two samples share a local-variation vector.
    An external oracle ignores PVT, so it gets a single sample.
    """
    if cfg.oracle.kind == "external":
        return [PvtSample(cfg.corners[0], np.zeros(cfg.qmc.dimension))]
    q = dataclasses.replace(cfg.qmc, count=cfg.qmc.count * len(cfg.corners))
    local = generate(q)
    n = cfg.qmc.count
    return [PvtSample(c, local[i * n + j]) for i, c in enumerate(cfg.corners) for j in range(n)]


def make_oracle(cfg: ExperimentConfig, sample: PvtSample):
    if cfg.oracle.kind == "external":
        o = cfg.oracle
        return ExternalOracle(o.command, o.parse, o.nominal_delay)
    model = model_from_pvt(sample, cfg.cell_model, cfg.seed)
    if cfg.constraint == "hold":
        model = dataclasses.replace(model, fail_below=False)
    return model


def fixed_interval(cfg: ExperimentConfig) -> tuple[float, float]:
    """Configured (l0, s0), else 10x the effort estimate at the nominal corner."""
    if cfg.fixed_l0 is not None:
        return cfg.fixed_l0, cfg.fixed_s0
    if cfg.oracle.kind == "external":
        d = cfg.oracle.nominal_delay
    else:
        d = BASE_PARAMS[cfg.cell_model]["d0"]
    t = get_topology(cfg.topology)
    frac = t.setup_fraction if cfg.constraint == "setup" else t.hold_fraction
    v = max(FIXED_SCALE * frac * d, cfg.s_min)
    return v, v


def _as_sample(sid: int, sample: PvtSample, run: Run, res: SearchResult, calls: int) -> SampleResult:
    return SampleResult(sid, sample.corner.label, run.method, run.policy, res.root, calls,
                        res.expansion_calls, res.trace)


def run_combo(cfg: ExperimentConfig, run: Run, samples: Sequence[PvtSample]) -> ComboResult:
    """Search every sample with one method/policy; raises ComboFailed on error."""
    oracles = [make_oracle(cfg, s) for s in samples]
    t0 = time.perf_counter()
    results: list[SampleResult] = []
    al_run = None
    if run.policy == "al":
        try:
            al_run = almod.run(samples, lambda i: oracles[i], run.method, cfg.al, cfg.search,
                               cfg.topology, cfg.constraint, cfg.s_min, cfg.nominal_skew,
                               direction(cfg), cfg.gp_starts, cfg.seed)
        except almod.SampleError as exc:
            done = exc.partial.records if exc.partial is not None else {}
            partial = [_as_sample(i, samples[i], run, done[i].result, done[i].oracle_calls) for i in sorted(done)]
            raise ComboFailed(run, partial, exc) from exc
        for sid in sorted(al_run.records):
            r = al_run.records[sid]
            results.append(_as_sample(sid, samples[sid], run, r.result, r.oracle_calls))
    else:
        for sid, (sample, oracle) in enumerate(zip(samples, oracles)):
            try:
                start = oracle.calls
                if run.policy == "fixed":
                    l0, s0 = fixed_interval(cfg)
                else:
                    l0, s0 = almod.effort_start(oracle, cfg.topology, cfg.constraint, cfg.s_min,
                                                cfg.nominal_skew, direction(cfg))
                res = characterize(oracle, l0, s0, run.method, cfg.search, direction(cfg))
            except Exception as exc:
                raise ComboFailed(run, results, exc) from exc
            results.append(_as_sample(sid, sample, run, res, oracle.calls - start))
    wall = time.perf_counter() - t0
    total = sum(o.calls for o in oracles)
    counted = sum(r.oracle_calls for r in results)
    if total != counted:
        raise RuntimeError(f"{run.label}: per-sample calls {counted} != oracle counters {total}")
    log.info("%s: %d samples, mean %.3f calls, %.2fs", run.label, len(results),
             np.mean([r.oracle_calls for r in results]), wall)
    return ComboResult(run, results, wall, total, al_run)


def run_all(cfg: ExperimentConfig, runs: Sequence[Run] | None = None) -> list[ComboResult]:
    samples = build_samples(cfg)
    return [run_combo(cfg, r, samples) for r in (runs or cfg.runs)]


def report_rows(combo: ComboResult) -> list[ReportRow]:
    """One row per corner (in first-seen order) plus an 'all' row."""
    groups: dict[str, list[SampleResult]] = {}
    for s in combo.samples:
        groups.setdefault(s.corner, []).append(s)
    groups["all"] = combo.samples
    rows = []
    for corner, items in groups.items():
        calls = np.array([s.oracle_calls for s in items], dtype=float)
        rows.append(ReportRow(combo.run.method, combo.run.policy, corner, len(items),
                              float(calls.mean()), float(np.percentile(calls, 95)),
                              int(max(s.expansion_calls for s in items)), combo.wall_time))
    return rows


def speedups(combos: Sequence[ComboResult], baseline: Run = Run("bisection", "fixed")) -> dict[str, float] | None:
    """Mean-call ratio baseline / combo, or None when the baseline did not run."""
    base = next((c for c in combos if c.run == baseline), None)
    if base is None:
        return None
    return {c.run.label: base.mean_calls / c.mean_calls for c in combos}


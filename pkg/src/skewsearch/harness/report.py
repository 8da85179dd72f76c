"""CSV / markdown writers and matplotlib figures.

CSV content depends only on config and seed; wall-clock time goes to the
markdown summary alone so repeated runs give byte-identical CSVs.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..al import AlRun  # noqa: E402
from ..search import TRACE_COLUMNS, trace_to_csv  # noqa: E402
from .experiment import FIXED_SCALE, ComboResult, SampleResult, report_rows, speedups  # noqa: E402

# fixed SVG ids and no timestamps keep figures reproducible too
matplotlib.rcParams["svg.hashsalt"] = "skewsearch"


class ParseError(ValueError):
    pass


def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


RESULT_COLUMNS = ("sample_id", "corner", "method", "policy", "setup_time", "oracle_calls", "expansion_calls")
REPORT_COLUMNS = ("method", "policy", "corner", "samples", "mean_calls", "p95_calls", "max_expansion_calls")
AL_COLUMNS = ("k", "kind", "batch_size", "mean_calls", "mean_pred_std", "rmse_pred_vs_actual",
              "mean_unsimulated_std")
SCATTER_COLUMNS = ("sample_id", "phase", "predicted", "actual")


def results_csv(samples: Iterable[SampleResult]) -> str:
    return _csv(RESULT_COLUMNS, ((s.sample_id, s.corner, s.method, s.policy, repr(float(s.setup_time)),
                                  s.oracle_calls, s.expansion_calls) for s in samples))


def report_csv(combos: Sequence[ComboResult]) -> str:
    rows = [r for c in combos for r in report_rows(c)]
    return _csv(REPORT_COLUMNS, ((r.method, r.policy, r.corner, r.samples, _num(r.mean_calls),
                                  _num(r.p95_calls), r.max_expansion_calls) for r in rows))


def al_iterations_csv(run: AlRun) -> str:
    return _csv(AL_COLUMNS, ((p.phase, p.kind, p.batch_size, _num(p.mean_calls), _num(p.mean_pred_std),
                              _num(p.rmse_pred_vs_actual), _num(p.mean_unsimulated_std)) for p in run.phases))


def al_scatter_csv(run: AlRun) -> str:
    return _csv(SCATTER_COLUMNS, ((sid, ph, repr(float(mu)), repr(float(y))) for sid, ph, mu, y in run.scatter()))


def summary_markdown(combos: Sequence[ComboResult], fixed_interval: tuple[float, float] | None,
                     fixed_is_default: bool) -> str:
    sp = speedups(combos)
    lines = ["# Benchmark summary", "",
             "| method | policy | samples | mean calls | p95 calls | max expansion | speedup | wall time (s) |",
             "|---|---|---|---|---|---|---|---|"]
    for c in combos:
        r = report_rows(c)[-1]
        s = f"{sp[c.run.label]:.2f}x" if sp else "n/a"
        lines.append(f"| {r.method} | {r.policy} | {r.samples} | {r.mean_calls:.3f} | {r.p95_calls:.1f} "
                     f"| {r.max_expansion_calls} | {s} | {c.wall_time:.2f} |")
    lines.append("")
    if sp:
        lines.append("Speedup is mean oracle calls of (bisection, fixed) divided by the row's mean.")
    else:
        lines.append("No (bisection, fixed) run, so no speedups are reported.")
    if fixed_interval is not None:
        l0, s0 = fixed_interval
        note = (f" (assumed default: {FIXED_SCALE:g}x the effort estimate at the nominal corner)"
                if fixed_is_default else "")
        lines.append(f"Fixed policy interval: l0 = {l0:g}, s0 = {s0:g}{note}.")
    lines.append("Wall times are machine-specific; oracle calls are the portable cost.")
    return "\n".join(lines) + "\n"


def write_traces(directory: Path, combos: Sequence[ComboResult], limit: int) -> list[Path]:
    paths = []
    for c in combos:
        for s in c.samples:
            if s.sample_id >= limit:
                continue
            p = directory / f"{c.run.method}_{c.run.policy}_{s.sample_id:05d}.csv"
            atomic_write(p, trace_to_csv(s.trace))
            paths.append(p)
    return paths


# -- figures -------------------------------------------------------------------

def _save(fig, path: Path, fmt: str) -> None:
    buf = io.BytesIO()
    meta = {"Date": None} if fmt == "svg" else {"Software": None}
    fig.savefig(buf, format=fmt, metadata=meta)
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def bench_figure(path: Path, combos: Sequence[ComboResult]) -> None:
    labels = [c.run.label for c in combos]
    means = [c.mean_calls for c in combos]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 3.5))
    ax.bar(range(len(labels)), means, color="#4c72b0")
    ax.set_xticks(range(len(labels)), labels, rotation=30, ha="right")
    ax.set_ylabel("mean oracle calls per sample")
    for i, m in enumerate(means):
        ax.text(i, m, f"{m:.2f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    _save(fig, path, "png")


def al_scatter_figure(path: Path, run: AlRun) -> None:
    pts = run.scatter()
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    if pts:
        arr = np.array([(mu, y) for _, _, mu, y in pts])
        final = np.array([ph for _, ph, _, _ in pts]) == max(ph for _, ph, _, _ in pts)
        ax.scatter(arr[~final, 1], arr[~final, 0], s=8, label="AL batches")
        ax.scatter(arr[final, 1], arr[final, 0], s=4, alpha=0.5, label="final sweep")
        lo, hi = arr.min(), arr.max()
        ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
        ax.legend(fontsize=8)
    ax.set_xlabel("searched setup time")
    ax.set_ylabel("GP prediction")
    fig.tight_layout()
    _save(fig, path, "png")


@dataclass
class TraceCurve:
    iterations: np.ndarray
    lengths: np.ndarray

    def reference(self) -> np.ndarray:
        """Bisection from the same first bracket: halves per iteration."""
        return self.lengths[0] * 0.5 ** self.iterations


def read_trace(path: str | Path) -> TraceCurve:
    """Interval length after each step, from bracket formation on."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read trace {path}: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
        raise ParseError(f"{path}: expected header {','.join(TRACE_COLUMNS)}")
    lengths = []
    for n, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(TRACE_COLUMNS):
            raise ParseError(f"{path}:{n}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
        try:
            v = float(row[4])
        except ValueError:
            raise ParseError(f"{path}:{n}: bad interval_length {row[4]!r}") from None
        if math.isfinite(v):
            if v <= 0:
                raise ParseError(f"{path}:{n}: interval_length must be positive")
            lengths.append(v)
    if not lengths:
        raise ParseError(f"{path}: trace has no bracketed steps")
    return TraceCurve(np.arange(len(lengths), dtype=float), np.asarray(lengths))


def trace_figure(trace_path: str | Path, out_path: str | Path, tau: float | None = None) -> TraceCurve:
    curve = read_trace(trace_path)
    ref_n = curve.iterations
    if tau is not None and tau > 0:
        # extend the reference until it reaches tau
        need = max(0, math.ceil(math.log2(curve.lengths[0] / tau)))
        ref_n = np.arange(max(need, len(curve.lengths) - 1) + 1, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(curve.iterations, curve.lengths, "o-", label=Path(trace_path).stem)
    ax.plot(ref_n, curve.lengths[0] * 0.5 ** ref_n, "k:", label="bisection reference")
    if tau is not None:
        ax.axhline(tau, color="0.6", lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("interval length")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, Path(out_path), "svg")
    return curve

"""Command-line entry point: ``skewsearch <command> [config.ini]``.

Exit status is 0 on success, 2 for configuration or input errors and 3
when a run fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .harness import experiment, report
from .harness.config import DEFAULT_CONFIG, ConfigError, ExperimentConfig, Run, load_config, parse_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("skewsearch")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config(DEFAULT_CONFIG, "<default>")
    changes = {}
    if getattr(args, "output_dir", None):
        changes["output_dir"] = Path(args.output_dir)
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _written(paths) -> None:
    for p in paths:
        print(p)


def _fixed_note(cfg: ExperimentConfig, runs) -> tuple:
    if any(r.policy == "fixed" for r in runs):
        return experiment.fixed_interval(cfg), cfg.fixed_l0 is None
    return None, False


def _run_and_flush(cfg: ExperimentConfig, runs) -> list[experiment.ComboResult]:
    """Run combos in order; on failure flush finished results before re-raising."""
    samples = experiment.build_samples(cfg)
    done = []
    for r in runs:
        try:
            done.append(experiment.run_combo(cfg, r, samples))
        except experiment.ComboFailed as exc:
            rows = [s for c in done for s in c.samples] + exc.partial
            path = cfg.output_dir / "results.partial.csv"
            report.atomic_write(path, report.results_csv(rows))
            log.error("partial results written to %s", path)
            raise
    return done


def cmd_characterize(args) -> int:
    cfg = _config(args)
    combos = _run_and_flush(cfg, cfg.runs)
    out = cfg.output_dir
    paths = [out / "results.csv"]
    report.atomic_write(paths[0], report.results_csv(s for c in combos for s in c.samples))
    paths += report.write_traces(out / "traces", combos, cfg.traces)
    _written(paths)
    for c in combos:
        log.info("%s: mean %.3f oracle calls over %d samples", c.run.label, c.mean_calls, len(c.samples))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    if len(cfg.runs) < 2:
        raise ConfigError("bench needs at least two method:policy runs")
    combos = _run_and_flush(cfg, cfg.runs)
    out = cfg.output_dir
    fixed, is_default = _fixed_note(cfg, cfg.runs)
    files = {
        "results.csv": report.results_csv(s for c in combos for s in c.samples),
        "report.csv": report.report_csv(combos),
        "summary.md": report.summary_markdown(combos, fixed, is_default),
    }
    for name, text in files.items():
        report.atomic_write(out / name, text)
    report.bench_figure(out / "bench.png", combos)
    _written([out / n for n in files] + [out / "bench.png"])
    return EXIT_OK


def cmd_al_run(args) -> int:
    cfg = _config(args)
    run = Run(args.method or cfg.al_method, "al")
    (combo,) = _run_and_flush(cfg, [run])
    out = cfg.output_dir
    files = {
        "al_iterations.csv": report.al_iterations_csv(combo.al_run),
        "al_scatter.csv": report.al_scatter_csv(combo.al_run),
        "results.csv": report.results_csv(combo.samples),
    }
    for name, text in files.items():
        report.atomic_write(out / name, text)
    report.al_scatter_figure(out / "al_scatter.png", combo.al_run)
    _written([out / n for n in files] + [out / "al_scatter.png"])
    return EXIT_OK


def cmd_trace_plot(args) -> int:
    out = Path(args.output) if args.output else Path(args.trace).with_suffix(".svg")
    report.trace_figure(args.trace, out, args.tau)
    _written([out])
    return EXIT_OK


def cmd_print_default_config(args) -> int:
    sys.stdout.write(DEFAULT_CONFIG)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skewsearch", description=__doc__.splitlines()[0])
    ap.add_argument("--print-default-config", action="store_true",
                    help="print the documented default configuration and exit")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command")

    def with_config(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", nargs="?", help="INI config (defaults when omitted)")
        p.add_argument("-o", "--output-dir", help="override [experiment] output_dir")
        p.add_argument("--seed", type=int, help="override [experiment] seed")
        p.set_defaults(func=func)
        return p

    with_config("characterize", cmd_characterize, "per-sample setup times and traces")
    with_config("bench", cmd_bench, "compare method/policy runs on one sample set")
    p = with_config("al-run", cmd_al_run, "active-learning run with per-iteration statistics")
    p.add_argument("--method", help="search method (default: [al] method)")

    p = sub.add_parser("trace-plot", help="SVG of interval length per iteration")
    p.add_argument("trace", help="trace CSV written by characterize")
    p.add_argument("-o", "--output", help="SVG path (default: trace path with .svg)")
    p.add_argument("--tau", type=float, help="draw the stopping width and extend the reference to it")
    p.set_defaults(func=cmd_trace_plot)

    p = sub.add_parser("print-default-config", help="print the default configuration")
    p.set_defaults(func=cmd_print_default_config)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_default_config:
        return cmd_print_default_config(args)
    if not getattr(args, "func", None):
        ap.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, report.ParseError) as exc:
        print(f"skewsearch: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any run failure maps to one exit code
        print(f"skewsearch: run failed: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

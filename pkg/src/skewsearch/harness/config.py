"""Experiment configuration: INI-style sections read with configparser.

Every key has a default, so an empty file is a valid desk-scale DFF
benchmark. ``DEFAULT_CONFIG`` is the documented reference and what
``--print-default-config`` prints.
"""

from __future__ import annotations

import configparser
import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..al import AlConfig
from ..effort import TOPOLOGIES, Topology, topology_from_mapping
from ..oracle import BASE_PARAMS, STANDARD_CORNERS, PvtCorner
from ..sampling import QmcConfig
from ..search import METHODS, SearchConfig

POLICIES = ("fixed", "effort", "al")

DEFAULT_CONFIG = """\
# skewsearch experiment configuration
#
# Lines starting with '#' are comments. Blank values fall back to the
# default noted beside them.

[experiment]
# cell whose effort model seeds the search: dff, latch, or any
# [topology.NAME] section below
topology = dff
# synthetic cell model behind the oracle (dff or latch); defaults to topology
cell_model =
# setup or hold
constraint = setup
seed = 0
output_dir = results
# method:policy pairs; methods bisection, regula_falsi, quadratic, brent,
# beira; policies fixed, effort, al
runs = bisection:fixed, beira:fixed, bisection:al, beira:al
# 'standard' for the 16 built-in corners, or a CSV path (header
# process,voltage,temperature) relative to this file
corners = standard
# per-sample traces written by 'characterize' (first N samples)
traces = 16

[search]
tau = 0.01
sigma0 = 0.001
beta = 5
max_iter = 200
threshold_ratio = 1.10
safeguard_window = 2
max_doublings = 60

[al]
M = 20
k_max = 5
# floor on every initial step
s_min = 0.1
# large skew used for the one-call nominal delay measurement
nominal_skew = 500
gp_starts = 3
# search method used by 'al-run'
method = beira

[qmc]
# local-variation vector length and samples per corner
dimension = 168
count = 100
# sobol or stratified
generator = sobol
# blank keeps the sequence unscrambled
scramble_seed =

[fixed]
# blank l0 / s0 default to 10x the effort estimate at the nominal corner
l0 =
s0 =

[oracle]
# analytic (synthetic PVT models) or external (one shell command per call)
kind = analytic
# external only: command with a {skew} placeholder, 'prefix,failure_token'
# parse rule, and the nominal delay defining the threshold
command =
parse = delay=,FAIL
nominal_delay =

# A custom topology: stage lists are kind:weight items (kind tg or inv).
# [topology.mycell]
# nominal = inv:1, tg:1, inv:1
# setup = tg:1, inv:1
# hold = tg:1
# setup_fraction = 0.5
# hold_fraction = 0.3
"""


class ConfigError(ValueError):
    """Bad configuration; the message names the file, line and key when known."""


@dataclass(frozen=True)
class Run:
    method: str
    policy: str

    @property
    def label(self) -> str:
        return f"{self.method}:{self.policy}"


@dataclass(frozen=True)
class OracleConfig:
    kind: str = "analytic"
    command: str = ""
    parse: str = "delay=,FAIL"
    nominal_delay: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    corners: tuple[PvtCorner, ...] = STANDARD_CORNERS
    topology: Topology = TOPOLOGIES["dff"]
    cell_model: str = "dff"
    constraint: str = "setup"
    runs: tuple[Run, ...] = (Run("bisection", "fixed"), Run("beira", "fixed"),
                             Run("bisection", "al"), Run("beira", "al"))
    search: SearchConfig = SearchConfig()
    al: AlConfig = AlConfig(M=20, k_max=5)
    al_method: str = "beira"
    s_min: float = 0.1
    nominal_skew: float = 500.0
    gp_starts: int = 3
    qmc: QmcConfig = QmcConfig()
    fixed_l0: float | None = None
    fixed_s0: float | None = None
    oracle: OracleConfig = OracleConfig()
    output_dir: Path = Path("results")
    seed: int = 0
    traces: int = 16
    extra_topologies: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.corners:
            raise ConfigError("corner list is empty")
        if not self.runs:
            raise ConfigError("at least one method:policy run is required")


# -- parsing ---------------------------------------------------------------------

def _key_line(text: str, section: str, key: str) -> int | None:
    """1-based line of ``key`` inside ``[section]``, if present."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
            return i
    return None


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.p = parser
        self.text = text
        self.source = source

    def where(self, section: str, key: str | None = None) -> str:
        if key is None:
            return f"{self.source} [{section}]"
        line = _key_line(self.text, section, key)
        at = f"{self.source}:{line}" if line else self.source
        return f"{at} [{section}] {key}"

    def raw(self, section: str, key: str) -> str | None:
        if not self.p.has_option(section, key):
            return None
        v = self.p.get(section, key).strip()
        return v or None

    def get(self, section: str, key: str, conv, default):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            return conv(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.where(section, key)}: {exc}") from None


def _finite(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError(f"not finite: {v!r}")
    return x


def parse_runs(text: str) -> tuple[Run, ...]:
    runs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        method, sep, policy = item.partition(":")
        method, policy = method.strip(), policy.strip()
        if not sep:
            raise ValueError(f"run {item!r} is not method:policy")
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; choose from {list(POLICIES)}")
        run = Run(method, policy)
        if run in runs:
            raise ValueError(f"duplicate run {item!r}")
        runs.append(run)
    return tuple(runs)


def load_corners(path: str | Path) -> tuple[PvtCorner, ...]:
    """Corner table CSV with header ``process,voltage,temperature``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = [h.strip().lower() for h in (reader.fieldnames or [])]
            if header != ["process", "voltage", "temperature"]:
                raise ConfigError(f"{path}:1: header must be process,voltage,temperature, got {reader.fieldnames}")
            corners = []
            for row in reader:
                line = reader.line_num
                vals = {k.strip().lower(): (v or "").strip() for k, v in row.items() if k}
                if not any(vals.values()):
                    continue
                try:
                    corners.append(PvtCorner(vals["process"].upper(), _finite(vals["voltage"]),
                                             _finite(vals["temperature"])))
                except (KeyError, ValueError) as exc:
                    raise ConfigError(f"{path}:{line}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read corner table {path}: {exc}") from None
    if not corners:
        raise ConfigError(f"{path}: corner list is empty")
    return tuple(corners)


_KNOWN = {
    "experiment": {"topology", "cell_model", "constraint", "seed", "output_dir", "runs", "corners", "traces"},
    "search": {"tau", "sigma0", "beta", "max_iter", "threshold_ratio", "safeguard_window", "max_doublings"},
    "al": {"m", "k_max", "s_min", "nominal_skew", "gp_starts", "method"},
    "qmc": {"dimension", "count", "generator", "scramble_seed"},
    "fixed": {"l0", "s0"},
    "oracle": {"kind", "command", "parse", "nominal_delay"},
}
_TOPOLOGY_KEYS = {"nominal", "setup", "hold", "setup_fraction", "hold_fraction"}


def parse_config(text: str, source: str = "<config>", base_dir: str | Path = ".") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    r = _Reader(parser, text, source)

    topologies = dict(TOPOLOGIES)
    for section in parser.sections():
        if section.startswith("topology."):
            name = section.split(".", 1)[1].strip()
            keys = set(parser.options(section))
            missing = _TOPOLOGY_KEYS - keys
            if missing:
                raise ConfigError(f"{r.where(section)}: missing keys {sorted(missing)}")
            for key in sorted(keys - _TOPOLOGY_KEYS):
                raise ConfigError(f"{r.where(section, key)}: unknown key")
            try:
                topologies[name] = topology_from_mapping(name, dict(parser.items(section)))
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{r.where(section)}: {exc}") from None
        elif section not in _KNOWN:
            raise ConfigError(f"{r.where(section)}: unknown section")
        else:
            for key in parser.options(section):
                if key not in _KNOWN[section]:
                    raise ConfigError(f"{r.where(section, key)}: unknown key")

    def choice(section, key, options, default):
        v = r.get(section, key, str, default)
        if v not in options:
            raise ConfigError(f"{r.where(section, key)}: expected one of {sorted(options)}, got {v!r}")
        return v

    topo_name = choice("experiment", "topology", topologies, "dff")
    cell_model = choice("experiment", "cell_model", BASE_PARAMS,
                        topo_name if topo_name in BASE_PARAMS else "dff")
    constraint = choice("experiment", "constraint", ("setup", "hold"), "setup")
    runs = r.get("experiment", "runs", parse_runs, ExperimentConfig.runs)

    corners_spec = r.get("experiment", "corners", str, "standard")
    if corners_spec.lower() == "standard":
        corners = STANDARD_CORNERS
    else:
        try:
            corners = load_corners(Path(base_dir) / corners_spec)
        except ConfigError as exc:
            raise ConfigError(f"{r.where('experiment', 'corners')}: {exc}") from None

    def build(section, cls, **kwargs):
        try:
            return cls(**kwargs)
        except ValueError as exc:
            # validators lead with the field name; point at that key's line when it was set
            field_name = str(exc).split(" ", 1)[0]
            key = field_name.lower() if r.raw(section, field_name.lower()) is not None else None
            raise ConfigError(f"{r.where(section, key)}: {exc}") from None

    d = SearchConfig()
    search = build("search", SearchConfig,
                   tau=r.get("search", "tau", _finite, d.tau),
                   sigma0=r.get("search", "sigma0", _finite, d.sigma0),
                   beta=r.get("search", "beta", _finite, d.beta),
                   max_iter=r.get("search", "max_iter", int, d.max_iter),
                   threshold_ratio=r.get("search", "threshold_ratio", _finite, d.threshold_ratio),
                   safeguard_window=r.get("search", "safeguard_window", int, d.safeguard_window),
                   max_doublings=r.get("search", "max_doublings", int, d.max_doublings))
    al = build("al", AlConfig, M=r.get("al", "m", int, 20), k_max=r.get("al", "k_max", int, 5))
    s_min = r.get("al", "s_min", _finite, 0.1)
    if not s_min > 0:
        raise ConfigError(f"{r.where('al', 's_min')}: must be positive")
    gp_starts = r.get("al", "gp_starts", int, 3)
    if gp_starts < 1:
        raise ConfigError(f"{r.where('al', 'gp_starts')}: must be >= 1")
    al_method = choice("al", "method", METHODS, "beira")

    qmc = build("qmc", QmcConfig,
                dimension=r.get("qmc", "dimension", int, 168),
                count=r.get("qmc", "count", int, 100),
                generator=r.get("qmc", "generator", str, "sobol"),
                scramble_seed=r.get("qmc", "scramble_seed", int, None))

    fixed_l0 = r.get("fixed", "l0", _finite, None)
    fixed_s0 = r.get("fixed", "s0", _finite, None)
    if (fixed_l0 is None) != (fixed_s0 is None):
        raise ConfigError(f"{r.where('fixed')}: set both l0 and s0, or neither")
    if fixed_s0 is not None and not fixed_s0 > 0:
        raise ConfigError(f"{r.where('fixed', 's0')}: must be positive")

    kind = choice("oracle", "kind", ("analytic", "external"), "analytic")
    oracle = OracleConfig(kind, r.get("oracle", "command", str, ""), r.get("oracle", "parse", str, "delay=,FAIL"),
                          r.get("oracle", "nominal_delay", _finite, None))
    if kind == "external":
        if "{skew}" not in oracle.command:
            raise ConfigError(f"{r.where('oracle', 'command')}: external oracle needs a command with {{skew}}")
        if oracle.nominal_delay is None or not oracle.nominal_delay > 0:
            raise ConfigError(f"{r.where('oracle', 'nominal_delay')}: external oracle needs a positive nominal_delay")
        if any(run.policy == "al" for run in runs):
            raise ConfigError(f"{r.where('experiment', 'runs')}: the al policy needs the analytic oracle")

    traces = r.get("experiment", "traces", int, 16)
    if traces < 0:
        raise ConfigError(f"{r.where('experiment', 'traces')}: must be >= 0")
    try:
        return ExperimentConfig(
            corners=corners, topology=topologies[topo_name], cell_model=cell_model, constraint=constraint,
            runs=runs, search=search, al=al, al_method=al_method, s_min=s_min,
            nominal_skew=r.get("al", "nominal_skew", _finite, 500.0), gp_starts=gp_starts, qmc=qmc,
            fixed_l0=fixed_l0, fixed_s0=fixed_s0, oracle=oracle,
            output_dir=Path(base_dir) / r.get("experiment", "output_dir", str, "results"),
            seed=r.get("experiment", "seed", int, 0), traces=traces,
            extra_topologies={k: v for k, v in topologies.items() if k not in TOPOLOGIES})
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path), base_dir=path.parent)

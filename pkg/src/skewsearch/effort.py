"""Initial search intervals from logical-effort analysis.

Stage delay is ``weight * (g * h + p * gamma)`` in units of an inverter
delay. A topology is data: three stage lists (nominal clock-to-output,
setup, hold) plus the fractions that turn a measured nominal delay into
``l0 = s0``.

The stage lists below are reconstructed so that the default effort
parameters give 28/12/10 units for the latch and 10/7/3.33 units for the
DFF; the per-stage split of those totals is not published and should be
read as one consistent decomposition, not a netlist.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping


@dataclass(frozen=True)
class EffortParams:
    g_tg: float = 2.0
    g_inv: float = 1.0
    p_tg: float = 2.0
    p_inv: float = 1.0
    h: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name, v in vars(self).items():
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    def stage_delay(self, kind: str) -> float:
        if kind == "tg":
            return self.g_tg * self.h + self.p_tg * self.gamma
        if kind == "inv":
            return self.g_inv * self.h + self.p_inv * self.gamma
        raise ValueError(f"unknown stage kind {kind!r}")


Stage = tuple[str, float]  # (kind, weight)


@dataclass(frozen=True)
class Topology:
    name: str
    nominal: tuple[Stage, ...]
    setup: tuple[Stage, ...]
    hold: tuple[Stage, ...]
    setup_fraction: float
    hold_fraction: float

    def __post_init__(self):
        for f in (self.setup_fraction, self.hold_fraction):
            if not 0 < f < 1:
                raise ValueError(f"{self.name}: fractions must lie in (0, 1)")
        for path in (self.nominal, self.setup, self.hold):
            if not path:
                raise ValueError(f"{self.name}: empty stage list")
            for kind, w in path:
                if kind not in ("tg", "inv") or not w > 0:
                    raise ValueError(f"{self.name}: bad stage ({kind!r}, {w})")


@dataclass(frozen=True)
class TopologyEstimate:
    nominal_delay_units: float
    setup_units: float
    hold_units: float
    setup_fraction: float
    hold_fraction: float


TOPOLOGIES: dict[str, Topology] = {
    # E -> CLKb -> D -> D1 -> D2 -> D3 -> Q
    "latch": Topology(
        "latch",
        nominal=(("inv", 1), ("tg", 1), ("tg", 1), ("tg", 1), ("inv", 1),
                 ("inv", 1), ("tg", 1), ("inv", 1), ("inv", 1), ("inv", 1)),
        setup=(("tg", 1), ("tg", 1), ("inv", 1), ("inv", 1)),
        hold=(("tg", 1), ("tg", 1), ("inv", 1)),
        setup_fraction=0.4,
        hold_fraction=0.35,
    ),
    # CK -> CLKb -> CLK -> D3 -> D4 -> D5 -> Q; the DFF paths need
    # fractional weights to land on the published 10 / 7 / 3.33
    "dff": Topology(
        "dff",
        nominal=(("inv", 1), ("inv", 1), ("tg", 0.5), ("inv", 0.5), ("inv", 0.5), ("inv", 1)),
        setup=(("inv", 1), ("tg", 1 / 3), ("tg", 11 / 12)),
        hold=(("inv", 1), ("tg", 1 / 3)),
        setup_fraction=0.7,
        hold_fraction=0.33,
    ),
}


def path_units(path, params: EffortParams = EffortParams()) -> float:
    return sum(w * params.stage_delay(kind) for kind, w in path)


def get_topology(topology: str | Topology) -> Topology:
    if isinstance(topology, Topology):
        return topology
    try:
        return TOPOLOGIES[topology]
    except KeyError:
        raise ValueError(f"unknown topology {topology!r}; known: {sorted(TOPOLOGIES)}") from None


def estimate_topology(topology: str | Topology, params: EffortParams = EffortParams()) -> TopologyEstimate:
    t = get_topology(topology)
    return TopologyEstimate(
        nominal_delay_units=path_units(t.nominal, params),
        setup_units=path_units(t.setup, params),
        hold_units=path_units(t.hold, params),
        setup_fraction=t.setup_fraction,
        hold_fraction=t.hold_fraction,
    )


def initial_interval(topology: str | Topology, constraint: str, measured_nominal_delay: float,
                     s_min: float) -> tuple[float, float]:
    """``l0 = s0 = fraction * measured_nominal_delay``, both floored at ``s_min``.

    The measured delay may be negative (mismatched slews); the floor keeps
    the search from starting at a negative step.
    """
    if not s_min > 0:
        raise ValueError("s_min must be positive")
    t = get_topology(topology)
    if constraint == "setup":
        frac = t.setup_fraction
    elif constraint == "hold":
        frac = t.hold_fraction
    else:
        raise ValueError(f"constraint must be 'setup' or 'hold', got {constraint!r}")
    v = frac * measured_nominal_delay
    return max(v, s_min), max(v, s_min)


def parse_stages(text: str) -> tuple[Stage, ...]:
    """Parse ``"inv:1, tg:0.5"`` into a stage list."""
    stages = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, weight = item.partition(":")
        stages.append((kind.strip(), float(weight) if weight.strip() else 1.0))
    return tuple(stages)


def topology_from_mapping(name: str, data: Mapping[str, str]) -> Topology:
    """Build a topology from config keys nominal/setup/hold/setup_fraction/hold_fraction."""
    return Topology(
        name,
        nominal=parse_stages(data["nominal"]),
        setup=parse_stages(data["setup"]),
        hold=parse_stages(data["hold"]),
        setup_fraction=float(data["setup_fraction"]),
        hold_fraction=float(data["hold_fraction"]),
    )


def register_topology(topology: Topology) -> None:
    TOPOLOGIES[topology.name] = topology

"""Setup/hold time search: bracketing root finders, effort-based initial
intervals and active-learning interval prediction across PVT samples."""

from .bias import solve_bias
from .effort import estimate_topology, initial_interval
from .oracle import AnalyticCellModel, ExternalOracle, PvtCorner, PvtSample, SimOutcome, model_from_pvt, true_root
from .search import (Bracket, BracketNotFound, Classification, MaxIterExceeded, SearchConfig, SearchResult,
                     characterize, expand_bracket, make_bracket)

__version__ = "0.1.0"

__all__ = [
    "solve_bias", "estimate_topology", "initial_interval", "AnalyticCellModel", "ExternalOracle",
    "PvtCorner", "PvtSample", "SimOutcome", "model_from_pvt", "true_root", "Bracket", "BracketNotFound",
    "Classification", "MaxIterExceeded", "SearchConfig", "SearchResult", "characterize",
    "expand_bracket", "make_bracket",
]

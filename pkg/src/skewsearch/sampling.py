"""Local process-variation vectors from low-discrepancy sequences."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

# scipy bundles Joe-Kuo direction numbers up to this dimension
MAX_SOBOL_DIMENSION = qmc.Sobol.MAXDIM


class UnsupportedDimension(ValueError):
    pass


@dataclass(frozen=True)
class QmcConfig:
    dimension: int = 168
    count: int = 100
    scramble_seed: int | None = None
    generator: str = "sobol"

    def __post_init__(self):
        if self.dimension < 1 or self.count < 1:
            raise ValueError("dimension and count must be >= 1")
        if self.generator not in ("sobol", "stratified"):
            raise ValueError(f"generator must be 'sobol' or 'stratified', got {self.generator!r}")


def uniform_points(config: QmcConfig, skip: int = 0) -> np.ndarray:
    """``count x dimension`` points in [0, 1) before any normal mapping.

    Sobol points are Owen-scrambled when ``scramble_seed`` is set.
    """
    if config.generator == "stratified":
        rng = np.random.default_rng(config.scramble_seed or 0)
        return qmc.LatinHypercube(config.dimension, seed=rng).random(config.count + skip)[skip:]
    if config.dimension > MAX_SOBOL_DIMENSION:
        raise UnsupportedDimension(
            f"Sobol direction numbers cover {MAX_SOBOL_DIMENSION} dimensions, asked for {config.dimension}; "
            "use generator='stratified'")
    scramble = config.scramble_seed is not None
    eng = qmc.Sobol(config.dimension, scramble=scramble,
                    seed=np.random.default_rng(config.scramble_seed) if scramble else None)
    if skip:
        eng.fast_forward(skip)
    with warnings.catch_warnings():
        # balance properties of non power-of-two counts are fine here
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(config.count)


def generate(config: QmcConfig) -> np.ndarray:
    """Standard-normal variation vectors, one row per sample.

    The unscrambled Sobol origin maps to -inf under the normal quantile, so
    unscrambled sequences start at their second point.
    """
    skip = 1 if config.generator == "sobol" and config.scramble_seed is None else 0
    u = uniform_points(config, skip=skip)
    return ndtri(np.clip(u, 1e-15, 1.0 - 1e-15))


def max_gap(points: np.ndarray) -> float:
    """Largest empty 1-D gap over all columns; a cheap discrepancy proxy."""
    pts = np.sort(np.asarray(points), axis=0)
    edges = np.vstack([np.zeros((1, pts.shape[1])), pts, np.ones((1, pts.shape[1]))])
    return float(np.diff(edges, axis=0).max())


def save_matrix(path: str | Path, matrix: np.ndarray) -> None:
    np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",", fmt="%.17g")


def load_matrix(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)

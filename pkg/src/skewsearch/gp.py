"""Exact Gaussian-process regression with an ARD squared-exponential kernel.

Inputs are standardised per dimension and targets centred before fitting;
hyperparameters maximise the log marginal likelihood from several starts.
Training sets here stay in the low hundreds, so the cubic cost is fine.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-10
# in standardised input units
MIN_LENGTHSCALE = 0.3
MAX_JITTER = 1e-6


class SingularKernel(np.linalg.LinAlgError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float)
        if not (np.all(np.isfinite(ls)) and np.all(ls > 0)):
            raise ValueError("lengthscales must be finite and positive")
        if not (math.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ValueError("signal_variance must be positive")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ValueError("noise_variance must be non-negative")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.log(self.lengthscales), [math.log(self.signal_variance)],
                               [math.log(max(self.noise_variance, NOISE_FLOOR))]])

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "GpHyperparams":
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))


@dataclass(frozen=True)
class Prediction:
    mu: float
    v: float


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def se_kernel(a: np.ndarray, b: np.ndarray, lengthscales, signal_variance) -> np.ndarray:
    ls = np.asarray(lengthscales, dtype=float)
    return signal_variance * np.exp(-0.5 * _sq_dists(a / ls, b / ls))


def _factor(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky with jitter escalation up to MAX_JITTER (relative to the diagonal scale)."""
    scale = float(np.mean(np.diag(K))) or 1.0
    jitter = 0.0
    while True:
        try:
            return cholesky(K + jitter * scale * np.eye(len(K)), lower=True), jitter * scale
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
            if jitter > MAX_JITTER * (1 + 1e-9):
                raise SingularKernel("kernel matrix not positive definite after jitter 1e-6") from None


def log_marginal_likelihood(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                            with_grad: bool = True):
    """Log marginal likelihood (and gradient) in log-hyperparameter space."""
    n, d = X.shape
    ls = np.exp(theta[:d])
    sf2 = math.exp(theta[d])
    sn2 = math.exp(theta[d + 1])
    Xs = X / ls
    Kf = sf2 * np.exp(-0.5 * _sq_dists(Xs, Xs))
    K = Kf + sn2 * np.eye(n)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return (-np.inf, np.zeros_like(theta)) if with_grad else -np.inf
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi)
    if not with_grad:
        return lml
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    M = W * Kf
    rs = M.sum(1)
    # sum_ij M_ij (x_id - x_jd)^2 for every d at O(n^2 d)
    quad = 2.0 * (Xs * Xs).T @ rs - 2.0 * np.einsum("id,id->d", Xs, M @ Xs)
    grad = np.empty_like(theta)
    grad[:d] = 0.5 * quad
    grad[d] = 0.5 * M.sum()
    grad[d + 1] = 0.5 * sn2 * np.trace(W)
    return lml, grad


class GpModel:
    """Fitted GP; immutable after `fit`."""

    def __init__(self, X: np.ndarray, y: np.ndarray, hyperparams: GpHyperparams,
                 x_mean: np.ndarray, x_scale: np.ndarray, y_mean: float):
        self.X_raw = np.asarray(X, dtype=float)
        self.y_raw = np.asarray(y, dtype=float)
        self.x_mean = x_mean
        self.x_scale = x_scale
        self.y_mean = y_mean
        self.X = (self.X_raw - x_mean) / x_scale
        self.y = self.y_raw - y_mean
        self.hyperparams = hyperparams
        K = self._gram()
        self.L, self.jitter = _factor(K)
        self.alpha = cho_solve((self.L, True), self.y)

    def _gram(self) -> np.ndarray:
        hp = self.hyperparams
        K = se_kernel(self.X, self.X, hp.lengthscales, hp.signal_variance)
        K[np.diag_indices_from(K)] += max(hp.noise_variance, NOISE_FLOOR)
        return K

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def factorization_error(self) -> float:
        """Relative Frobenius error of L L^T against the (jittered) Gram matrix."""
        K = self._gram() + self.jitter * np.eye(len(self.X))
        return float(np.linalg.norm(self.L @ self.L.T - K) / np.linalg.norm(K))

    def predict_arrays(self, inputs) -> tuple[np.ndarray, np.ndarray]:
        Q = np.atleast_2d(np.asarray(inputs, dtype=float))
        if Q.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {Q.shape[1]}")
        hp = self.hyperparams
        Qs = (Q - self.x_mean) / self.x_scale
        Ks = se_kernel(Qs, self.X, hp.lengthscales, hp.signal_variance)
        mu = self.y_mean + Ks @ self.alpha
        V = solve_triangular(self.L, Ks.T, lower=True)
        var = hp.signal_variance + max(hp.noise_variance, NOISE_FLOOR) - (V * V).sum(0)
        return mu, np.sqrt(np.maximum(var, 0.0))

    def predict(self, inputs) -> list[Prediction]:
        mu, v = self.predict_arrays(inputs)
        return [Prediction(float(m), float(s)) for m, s in zip(mu, v)]

    # -- text dump -------------------------------------------------------

    def to_dict(self) -> dict:
        hp = self.hyperparams
        return {
            "format": "skewsearch-gp/1",
            "lengthscales": hp.lengthscales.tolist(),
            "signal_variance": hp.signal_variance,
            "noise_variance": hp.noise_variance,
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "inputs": self.X_raw.tolist(),
            "targets": self.y_raw.tolist(),
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, data: dict) -> "GpModel":
        hp = GpHyperparams(np.asarray(data["lengthscales"]), data["signal_variance"], data["noise_variance"])
        return cls(np.asarray(data["inputs"]), np.asarray(data["targets"]), hp,
                   np.asarray(data["x_mean"]), np.asarray(data["x_scale"]), data["y_mean"])

    @classmethod
    def load(cls, path: str | Path) -> "GpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(0)
    std = X.std(0)
    # constant columns are only centred
    scale = np.where(std > 1e-12, std, 1.0)
    return mean, scale


def fit(inputs, targets, n_starts: int = 3, seed: int = 0,
        hyperparams: GpHyperparams | None = None, maxiter: int = 200,
        warm_start: GpHyperparams | None = None) -> GpModel:
    """Fit by maximising the log marginal likelihood from ``n_starts`` starts.

    Passing ``hyperparams`` skips optimisation. ``warm_start`` (for example
    the previous fit in an active-learning loop) is tried as an extra start.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} input rows vs {y.size} targets")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    x_mean, x_scale = standardization(X)
    y_mean = float(y.mean())
    if hyperparams is not None:
        return GpModel(X, y, hyperparams, x_mean, x_scale, y_mean)

    Xs = (X - x_mean) / x_scale
    yc = y - y_mean
    n, d = Xs.shape
    yvar = float(yc.var())
    s = yvar if yvar > 1e-12 else 1.0
    bounds = ([(math.log(MIN_LENGTHSCALE), math.log(1e4))] * d
              + [(math.log(1e-8 * s), math.log(1e4 * s))]
              + [(math.log(NOISE_FLOOR), math.log(10.0 * s))])

    def neg(theta):
        lml, g = log_marginal_likelihood(theta, Xs, yc)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -g

    def neg_iso(t):
        lml, g = log_marginal_likelihood(np.concatenate([np.full(d, t[0]), t[1:]]), Xs, yc)
        if not np.isfinite(lml):
            return 1e25, np.zeros(3)
        return -lml, -np.array([g[:d].sum(), g[d], g[d + 1]])

    # first start: the isotropic optimum, which keeps ARD out of the
    # degenerate all-noise and needle-lengthscale basins
    iso = minimize(neg_iso, [0.5 * math.log(d) + math.log(2.0), math.log(s), math.log(1e-2 * s)],
                   jac=True, method="L-BFGS-B", bounds=[bounds[0], bounds[d], bounds[d + 1]])
    starts = [np.concatenate([np.full(d, iso.x[0]), iso.x[1:]]),
              np.concatenate([np.full(d, 0.5 * math.log(d) + math.log(2.0)),
                              [math.log(s)], [math.log(1e-4 * s)]])]
    rng = np.random.default_rng(seed)
    while len(starts) < max(n_starts, 1):
        starts.append(np.concatenate([rng.uniform(math.log(0.5), math.log(3.0 * math.sqrt(d) + 3.0), d),
                                      [math.log(s) + rng.uniform(-1, 1)],
                                      [math.log(s) + rng.uniform(-10, -3)]]))

    starts = starts[:max(n_starts, 1)]
    if warm_start is not None:
        if len(warm_start.lengthscales) != d:
            raise DimensionMismatch(f"warm start has {len(warm_start.lengthscales)} lengthscales, data has {d}")
        starts.append(warm_start.to_vector())

    best = None
    for th0 in starts:
        th0 = np.clip(th0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(neg, th0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter})
        if best is None or res.fun < best.fun:
            best = res
    hp = GpHyperparams.from_vector(best.x)
    log.debug("gp fit n=%d d=%d lml=%.4g sf2=%.3g sn2=%.3g", n, d, -best.fun,
              hp.signal_variance, hp.noise_variance)
    return GpModel(X, y, hp, x_mean, x_scale, y_mean)


def predict(model: GpModel, inputs) -> list[Prediction]:
    return model.predict(inputs)

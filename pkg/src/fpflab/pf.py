"""Sequential importance resampling particle filter (independent coupling)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Ensemble, as_rng
from .errors import AllWeightsZero


@dataclass(frozen=True)
class WeightedEnsemble:
    """Particles with natural-log weights, stored normalized (log-sum-exp = 0)."""

    particles: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return w / w.sum()

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    def ess(self) -> float:
        """Effective sample size ``1 / sum w_i^2``."""
        return 1.0 / np.sum(self.weights**2)

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    logw = np.asarray(logw, dtype=float)
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ValueError("log-likelihood must be finite or -inf")
    top = logw.max()
    if top == -np.inf:
        raise AllWeightsZero("every log-likelihood is -inf")
    shifted = logw - top
    return shifted - np.log(np.sum(np.exp(shifted)))


def importance_weights(e: Ensemble, log_lik: Callable[[np.ndarray], np.ndarray]) -> WeightedEnsemble:
    x = e.particles
    return WeightedEnsemble(x, normalize_log_weights(log_lik(x)))


def multinomial_indices(w: np.ndarray, n: int, rng) -> np.ndarray:
    """Inverse-CDF multinomial draws on left-closed cumulative intervals."""
    c = np.cumsum(w)
    c[-1] = 1.0
    u = as_rng(rng).generator().random(n)
    return np.minimum(np.searchsorted(c, u, side="right"), len(w) - 1)


def multinomial_resample(w: WeightedEnsemble, rng) -> Ensemble:
    idx = multinomial_indices(w.weights, w.n, rng)
    return Ensemble(w.particles[idx])


def gaussian_log_lik(y, H, sigma_w: float):
    """``x -> -|y - H x|^2 / (2 sigma_w^2)``; ``H`` may be ``(d,)`` or ``(m, d)``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))

    def log_lik(x):
        r = y - x @ H.T
        return -0.5 * np.sum(r * r, axis=1) / sigma_w**2

    return log_lik


def sir_filter_step(e: Ensemble, y, H, sigma_w: float, rng) -> Ensemble:
    """One importance-weighting + multinomial-resampling update."""
    return multinomial_resample(importance_weights(e, gaussian_log_lik(y, H, sigma_w)), rng)

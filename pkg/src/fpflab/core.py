"""Ensembles, Gaussian beliefs, seeded random streams and SPD linear algebra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotSPD

WEIGHT_SUM_TOL = 1e-12
SPD_REL_FLOOR = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by ``(seed, stream)``.

    Every call to :meth:`generator` returns a fresh Philox generator positioned
    at the start of the stream, so equal streams always yield equal draws.
    Sub-streams are derived with :meth:`child` instead of sharing state.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngStream":
        """Stream for sub-task ``index``; depends only on (seed, stream, index)."""
        mixed = np.random.SeedSequence([self.stream, int(index)]).generate_state(1, np.uint64)[0]
        return RngStream(self.seed, int(mixed))

    def normal(self, size) -> np.ndarray:
        return self.generator().standard_normal(size)


def as_rng(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")


@dataclass(frozen=True)
class Ensemble:
    """N particles in d dimensions with optional normalized weights."""

    particles: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.particles, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError(f"particles must be N x d, got shape {x.shape}")
        n, d = x.shape
        if n < 2 or d < 1:
            raise ValueError(f"need N >= 2 and d >= 1, got N={n}, d={d}")
        if not np.all(np.isfinite(x)):
            raise ValueError("particles contain non-finite entries")
        object.__setattr__(self, "particles", _frozen(x))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,):
                raise ValueError(f"weights must have shape ({n},), got {w.shape}")
            if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("weights must be non-negative and sum to 1")
            object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if m.ndim != 1 or c.shape != (m.size, m.size):
            raise ValueError(f"mean {m.shape} and cov {c.shape} are inconsistent")
        check_spd(c)
        object.__setattr__(self, "mean", _frozen(m))
        object.__setattr__(self, "cov", _frozen(c))

    @property
    def dim(self) -> int:
        return self.mean.size


def check_spd(m: np.ndarray, rel_floor: float = 0.0) -> np.ndarray:
    """Validate symmetry and positivity; return the eigenvalues."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSPD(f"not a square matrix: shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotSPD("matrix has non-finite entries")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > 1e-12 * scale:
        raise NotSPD("matrix is not symmetric")
    w = np.linalg.eigvalsh(m)
    if w[0] <= 0 or w[0] <= rel_floor * w[-1]:
        raise NotSPD(f"matrix is not positive definite (eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
    return w


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def spd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix via eigendecomposition.

    Raises :class:`NotSPD` when ``m`` is asymmetric or its smallest eigenvalue
    is not above ``1e-12`` times the largest.
    """
    m = np.asarray(m, dtype=float)
    check_spd(m, rel_floor=SPD_REL_FLOOR)
    w, v = np.linalg.eigh(m)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def spd_inv_sqrt(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    check_spd(m, rel_floor=SPD_REL_FLOOR)
    w, v = np.linalg.eigh(m)
    return symmetrize((v / np.sqrt(w)) @ v.T)


def weighted_stats(x: np.ndarray, weights: Optional[np.ndarray] = None):
    """Mean and covariance of the rows of ``x``.

    Uniform weights use the ``N - 1`` divisor. Weighted covariance uses the
    reliability-weights unbiased form ``sum w (x-m)(x-m)^T / (1 - sum w^2)``,
    which reduces to the uniform case when ``w = 1/N``.
    """
    x = np.asarray(x, dtype=float)
    if weights is None:
        mean = x.mean(axis=0)
        dx = x - mean
        cov = dx.T @ dx / (x.shape[0] - 1)
    else:
        w = np.asarray(weights, dtype=float)
        mean = w @ x
        dx = x - mean
        denom = 1.0 - np.sum(w**2)
        cov = (dx * w[:, None]).T @ dx / denom if denom > 0 else np.zeros((x.shape[1],) * 2)
    return mean, symmetrize(cov)


def ensemble_stats(e: Ensemble):
    """Return ``(mean, cov)`` of an ensemble (see :func:`weighted_stats`)."""
    return weighted_stats(e.particles, e.weights)


def sample_gaussian(belief: GaussianBelief, n: int, rng) -> Ensemble:
    if n < 1:
        raise ValueError("n must be >= 1")
    s = spd_sqrt(belief.cov)
    xi = as_rng(rng).normal((n, belief.dim))
    return Ensemble(belief.mean + xi @ s)

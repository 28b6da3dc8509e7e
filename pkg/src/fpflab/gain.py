"""Gain function approximation: solvers for the weighted Poisson equation

    -(1/rho) div(rho grad phi) = h - hhat,    K = grad phi,

given only samples of ``rho``. Backends: constant gain, Galerkin, diffusion
map; plus a 1-D quadrature solution used as the reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist, pdist

from .core import Ensemble
from .errors import DegenerateKernel, GridTooNarrow, NoConvergence, SingularGram, ZeroSpread
from .models import write_csv

log = logging.getLogger(__name__)

DM_TOL = 1e-9
DM_MAX_ITER = 10_000


def _particles(e) -> np.ndarray:
    x = e.particles if isinstance(e, Ensemble) else np.asarray(e, dtype=float)
    return x[:, None] if x.ndim == 1 else x


@dataclass(frozen=True)
class GainField:
    """Row ``i`` is the gain ``K(X^i)``."""

    gains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if not np.all(np.isfinite(g)):
            raise ValueError("gain field has non-finite entries")
        object.__setattr__(self, "gains", g)

    def to_csv(self, path, particles) -> None:
        x = _particles(particles)
        d = x.shape[1]
        header = ["i"] + [f"x_{j + 1}" for j in range(d)] + [f"k_{j + 1}" for j in range(d)]
        write_csv(path, header, ([i, *x[i], *self.gains[i]] for i in range(x.shape[0])))


def constant_gain(e, h_vals) -> np.ndarray:
    """Empirical mean gain ``(1/N) sum_i (h(X^i) - hhat) X^i``."""
    x = _particles(e)
    h = np.asarray(h_vals, dtype=float)
    return (h - h.mean()) @ x / x.shape[0]


# ---------------------------------------------------------------- diffusion map


@dataclass(frozen=True)
class DiffusionMapState:
    """Markov matrix of the diffusion map on an ensemble.

    ``hhat`` is the invariant-measure (``pi``) average of ``h``; ``phi`` is the
    current potential and ``iterations`` the sweeps spent computing it.
    """

    epsilon: float
    T: np.ndarray
    pi: np.ndarray
    phi: np.ndarray
    hhat: float
    iterations: int = 0


def dm_build(e, h_vals, epsilon: float) -> DiffusionMapState:
    if np.isnan(epsilon):
        raise DegenerateKernel("epsilon is NaN")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = _particles(e)
    if x.shape[0] < 2:
        raise ValueError("need at least two particles")
    h = np.asarray(h_vals, dtype=float)
    with np.errstate(over="ignore"):
        g = np.exp(-cdist(x, x, "sqeuclidean") / (4.0 * epsilon))
    row = g.sum(axis=1)
    if not np.all(row > 0) or not np.all(np.isfinite(row)):
        raise DegenerateKernel(f"kernel row sums vanished at epsilon={epsilon:g}")
    root = np.sqrt(row)
    k = g / root[:, None] / root[None, :]
    d = k.sum(axis=1)
    T = k / d[:, None]
    pi = d / d.sum()
    return DiffusionMapState(epsilon, T, pi, np.zeros(x.shape[0]), float(pi @ h))


def dm_fixed_point(
    s: DiffusionMapState,
    h_vals,
    tol: float = DM_TOL,
    max_iter: int = DM_MAX_ITER,
    method: str = "iterate",
) -> DiffusionMapState:
    """Solve ``phi = T phi + eps (h - hhat)`` with ``sum pi phi = 0``.

    ``method="iterate"`` runs the Banach iteration from ``s.phi``, re-centering
    each sweep, until the sup-norm change drops below ``tol * (1 + |phi|_inf)``.
    ``method="solve"`` computes the same fixed point with one dense solve of
    ``(I - T + 1 pi^T) phi = eps (h - hhat)``; it raises DegenerateKernel
    when that system is singular (the kernel splits the ensemble into blocks).
    """
    if not tol > 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    h = np.asarray(h_vals, dtype=float)
    forcing = s.epsilon * (h - s.hhat)
    if method == "solve":
        if connected_components(s.T > 0, directed=False, return_labels=False) > 1:
            raise DegenerateKernel(f"kernel graph is disconnected at epsilon={s.epsilon:g}")
        n = h.size
        a = np.eye(n) - s.T + np.outer(np.ones(n), s.pi)
        phi = np.linalg.solve(a, forcing)
        return replace(s, phi=phi - s.pi @ phi, iterations=0)
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")
    phi = np.asarray(s.phi, dtype=float)
    change = np.inf
    for it in range(1, max_iter + 1):
        new = s.T @ phi + forcing
        new -= s.pi @ new
        change = np.abs(new - phi).max()
        phi = new
        if change < tol * (1.0 + np.abs(phi).max()):
            log.debug("diffusion-map fixed point converged in %d sweeps", it)
            return replace(s, phi=phi, iterations=it)
    raise NoConvergence(max_iter, change)


def dm_gain(s: DiffusionMapState, e, h_vals) -> GainField:
    """Gain from a converged potential: ``K^i = sum_j s_ij X^j``."""
    x = _particles(e)
    r = s.phi + s.epsilon * np.asarray(h_vals, dtype=float)
    Tr = s.T @ r
    sij = s.T * (r[None, :] - Tr[:, None]) / (2.0 * s.epsilon)
    return GainField(sij @ x)


def diffusion_map_gain(e, h_vals, epsilon: float, **solver) -> Tuple[GainField, DiffusionMapState]:
    """Build, solve and differentiate in one call."""
    state = dm_fixed_point(dm_build(e, h_vals, epsilon), h_vals, **solver)
    return dm_gain(state, e, h_vals), state


def epsilon_heuristic(e, include_self: bool = False) -> float:
    """Bandwidth rule ``10 * median(|X^i - X^j|^2) / log N``.

    The median runs over distinct pairs ``i < j``; ``include_self=True`` uses
    all ``N^2`` ordered pairs including the zero self-distances.
    """
    x = _particles(e)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two particles")
    d2 = pdist(x, "sqeuclidean")
    if include_self:
        d2 = np.concatenate([d2, d2, np.zeros(n)])
    if not np.any(d2 > 0):
        raise ZeroSpread("all particles coincide")
    return 10.0 * float(np.median(d2)) / np.log(n)


# ---------------------------------------------------------------- Galerkin

Basis = Sequence[Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]]


def coordinate_basis(d: int) -> Basis:
    return [(lambda x, j=j: x[:, j], lambda x, j=j: np.eye(x.shape[1])[j] * np.ones((x.shape[0], 1))) for j in range(d)]


def polynomial_basis_1d(degree: int) -> Basis:
    """``x, x^2, ..., x^degree`` on a scalar state."""
    return [
        (lambda x, p=p: x[:, 0] ** p, lambda x, p=p: (p * x[:, 0] ** (p - 1))[:, None])
        for p in range(1, degree + 1)
    ]


def galerkin_gain(e, h_vals, basis: Basis):
    """Project the weak form onto ``span(basis)``; return ``(coeffs, GainField)``."""
    x = _particles(e)
    h = np.asarray(h_vals, dtype=float)
    n = x.shape[0]
    psi = np.column_stack([f(x) for f, _ in basis])
    grads = np.stack([g(x) for _, g in basis], axis=1)  # (N, M, d)
    A = np.einsum("imk,ink->mn", grads, grads) / n
    b = psi.T @ (h - h.mean()) / n
    w = np.linalg.eigvalsh(A)
    if w[0] <= 1e-10 * w[-1]:
        raise SingularGram(f"Gram eigenvalues {w[0]:.3e}..{w[-1]:.3e}")
    c = np.linalg.solve(A, b)
    return c, GainField(np.einsum("m,imk->ik", c, grads))


# ---------------------------------------------------------------- 1-D reference


def exact_gain_1d(density: Callable, h: Callable, grid) -> np.ndarray:
    """Gain ``K = -(1/rho) int_{-inf}^x (h - hhat) rho`` on a uniform grid.

    The integral is accumulated from whichever end is closer so that both
    tails keep relative accuracy. ``density`` need not be normalized on the
    grid but must hold at least 0.999 of its mass there.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 512:
        raise ValueError("grid must be 1-D with at least 512 points")
    rho = np.asarray(density(x), dtype=float)
    if not np.all(rho > 0):
        raise ValueError("density must be positive on the grid")
    mass = trapezoid(rho, x)
    if mass < 0.999:
        raise GridTooNarrow(f"grid holds only {mass:.6f} of the probability mass")
    hv = np.asarray(h(x), dtype=float) * np.ones_like(x)
    hhat = trapezoid(hv * rho, x) / mass
    f = (hv - hhat) * rho
    left = cumulative_trapezoid(f, x, initial=0.0)
    right = cumulative_trapezoid(f[::-1], x[::-1], initial=0.0)[::-1]  # = -int_x^end f
    cut = np.searchsorted(np.cumsum(rho) / rho.sum(), 0.5)
    integral = np.where(np.arange(x.size) <= cut, left, right)
    return -integral / rho

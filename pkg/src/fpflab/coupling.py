"""Discrete-time Bayes updates for Gaussian priors.

The exact Kalman update, the optimal-transport (Brenier) map between two
Gaussians and its particle approximation, the perturbed-observation EnKF,
and the closed-form transport flow of the heat equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Ensemble,
    GaussianBelief,
    as_rng,
    ensemble_stats,
    spd_inv_sqrt,
    spd_sqrt,
    symmetrize,
)
from .errors import SingularCovariance

SINGULAR_REL_FLOOR = 1e-10


@dataclass(frozen=True)
class AffineMap:
    """``T(x) = F x + b``."""

    linear: np.ndarray
    offset: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.offset


def _obs_matrix(H, d):
    H = np.asarray(H, dtype=float)
    return H.reshape(1, d) if H.ndim <= 1 else H.reshape(-1, d)


def _gain(cov, H, obs_var):
    s = H @ cov @ H.T + obs_var * np.eye(H.shape[0])
    return np.linalg.solve(s, H @ cov).T


def kalman_update(prior: GaussianBelief, H, y, obs_var: float = 1.0) -> GaussianBelief:
    """Exact posterior for the observation ``y = H x + w``, ``w ~ N(0, obs_var)``."""
    H = _obs_matrix(H, prior.dim)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    K = _gain(prior.cov, H, obs_var)
    mean = prior.mean + K @ (y - H @ prior.mean)
    # GaussianBelief raises NotSPD if the symmetrized difference lost positivity
    return GaussianBelief(mean, symmetrize(prior.cov - K @ H @ prior.cov))


def ot_map(prior: GaussianBelief, post: GaussianBelief) -> AffineMap:
    """Optimal transport map ``T(x) = F (x - m0) + m1`` between two Gaussians.

    ``F`` is the symmetric positive definite solution of ``F S0 F = S1``.
    """
    r = spd_sqrt(prior.cov)
    r_inv = spd_inv_sqrt(prior.cov)
    F = symmetrize(r_inv @ spd_sqrt(symmetrize(r @ post.cov @ r)) @ r_inv)
    return AffineMap(F, post.mean - F @ prior.mean)


def _empirical_prior(e: Ensemble):
    m, c = ensemble_stats(e)
    w = np.linalg.eigvalsh(c)
    if w[0] < SINGULAR_REL_FLOOR * max(w[-1], np.finfo(float).tiny):
        raise SingularCovariance(
            f"empirical covariance eigenvalues {w[0]:.3e}..{w[-1]:.3e}; need N >= d + 1 distinct particles"
        )
    return m, c


def ot_particle_update(e: Ensemble, H, y, obs_var: float = 1.0) -> Ensemble:
    """Deterministic transport of every particle with the empirical OT map."""
    m0, c0 = _empirical_prior(e)
    prior = GaussianBelief(m0, c0)
    post = kalman_update(prior, H, y, obs_var)
    T = ot_map(prior, post)
    return Ensemble(T(e.particles))


def enkf_particle_update(e: Ensemble, H, y, rng, obs_var: float = 1.0, noise=None) -> Ensemble:
    """Perturbed-observation EnKF: ``X + K (y - H X + W)``.

    ``noise`` (shape ``(N, m)``, standard normal) overrides the draws from
    ``rng``; it exists to check permutation equivariance.
    """
    m0, c0 = _empirical_prior(e)
    Hm = _obs_matrix(H, e.dim)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    K = _gain(c0, Hm, obs_var)
    if noise is None:
        noise = as_rng(rng).normal((e.n, Hm.shape[0]))
    w = np.sqrt(obs_var) * np.asarray(noise, dtype=float).reshape(e.n, Hm.shape[0])
    innov = y - e.particles @ Hm.T + w
    return Ensemble(e.particles + innov @ K.T)


def heat_flow_transport(x0: Ensemble, t: float, sigma0: float) -> Ensemble:
    """Move samples of ``N(0, sigma0^2)`` along ``dX/dt = -d/dx log p_t(X)``.

    With ``p_t = N(0, sigma0^2 + 2t)`` the flow is linear and integrates to a
    scaling by ``sqrt((sigma0^2 + 2t) / sigma0^2)``.
    """
    if not sigma0 > 0 or t < 0:
        raise ValueError("need sigma0 > 0 and t >= 0")
    return Ensemble(x0.particles * np.sqrt((sigma0**2 + 2.0 * t) / sigma0**2))

"""Continuous-time filters.

The feedback particle filter moves each particle with

    dX^i = a(X^i) dt + sigma(X^i) dB^i + K(X^i) o (dZ - (h(X^i) + hhat) / 2 dt)

where the gain ``K`` comes from a pluggable Poisson-equation backend. The
linear-Gaussian special case (square-root EnKF) and the Kalman-Bucy filter
are provided as references.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import gain as _gain
from .core import Ensemble, as_rng, check_spd, symmetrize
from .errors import NonFinite, NotSPD
from .models import FilterModel, ObservationPath, write_csv

log = logging.getLogger(__name__)

BACKENDS = ("constant", "diffusion_map", "galerkin")


@dataclass(frozen=True)
class FpfConfig:
    """Filter settings.

    ``epsilon=None`` selects the bandwidth heuristic for the diffusion-map
    backend. ``scheme`` is ``"euler"`` (gain frozen at the step start) or
    ``"heun"`` (predictor-corrector, Stratonovich-consistent). ``warm_start``
    seeds each diffusion-map solve with the previous potential.
    """

    gain_backend: str = "constant"
    dt: float = 0.01
    n_particles: int = 100
    epsilon: Optional[float] = None
    basis: Optional[Sequence] = None
    scheme: str = "euler"
    dm_tol: float = _gain.DM_TOL
    dm_max_iter: int = _gain.DM_MAX_ITER
    dm_method: str = "iterate"
    warm_start: bool = False

    def __post_init__(self):
        if self.gain_backend not in BACKENDS:
            raise ValueError(f"gain_backend must be one of {BACKENDS}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.scheme not in ("euler", "heun"):
            raise ValueError("scheme must be 'euler' or 'heun'")
        if self.gain_backend == "galerkin" and not self.basis:
            raise ValueError("galerkin backend needs a basis")


@dataclass
class GainInfo:
    gains: np.ndarray
    hhat: float
    hhat_pi: float = float("nan")
    iterations: int = 0
    epsilon: float = float("nan")
    phi: Optional[np.ndarray] = None

    @property
    def norm(self) -> float:
        return float(np.mean(np.linalg.norm(self.gains, axis=1)))


def compute_gain(x: np.ndarray, h: np.ndarray, cfg: FpfConfig, phi0=None) -> GainInfo:
    """Per-particle gains ``(N, d)`` from the configured backend."""
    hhat = float(h.mean())
    if cfg.gain_backend == "constant":
        k = _gain.constant_gain(x, h)
        return GainInfo(np.broadcast_to(k, x.shape), hhat)
    if cfg.gain_backend == "galerkin":
        _, field_ = _gain.galerkin_gain(x, h, cfg.basis)
        return GainInfo(field_.gains, hhat)
    eps = cfg.epsilon if cfg.epsilon is not None else _gain.epsilon_heuristic(x)
    state = _gain.dm_build(x, h, eps)
    if phi0 is not None and cfg.warm_start:
        state = replace(state, phi=phi0 - state.pi @ phi0)
    state = _gain.dm_fixed_point(state, h, cfg.dm_tol, cfg.dm_max_iter, cfg.dm_method)
    return GainInfo(_gain.dm_gain(state, x, h).gains, hhat, state.hhat, state.iterations, eps, state.phi)


def _fpf_advance(x, m: FilterModel, cfg: FpfConfig, dz, xi, phi0=None):
    dt = cfg.dt
    sw = m.obs_noise
    if not sw > 0:
        raise ValueError("filtering needs a positive observation noise")

    def terms(y, phi):
        h = m.obs(y) / sw
        info = compute_gain(y, h, cfg, phi)
        innov = dz / sw - 0.5 * (h + info.hhat) * dt
        return m.drift(y) * dt + info.gains * innov[:, None], info

    noise = m.noise_term(x, xi) * np.sqrt(dt)
    det, info = terms(x, phi0)
    if cfg.scheme == "heun":
        pred = x + det + noise
        if m.project is not None:
            pred = m.project(pred)
        det2, _ = terms(pred, info.phi)
        det = 0.5 * (det + det2)
    out = x + det + noise
    if m.project is not None:
        out = m.project(out)
    if not np.all(np.isfinite(out)):
        raise NonFinite("fpf_step produced non-finite particles")
    return out, info


def fpf_step(e: Ensemble, m: FilterModel, cfg: FpfConfig, dZ: float, rng, noise=None) -> Ensemble:
    """One explicit step of the feedback particle filter.

    ``noise`` (``(N, d)`` standard normals) overrides the process-noise draws.
    """
    if not np.isfinite(dZ):
        raise ValueError("dZ must be finite")
    xi = as_rng(rng).normal(e.particles.shape) if noise is None else np.asarray(noise, dtype=float)
    out, _ = _fpf_advance(e.particles, m, cfg, float(dZ), xi)
    return Ensemble(out)


# ---------------------------------------------------------------- linear case


def linear_fpf_increment(x, A, H, dz, dt, xi, sigma_b=1.0, obs_std=1.0):
    """Increment of the linear FPF on particle arrays ``(..., N, d)``.

    Leading axes are independent ensembles. ``H`` is ``(m, d)`` and ``dz`` has
    shape ``(..., m)``; the gain is the empirical ``Sigma H^T / obs_std^2``
    with the ``N - 1`` divisor. ``xi`` holds the standard-normal process noise.
    """
    n = x.shape[-2]
    mean = x.mean(axis=-2, keepdims=True)
    dx = x - mean
    cov = np.swapaxes(dx, -1, -2) @ dx / (n - 1)
    K = cov @ H.T / obs_std**2                                  # (..., d, m)
    innov = dz[..., None, :] - 0.5 * ((x + mean) @ H.T) * dt     # (..., N, m)
    inc = x @ A.T * dt + innov @ np.swapaxes(K, -1, -2)
    if sigma_b is not None:
        sb = np.asarray(sigma_b, dtype=float)
        inc = inc + np.sqrt(dt) * (xi * sb if sb.ndim == 0 else xi @ sb.T)
    return inc


def linear_fpf_step(e: Ensemble, A, H, dZ, dt: float, rng, sigma_b=1.0, obs_std=1.0, noise=None) -> Ensemble:
    """Euler step of the linear-Gaussian FPF (square-root EnKF).

    ``H`` may be a row ``(d,)`` or a matrix ``(m, d)`` with ``dZ`` of length
    ``m``. ``sigma_b`` scales the process noise; ``None`` drops the term.
    """
    d = e.dim
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(d, d)
    H = np.asarray(H, dtype=float).reshape(-1, d)
    dz = np.atleast_1d(np.asarray(dZ, dtype=float))
    if noise is None:
        noise = np.zeros(e.particles.shape) if sigma_b is None else as_rng(rng).normal(e.particles.shape)
    out = e.particles + linear_fpf_increment(e.particles, A, H, dz, dt, np.asarray(noise, dtype=float), sigma_b, obs_std)
    if not np.all(np.isfinite(out)):
        raise NonFinite("linear_fpf_step produced non-finite particles")
    return Ensemble(out)


@dataclass(frozen=True)
class KalmanBucyState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        check_spd(c)
        object.__setattr__(self, "cov", c)


def kalman_bucy_step(s: KalmanBucyState, A, H, Q, dZ, dt: float, obs_var: float = 1.0) -> KalmanBucyState:
    """Explicit Euler step of the Kalman-Bucy mean and Riccati equations."""
    d = s.mean.size
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(d, d)
    H = np.asarray(H, dtype=float).reshape(-1, d)
    Q = float(Q) * np.eye(d) if np.ndim(Q) == 0 else np.asarray(Q, dtype=float)
    dz = np.atleast_1d(np.asarray(dZ, dtype=float))
    P = s.cov
    K = P @ H.T / obs_var
    mean = s.mean + A @ s.mean * dt + K @ (dz - H @ s.mean * dt)
    cov = symmetrize(P + (A @ P + P @ A.T + Q - K @ H @ P) * dt)
    try:
        return KalmanBucyState(mean, cov)
    except NotSPD as exc:
        raise NotSPD(f"Riccati step lost positivity; reduce dt ({exc})") from None


# ---------------------------------------------------------------- driver


@dataclass
class FpfResult:
    dim: int
    dt: float
    records: list = field(default_factory=list)
    final: Optional[Ensemble] = None
    ensembles: Optional[list] = None

    def columns(self):
        d = self.dim
        return (["step", "t"] + [f"mean_{j + 1}" for j in range(d)] + [f"std_{j + 1}" for j in range(d)]
                + ["hhat", "gain_norm", "gain_iters"])

    def rows(self):
        for r in self.records:
            yield [r["step"], r["t"], *r["mean"], *r["std"], r["hhat"], r["gain_norm"], r["gain_iters"]]

    def means(self) -> np.ndarray:
        return np.array([r["mean"] for r in self.records])

    def to_csv(self, path):
        return write_csv(path, self.columns(), self.rows())


def _summary(step, t, x, hhat, gain_norm, iters):
    return {
        "step": step,
        "t": t,
        "mean": x.mean(axis=0),
        "std": x.std(axis=0, ddof=1),
        "hhat": hhat,
        "gain_norm": gain_norm,
        "gain_iters": iters,
    }


def fpf_run(m: FilterModel, obs: ObservationPath, cfg: FpfConfig, rng, ensemble: Optional[Ensemble] = None,
            keep_ensembles: bool = False) -> FpfResult:
    """Run the FPF over an observation path.

    Records one summary per time point (the prior at step 0). The gain
    columns of record ``k`` describe the gain used to move from ``k - 1``.
    Prior draws use ``rng.child(0)`` and step ``k`` uses ``rng.child(k + 1)``.
    """
    if abs(obs.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise ValueError(f"observation dt {obs.dt} differs from filter dt {cfg.dt}")
    rng = as_rng(rng)
    if ensemble is None:
        ensemble = m.sample_prior(cfg.n_particles, rng.child(0))
    x = ensemble.particles
    res = FpfResult(m.dim, cfg.dt, ensembles=[ensemble] if keep_ensembles else None)
    h0 = m.obs(x) / m.obs_noise
    res.records.append(_summary(0, 0.0, x, float(h0.mean()), 0.0, 0))
    phi = None
    for k, dz in enumerate(obs.increments):
        xi = rng.child(k + 1).normal(x.shape)
        x, info = _fpf_advance(x, m, cfg, float(dz), xi, phi)
        phi = info.phi
        log.debug("step %d: hhat=%.6g hhat_pi=%.6g iters=%d", k, info.hhat, info.hhat_pi, info.iterations)
        res.records.append(_summary(k + 1, (k + 1) * cfg.dt, x, info.hhat, info.norm, info.iterations))
        if keep_ensembles:
            res.ensembles.append(Ensemble(x))
    res.final = Ensemble(x)
    return res

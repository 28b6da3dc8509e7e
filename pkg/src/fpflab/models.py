"""Filtering problems and ground-truth simulation.

A :class:`FilterModel` describes

    dX = a(X) dt + sigma(X) dB,    dZ = h(X) dt + obs_noise dW

with a scalar observation channel. All model functions act on particle
arrays of shape ``(N, d)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .core import Ensemble, GaussianBelief, RngStream, as_rng, sample_gaussian
from .errors import NonFinite

Sampler = Callable[[int, RngStream], Ensemble]


def fmt(v) -> str:
    """Float formatting shared by every CSV writer (17 significant digits)."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


@dataclass(frozen=True)
class FilterModel:
    """One filtering problem.

    ``diffusion`` returns either a constant ``(d, d)`` matrix or a stack
    ``(N, d, d)``; ``None`` means no process noise. ``project`` is applied to
    the state after every step (e.g. clamping population fractions).
    """

    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    obs: Callable[[np.ndarray], np.ndarray]
    prior: Union[GaussianBelief, Sampler]
    diffusion: Optional[Callable[[np.ndarray], np.ndarray]] = None
    obs_noise: float = 1.0
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def sample_prior(self, n: int, rng) -> Ensemble:
        if isinstance(self.prior, GaussianBelief):
            return sample_gaussian(self.prior, n, rng)
        return self.prior(n, as_rng(rng))

    def noise_term(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """``sigma(x) @ xi`` row by row."""
        if self.diffusion is None:
            return np.zeros_like(x)
        s = np.asarray(self.diffusion(x), dtype=float)
        if s.ndim == 2:
            return xi @ s.T
        return np.einsum("nij,nj->ni", s, xi)


@dataclass(frozen=True)
class ObservationPath:
    dt: float
    increments: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        inc = np.asarray(self.increments, dtype=float)
        if not np.all(np.isfinite(inc)):
            raise ValueError("observation increments must be finite")
        inc = inc.copy()
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    def __len__(self):
        return self.increments.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))

    def to_csv(self, path) -> Path:
        return write_csv(path, ["k", "t", "dZ"], ((k, k * self.dt, z) for k, z in enumerate(self.increments)))


def states_to_csv(path, states: np.ndarray, dt: float) -> Path:
    states = np.atleast_2d(states)
    header = ["k", "t"] + [f"x_{j + 1}" for j in range(states.shape[1])]
    return write_csv(path, header, ([k, k * dt, *row] for k, row in enumerate(states)))


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"{what} produced non-finite values")


def simulate_truth(m: FilterModel, horizon: int, dt: float, rng, x0=None):
    """Euler-Maruyama path of the signal and its observation increments.

    Returns ``(states, obs)`` with ``states`` of shape ``(horizon + 1, d)``.
    The observation over ``[t_k, t_k + dt]`` uses the left endpoint state.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = as_rng(rng)
    if x0 is None:
        x = m.sample_prior(2, rng.child(0)).particles[:1].copy()
    else:
        x = np.asarray(x0, dtype=float).reshape(1, m.dim)
    g = rng.child(1).generator()
    xi = g.standard_normal((horizon, m.dim))
    eta = g.standard_normal(horizon)
    sq = np.sqrt(dt)
    states = np.empty((horizon + 1, m.dim))
    dz = np.empty(horizon)
    states[0] = x[0]
    for k in range(horizon):
        dz[k] = m.obs(x)[0] * dt + m.obs_noise * sq * eta[k]
        x = x + m.drift(x) * dt + m.noise_term(x, xi[k][None, :]) * sq
        if m.project is not None:
            x = m.project(x)
        _check_finite(x, "simulate_truth")
        states[k + 1] = x[0]
    _check_finite(dz, "simulate_truth")
    return states, ObservationPath(dt, dz)


# ---------------------------------------------------------------- SIR epidemic


@dataclass(frozen=True)
class SirState:
    s: float
    i: float
    beta: float

    def __post_init__(self):
        if self.s < 0 or self.i < 0 or self.s + self.i > 1 + 1e-9:
            raise ValueError(f"invalid SIR fractions s={self.s}, i={self.i}")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    @property
    def r(self) -> float:
        return 1.0 - self.s - self.i


def sir_rhs(x: SirState, alpha: float):
    """Time derivative ``(ds/dt, di/dt)`` of the SIR ODE."""
    inf = x.beta * x.s * x.i
    return (-inf, inf - alpha * x.i)


def sir_simulate(alpha, beta, sigma_w, dt, horizon, rng, i0=None):
    """Simulate the SIR epidemic with fixed transmission rate.

    Returns ``(path, obs)`` where ``path`` has columns ``(s, i, beta)`` and
    ``horizon + 1`` rows. ``I(0) ~ U[0, 0.1]`` and ``S(0) = 1 - I(0)`` unless
    ``i0`` is given. Observations count new infections with additive noise.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    if not sigma_w > 0:
        raise ValueError("sigma_w must be positive")
    if horizon < 1 or not dt > 0:
        raise ValueError("need horizon >= 1 and dt > 0")
    rng = as_rng(rng)
    if i0 is None:
        i0 = rng.child(0).generator().uniform(0.0, 0.1)
    eta = rng.child(1).normal(horizon)
    path = np.empty((horizon + 1, 3))
    dz = np.empty(horizon)
    s, i = 1.0 - i0, float(i0)
    path[0] = (s, i, beta)
    for k in range(horizon):
        ds, di = sir_rhs(SirState(s, i, beta), alpha)
        dz[k] = beta * s * i * dt + sigma_w * np.sqrt(dt) * eta[k]
        s = min(max(s + ds * dt, 0.0), 1.0)
        i = min(max(i + di * dt, 0.0), 1.0)
        path[k + 1] = (s, i, beta)
    _check_finite(path, "sir_simulate")
    _check_finite(dz, "sir_simulate")
    return path, ObservationPath(dt, dz)


# ---------------------------------------------------------------- registry


def linear_gaussian(A, H, sigma_b=1.0, m0=None, cov0=None, obs_noise=1.0) -> FilterModel:
    """``a(x) = A x``, ``h(x) = H x`` with constant diffusion ``sigma_b``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    H = np.asarray(H, dtype=float).reshape(d)
    sb = np.asarray(sigma_b, dtype=float)
    sb = sb * np.eye(d) if sb.ndim == 0 else sb.reshape(d, d)
    m0 = np.zeros(d) if m0 is None else m0
    cov0 = np.eye(d) if cov0 is None else cov0
    return FilterModel(
        dim=d,
        drift=lambda x: x @ A.T,
        obs=lambda x: x @ H,
        prior=GaussianBelief(m0, cov0),
        diffusion=(lambda x: sb) if np.any(sb) else None,
        obs_noise=obs_noise,
        name="linear_gaussian",
    )


def static_gaussian(d=1, sigma0=1.0, sigma_w=1.0) -> FilterModel:
    """Static state ``dX = 0`` with prior ``N(0, sigma0^2 I)``, observing the first coordinate.

    The full benchmark observes every coordinate (vector channel); that variant
    is handled directly by the benchmark code.
    """
    H = np.zeros(d)
    H[0] = 1.0
    return FilterModel(
        dim=d,
        drift=lambda x: np.zeros_like(x),
        obs=lambda x: x @ H,
        prior=GaussianBelief(np.zeros(d), sigma0**2 * np.eye(d)),
        obs_noise=sigma_w,
        name="static_gaussian",
    )


def bimodal_sampler(modes=(-1.0, 1.0), var=0.2) -> Sampler:
    modes = np.asarray(modes, dtype=float)

    def sample(n, rng):
        g = as_rng(rng).generator()
        comp = g.integers(0, modes.size, size=n)
        return Ensemble(modes[comp] + np.sqrt(var) * g.standard_normal(n))

    return sample


def bimodal_density(modes=(-1.0, 1.0), var=0.2):
    modes = np.asarray(modes, dtype=float)

    def rho(x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.mean(np.exp(-((x - modes) ** 2) / (2 * var)), axis=-1) / np.sqrt(2 * np.pi * var)

    return rho


def bimodal_static(var=0.2, obs_noise=1.0) -> FilterModel:
    """Static 1-D state with the two-mode prior ``(N(-1, var) + N(1, var))/2`` and ``h(x) = x``."""
    return FilterModel(
        dim=1,
        drift=lambda x: np.zeros_like(x),
        obs=lambda x: x[:, 0],
        prior=bimodal_sampler(var=var),
        obs_noise=obs_noise,
        name="bimodal_static",
    )


def sir_prior_sampler(beta_mean=0.15, beta_std=0.05, i_max=0.1) -> Sampler:
    """``I ~ U[0, i_max]``, ``S = 1 - I``, ``beta ~ N(beta_mean, beta_std^2)`` truncated at 0."""

    def sample(n, rng):
        g = as_rng(rng).generator()
        i = g.uniform(0.0, i_max, size=n)
        beta = np.empty(n)
        filled = 0
        while filled < n:
            draw = beta_mean + beta_std * g.standard_normal(n)
            draw = draw[draw >= 0][: n - filled]
            beta[filled:filled + draw.size] = draw
            filled += draw.size
        return Ensemble(np.column_stack([1.0 - i, i, beta]))

    return sample


def sir(alpha=0.1, sigma_b=0.1, sigma_w=0.1, beta_mean=0.15, beta_std=0.05) -> FilterModel:
    """Filter model on the state ``(S, I, beta)`` with ``d beta = sigma_b dB``."""
    diff = np.diag([0.0, 0.0, sigma_b])

    def drift(x):
        s, i, b = x[:, 0], x[:, 1], x[:, 2]
        inf = b * s * i
        return np.column_stack([-inf, inf - alpha * i, np.zeros_like(s)])

    def project(x):
        x = x.copy()
        x[:, :2] = np.clip(x[:, :2], 0.0, 1.0)
        return x

    return FilterModel(
        dim=3,
        drift=drift,
        obs=lambda x: x[:, 2] * x[:, 0] * x[:, 1],
        prior=sir_prior_sampler(beta_mean, beta_std),
        diffusion=(lambda x: diff) if sigma_b > 0 else None,
        obs_noise=sigma_w,
        project=project,
        name="sir",
    )


MODELS = {
    "linear_gaussian": linear_gaussian,
    "static_gaussian": static_gaussian,
    "bimodal_static": bimodal_static,
    "sir": sir,
}


def make_model(name: str, **params) -> FilterModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**params)

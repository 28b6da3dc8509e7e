"""Exception types raised by fpflab."""


class FpfLabError(Exception):
    """Base class for all library errors."""


class NotSPD(FpfLabError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class SingularCovariance(FpfLabError, ValueError):
    """An empirical covariance is numerically singular."""


class NonFinite(FpfLabError, FloatingPointError):
    """A simulation or filter step produced NaN or infinite values."""


class AllWeightsZero(FpfLabError, ValueError):
    """Every importance weight vanished (all log-likelihoods are -inf)."""


class DegenerateKernel(FpfLabError, ValueError):
    """A diffusion-map kernel row sum underflowed."""


class NoConvergence(FpfLabError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, max_iter, residual):
        super().__init__(
            f"no convergence after {max_iter} iterations (last change {residual:.3e})"
        )
        self.max_iter = max_iter
        self.residual = residual


class GridTooNarrow(FpfLabError, ValueError):
    """A quadrature grid does not cover enough probability mass."""


class SingularGram(FpfLabError, ValueError):
    """Galerkin basis gradients are linearly dependent on the ensemble."""


class ZeroSpread(FpfLabError, ValueError):
    """All particles coincide, so no bandwidth can be inferred."""


class ConfigError(FpfLabError, ValueError):
    """Invalid run configuration. ``key`` is the dotted path of the offending entry."""

    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason

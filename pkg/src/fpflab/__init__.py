"""Coupling-based Bayesian filters: Gaussian transport updates, the SIR
particle filter and the feedback particle filter with pluggable gains."""

import json
from importlib import resources

from .core import (
    Ensemble,
    GaussianBelief,
    RngStream,
    check_spd,
    ensemble_stats,
    sample_gaussian,
    spd_inv_sqrt,
    spd_sqrt,
    weighted_stats,
)
from .coupling import (
    AffineMap,
    enkf_particle_update,
    heat_flow_transport,
    kalman_update,
    ot_map,
    ot_particle_update,
)
from .errors import (
    AllWeightsZero,
    ConfigError,
    DegenerateKernel,
    FpfLabError,
    GridTooNarrow,
    NoConvergence,
    NonFinite,
    NotSPD,
    SingularCovariance,
    SingularGram,
    ZeroSpread,
)
from .experiments import ExperimentReport, cod_benchmark, gain_sweep, sir_demo
from .fpf import (
    FpfConfig,
    FpfResult,
    KalmanBucyState,
    fpf_run,
    fpf_step,
    kalman_bucy_step,
    linear_fpf_step,
)
from .gain import (
    DiffusionMapState,
    GainField,
    constant_gain,
    coordinate_basis,
    diffusion_map_gain,
    dm_build,
    dm_fixed_point,
    dm_gain,
    epsilon_heuristic,
    exact_gain_1d,
    galerkin_gain,
    polynomial_basis_1d,
)
from .models import FilterModel, ObservationPath, SirState, make_model, simulate_truth, sir_simulate
from .pf import WeightedEnsemble, importance_weights, multinomial_resample, sir_filter_step

__version__ = "0.1.0"


def load_tolerances() -> dict:
    """Frozen pass/fail tolerances for the statistical acceptance checks."""
    return json.loads(resources.files(__name__).joinpath("tolerances.json").read_text())

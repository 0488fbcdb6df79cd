"""Ensemble data assimilation with statistical observations for quadratic SDEs.

The package couples a particle ensemble to mean/covariance equations,
filters the ensemble against observed moment increments with a high-order
scheme or an EnKF baseline, and scores runs against Monte-Carlo truth.
"""

__version__ = "0.1.0"

from .errors import (AlignmentError, CalibrationError, ConfigurationError, ContractError,
                     DivergenceError, FilterDivergenceError, InsufficientSamplesError,
                     InvalidParametersError, NumericalError, StatDAError)
from .model import (REGIMES, ModelSpec, TriadParams, bilinear_B, build_triad_spec, drift,
                    equilibrium_variance, lyapunov_exponents, mean_coupling_L)
from .truth import EnsembleState, TruthSeries, empirical_moments, run_truth, step_rk4_em
from .forecast import (ForecastConfig, RunOutput, StatState, h_m, h_v, run_forecast,
                       step_forecast)
from .observe import (H_m, H_v, NoiseAmplitudes, ObservationSeries, calibrate_noise, grad_H,
                      make_observations)
from .highorder import (FilterConfig, analysis_update, drift_cov, drift_mean, gain_cov,
                        gain_mean, run_filter)
from .enkf import enkf_gain, enkf_update, run_enkf
from .metrics import m3_series, relative_entropy, rmse_series
from .config import ExperimentConfig
from .kernels import BACKEND

__all__ = [name for name in dir() if not name.startswith("_")]

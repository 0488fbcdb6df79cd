"""High-order ensemble filter with statistical (moment) observations.

The analysis step moves every particle along its own direction ``Z``. The
gains and drifts are built from the centered observation functions
``H' = H(Z) - E^N[H]``:

    K^m = 1/2 Z H'_m^T Gamma_m^-2      a^m = 1/4 Z H'_m^T Gamma_m^-2 (3 H_m - Hbar_m)
    K^v = 1/3 Z H'_v^T Gamma_v^-2      a^v = 1/9 Z H'_v^T Gamma_v^-2 (4 H_v - Hbar_v)

Combined with the innovation ``dI = dy - (H(Z) + h) dt``, the update reduces
to a three-term expression that needs only the observed and model-predicted
increments (see :func:`analysis_update`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError
from .forecast import ForecastConfig, RunOutput, StatState, integrate
from .model import ModelSpec
from .observe import NoiseAmplitudes, ObservationSeries


@dataclass(frozen=True)
class FilterConfig:
    N: int = 100
    dt: float = 1e-3
    dt_obs: float = 1e-3
    T: float = 10.0
    epsilon_inv: float = 0.1
    noise: NoiseAmplitudes | None = None
    stabilized: bool = False
    s: int = 3
    seed: object = 0
    # Averaged bracket also used for the innovation term when stabilized.
    stab_innovation: bool = True

    def __post_init__(self):
        k = round(self.dt_obs / self.dt)
        if k < 1 or abs(k * self.dt - self.dt_obs) > 1e-9 * max(1.0, self.dt_obs):
            raise ContractError("dt_obs must be an integer multiple of dt")
        if self.noise is None:
            raise ContractError("FilterConfig needs noise amplitudes")

    def forecast_config(self) -> ForecastConfig:
        return ForecastConfig(dt=self.dt, epsilon_inv=self.epsilon_inv, N=self.N, seed=self.seed)


def gain_mean(z, Hm, Hm_bar, gamma_m) -> np.ndarray:
    """Mean-block gain ``1/2 z (Hm - Hm_bar)^T / gamma_m**2``, shape ``(d, s)``."""
    if not gamma_m > 0:
        raise ContractError("gamma_m must be positive")
    return 0.5 * np.outer(z, np.asarray(Hm) - Hm_bar) / gamma_m**2


def gain_cov(z, Hv_flat, Hv_bar_flat, gamma_v) -> np.ndarray:
    """Covariance-block gain ``1/3 z (Hv - Hv_bar)^T / gamma_v**2``, shape ``(d, s*s)``."""
    if not gamma_v > 0:
        raise ContractError("gamma_v must be positive")
    return np.outer(z, np.asarray(Hv_flat) - Hv_bar_flat) / (3.0 * gamma_v**2)


def drift_mean(z, Hm, Hm_bar, gamma_m) -> np.ndarray:
    Hm = np.asarray(Hm, dtype=float)
    w = (Hm - Hm_bar) @ (3.0 * Hm - Hm_bar) / gamma_m**2
    return 0.25 * w * np.asarray(z, dtype=float)


def drift_cov(z, Hv_flat, Hv_bar_flat, gamma_v) -> np.ndarray:
    Hv = np.asarray(Hv_flat, dtype=float)
    w = (Hv - Hv_bar_flat) @ (4.0 * Hv - Hv_bar_flat) / gamma_v**2
    return w / 9.0 * np.asarray(z, dtype=float)


def analysis_update(spec: ModelSpec, particles, stat_increment_model, obs_increment, Hm_bar=None,
                    Hv_bar=None, noise: NoiseAmplitudes = None, dt: float = 1e-3,
                    stabilized: bool = False, stab_innovation: bool = True, s: int | None = None,
                    return_increment: bool = False):
    """Apply the high-order analysis step to an ensemble.

    Each particle receives, for the mean block,

        1/2 [Z H'^T G^-2] (du - du^N) + dt/2 [Z H'^T G^-2] Hbar + dt/4 [Z H'^T G^-2 H']

    and the covariance-block analogue with coefficients 1/3, dt/3, dt/9.
    ``stat_increment_model`` is the model's ``(du^N, dR^N)`` over the window,
    ``obs_increment`` the observed ``(du, dR)``. With ``stabilized`` the
    bracketed factors are replaced by their ensemble averages; with
    ``stab_innovation=False`` the innovation term keeps the per-particle
    factor.

    ``Hm_bar``/``Hv_bar`` default to the ensemble means of the observation
    functions at ``particles``.
    """
    Z = np.ascontiguousarray(particles, dtype=float)
    if noise is None:
        raise ContractError("noise amplitudes are required")
    du_model, dR_model = stat_increment_model
    du_obs, dR_obs = obs_increment
    s = len(du_obs) if s is None else s
    dm, dv = _innovation(du_obs, dR_obs, du_model, dR_model, s)
    Hm, Hv = kernels.obs_values(spec.gamma, Z, s)
    Hv = Hv.reshape(len(Z), s * s)
    Hm_bar = Hm.mean(axis=0) if Hm_bar is None else np.asarray(Hm_bar, dtype=float).reshape(s)
    Hv_bar = Hv.mean(axis=0) if Hv_bar is None else np.asarray(Hv_bar, dtype=float).reshape(s * s)
    inc = kernels.highorder_increment(Z, Hm, Hv, dm, dv.reshape(s * s), Hm_bar, Hv_bar,
                                      1.0 / noise.gamma_m**2, 1.0 / noise.gamma_v**2, float(dt),
                                      bool(stabilized), bool(stab_innovation))
    if return_increment:
        return inc
    return Z + inc


def _innovation(du_obs, dR_obs, du_model, dR_model, s):
    """Observed minus model increments, shape-checked against ``s``."""
    parts = [np.asarray(x, dtype=float) for x in (du_obs, du_model, dR_obs, dR_model)]
    for a, shape in zip(parts, [(s,), (s,), (s, s), (s, s)]):
        if a.shape != shape:
            raise ContractError(f"increment of shape {a.shape} inconsistent with s={s}")
    return parts[0] - parts[1], parts[2] - parts[3]


def make_highorder_updater(spec, cfg: FilterConfig):
    s = cfg.s

    def update(Z, model_incr, obs_incr, dt_window):
        return analysis_update(spec, Z, model_incr, obs_incr, noise=cfg.noise, dt=dt_window,
                               stabilized=cfg.stabilized, stab_innovation=cfg.stab_innovation,
                               s=s, return_increment=True)

    return update


def run_filter(spec: ModelSpec, init: StatState, obs: ObservationSeries, cfg: FilterConfig,
               snapshot_times=(5.0,)) -> RunOutput:
    """Forecast/analysis cycle with updates at every observation time.

    Between observations the ensemble and statistics evolve under the
    coupled forecast model. Observations never overwrite ``(u_bar, R)``;
    they only reshape the particle ensemble that feeds them.
    """
    if obs.s != cfg.s:
        raise ContractError(f"observation series has s={obs.s}, config has s={cfg.s}")
    if abs(obs.dt_obs - cfg.dt_obs) > 1e-12:
        raise ContractError("observation spacing differs from cfg.dt_obs")
    out = integrate(spec, init, cfg.forecast_config(), cfg.T, updater=make_highorder_updater(spec, cfg),
                    obs=obs, snapshot_times=snapshot_times, label="highorder")
    return out

"""Ensemble Kalman filter baseline: constant gain, no drift correction."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractError, InsufficientSamplesError
from .forecast import RunOutput, StatState, integrate
from .highorder import FilterConfig, _innovation
from .model import ModelSpec
from .observe import ObservationSeries


def enkf_gain(particles, H_values, gamma) -> np.ndarray:
    """Cross-covariance of particles and observations times ``gamma**-2``.

    ``particles`` is ``(N, d)``, ``H_values`` is ``(N, m)``. Moments use divisor
    ``N``.
    """
    Z = np.asarray(particles, dtype=float)
    H = np.asarray(H_values, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    N = Z.shape[0]
    if N < 2:
        raise InsufficientSamplesError("EnKF gain needs at least two particles")
    if H.shape[0] != N:
        raise ContractError("particles and H_values disagree on N")
    Zc = Z - Z.mean(axis=0)
    Hc = H - H.mean(axis=0)
    return np.einsum("ik,ij->kj", Zc, Hc) / N / gamma**2


def enkf_update(spec: ModelSpec, particles, stat_increment_model, obs_increment, noise, dt, s=None,
                return_increment=False):
    """EnKF analysis with per-particle innovations ``dy - (H(Z_i) + h) dt``.

    With ``h dt`` taken from the model increment, the innovation of particle
    ``i`` is ``(dy - dy^N) - H'(Z_i) dt``.
    """
    Z = np.ascontiguousarray(particles, dtype=float)
    du_model, dR_model = stat_increment_model
    du_obs, dR_obs = obs_increment
    s = len(du_obs) if s is None else s
    dm, dv = _innovation(du_obs, dR_obs, du_model, dR_model, s)
    dv = dv.reshape(s * s)
    Hm, Hv = kernels.obs_values(spec.gamma, Z, s)
    Hv = Hv.reshape(len(Z), s * s)
    inc = kernels.enkf_increment(Z, Hm, Hv, dm, dv, Hm.mean(axis=0), Hv.mean(axis=0),
                                 1.0 / noise.gamma_m**2, 1.0 / noise.gamma_v**2, float(dt))
    return inc if return_increment else Z + inc


def run_enkf(spec: ModelSpec, init: StatState, obs: ObservationSeries, cfg: FilterConfig,
             snapshot_times=(5.0,)) -> RunOutput:
    """Same cycle as :func:`statda.highorder.run_filter` with the EnKF analysis."""
    if obs.s != cfg.s:
        raise ContractError(f"observation series has s={obs.s}, config has s={cfg.s}")

    def update(Z, model_incr, obs_incr, dt_window):
        return enkf_update(spec, Z, model_incr, obs_incr, cfg.noise, dt_window, s=cfg.s,
                           return_increment=True)

    return integrate(spec, init, cfg.forecast_config(), cfg.T, updater=update, obs=obs,
                     snapshot_times=snapshot_times, label="enkf")

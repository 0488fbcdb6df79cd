"""Moment observations: observation functions, increments and noise levels.

The mean feedback ``H^m`` is quadratic and the covariance feedback ``H^v``
cubic in the fluctuation ``z``::

    H^m_k(z)  = sum_{p,q} gamma[k,p,q] z_p z_q
    H^v_kl(z) = sum_{p,q} gamma[k,p,q] z_p z_q z_l + gamma[l,p,q] z_p z_q z_k

Only the first ``s`` modes are observed. Covariance-block quantities are
flattened row-major to length ``s*s`` wherever they act as vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import CalibrationError, ConfigurationError, ContractError
from .forecast import ForecastConfig, StatState, run_forecast
from .model import ModelSpec


def _check_s(spec, s):
    if not 1 <= s <= spec.d:
        raise ContractError(f"s must lie in [1, {spec.d}], got {s}")


def H_m(spec: ModelSpec, z, s: int | None = None) -> np.ndarray:
    """Quadratic observation function; broadcasts over leading axes of ``z``."""
    s = spec.d if s is None else s
    _check_s(spec, s)
    return np.einsum("kpq,...p,...q->...k", spec.gamma[:s], z, z)


def H_v(spec: ModelSpec, z, s: int | None = None) -> np.ndarray:
    """Cubic observation function, ``(..., s, s)`` and symmetric."""
    s = spec.d if s is None else s
    _check_s(spec, s)
    z = np.asarray(z, dtype=float)
    g = spec.gamma[:s]
    zs = z[..., :s]
    A = np.einsum("kpq,...p,...q,...l->...kl", g, z, z, zs)
    return A + np.swapaxes(A, -1, -2)


def grad_H(spec: ModelSpec, z, s: int | None = None):
    """Analytic Jacobians of ``H^m`` and ``H^v`` at a single point ``z``.

    Returns
    -------
    dHm : (s, d) ndarray
        ``dHm[k, j] = d H^m_k / d z_j``.
    dHv : (s*s, d) ndarray
        Row ``k*s + l`` holds the gradient of ``H^v_kl``.
    """
    s = spec.d if s is None else s
    _check_s(spec, s)
    z = np.asarray(z, dtype=float)
    d = spec.d
    g = spec.gamma
    full = np.einsum("kjq,q->kj", g, z) + np.einsum("kpj,p->kj", g, z)  # (d, d)
    hm = np.einsum("kpq,p,q->k", g, z, z)
    dHm = full[:s]
    eye = np.eye(d)
    # d/dz_j [H^m_k z_l + H^m_l z_k]
    dHv = (dHm[:, None, :] * z[None, :s, None]
           + hm[:s, None, None] * eye[None, :s, :]
           + dHm[None, :, :] * z[:s, None, None]
           + hm[None, :s, None] * eye[:s, None, :])
    return dHm, dHv.reshape(s * s, d)


@dataclass
class ObservationSeries:
    """Increments of the observed mean and covariance.

    ``times[n]`` is the right end of the n-th window; ``d_ubar[n]`` and
    ``d_R[n]`` are the increments accumulated over that window.
    """

    times: np.ndarray
    d_ubar: np.ndarray
    d_R: np.ndarray
    s: int
    dt_obs: float

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class NoiseAmplitudes:
    gamma_m: float
    gamma_v: float
    N: int | None = None
    method: str = "residual"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.gamma_m > 0 and self.gamma_v > 0):
            raise ContractError("noise amplitudes must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NoiseAmplitudes":
        data = json.loads(text)
        return cls(**data)


def make_observations(truth, dt_obs: float, s: int) -> ObservationSeries:
    """Sample the truth every ``dt_obs`` and difference the first ``s`` modes."""
    dt = truth.dt if truth.dt is not None else float(truth.times[1] - truth.times[0])
    k = int(round(dt_obs / dt))
    if k < 1 or abs(k * dt - dt_obs) > 1e-9 * max(dt_obs, 1.0):
        raise ConfigurationError(f"dt_obs={dt_obs} is not a multiple of the truth step {dt}")
    d = truth.mean.shape[1]
    if not 1 <= s <= d:
        raise ContractError(f"s must lie in [1, {d}]")
    idx = np.arange(0, len(truth.times), k)
    mu = truth.mean[idx, :s]
    R = truth.cov[idx, :s, :s]
    dR = np.diff(R, axis=0)
    dR = 0.5 * (dR + np.swapaxes(dR, 1, 2))
    return ObservationSeries(times=truth.times[idx[1:]], d_ubar=np.diff(mu, axis=0), d_R=dR,
                             s=s, dt_obs=float(dt_obs))


def calibrate_noise(spec: ModelSpec, regime_init: StatState, N: int, n_reps: int, T: float,
                    dt: float, seed, *, truth=None, mc_size=100_000, epsilon_inv=0.1, s=None,
                    burn_frac=0.05) -> NoiseAmplitudes:
    """Estimate the finite-ensemble noise levels from repeated free forecasts.

    For each block the squared error of the forecast statistics against the
    truth grows like ``t * Gamma**2``. The estimate is the ratio
    ``E||y^N_t - y_t||^2 / t`` averaged over the repetitions, over the
    observed components, and over the window ``t > burn_frac * T``. If any
    repetition diverges, the window ends at half its divergence time.
    """
    if n_reps < 4:
        raise ContractError("n_reps must be >= 4")
    s = spec.d if s is None else s
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    truth_seed, run_seeds = ss.spawn(2)
    if truth is None:
        from .truth import run_truth
        truth = run_truth(spec, regime_init.u_bar, np.diag(regime_init.R), dt, T, mc_size,
                          truth_seed, snapshot_times=())
    if not (np.all(np.isfinite(truth.mean)) and np.all(np.isfinite(truth.cov))):
        raise CalibrationError("truth statistics are not finite")
    M = int(round(T / dt))
    err_m = np.zeros((n_reps, M + 1))
    err_v = np.zeros((n_reps, M + 1))
    div_steps = []
    for i, child in enumerate(run_seeds.spawn(n_reps)):
        cfg = ForecastConfig(dt=dt, epsilon_inv=epsilon_inv, N=N, seed=child)
        out = run_forecast(spec, regime_init, cfg, T, snapshot_times=(), partial=True)
        if "diverged_at" in out.diagnostics:
            div_steps.append(out.diagnostics["diverged_at"])
        with np.errstate(over="ignore", invalid="ignore"):
            err_m[i] = np.sum((out.mean[:, :s] - truth.mean[:M + 1, :s]) ** 2, axis=1)
            dv = out.cov[:, :s, :s] - truth.cov[:M + 1, :s, :s]
            err_v[i] = np.sum(dv**2, axis=(1, 2))
    t = dt * np.arange(M + 1)
    # runaway growth before a blow-up is not sampling noise; stop the window
    # at half the earliest divergence time
    t_end = T if not div_steps else 0.5 * dt * min(div_steps)
    win = (t > burn_frac * T) & (t <= t_end)
    if not np.any(win):
        raise CalibrationError(f"empty averaging window (t_end={t_end:.3g})")
    g2m = float(np.mean(err_m[:, win].mean(axis=0) / t[win]) / s)
    g2v = float(np.mean(err_v[:, win].mean(axis=0) / t[win]) / (s * s))
    if not (np.isfinite(g2m) and np.isfinite(g2v)):
        raise CalibrationError("non-finite calibration error")
    floor = np.finfo(float).tiny
    meta = {"n_reps": n_reps, "T": T, "dt": dt, "window": [burn_frac * T, float(t[win][-1])],
            "s": s, "epsilon_inv": epsilon_inv, "n_diverged": len(div_steps)}
    return NoiseAmplitudes(gamma_m=max(np.sqrt(g2m), floor), gamma_v=max(np.sqrt(g2v), floor),
                           N=N, meta=meta)

"""Coupled stochastic-statistical forecast model.

The mean ``u_bar`` and covariance ``R`` follow moment equations whose
higher-order feedback is estimated from an ensemble of fluctuation particles
``Z``. The particles in turn follow a McKean-Vlasov SDE driven by
``(u_bar, R)``. A relaxation term ``epsilon_inv (E^N[Z Z^T] - R)`` keeps the
covariance consistent with the ensemble.

Everything is integrated with forward Euler, and every right-hand side is
evaluated at the pre-step state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, DivergenceError, FilterDivergenceError
from .model import ModelSpec, bilinear_B, mean_coupling_L
from .truth import EnsembleState, n_steps

PARTICLE_LIMIT = 1e6


@dataclass
class StatState:
    u_bar: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.u_bar = np.asarray(self.u_bar, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.R.ndim == 1:
            self.R = np.diag(self.R)


@dataclass(frozen=True)
class ForecastConfig:
    dt: float = 1e-3
    epsilon_inv: float = 0.1
    N: int = 100
    seed: object = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        if self.epsilon_inv < 0:
            raise ContractError("epsilon_inv must be nonnegative")
        if self.N < 1:
            raise ContractError("N must be positive")


@dataclass
class RunOutput:
    """Time series produced by a forecast or filter run.

    ``mean`` and ``cov`` are the statistical state ``(u_bar, R)``; ``m3`` is the
    centered triple moment of the particle ensemble; snapshots hold
    ``u_bar + Z`` sample matrices.
    """

    times: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    m3: np.ndarray
    snapshots: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    label: str = "none"

    @property
    def var(self) -> np.ndarray:
        return np.diagonal(self.cov, axis1=1, axis2=2)


def h_m(spec: ModelSpec, stat: StatState) -> np.ndarray:
    """Deterministic part of the mean tendency, ``Lambda u + B(u, u) + F``."""
    u = stat.u_bar
    return spec.Lambda @ u + bilinear_B(spec, u, u) + spec.F


def h_v(spec: ModelSpec, stat: StatState, L=None) -> np.ndarray:
    """Deterministic part of the covariance tendency, ``L R + R L^T + Q_sigma``."""
    if L is None:
        L = mean_coupling_L(spec, stat.u_bar)
    LR = L @ stat.R
    return LR + LR.T + spec.Q_sigma


def stat_tendency(spec: ModelSpec, stat: StatState, Z, epsilon_inv):
    """Full right-hand sides of the mean and covariance equations.

    Returns ``(du, dR, L)``, with the feedback terms estimated from the
    particles ``Z``.
    """
    Z = np.ascontiguousarray(Z, dtype=float)
    M2, Hm_bar, Hv_bar = kernels.ensemble_moments(spec.gamma, Z)
    L = mean_coupling_L(spec, stat.u_bar)
    du = h_m(spec, stat) + Hm_bar
    dR = h_v(spec, stat, L) + Hv_bar + epsilon_inv * (M2 - stat.R)
    return du, dR, L


def step_forecast(spec: ModelSpec, stat: StatState, ens: EnsembleState, cfg: ForecastConfig, rng,
                  step=None):
    """One explicit step of the coupled system.

    The statistics and the particles are both updated from the pre-step
    state.
    """
    Z = np.ascontiguousarray(ens.samples, dtype=float)
    if Z.shape[0] != cfg.N:
        raise ContractError(f"ensemble has {Z.shape[0]} members, config says N={cfg.N}")
    dt = cfg.dt
    du, dR, L = stat_tendency(spec, stat, Z, cfg.epsilon_inv)
    xi = rng.standard_normal(Z.shape)
    Znew = kernels.particle_forecast(np.ascontiguousarray(L), spec.gamma, np.ascontiguousarray(stat.R),
                                     spec.sigma, Z, dt, xi)
    u = stat.u_bar + dt * du
    R = stat.R + dt * dR
    R = 0.5 * (R + R.T)
    t = ens.t + dt
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(R)) and np.all(np.isfinite(Znew))):
        raise DivergenceError(f"forecast diverged at step {step}, t={t:.6g}", t=t, step=step)
    return StatState(u, R), EnsembleState(t=t, samples=Znew)


def initial_particles(R0, N, rng):
    """``N`` draws from ``N(0, R0)``."""
    R0 = np.asarray(R0, dtype=float)
    if R0.ndim == 2 and np.count_nonzero(R0 - np.diag(np.diagonal(R0))) == 0:
        R0 = np.diagonal(R0)
    if R0.ndim == 1:
        return rng.standard_normal((N, R0.size)) * np.sqrt(R0)
    # symmetric square root also covers singular covariances
    w, V = np.linalg.eigh(R0)
    C = V * np.sqrt(np.clip(w, 0.0, None))
    return rng.standard_normal((N, R0.shape[0])) @ C.T


def integrate(spec: ModelSpec, init: StatState, cfg: ForecastConfig, T: float, *, updater=None,
              obs=None, snapshot_times=(5.0,), label="none", particle_limit=None, partial=False):
    """Shared time loop for the forecast and both filters.

    ``updater(Z, model_incr, obs_incr, dt_window)`` is called after the
    forecast step at every observation time and returns the particle
    increment. ``model_incr`` and ``obs_incr`` are ``(du, dR)`` pairs
    accumulated over the observation window.

    With ``partial`` a divergence stops the loop instead of raising; the
    remaining entries are NaN and ``diagnostics["diverged_at"]`` holds the
    failing step.
    """
    M = n_steps(T, cfg.dt)
    rng = np.random.default_rng(cfg.seed)
    d = spec.d
    stat = StatState(init.u_bar.copy(), init.R.copy())
    Z = initial_particles(init.R, cfg.N, rng)
    ens = EnsembleState(t=0.0, samples=Z)

    k_obs = None
    s = None
    if updater is not None:
        if obs is None:
            raise ContractError("filter runs need an observation series")
        k_obs = int(round(obs.dt_obs / cfg.dt))
        if k_obs < 1 or abs(k_obs * cfg.dt - obs.dt_obs) > 1e-9 * max(1.0, obs.dt_obs):
            raise ContractError("dt_obs must be an integer multiple of dt")
        if len(obs.d_ubar) < M // k_obs:
            raise ContractError("observations do not cover the run window")
        s = obs.s
    limit = PARTICLE_LIMIT if (particle_limit is None and updater is not None) else particle_limit

    times = cfg.dt * np.arange(M + 1)
    means = np.empty((M + 1, d))
    covs = np.empty((M + 1, d, d))
    m3s = np.empty(M + 1)
    snap_steps = {int(round(ts / cfg.dt)): float(ts) for ts in snapshot_times if 0 <= ts <= T}
    snaps = {}
    update_norms = []
    max_norm = np.empty(M + 1)

    def record(n):
        means[n] = stat.u_bar
        covs[n] = stat.R
        Zc = ens.samples
        m3s[n] = kernels.centered_m3(Zc) if d >= 3 else 0.0
        max_norm[n] = kernels.max_row_norm(Zc)
        if n in snap_steps:
            snaps[snap_steps[n]] = stat.u_bar + Zc

    record(0)
    win_u, win_R = stat.u_bar.copy(), stat.R.copy()
    diverged_at = None
    for n in range(1, M + 1):
        try:
            stat, ens = step_forecast(spec, stat, ens, cfg, rng, step=n)
        except DivergenceError:
            if not partial:
                raise
            diverged_at = n
            for arr in (means, covs, m3s, max_norm):
                arr[n:] = np.nan
            break
        if k_obs is not None and n % k_obs == 0:
            j = n // k_obs - 1
            model_incr = (stat.u_bar[:s] - win_u[:s], (stat.R - win_R)[:s, :s])
            obs_incr = (obs.d_ubar[j], obs.d_R[j])
            dZ = updater(ens.samples, model_incr, obs_incr, k_obs * cfg.dt)
            Znew = ens.samples + dZ
            update_norms.append(float(np.sqrt(np.mean(np.einsum("ij,ij->i", dZ, dZ)))))
            if not np.all(np.isfinite(Znew)):
                bad = int(np.argmax(~np.all(np.isfinite(Znew), axis=1)))
                raise FilterDivergenceError(
                    f"non-finite analysis update at step {n} (t={ens.t:.6g}), particle {bad}",
                    t=ens.t, step=n, index=bad)
            ens = EnsembleState(t=ens.t, samples=np.ascontiguousarray(Znew))
            win_u, win_R = stat.u_bar.copy(), stat.R.copy()
        record(n)
        if limit is not None and max_norm[n] > limit:
            norms = np.sqrt(np.einsum("ij,ij->i", ens.samples, ens.samples))
            bad = int(np.argmax(norms))
            raise FilterDivergenceError(
                f"particle {bad} left the admissible region (|Z|={norms[bad]:.3g}) at step {n}",
                t=ens.t, step=n, index=bad)

    diagnostics = {"max_particle_norm": max_norm}
    if diverged_at is not None:
        diagnostics["diverged_at"] = diverged_at
    if update_norms:
        diagnostics["update_norm"] = np.asarray(update_norms)
    return RunOutput(times=times, mean=means, cov=covs, m3=m3s, snapshots=snaps,
                     diagnostics=diagnostics, label=label)


def run_forecast(spec: ModelSpec, init: StatState, cfg: ForecastConfig, T: float, seed=None,
                 snapshot_times=(5.0,), partial=False) -> RunOutput:
    """Free forecast of the coupled model, no observations."""
    if seed is not None:
        cfg = ForecastConfig(dt=cfg.dt, epsilon_inv=cfg.epsilon_inv, N=cfg.N, seed=seed)
    return integrate(spec, init, cfg, T, snapshot_times=snapshot_times, label="none",
                     partial=partial)

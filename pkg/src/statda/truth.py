"""Direct Monte-Carlo integration of the full SDE (the reference "truth")."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, DivergenceError, InsufficientSamplesError
from .model import ModelSpec


@dataclass
class EnsembleState:
    t: float
    samples: np.ndarray


@dataclass
class TruthSeries:
    """Per-step statistics of a Monte-Carlo run.

    ``mean`` is ``(T, d)``, ``cov`` is ``(T, d, d)``, ``m3`` is ``(T,)``.
    ``snapshots`` maps a time to the ``(N, d)`` sample matrix.
    """

    times: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    m3: np.ndarray
    snapshots: dict = field(default_factory=dict)
    dt: float | None = None

    @property
    def var(self) -> np.ndarray:
        return np.diagonal(self.cov, axis1=1, axis2=2)


def empirical_moments(samples, raw_m3=False):
    """Sample moments with divisor ``N``.

    Returns
    -------
    mean : (d,) ndarray
    cov : (d, d) ndarray
    m3 : float
        ``E[u1' u2' u3']`` on centered samples (or the raw ``E[u1 u2 u3]``
        when ``raw_m3``); zero when ``d < 3``.
    skew, kurt : (d,) ndarray
        Standardized third and fourth central moments (kurtosis is not
        excess; a Gaussian gives 3).
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2:
        raise ContractError(f"samples must be 2-D, got shape {X.shape}")
    N, d = X.shape
    if N < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {N}")
    mean = X.mean(axis=0)
    C = X - mean
    cov = np.einsum("ik,il->kl", C, C) / N
    cov = 0.5 * (cov + cov.T)
    if d >= 3:
        src = X if raw_m3 else C
        m3 = float(np.mean(src[:, 0] * src[:, 1] * src[:, 2]))
    else:
        m3 = 0.0
    var = np.diag(cov)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = np.mean(C**3, axis=0) / var**1.5
        kurt = np.mean(C**4, axis=0) / var**2
    return mean, cov, m3, skew, kurt


def step_rk4_em(spec: ModelSpec, state: EnsembleState, dt: float, rng) -> EnsembleState:
    """Advance every particle by one RK4 drift step plus an Euler-Maruyama kick."""
    if not dt > 0:
        raise ContractError("dt must be positive")
    U = np.ascontiguousarray(state.samples, dtype=float)
    xi = rng.standard_normal(U.shape)
    new = kernels.rk4_em_step(spec.Lambda, spec.gamma, spec.F, spec.sigma, U, float(dt), xi)
    t_new = state.t + dt
    _check_finite(new, t_new)
    return EnsembleState(t=t_new, samples=new)


def _check_finite(U, t, step=None):
    if not np.all(np.isfinite(U)):
        bad = int(np.argmax(~np.all(np.isfinite(U), axis=1)))
        raise DivergenceError(f"non-finite particle {bad} at t={t:.6g}", t=t, step=step, index=bad)


def n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > dt / 2:
        raise ContractError(f"T={T} is not a multiple of dt={dt}")
    return n


def run_truth(spec: ModelSpec, init_mean, init_var, dt: float, T: float, N_mc: int, seed,
              snapshot_times=(5.0,), raw_m3=False, min_particles=100) -> TruthSeries:
    """Integrate ``N_mc`` independent particles of the full SDE.

    Particles start i.i.d. Gaussian with diagonal variance ``init_var``.
    Moments are recorded at every step, snapshots at the requested times.
    """
    if N_mc < min_particles:
        raise ContractError(f"N_mc must be >= {min_particles}")
    M = n_steps(T, dt)
    rng = np.random.default_rng(seed)
    d = spec.d
    mean0 = np.asarray(init_mean, dtype=float)
    sd0 = np.sqrt(np.asarray(init_var, dtype=float))
    U = mean0 + sd0 * rng.standard_normal((N_mc, d))
    snap_steps = {int(round(ts / dt)): float(ts) for ts in snapshot_times if 0 <= ts <= T}

    times = dt * np.arange(M + 1)
    means = np.empty((M + 1, d))
    covs = np.empty((M + 1, d, d))
    m3s = np.empty(M + 1)
    snaps = {}

    def record(n, X):
        m, c, m3c, m3r = kernels.sample_stats(X)
        means[n], covs[n], m3s[n] = m, c, (m3r if raw_m3 else m3c)
        if n in snap_steps:
            snaps[snap_steps[n]] = X.copy()

    record(0, U)
    for n in range(1, M + 1):
        xi = rng.standard_normal((N_mc, d))
        U = kernels.rk4_em_step(spec.Lambda, spec.gamma, spec.F, spec.sigma, U, float(dt), xi)
        if not np.all(np.isfinite(U)):
            _check_finite(U, times[n], step=n)
        record(n, U)
    return TruthSeries(times=times, mean=means, cov=covs, m3=m3s, snapshots=snaps, dt=dt)

"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_kernels`` extension. Array arguments are float64; particle arrays are
``(N, d)`` C-contiguous.
"""

import numpy as np

BACKEND = "python"


def quad_drift(Lambda, gamma, F, U):
    """Row-wise ``Lambda u + B(u, u) + F``."""
    return U @ Lambda.T + np.einsum("kmn,im,in->ik", gamma, U, U) + F


def rk4_em_step(Lambda, gamma, F, sigma, U, dt, xi):
    """RK4 on the drift followed by an Euler-Maruyama noise increment."""
    k1 = quad_drift(Lambda, gamma, F, U)
    k2 = quad_drift(Lambda, gamma, F, U + 0.5 * dt * k1)
    k3 = quad_drift(Lambda, gamma, F, U + 0.5 * dt * k2)
    k4 = quad_drift(Lambda, gamma, F, U + dt * k3)
    out = U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out += np.sqrt(dt) * sigma * xi
    return out


def particle_forecast(Lmat, gamma, R, sigma, Z, dt, xi):
    """Forward-Euler step of the fluctuation SDE with mean coupling ``Lmat``.

    ``Z + dt (L Z + Q_v(Z Z^T - R)) + sigma sqrt(dt) xi``
    """
    Qv = np.einsum("kmn,im,in->ik", gamma, Z, Z) - np.einsum("kmn,mn->k", gamma, R)
    return Z + dt * (Z @ Lmat.T + Qv) + np.sqrt(dt) * sigma * xi


def obs_values(gamma, Z, s):
    """Observation functions at every particle.

    Returns
    -------
    Hm : (N, s) ndarray
    Hv : (N, s, s) ndarray
    """
    Hm_full = np.einsum("kpq,ip,iq->ik", gamma, Z, Z)
    Hm = Hm_full[:, :s]
    Zs = Z[:, :s]
    Hv = Hm[:, :, None] * Zs[:, None, :]
    Hv = Hv + Hv.transpose(0, 2, 1)
    return np.ascontiguousarray(Hm), Hv


def ensemble_moments(gamma, Z):
    """Empirical ``E[Z Z^T]``, ``E[H^m]`` and ``E[H^v]`` over all ``d`` modes."""
    N = Z.shape[0]
    M2 = (Z.T @ Z) / N
    Hm = np.einsum("kpq,ip,iq->ik", gamma, Z, Z)
    T = (Hm.T @ Z) / N
    return M2, Hm.mean(axis=0), T + T.T


def centered_m3(Z):
    """Centered triple product ``E[(z1-m1)(z2-m2)(z3-m3)]`` of the first three columns."""
    C = Z[:, :3] - Z[:, :3].mean(axis=0)
    return float(np.mean(C[:, 0] * C[:, 1] * C[:, 2]))


def highorder_increment(Z, Hm, Hv, dm, dv, Hm_bar, Hv_bar, inv_gm2, inv_gv2, dt,
                        stabilized, stab_innovation):
    """Per-particle analysis increment of the high-order filter.

    ``Hm`` is ``(N, s)``, ``Hv`` is ``(N, s*s)`` (row-major flattening), ``dm``
    and ``dv`` are the innovation increments (observed minus model) and
    ``inv_gm2``/``inv_gv2`` the scalar inverse noise variances.
    """
    Hpm = Hm - Hm_bar
    Hpv = Hv - Hv_bar
    # each bracket Z H'^T Gamma^-2 x collapses to Z times the scalar H'.x / gamma^2
    c1m = (Hpm @ dm) * inv_gm2
    c2m = (Hpm @ Hm_bar) * inv_gm2
    c3m = np.einsum("ij,ij->i", Hpm, Hpm) * inv_gm2
    c1v = (Hpv @ dv) * inv_gv2
    c2v = (Hpv @ Hv_bar) * inv_gv2
    c3v = np.einsum("ij,ij->i", Hpv, Hpv) * inv_gv2
    if not stabilized:
        w = (0.5 * c1m + 0.5 * dt * c2m + 0.25 * dt * c3m
             + c1v / 3.0 + dt / 3.0 * c2v + dt / 9.0 * c3v)
        return Z * w[:, None]
    N = Z.shape[0]
    drift_w = 0.5 * dt * c2m + 0.25 * dt * c3m + dt / 3.0 * c2v + dt / 9.0 * c3v
    shift = (Z.T @ drift_w) / N
    innov_w = 0.5 * c1m + c1v / 3.0
    if stab_innovation:
        shift = shift + (Z.T @ innov_w) / N
        return np.broadcast_to(shift, Z.shape).copy()
    return shift + Z * innov_w[:, None]


def enkf_increment(Z, Hm, Hv, dm, dv, Hm_bar, Hv_bar, inv_gm2, inv_gv2, dt):
    """Constant-gain update with per-particle innovations.

    The innovation of particle ``i`` is ``dm - (Hm_i - Hm_bar) dt`` (and the
    analogous covariance block).
    """
    N = Z.shape[0]
    Hpm = Hm - Hm_bar
    Hpv = Hv - Hv_bar
    Km = (Z.T @ Hpm) / N * inv_gm2
    Kv = (Z.T @ Hpv) / N * inv_gv2
    Im = dm - Hpm * dt
    Iv = dv - Hpv * dt
    return Im @ Km.T + Iv @ Kv.T


def max_row_norm(Z):
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", Z, Z)))) if Z.size else 0.0


def sample_stats(U):
    """Mean, divisor-N covariance, and centered and raw triple products."""
    N, d = U.shape
    mean = U.mean(axis=0)
    C = U - mean
    cov = np.einsum("ik,il->kl", C, C) / N
    cov = 0.5 * (cov + cov.T)
    if d >= 3:
        m3 = float(np.mean(C[:, 0] * C[:, 1] * C[:, 2]))
        raw = float(np.mean(U[:, 0] * U[:, 1] * U[:, 2]))
    else:
        m3 = raw = 0.0
    return mean, cov, m3, raw

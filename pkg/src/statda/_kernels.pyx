# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_kernels_py``.

Loops run particle by particle in a fixed order, so results are deterministic.
They agree with the numpy versions to round-off, not bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "compiled"

ctypedef double f8


cdef inline void _drift_row(const f8[:, ::1] Lam, const f8[:, :, ::1] g, const f8[::1] F,
                            const f8* u, f8* out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t k, m, n
    cdef f8 acc, um
    for k in range(d):
        acc = F[k]
        for m in range(d):
            um = u[m]
            acc += Lam[k, m] * um
            for n in range(d):
                acc += g[k, m, n] * um * u[n]
        out[k] = acc


def quad_drift(const f8[:, ::1] Lambda, const f8[:, :, ::1] gamma, const f8[::1] F,
               const f8[:, ::1] U):
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], i
    out = np.empty((N, d))
    cdef f8[:, ::1] o = out
    with nogil:
        for i in range(N):
            _drift_row(Lambda, gamma, F, &U[i, 0], &o[i, 0], d)
    return out


def rk4_em_step(const f8[:, ::1] Lambda, const f8[:, :, ::1] gamma, const f8[::1] F,
                const f8[::1] sigma, const f8[:, ::1] U, double dt, const f8[:, ::1] xi):
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], i, k
    if d > 64:
        raise ValueError("compiled kernel supports d <= 64")
    out = np.empty((N, d))
    cdef f8[:, ::1] o = out
    cdef f8 k1[64]
    cdef f8 k2[64]
    cdef f8 k3[64]
    cdef f8 k4[64]
    cdef f8 tmp[64]
    cdef f8 sdt = sqrt(dt)
    with nogil:
        for i in range(N):
            _drift_row(Lambda, gamma, F, &U[i, 0], k1, d)
            for k in range(d):
                tmp[k] = U[i, k] + 0.5 * dt * k1[k]
            _drift_row(Lambda, gamma, F, tmp, k2, d)
            for k in range(d):
                tmp[k] = U[i, k] + 0.5 * dt * k2[k]
            _drift_row(Lambda, gamma, F, tmp, k3, d)
            for k in range(d):
                tmp[k] = U[i, k] + dt * k3[k]
            _drift_row(Lambda, gamma, F, tmp, k4, d)
            for k in range(d):
                o[i, k] = (U[i, k] + (dt / 6.0) * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
                           + sdt * sigma[k] * xi[i, k])
    return out


def particle_forecast(const f8[:, ::1] Lmat, const f8[:, :, ::1] gamma, const f8[:, ::1] R,
                      const f8[::1] sigma, const f8[:, ::1] Z, double dt, const f8[:, ::1] xi):
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1], i, k, m, n
    if d > 64:
        raise ValueError("compiled kernel supports d <= 64")
    out = np.empty((N, d))
    cdef f8[:, ::1] o = out
    cdef f8 gR[64]
    cdef f8 acc, zm
    cdef f8 sdt = sqrt(dt)
    with nogil:
        for k in range(d):
            acc = 0.0
            for m in range(d):
                for n in range(d):
                    acc += gamma[k, m, n] * R[m, n]
            gR[k] = acc
        for i in range(N):
            for k in range(d):
                acc = -gR[k]
                for m in range(d):
                    zm = Z[i, m]
                    acc += Lmat[k, m] * zm
                    for n in range(d):
                        acc += gamma[k, m, n] * zm * Z[i, n]
                o[i, k] = Z[i, k] + dt * acc + sdt * sigma[k] * xi[i, k]
    return out


cdef inline void _hm_row(const f8[:, :, ::1] g, const f8* z, f8* out, Py_ssize_t d,
                         Py_ssize_t s) noexcept nogil:
    cdef Py_ssize_t k, p, q
    cdef f8 acc
    for k in range(s):
        acc = 0.0
        for p in range(d):
            for q in range(d):
                acc += g[k, p, q] * z[p] * z[q]
        out[k] = acc


def obs_values(const f8[:, :, ::1] gamma, const f8[:, ::1] Z, Py_ssize_t s):
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1], i, k, l
    Hm_arr = np.empty((N, s))
    Hv_arr = np.empty((N, s, s))
    cdef f8[:, ::1] Hm = Hm_arr
    cdef f8[:, :, ::1] Hv = Hv_arr
    with nogil:
        for i in range(N):
            _hm_row(gamma, &Z[i, 0], &Hm[i, 0], d, s)
            for k in range(s):
                for l in range(s):
                    Hv[i, k, l] = Hm[i, k] * Z[i, l] + Hm[i, l] * Z[i, k]
    return Hm_arr, Hv_arr


def ensemble_moments(const f8[:, :, ::1] gamma, const f8[:, ::1] Z):
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1], i, k, l
    if d > 64:
        raise ValueError("compiled kernel supports d <= 64")
    M2_arr = np.zeros((d, d))
    Hm_arr = np.zeros(d)
    T_arr = np.zeros((d, d))
    cdef f8[:, ::1] M2 = M2_arr
    cdef f8[::1] Hm = Hm_arr
    cdef f8[:, ::1] T = T_arr
    cdef f8 h[64]
    cdef f8 invN = 1.0 / N
    with nogil:
        for i in range(N):
            _hm_row(gamma, &Z[i, 0], h, d, d)
            for k in range(d):
                Hm[k] += h[k]
                for l in range(d):
                    M2[k, l] += Z[i, k] * Z[i, l]
                    T[k, l] += h[k] * Z[i, l]
        for k in range(d):
            Hm[k] *= invN
            for l in range(d):
                M2[k, l] *= invN
                T[k, l] *= invN
    return M2_arr, Hm_arr, T_arr + T_arr.T


def centered_m3(const f8[:, ::1] Z):
    cdef Py_ssize_t N = Z.shape[0], i
    cdef f8 m0 = 0.0, m1 = 0.0, m2 = 0.0, acc = 0.0
    with nogil:
        for i in range(N):
            m0 += Z[i, 0]
            m1 += Z[i, 1]
            m2 += Z[i, 2]
        m0 /= N
        m1 /= N
        m2 /= N
        for i in range(N):
            acc += (Z[i, 0] - m0) * (Z[i, 1] - m1) * (Z[i, 2] - m2)
    return acc / N


def highorder_increment(const f8[:, ::1] Z, const f8[:, ::1] Hm, const f8[:, ::1] Hv,
                        const f8[::1] dm, const f8[::1] dv, const f8[::1] Hm_bar,
                        const f8[::1] Hv_bar, double inv_gm2, double inv_gv2, double dt,
                        bint stabilized, bint stab_innovation):
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1], sm = Hm.shape[1], sv = Hv.shape[1]
    cdef Py_ssize_t i, j, k
    out = np.empty((N, d))
    cdef f8[:, ::1] o = out
    cdef f8 c1m, c2m, c3m, c1v, c2v, c3v, hp, w, wi
    cdef f8 shift[64]
    cdef f8 ishift[64]
    if d > 64:
        raise ValueError("compiled kernel supports d <= 64")
    with nogil:
        for k in range(d):
            shift[k] = 0.0
            ishift[k] = 0.0
        for i in range(N):
            c1m = 0.0; c2m = 0.0; c3m = 0.0
            for j in range(sm):
                hp = Hm[i, j] - Hm_bar[j]
                c1m += hp * dm[j]
                c2m += hp * Hm_bar[j]
                c3m += hp * hp
            c1v = 0.0; c2v = 0.0; c3v = 0.0
            for j in range(sv):
                hp = Hv[i, j] - Hv_bar[j]
                c1v += hp * dv[j]
                c2v += hp * Hv_bar[j]
                c3v += hp * hp
            c1m *= inv_gm2; c2m *= inv_gm2; c3m *= inv_gm2
            c1v *= inv_gv2; c2v *= inv_gv2; c3v *= inv_gv2
            w = 0.5 * dt * c2m + 0.25 * dt * c3m + dt / 3.0 * c2v + dt / 9.0 * c3v
            wi = 0.5 * c1m + c1v / 3.0
            if not stabilized:
                for k in range(d):
                    o[i, k] = Z[i, k] * (wi + w)
            else:
                for k in range(d):
                    shift[k] += Z[i, k] * w
                    if stab_innovation:
                        ishift[k] += Z[i, k] * wi
                    else:
                        o[i, k] = Z[i, k] * wi
        if stabilized:
            for k in range(d):
                shift[k] /= N
                ishift[k] /= N
            for i in range(N):
                for k in range(d):
                    if stab_innovation:
                        o[i, k] = shift[k] + ishift[k]
                    else:
                        o[i, k] = o[i, k] + shift[k]
    return out


def enkf_increment(const f8[:, ::1] Z, const f8[:, ::1] Hm, const f8[:, ::1] Hv,
                   const f8[::1] dm, const f8[::1] dv, const f8[::1] Hm_bar,
                   const f8[::1] Hv_bar, double inv_gm2, double inv_gv2, double dt):
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1], sm = Hm.shape[1], sv = Hv.shape[1]
    cdef Py_ssize_t i, j, k
    Km_arr = np.zeros((d, sm))
    Kv_arr = np.zeros((d, sv))
    out = np.zeros((N, d))
    cdef f8[:, ::1] Km = Km_arr
    cdef f8[:, ::1] Kv = Kv_arr
    cdef f8[:, ::1] o = out
    cdef f8 innov
    with nogil:
        for i in range(N):
            for k in range(d):
                for j in range(sm):
                    Km[k, j] += Z[i, k] * (Hm[i, j] - Hm_bar[j])
                for j in range(sv):
                    Kv[k, j] += Z[i, k] * (Hv[i, j] - Hv_bar[j])
        for k in range(d):
            for j in range(sm):
                Km[k, j] *= inv_gm2 / N
            for j in range(sv):
                Kv[k, j] *= inv_gv2 / N
        for i in range(N):
            for j in range(sm):
                innov = dm[j] - (Hm[i, j] - Hm_bar[j]) * dt
                for k in range(d):
                    o[i, k] += Km[k, j] * innov
            for j in range(sv):
                innov = dv[j] - (Hv[i, j] - Hv_bar[j]) * dt
                for k in range(d):
                    o[i, k] += Kv[k, j] * innov
    return out


def max_row_norm(const f8[:, ::1] Z):
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1], i, k
    cdef f8 best = 0.0, acc
    with nogil:
        for i in range(N):
            acc = 0.0
            for k in range(d):
                acc += Z[i, k] * Z[i, k]
            if acc > best:
                best = acc
    return sqrt(best)


def sample_stats(const f8[:, ::1] U):
    """Mean, divisor-N covariance, and centered and raw triple products."""
    cdef Py_ssize_t N = U.shape[0], d = U.shape[1], i, k, l
    if d > 64:
        raise ValueError("compiled kernel supports d <= 64")
    mean_arr = np.zeros(d)
    cov_arr = np.zeros((d, d))
    cdef f8[::1] m = mean_arr
    cdef f8[:, ::1] c = cov_arr
    cdef f8 dev[64]
    cdef f8 m3 = 0.0, raw = 0.0
    with nogil:
        for i in range(N):
            for k in range(d):
                m[k] += U[i, k]
        for k in range(d):
            m[k] /= N
        for i in range(N):
            for k in range(d):
                dev[k] = U[i, k] - m[k]
            for k in range(d):
                for l in range(k, d):
                    c[k, l] += dev[k] * dev[l]
            if d >= 3:
                m3 += dev[0] * dev[1] * dev[2]
                raw += U[i, 0] * U[i, 1] * U[i, 2]
        for k in range(d):
            for l in range(k, d):
                c[k, l] /= N
                c[l, k] = c[k, l]
    return mean_arr, cov_arr, m3 / N, raw / N

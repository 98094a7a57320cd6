# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same signatures and semantics as ``_pure``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


# ---------------------------------------------------------------------------
# finite state space


cdef void _ctmc_rhs(double[:, :] M, double[:] h, double z, double[:] y,
                    double[:] w, double[:] out, Py_ssize_t d) noexcept:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(d):
        w[i] = y[i] + z * h[i]
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += M[i, j] * exp(w[j] - w[i])
        out[i] = s - 0.5 * h[i] * h[i]


def ctmc_pathwise_sweep(M, h, zs, double dt, int substeps, y0):
    cdef double[:, :] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef double[:] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:] zv = np.ascontiguousarray(zs, dtype=np.float64)
    cdef Py_ssize_t d = hv.shape[0]
    cdef Py_ssize_t N = zv.shape[0] - 1
    out_arr = np.empty((N + 1, d))
    cdef double[:, :] out = out_arr
    y_arr = np.array(y0, dtype=np.float64)
    cdef double[:] y = y_arr
    cdef double[:] w = np.empty(d)
    cdef double[:] k1 = np.empty(d)
    cdef double[:] k2 = np.empty(d)
    cdef double[:] k3 = np.empty(d)
    cdef double[:] k4 = np.empty(d)
    cdef double[:] tmp = np.empty(d)
    cdef Py_ssize_t k, s, i
    cdef double hs = dt / substeps
    cdef double z0, z1, za, zm, zb
    for i in range(d):
        out[0, i] = y[i]
    for k in range(N):
        z0 = zv[k]
        z1 = zv[k + 1]
        for s in range(substeps):
            za = z0 + (z1 - z0) * (s / <double> substeps)
            zm = z0 + (z1 - z0) * ((s + 0.5) / <double> substeps)
            zb = z0 + (z1 - z0) * ((s + 1.0) / <double> substeps)
            _ctmc_rhs(Mv, hv, za, y, w, k1, d)
            for i in range(d):
                tmp[i] = y[i] + 0.5 * hs * k1[i]
            _ctmc_rhs(Mv, hv, zm, tmp, w, k2, d)
            for i in range(d):
                tmp[i] = y[i] + 0.5 * hs * k2[i]
            _ctmc_rhs(Mv, hv, zm, tmp, w, k3, d)
            for i in range(d):
                tmp[i] = y[i] + hs * k3[i]
            _ctmc_rhs(Mv, hv, zb, tmp, w, k4, d)
            for i in range(d):
                y[i] = y[i] + (hs / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(d):
            out[k + 1, i] = y[i]
    return out_arr


cdef void _ctrl_apply_T(double[:, :] A, double[:, :] u, double[:] p,
                        double[:] out, Py_ssize_t d) noexcept:
    cdef Py_ssize_t i, j
    cdef double r, rs
    for j in range(d):
        out[j] = 0.0
    for i in range(d):
        rs = 0.0
        for j in range(d):
            if i != j:
                r = A[i, j] * u[i, j]
                rs += r
                out[j] += r * p[i]
        out[i] -= rs * p[i]


def ctmc_transport_sweep(A, u, u_mid, pi0, double dt):
    cdef double[:, :] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, :, :] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[:, :, :] umv = np.ascontiguousarray(u_mid, dtype=np.float64)
    cdef Py_ssize_t d = Av.shape[0]
    cdef Py_ssize_t N = uv.shape[0] - 1
    out_arr = np.empty((N + 1, d))
    cdef double[:, :] out = out_arr
    p_arr = np.array(pi0, dtype=np.float64)
    cdef double[:] p = p_arr
    cdef double[:] k1 = np.empty(d)
    cdef double[:] k2 = np.empty(d)
    cdef double[:] k3 = np.empty(d)
    cdef double[:] k4 = np.empty(d)
    cdef double[:] tmp = np.empty(d)
    cdef Py_ssize_t k, i
    cdef double mass, drift = 0.0, dev
    for i in range(d):
        out[0, i] = p[i]
    for k in range(N):
        _ctrl_apply_T(Av, uv[k], p, k1, d)
        for i in range(d):
            tmp[i] = p[i] + 0.5 * dt * k1[i]
        _ctrl_apply_T(Av, umv[k], tmp, k2, d)
        for i in range(d):
            tmp[i] = p[i] + 0.5 * dt * k2[i]
        _ctrl_apply_T(Av, umv[k], tmp, k3, d)
        for i in range(d):
            tmp[i] = p[i] + dt * k3[i]
        _ctrl_apply_T(Av, uv[k + 1], tmp, k4, d)
        mass = 0.0
        for i in range(d):
            p[i] = p[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            mass += p[i]
        dev = mass - 1.0
        if dev < 0:
            dev = -dev
        if dev > drift:
            drift = dev
        for i in range(d):
            p[i] = p[i] / mass
            out[k + 1, i] = p[i]
    return out_arr, drift


# ---------------------------------------------------------------------------
# grid operators


cdef void _grid_rhs(double[:] lo, double[:] d0, double[:] up, double[:] hg,
                    double z, double[:] y, double[:] w, double[:] out,
                    Py_ssize_t n) noexcept:
    cdef Py_ssize_t i
    for i in range(n):
        w[i] = y[i] + z * hg[i]
    for i in range(n):
        out[i] = d0[i] - 0.5 * hg[i] * hg[i]
    for i in range(1, n):
        out[i] += lo[i] * exp(w[i - 1] - w[i])
    for i in range(n - 1):
        out[i] += up[i] * exp(w[i + 1] - w[i])


def grid_pathwise_sweep(lo, d0, up, hg, zs, double dt, int substeps, y0):
    cdef double[:] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[:] d0v = np.ascontiguousarray(d0, dtype=np.float64)
    cdef double[:] upv = np.ascontiguousarray(up, dtype=np.float64)
    cdef double[:] hv = np.ascontiguousarray(hg, dtype=np.float64)
    cdef double[:] zv = np.ascontiguousarray(zs, dtype=np.float64)
    cdef Py_ssize_t n = hv.shape[0]
    cdef Py_ssize_t N = zv.shape[0] - 1
    out_arr = np.empty((N + 1, n))
    cdef double[:, :] out = out_arr
    y_arr = np.array(y0, dtype=np.float64)
    cdef double[:] y = y_arr
    cdef double[:] w = np.empty(n)
    cdef double[:] k1 = np.empty(n)
    cdef double[:] k2 = np.empty(n)
    cdef double[:] k3 = np.empty(n)
    cdef double[:] k4 = np.empty(n)
    cdef double[:] tmp = np.empty(n)
    cdef Py_ssize_t k, s, i
    cdef double hs = dt / substeps
    cdef double z0, z1, za, zm, zb
    for i in range(n):
        out[0, i] = y[i]
    for k in range(N):
        z0 = zv[k]
        z1 = zv[k + 1]
        for s in range(substeps):
            za = z0 + (z1 - z0) * (s / <double> substeps)
            zm = z0 + (z1 - z0) * ((s + 0.5) / <double> substeps)
            zb = z0 + (z1 - z0) * ((s + 1.0) / <double> substeps)
            _grid_rhs(lov, d0v, upv, hv, za, y, w, k1, n)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * hs * k1[i]
            _grid_rhs(lov, d0v, upv, hv, zm, tmp, w, k2, n)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * hs * k2[i]
            _grid_rhs(lov, d0v, upv, hv, zm, tmp, w, k3, n)
            for i in range(n):
                tmp[i] = y[i] + hs * k3[i]
            _grid_rhs(lov, d0v, upv, hv, zb, tmp, w, k4, n)
            for i in range(n):
                y[i] = y[i] + (hs / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(n):
            out[k + 1, i] = y[i]
    return out_arr


cdef void _transport_rhs(double[:] lo, double[:] d0, double[:] up,
                         double[:] su, double[:] p, double dx,
                         double[:] F, double[:] out, Py_ssize_t n) noexcept:
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = d0[i] * p[i]
    for i in range(1, n):
        out[i] += lo[i] * p[i - 1]
    for i in range(n - 1):
        out[i] += up[i] * p[i + 1]
    for i in range(n - 1):
        F[i] = 0.5 * (su[i] * p[i] + su[i + 1] * p[i + 1])
    out[0] -= F[0] / dx
    for i in range(1, n - 1):
        out[i] -= (F[i] - F[i - 1]) / dx
    out[n - 1] += F[n - 2] / dx


def grid_transport_sweep(lo, d0, up, su, pi0, double dt, double dx, int substeps):
    cdef double[:] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[:] d0v = np.ascontiguousarray(d0, dtype=np.float64)
    cdef double[:] upv = np.ascontiguousarray(up, dtype=np.float64)
    cdef double[:, :] suv = np.ascontiguousarray(su, dtype=np.float64)
    cdef Py_ssize_t n = lov.shape[0]
    cdef Py_ssize_t N = suv.shape[0] - 1
    out_arr = np.empty((N + 1, n))
    cdef double[:, :] out = out_arr
    p_arr = np.array(pi0, dtype=np.float64)
    cdef double[:] p = p_arr
    cdef double[:] F = np.empty(n - 1)
    cdef double[:] sa = np.empty(n)
    cdef double[:] k1 = np.empty(n)
    cdef double[:] k2 = np.empty(n)
    cdef double[:] k3 = np.empty(n)
    cdef double[:] k4 = np.empty(n)
    cdef double[:] tmp = np.empty(n)
    cdef Py_ssize_t k, s, i
    cdef double hs = dt / substeps
    cdef double fa, fm, fb, mass, dev, drift = 0.0
    for i in range(n):
        out[0, i] = p[i]
    for k in range(N):
        for s in range(substeps):
            fa = s / <double> substeps
            fm = (s + 0.5) / <double> substeps
            fb = (s + 1.0) / <double> substeps
            for i in range(n):
                sa[i] = suv[k, i] + (suv[k + 1, i] - suv[k, i]) * fa
            _transport_rhs(lov, d0v, upv, sa, p, dx, F, k1, n)
            for i in range(n):
                sa[i] = suv[k, i] + (suv[k + 1, i] - suv[k, i]) * fm
                tmp[i] = p[i] + 0.5 * hs * k1[i]
            _transport_rhs(lov, d0v, upv, sa, tmp, dx, F, k2, n)
            for i in range(n):
                tmp[i] = p[i] + 0.5 * hs * k2[i]
            _transport_rhs(lov, d0v, upv, sa, tmp, dx, F, k3, n)
            for i in range(n):
                sa[i] = suv[k, i] + (suv[k + 1, i] - suv[k, i]) * fb
                tmp[i] = p[i] + hs * k3[i]
            _transport_rhs(lov, d0v, upv, sa, tmp, dx, F, k4, n)
            mass = 0.0
            for i in range(n):
                p[i] = p[i] + (hs / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                mass += p[i]
            mass *= dx
            dev = mass - 1.0
            if dev < 0:
                dev = -dev
            if dev > drift:
                drift = dev
            for i in range(n):
                p[i] = p[i] / mass
        for i in range(n):
            out[k + 1, i] = p[i]
    return out_arr, drift


# ---------------------------------------------------------------------------
# fine-grid discrete forward-backward pass


def hmm_fine_sweep(P, h, dz, double dt, nu0):
    cdef double[:, :] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:] dzv = np.ascontiguousarray(dz, dtype=np.float64)
    cdef Py_ssize_t d = hv.shape[0]
    cdef Py_ssize_t M = dzv.shape[0]
    logp_arr = np.empty((M + 1, d))
    logq_arr = np.empty((M + 1, d))
    cdef double[:, :] logp = logp_arr
    cdef double[:, :] logq = logq_arr
    cdef double[:] p = np.array(nu0, dtype=np.float64)
    cdef double[:] q = np.empty(d)
    cdef double[:] w = np.empty(d)
    cdef double[:] tmp = np.empty(d)
    cdef double[:] h2dt = np.empty(d)
    cdef Py_ssize_t k, i, j
    cdef double scale, s, acc
    for i in range(d):
        h2dt[i] = 0.5 * hv[i] * hv[i] * dt
        logp[0, i] = log(p[i])
    scale = 0.0
    for k in range(M):
        for i in range(d):
            w[i] = exp(hv[i] * dzv[k] - h2dt[i]) * p[i]
        s = 0.0
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += Pv[j, i] * w[j]
            tmp[i] = acc
            s += acc
        scale += log(s)
        for i in range(d):
            p[i] = tmp[i] / s
            logp[k + 1, i] = log(p[i]) + scale
    for i in range(d):
        q[i] = 1.0
        logq[M, i] = 0.0
    scale = 0.0
    for k in range(M - 1, -1, -1):
        s = 0.0
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += Pv[i, j] * q[j]
            tmp[i] = exp(hv[i] * dzv[k] - h2dt[i]) * acc
            s += tmp[i]
        scale += log(s)
        for i in range(d):
            q[i] = tmp[i] / s
            logq[k, i] = log(q[i]) + scale
    return logp_arr, logq_arr

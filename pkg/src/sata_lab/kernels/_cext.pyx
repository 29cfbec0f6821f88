# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched SATA loss kernel; same contract as ``sata_lab.kernels._py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


cdef inline double _clamp(double x) noexcept nogil:
    if x > 1.0:
        return 1.0
    if x < -1.0:
        return -1.0
    return x


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    # four independent partial sums, combined in a fixed order
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t j = 0
    while j + 4 <= n:
        s0 += a[j] * b[j]
        s1 += a[j + 1] * b[j + 1]
        s2 += a[j + 2] * b[j + 2]
        s3 += a[j + 3] * b[j + 3]
        j += 4
    while j < n:
        s0 += a[j] * b[j]
        j += 1
    return (s0 + s1) + (s2 + s3)


cdef inline void _axpy(double alpha, const double* x, double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j
    if alpha == 0.0:
        return
    for j in range(n):
        y[j] += alpha * x[j]


def batch_loss_grad(E, labels, plain, scene, double tau, double delta, double lambda_scene,
                    double lambda_action, double aux_temperature=1.0):
    cdef double[:, ::1] e = np.ascontiguousarray(E, dtype=np.float64)
    cdef long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef double[:, ::1] P = np.ascontiguousarray(plain, dtype=np.float64)
    cdef double[:, :, ::1] S = np.ascontiguousarray(scene, dtype=np.float64)
    cdef Py_ssize_t B = e.shape[0], F = e.shape[1], K = P.shape[0], N = S.shape[1]
    cdef Py_ssize_t i, k, n, f, yi
    cdef bint zero_norm = False

    out_vta = np.zeros(B)
    out_scene = np.zeros(B)
    out_action = np.zeros(B)
    out_grad = np.zeros((B, F))
    cdef double[::1] l_vta = out_vta, l_scene = out_scene, l_action = out_action
    cdef double[:, ::1] grad = out_grad

    work = np.empty(F + 4 * K + 4 * max(N, 1))
    cdef double[::1] w = work
    cdef double* eh = &w[0]
    cdef double* c = eh + F
    cdef double* dc = c + K
    cdef double* cnt_c = dc + K
    cdef double* z = cnt_c + K
    cdef double* cs = z + K
    cdef double* dcs = cs + max(N, 1)
    cdef double* cnt_s = dcs + max(N, 1)
    cdef double* u = cnt_s + max(N, 1)
    cdef double* g
    cdef const double* Pp = &P[0, 0] if K > 0 else NULL
    cdef const double* Sp = NULL
    cdef double ne, inv_ne, acc, zmax, sz, umax, su, q0, h, radial, norm_
    cdef double t = aux_temperature

    with nogil:
        for i in range(B):
            yi = y[i]
            g = &grad[i, 0]
            ne = sqrt(_dot(&e[i, 0], &e[i, 0], F))
            if ne == 0.0:
                zero_norm = True
                break
            inv_ne = 1.0 / ne
            for f in range(F):
                eh[f] = e[i, f] / ne

            # video-text alignment: softmax over K plain prompts at temperature tau
            zmax = -1e308
            for k in range(K):
                c[k] = _clamp(_dot(eh, Pp + k * F, F))
                z[k] = c[k] / tau
                if z[k] > zmax:
                    zmax = z[k]
            sz = 0.0
            for k in range(K):
                dc[k] = exp(z[k] - zmax)
                sz = sz + dc[k]
            l_vta[i] = zmax + log(sz) - z[yi]
            for k in range(K):
                dc[k] = dc[k] / sz
            dc[yi] = dc[yi] - 1.0
            for k in range(K):
                dc[k] = dc[k] / tau

            if N > 0:
                Sp = &S[i, 0, 0]
                u[0] = c[yi] / t
                umax = u[0]
                for n in range(N):
                    cs[n] = _clamp(_dot(eh, Sp + n * F, F))
                    if cs[n] / t > umax:
                        umax = cs[n] / t
                q0 = exp(u[0] - umax)
                su = q0
                for n in range(N):
                    dcs[n] = exp(cs[n] / t - umax)
                    su = su + dcs[n]
                l_scene[i] = umax + log(su) - u[0]
                for n in range(N):
                    dcs[n] = lambda_scene * (dcs[n] / su) / t
                for k in range(K):
                    cnt_c[k] = 0.0
                for n in range(N):
                    cnt_s[n] = 0.0
                if K > 1:
                    acc = 0.0
                    for n in range(N):
                        for k in range(K):
                            if k == yi:
                                continue
                            h = delta - (cs[n] - c[k]) / t
                            if h > 0.0:
                                acc = acc + h
                                cnt_s[n] = cnt_s[n] + 1.0
                                cnt_c[k] = cnt_c[k] + 1.0
                    norm_ = 1.0 / (N * (K - 1))
                    l_action[i] = acc * norm_
                    for k in range(K):
                        dc[k] = dc[k] + lambda_action * (cnt_c[k] * (norm_ / t))
                    for n in range(N):
                        dcs[n] = dcs[n] + lambda_action * (-cnt_s[n] * (norm_ / t))
                dc[yi] = dc[yi] + lambda_scene * ((q0 / su - 1.0) / t)

            # d/de of sum_j w_j cos(e, t_j) = (sum_j w_j t_j - (sum_j w_j c_j) e_hat) / |e|
            radial = 0.0
            for k in range(K):
                radial = radial + dc[k] * c[k]
                _axpy(dc[k], Pp + k * F, g, F)
            if N > 0:
                acc = 0.0
                for n in range(N):
                    acc = acc + dcs[n] * cs[n]
                    _axpy(dcs[n], Sp + n * F, g, F)
                radial = radial + acc
            for f in range(F):
                g[f] = (g[f] - radial * eh[f]) * inv_ne

    if zero_norm:
        raise ValueError("zero-norm video embedding")
    return out_vta, out_scene, out_action, out_grad

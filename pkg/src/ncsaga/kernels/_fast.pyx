# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loops for SGD and Reg-SAGA on logistic linear models with the nonconvex penalty."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, isfinite

cnp.import_array()


cdef inline double _lprime(double u, double y) noexcept nogil:
    cdef double m = y * u
    cdef double e
    if m >= 0:
        e = exp(-m)
        return -y * (e / (1.0 + e))
    e = exp(m)
    return -y * (1.0 / (1.0 + e))


cdef inline double _dot(const double[:, ::1] Z, Py_ssize_t i, double[::1] x, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t c
    for c in range(d):
        acc += Z[i, c] * x[c]
    return acc


def sgd_linear(const double[:, ::1] Z, const double[::1] y, double[::1] x,
               const cnp.int64_t[::1] idx, const double[::1] etas, double lam, double alpha):
    cdef Py_ssize_t d = Z.shape[1]
    cdef Py_ssize_t K = idx.shape[0]
    cdef Py_ssize_t k, c, i
    cdef double s, eta, xc, den, xn
    cdef Py_ssize_t fail = -1
    cdef double[::1] buf = np.empty(d)
    with nogil:
        for k in range(K):
            i = idx[k]
            s = _lprime(_dot(Z, i, x, d), y[i])
            eta = etas[k]
            for c in range(d):
                xc = x[c]
                den = 1.0 + alpha * xc * xc
                xn = xc - eta * (s * Z[i, c] + 2.0 * lam * alpha * xc / (den * den))
                if not isfinite(xn):
                    fail = k
                    break
                buf[c] = xn
            if fail >= 0:
                break
            x[:] = buf
    return fail


def reg_saga_linear(const double[:, ::1] Z, const double[::1] y, double[::1] x,
                    double[::1] scalars, double[::1] gsum, const cnp.int64_t[::1] idx,
                    double eta, double lam, double alpha):
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t d = Z.shape[1]
    cdef Py_ssize_t K = idx.shape[0] // 2
    cdef Py_ssize_t k, c, i, j
    cdef double si, sj, ai, aj, v, xc, den, xn
    cdef double dn = <double> n
    cdef Py_ssize_t fail = -1
    cdef double[::1] buf = np.empty(d)
    with nogil:
        for k in range(K):
            i = idx[2 * k]
            j = idx[2 * k + 1]
            si = _lprime(_dot(Z, i, x, d), y[i])
            if j == i:
                sj = si
            else:
                sj = _lprime(_dot(Z, j, x, d), y[j])
            ai = scalars[i]
            aj = scalars[j]
            for c in range(d):
                xc = x[c]
                v = si * Z[i, c] + (gsum[c] / dn - ai * Z[i, c])
                den = 1.0 + alpha * xc * xc
                xn = xc - eta * (v + 2.0 * lam * alpha * xc / (den * den))
                if not isfinite(xn):
                    fail = k
                    break
                buf[c] = xn
            if fail >= 0:
                break
            for c in range(d):
                gsum[c] = (gsum[c] - aj * Z[j, c]) + sj * Z[j, c]
            scalars[j] = sj
            x[:] = buf
    return fail

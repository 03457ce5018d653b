# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Mirrors ``_kernels_py`` function for function."""

import numpy as np

from libc.math cimport exp, log, M_PI


def mixture_moments(x, s2, means, variances, logw):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(s2, dtype=np.float64)
    cdef const double[::1] mv = np.ascontiguousarray(means, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(variances, dtype=np.float64)
    cdef const double[::1] lw = np.ascontiguousarray(logw, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], K = mv.shape[0], i, k
    out_lm = np.empty(n)
    out_pm = np.empty(n)
    out_pv = np.empty(n)
    lp_buf = np.empty(K)
    cm_buf = np.empty(K)
    cv_buf = np.empty(K)
    cdef double[::1] lm = out_lm, pm = out_pm, pv = out_pv
    cdef double[::1] lp = lp_buf, cm = cm_buf, cv = cv_buf
    cdef double log2pi = log(2.0 * M_PI)
    cdef double tot, r, shift, z, e, mean, acc, d, shrink
    with nogil:
        for i in range(n):
            shift = -1e308
            for k in range(K):
                tot = vv[k] + sv[i]
                r = xv[i] - mv[k]
                lp[k] = lw[k] - 0.5 * (log2pi + log(tot)) - 0.5 * r * r / tot
                shrink = vv[k] / tot
                cm[k] = mv[k] + shrink * r
                cv[k] = shrink * sv[i]
                if lp[k] > shift:
                    shift = lp[k]
            z = 0.0
            for k in range(K):
                lp[k] = exp(lp[k] - shift)
                z += lp[k]
            mean = 0.0
            for k in range(K):
                mean += (lp[k] / z) * cm[k]
            acc = 0.0
            for k in range(K):
                d = cm[k] - mean
                acc += (lp[k] / z) * (cv[k] + d * d)
            lm[i] = shift + log(z)
            pm[i] = mean
            pv[i] = acc
    return out_lm, out_pm, out_pv


def em_weights(lik, shift, w0, double tol, int max_iter):
    cdef const double[:, ::1] L = np.ascontiguousarray(lik, dtype=np.float64)
    cdef const double[::1] sh = np.ascontiguousarray(shift, dtype=np.float64)
    cdef Py_ssize_t n = L.shape[0], K = L.shape[1], i, k
    w_arr = np.array(w0, dtype=np.float64)
    acc_arr = np.empty(K)
    trace_arr = np.empty(max_iter + 1)
    cdef double[::1] w = w_arr, acc = acc_arr, trace = trace_arr
    cdef double shift_total = 0.0, ll, denom, inv
    cdef int it = 0
    cdef bint converged = False
    for i in range(n):
        shift_total += sh[i]
    with nogil:
        while True:
            ll = 0.0
            for k in range(K):
                acc[k] = 0.0
            for i in range(n):
                denom = 0.0
                for k in range(K):
                    denom += L[i, k] * w[k]
                ll += log(denom)
                inv = 1.0 / denom
                for k in range(K):
                    acc[k] += L[i, k] * inv
            ll += shift_total
            trace[it] = ll
            if it > 0 and ll - trace[it - 1] < tol:
                converged = True
                break
            if it >= max_iter:
                break
            for k in range(K):
                w[k] = w[k] * acc[k] / n
            it += 1
    return w_arr, trace_arr[:it + 1].copy(), it, bool(converged)

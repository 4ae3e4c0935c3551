# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in _ref.py.

These are the inner loops that dominate calibration and oracle runtime:
piecewise-polynomial evaluation on point batches, Gaussian KDE statistics
over bootstrap resample matrices, and the tail Kolmogorov-Smirnov
discrepancy per resample. Semantics must match _ref.py exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

cdef double INV_SQRT_2PI = 0.3989422804014327


def piecewise_eval(cnp.ndarray[cnp.float64_t, ndim=1] breaks,
                   cnp.ndarray[cnp.float64_t, ndim=2] coeffs,
                   cnp.ndarray[cnp.float64_t, ndim=1] xs):
    cdef Py_ssize_t m = breaks.shape[0]
    cdef Py_ssize_t k = coeffs.shape[1]
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n)
    cdef Py_ssize_t p, lo, hi, mid, j
    cdef double x, t, acc
    for p in range(n):
        x = xs[p]
        if x < breaks[0]:
            continue
        # rightmost piece with breaks[i] <= x
        lo = 0
        hi = m
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if breaks[mid] <= x:
                lo = mid
            else:
                hi = mid
        t = x - breaks[lo]
        acc = 0.0
        for j in range(k - 1, -1, -1):
            acc = acc * t + coeffs[lo, j]
        out[p] = acc
    return out


def gauss_kde_stats(double x,
                    cnp.ndarray[cnp.float64_t, ndim=2] samples,
                    cnp.ndarray[cnp.float64_t, ndim=1] bandwidths):
    cdef Py_ssize_t B = samples.shape[0]
    cdef Py_ssize_t n = samples.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dens = np.empty(B)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] deriv = np.empty(B)
    cdef Py_ssize_t b, i
    cdef double h, u, kv, sd, sdd
    for b in range(B):
        h = bandwidths[b]
        sd = 0.0
        sdd = 0.0
        for i in range(n):
            u = (x - samples[b, i]) / h
            kv = INV_SQRT_2PI * exp(-0.5 * u * u)
            sd += kv
            sdd += -u * kv
        dens[b] = sd / (n * h)
        deriv[b] = sdd / (n * h * h)
    return dens, deriv


cdef Py_ssize_t _lower_bound(cnp.float64_t[:] arr, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _upper_bound(cnp.float64_t[:] arr, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def tail_ks_stat(cnp.ndarray[cnp.float64_t, ndim=1] orig_sorted,
                 cnp.ndarray[cnp.float64_t, ndim=1] resample_sorted,
                 cnp.ndarray[cnp.float64_t, ndim=1] thresholds):
    cdef Py_ssize_t n = orig_sorted.shape[0]
    cdef Py_ssize_t nb = resample_sorted.shape[0]
    cdef Py_ssize_t m = thresholds.shape[0]
    cdef double best = 0.0, a, d, rank, cnt
    cdef Py_ssize_t t, j0, c0, j
    for t in range(m):
        a = thresholds[t]
        j0 = _lower_bound(resample_sorted, a)
        c0 = _lower_bound(orig_sorted, a)
        rank = 0.0
        for j in range(j0, nb):
            rank += 1.0
            cnt = <double>(_upper_bound(orig_sorted, resample_sorted[j]) - c0)
            d = (rank - cnt) / n
            if d > best:
                best = d
            d = (cnt - rank + 1.0) / n
            if d > best:
                best = d
    return best

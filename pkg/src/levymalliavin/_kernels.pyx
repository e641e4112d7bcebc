# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def jump_sums(const cnp.int64_t[::1] offsets, const double[::1] times,
              const double[::1] sizes, double t):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(n)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(offsets[i], offsets[i + 1]):
                if times[j] <= t:
                    acc = acc + sizes[j]
            o[i] = acc
    return out


def box_sums(const cnp.int64_t[::1] offsets, const double[::1] times,
             const double[::1] sizes, double s, double t,
             lo, hi, lo_closed, hi_closed):
    cdef double[::1] lo_v = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hi_v = np.ascontiguousarray(hi, dtype=np.float64)
    cdef cnp.uint8_t[::1] loc = np.ascontiguousarray(lo_closed, dtype=np.uint8)
    cdef cnp.uint8_t[::1] hic = np.ascontiguousarray(hi_closed, dtype=np.uint8)
    cdef Py_ssize_t m = lo_v.shape[0]
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(n)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, q
    cdef double acc, x, tj
    cdef bint hit
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(offsets[i], offsets[i + 1]):
                tj = times[j]
                if tj < s or tj >= t:
                    continue
                x = sizes[j]
                hit = False
                for q in range(m):
                    if (x >= lo_v[q] if loc[q] else x > lo_v[q]) and \
                       (x <= hi_v[q] if hic[q] else x < hi_v[q]):
                        hit = True
                        break
                if hit:
                    acc = acc + x
            o[i] = acc
    return out


def sup_integral(const cnp.int64_t[::1] offsets, const double[::1] times,
                 const double[::1] sizes, double drift, double horizon):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] sup_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] int_arr = np.empty(n)
    cdef double[::1] sup_v = sup_arr
    cdef double[::1] int_v = int_arr
    cdef Py_ssize_t i, k, end
    cdef double J, best, area, prev, tau, val
    with nogil:
        for i in range(n):
            k = offsets[i]
            end = offsets[i + 1]
            J = 0.0
            while k < end and times[k] <= 0.0:
                J = J + sizes[k]
                k = k + 1
            best = J
            area = 0.0
            prev = 0.0
            while k < end and times[k] <= horizon:
                tau = times[k]
                area = area + (drift * (tau * tau - prev * prev) * 0.5 + J * (tau - prev))
                val = drift * tau + J
                if val > best:
                    best = val
                J = J + sizes[k]
                val = drift * tau + J
                if val > best:
                    best = val
                prev = tau
                k = k + 1
            area = area + (drift * (horizon * horizon - prev * prev) * 0.5 + J * (horizon - prev))
            val = drift * horizon + J
            if val > best:
                best = val
            sup_v[i] = best
            int_v[i] = area
    return sup_arr, int_arr

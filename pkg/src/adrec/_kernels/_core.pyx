# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: capacity-constrained assignment and nearest-centroid.

Semantics (processing order, capacities, tie-breaking) must stay in
lockstep with ``_fallback.py``; the test suite cross-checks both.
"""

import numpy as np

cimport numpy as cnp

from libc.math cimport INFINITY


def greedy_balanced_assign(double[:, ::1] dists, cnp.int64_t[::1] order,
                           cnp.int64_t floor_cap, cnp.int64_t bonus_total):
    cdef Py_ssize_t n = dists.shape[0]
    cdef Py_ssize_t k = dists.shape[1]
    out_arr = np.empty(n, dtype=np.int64)
    sizes_arr = np.zeros(k, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef cnp.int64_t[::1] sizes = sizes_arr
    cdef cnp.int64_t bonus_used = 0
    cdef Py_ssize_t idx, p, c, best
    cdef double best_d, d

    for idx in range(n):
        p = order[idx]
        best = -1
        best_d = INFINITY
        for c in range(k):
            if sizes[c] >= floor_cap:
                if sizes[c] > floor_cap or bonus_used >= bonus_total:
                    continue
            d = dists[p, c]
            if d < best_d:
                best = c
                best_d = d
        if sizes[best] == floor_cap:
            bonus_used += 1
        sizes[best] += 1
        out[p] = best
    return out_arr


def nearest_centroid(double[:, ::1] points, double[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t k = centroids.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i, c, j, best
    cdef double best_d, dist, diff

    for i in range(n):
        best = 0
        best_d = INFINITY
        for c in range(k):
            dist = 0.0
            for j in range(dim):
                diff = points[i, j] - centroids[c, j]
                dist += diff * diff
            if dist < best_d:
                best_d = dist
                best = c
        out[i] = best
    return out_arr

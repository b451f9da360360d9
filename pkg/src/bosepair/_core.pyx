# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair sums over grid points with the minimal-image metric."""

import numpy as np
from libc.math cimport sqrt, floor


def pair_distance_sum(double[::1] a, double[::1] b, double[:, ::1] coords, double box):
    """Return sum_i sum_j a[i] * b[j] * |x_i - x_j| (minimal image)."""
    cdef Py_ssize_t npts = coords.shape[0]
    cdef Py_ssize_t dim = coords.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double total = 0.0, row, r2, diff, ai
    for i in range(npts):
        ai = a[i]
        if ai == 0.0:
            continue
        row = 0.0
        for j in range(npts):
            r2 = 0.0
            for c in range(dim):
                diff = coords[i, c] - coords[j, c]
                diff -= box * floor(diff / box + 0.5)
                r2 += diff * diff
            row += b[j] * sqrt(r2)
        total += ai * row
    return total


def pair_distance_matrix_apply(double[::1] b, double[:, ::1] coords, double box):
    """Return out[i] = sum_j |x_i - x_j| b[j] (minimal image)."""
    cdef Py_ssize_t npts = coords.shape[0]
    cdef Py_ssize_t dim = coords.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double r2, diff, acc
    out = np.zeros(npts, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(npts):
        acc = 0.0
        for j in range(npts):
            r2 = 0.0
            for c in range(dim):
                diff = coords[i, c] - coords[j, c]
                diff -= box * floor(diff / box + 0.5)
                r2 += diff * diff
            acc += b[j] * sqrt(r2)
        o[i] = acc
    return out

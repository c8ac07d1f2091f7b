# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter/segment kernels.

These are the inner loops of embedding-gradient accumulation and
neighbourhood aggregation. Accumulation order matches the numpy
fallback (sequential over the input arrays) so both backends return
bitwise-identical float64 results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "c"


def scatter_add_rows(double[:, ::1] out, long long[::1] index, double[:, ::1] rows):
    cdef Py_ssize_t i, k, n = index.shape[0], d = out.shape[1]
    cdef long long row
    for i in range(n):
        row = index[i]
        for k in range(d):
            out[row, k] += rows[i, k]
    return np.asarray(out)


def segment_sum_rows(long long[::1] seg_ids, double[:, ::1] rows, Py_ssize_t num_segments):
    cdef Py_ssize_t i, k, n = seg_ids.shape[0], d = rows.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((num_segments, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef long long seg
    for i in range(n):
        seg = seg_ids[i]
        for k in range(d):
            o[seg, k] += rows[i, k]
    return out


def segment_sum_scalars(long long[::1] seg_ids, double[::1] values, Py_ssize_t num_segments):
    cdef Py_ssize_t i, n = seg_ids.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(num_segments, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[seg_ids[i]] += values[i]
    return out


def segment_max_scalars(long long[::1] seg_ids, double[::1] values, Py_ssize_t num_segments, double fill):
    cdef Py_ssize_t i, n = seg_ids.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.full(num_segments, fill, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        if values[i] > o[seg_ids[i]]:
            o[seg_ids[i]] = values[i]
    return out

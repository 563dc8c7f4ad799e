# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel loops; semantics mirror _accel_py exactly.

Accumulation adds a zeroed value at non-G positions instead of branching,
matching the numpy fallback's floating-point operation sequence so both
backends give bit-identical output.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def accum_double(const unsigned char[:, :] indexes, const unsigned char[:, :] g_mask,
                 const double[:] acts, int k):
    cdef Py_ssize_t rows = indexes.shape[0]
    cdef Py_ssize_t cols = indexes.shape[1]
    out_arr = np.zeros((rows, k), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t r, c
    cdef double va
    for r in range(rows):
        for c in range(cols):
            va = acts[c] if g_mask[r, c] else 0.0
            out[r, indexes[r, c]] += va
    return out_arr


def accum_single(const unsigned char[:, :] indexes, const unsigned char[:, :] g_mask,
                 const float[:] acts32, int k):
    cdef Py_ssize_t rows = indexes.shape[0]
    cdef Py_ssize_t cols = indexes.shape[1]
    out_arr = np.zeros((rows, k), dtype=np.float32)
    cdef float[:, :] out = out_arr
    cdef Py_ssize_t r, c
    cdef float va
    for r in range(rows):
        for c in range(cols):
            va = acts32[c] if g_mask[r, c] else 0.0
            out[r, indexes[r, c]] += va
    return out_arr


def outlier_partial_double(const int[:] o_rows, const int[:] o_cols,
                           const float[:] o_values, const double[:] acts, int n_rows):
    out_arr = np.zeros(n_rows, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t i
    for i in range(o_rows.shape[0]):
        out[o_rows[i]] += (<double> o_values[i]) * acts[o_cols[i]]
    return out_arr


def outlier_partial_single(const int[:] o_rows, const int[:] o_cols,
                           const float[:] o_values, const float[:] acts32, int n_rows):
    out_arr = np.zeros(n_rows, dtype=np.float32)
    cdef float[:] out = out_arr
    cdef Py_ssize_t i
    for i in range(o_rows.shape[0]):
        out[o_rows[i]] += o_values[i] * acts32[o_cols[i]]
    return out_arr


def sweep_double(const double[:, :] sums, const double[:] table):
    cdef Py_ssize_t rows = sums.shape[0]
    cdef Py_ssize_t k = table.shape[0]
    out_arr = np.zeros(rows, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t r, j
    for j in range(k):
        for r in range(rows):
            out[r] += sums[r, j] * table[j]
    return out_arr


def sweep_single(const float[:, :] sums, const float[:] table32):
    cdef Py_ssize_t rows = sums.shape[0]
    cdef Py_ssize_t k = table32.shape[0]
    out_arr = np.zeros(rows, dtype=np.float32)
    cdef float[:] out = out_arr
    cdef Py_ssize_t r, j
    for j in range(k):
        for r in range(rows):
            out[r] += sums[r, j] * table32[j]
    return out_arr

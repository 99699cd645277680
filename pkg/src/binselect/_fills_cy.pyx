# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled packing kernels. Mirrors _fills_py exactly; returns int64 arrays."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def first_fit_fills(items, long capacity):
    cdef cnp.int64_t[::1] w = np.ascontiguousarray(items, dtype=np.int64)
    out = np.zeros(w.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] fills = out
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t nbins = 0
    cdef Py_ssize_t i, j
    cdef cnp.int64_t wi
    cdef bint placed
    for i in range(n):
        wi = w[i]
        placed = False
        for j in range(nbins):
            if fills[j] + wi <= capacity:
                fills[j] += wi
                placed = True
                break
        if not placed:
            fills[nbins] = wi
            nbins += 1
    return out[:nbins]


def best_fit_fills(items, long capacity):
    cdef cnp.int64_t[::1] w = np.ascontiguousarray(items, dtype=np.int64)
    out = np.zeros(w.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] fills = out
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t nbins = 0
    cdef Py_ssize_t i, j, best
    cdef cnp.int64_t wi, best_fill
    for i in range(n):
        wi = w[i]
        best = -1
        best_fill = -1
        for j in range(nbins):
            if fills[j] + wi <= capacity and fills[j] > best_fill:
                best = j
                best_fill = fills[j]
        if best < 0:
            fills[nbins] = wi
            nbins += 1
        else:
            fills[best] = best_fill + wi
    return out[:nbins]


def worst_fit_fills(items, long capacity):
    cdef cnp.int64_t[::1] w = np.ascontiguousarray(items, dtype=np.int64)
    out = np.zeros(w.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] fills = out
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t nbins = 0
    cdef Py_ssize_t i, j, best
    cdef cnp.int64_t wi, best_fill
    for i in range(n):
        wi = w[i]
        best = -1
        best_fill = capacity + 1
        for j in range(nbins):
            if fills[j] + wi <= capacity and fills[j] < best_fill:
                best = j
                best_fill = fills[j]
        if best < 0:
            fills[nbins] = wi
            nbins += 1
        else:
            fills[best] = best_fill + wi
    return out[:nbins]


def next_fit_fills(items, long capacity):
    cdef cnp.int64_t[::1] w = np.ascontiguousarray(items, dtype=np.int64)
    out = np.zeros(w.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] fills = out
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t nbins = 0
    cdef Py_ssize_t i
    cdef cnp.int64_t wi
    for i in range(n):
        wi = w[i]
        if nbins > 0 and fills[nbins - 1] + wi <= capacity:
            fills[nbins - 1] += wi
        else:
            fills[nbins] = wi
            nbins += 1
    return out[:nbins]

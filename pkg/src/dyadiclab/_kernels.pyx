# cython: language_level=3
"""Compiled tree kernels.

Every routine walks the lattice tree in cube-id order. Cube ids are
breadth-first, so a parent always precedes its sons and the sons of a cube
are contiguous; the leaves occupy ``level_start[depth]:``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fmax

cnp.import_array()

ctypedef cnp.int64_t idx_t


def haar_forward(const double[::1] fnu, const idx_t[::1] parent,
                 const idx_t[::1] son_start, const idx_t[::1] son_count,
                 const idx_t[::1] fun_of_cube, const double[::1] a,
                 const double[::1] b, const idx_t[::1] level_start):
    cdef Py_ssize_t nc = parent.shape[0]
    cdef Py_ssize_t depth = level_start.shape[0] - 2
    cdef Py_ssize_t leaf = level_start[depth]
    cdef Py_ssize_t ncell = fnu.shape[0]
    cdef Py_ssize_t q, s, i, k
    cdef double acc
    F_arr = np.zeros(nc, dtype=np.float64)
    coef_arr = np.zeros(a.shape[0], dtype=np.float64)
    cdef double[::1] F = F_arr
    cdef double[::1] coef = coef_arr
    for i in range(ncell):
        F[leaf + i] = fnu[i]
    for q in range(nc - 1, 0, -1):
        F[parent[q]] += F[q]
    for q in range(leaf):
        acc = 0.0
        for s in range(son_start[q] + son_count[q] - 1, son_start[q] - 1, -1):
            k = fun_of_cube[s]
            if k >= 0:
                coef[k] = a[k] * F[s] - b[k] * acc
            acc += F[s]
    return coef_arr, F[0]


def haar_inverse(const double[::1] coef, double coarse, const idx_t[::1] parent,
                 const idx_t[::1] son_start, const idx_t[::1] son_count,
                 const idx_t[::1] fun_of_cube, const double[::1] a,
                 const double[::1] b, const idx_t[::1] level_start):
    cdef Py_ssize_t nc = parent.shape[0]
    cdef Py_ssize_t depth = level_start.shape[0] - 2
    cdef Py_ssize_t leaf = level_start[depth]
    cdef Py_ssize_t q, s, k
    cdef double acc, v
    vals_arr = np.empty(nc, dtype=np.float64)
    cdef double[::1] vals = vals_arr
    vals[0] = coarse
    for q in range(leaf):
        acc = 0.0
        for s in range(son_start[q], son_start[q] + son_count[q]):
            k = fun_of_cube[s]
            v = vals[q] + acc
            if k >= 0:
                v += a[k] * coef[k]
                acc -= b[k] * coef[k]
            vals[s] = v
    return vals_arr[leaf:].copy()


def shift_mix(const double[::1] x, const idx_t[::1] src, const idx_t[::1] dst,
              const double[::1] weights, Py_ssize_t nout):
    cdef Py_ssize_t e, ne = src.shape[0]
    out_arr = np.zeros(nout, dtype=np.float64)
    cdef double[::1] out = out_arr
    for e in range(ne):
        out[dst[e]] += weights[e] * x[src[e]]
    return out_arr


def subtree_sums(const double[::1] values, const idx_t[::1] parent,
                 const idx_t[::1] level_start):
    cdef Py_ssize_t q, nc = parent.shape[0]
    out_arr = np.array(values, dtype=np.float64, copy=True)
    cdef double[::1] out = out_arr
    for q in range(nc - 1, 0, -1):
        out[parent[q]] += out[q]
    return out_arr


def propagate_max(const double[::1] values, const idx_t[::1] parent,
                  const idx_t[::1] level_start):
    cdef Py_ssize_t q, nc = parent.shape[0]
    out_arr = np.array(values, dtype=np.float64, copy=True)
    cdef double[::1] out = out_arr
    for q in range(1, nc):
        out[q] = fmax(out[q], out[parent[q]])
    return out_arr

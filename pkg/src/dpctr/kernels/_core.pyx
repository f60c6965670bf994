# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations; semantics identical to _numpy."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def dense_sq_norms(double[:, ::1] inputs, double[:, ::1] grads,
                   Py_ssize_t microbatch_size, double[::1] out):
    cdef Py_ssize_t n = inputs.shape[0]
    cdef Py_ssize_t d_in = inputs.shape[1]
    cdef Py_ssize_t d_out = grads.shape[1]
    cdef Py_ssize_t m = microbatch_size
    cdef Py_ssize_t u, start, stop, i, j, k, n_units
    cdef double acc, dot_a, dot_g, m_sz
    if n == 0:
        return
    n_units = (n + m - 1) // m
    for u in range(n_units):
        start = u * m
        stop = start + m
        if stop > n:
            stop = n
        m_sz = <double> (stop - start)
        acc = 0.0
        for i in range(start, stop):
            for j in range(start, stop):
                dot_g = 0.0
                for k in range(d_out):
                    dot_g += grads[i, k] * grads[j, k]
                dot_a = 0.0
                for k in range(d_in):
                    dot_a += inputs[i, k] * inputs[j, k]
                acc += dot_g * (dot_a + 1.0)
        out[u] += acc / (m_sz * m_sz)


def embedding_sq_norms(double[:, ::1] grads, cnp.int64_t[::1] ids,
                       Py_ssize_t microbatch_size, double[::1] out):
    cdef Py_ssize_t n = grads.shape[0]
    cdef Py_ssize_t d = grads.shape[1]
    cdef Py_ssize_t m = microbatch_size
    cdef Py_ssize_t u, start, stop, i, j, k, n_units
    cdef double acc, dot_g, m_sz
    if n == 0:
        return
    n_units = (n + m - 1) // m
    for u in range(n_units):
        start = u * m
        stop = start + m
        if stop > n:
            stop = n
        m_sz = <double> (stop - start)
        acc = 0.0
        for i in range(start, stop):
            for j in range(start, stop):
                if ids[i] == ids[j]:
                    dot_g = 0.0
                    for k in range(d):
                        dot_g += grads[i, k] * grads[j, k]
                    acc += dot_g
        out[u] += acc / (m_sz * m_sz)


def scatter_add_rows(double[:, ::1] table, cnp.int64_t[::1] ids,
                     double[:, ::1] rows):
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    cdef Py_ssize_t i, k
    cdef cnp.int64_t r
    for i in range(n):
        r = ids[i]
        for k in range(d):
            table[r, k] += rows[i, k]

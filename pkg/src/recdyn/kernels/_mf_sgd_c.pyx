# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled SGD inner loop for matrix-factorization training.

Arithmetic order matches the pure-python fallback exactly so both backends
produce bit-identical parameters.
"""

import numpy as np

cimport numpy as cnp


def sgd_epoch(
    cnp.int64_t[::1] users,
    cnp.int64_t[::1] items,
    double[::1] ratings,
    cnp.int64_t[::1] order,
    double mu,
    double[:, ::1] p,
    double[:, ::1] q,
    double[::1] bu,
    double[::1] bi,
    double lr,
    double reg,
):
    """One full pass of per-sample gradient updates in the given order."""
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t d = p.shape[1]
    cdef Py_ssize_t t, k, j
    cdef cnp.int64_t u, i
    cdef double dot, err, pj

    for t in range(n):
        k = order[t]
        u = users[k]
        i = items[k]
        dot = 0.0
        for j in range(d):
            dot += p[u, j] * q[i, j]
        err = ratings[k] - (mu + bu[u] + bi[i] + dot)
        bu[u] += lr * (err - reg * bu[u])
        bi[i] += lr * (err - reg * bi[i])
        for j in range(d):
            pj = p[u, j]
            p[u, j] = pj + lr * (err * q[i, j] - reg * pj)
            q[i, j] = q[i, j] + lr * (err * pj - reg * q[i, j])

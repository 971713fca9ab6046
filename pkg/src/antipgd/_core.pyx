# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the sequential hot loops.

Same contracts as ``antipgd._core_py`` (the import-time fallback); see the
docstrings there. Kept to straight IEEE double arithmetic so the two
backends agree to rounding error.
"""

import numpy as np

BACKEND_NAME = "compiled"


def valley_block(double[::1] u, double v, double eta,
                 double[:, ::1] eps, double loss_cap):
    cdef Py_ssize_t n_steps = eps.shape[0]
    cdef Py_ssize_t d = u.shape[0]
    cdef Py_ssize_t t, i
    cdef double usq = 0.0
    cdef double fu, fv, loss

    for i in range(d):
        usq += u[i] * u[i]
    for t in range(n_steps):
        fu = 1.0 - eta * (v * v)
        fv = 1.0 - eta * usq
        usq = 0.0
        for i in range(d):
            u[i] = fu * u[i] + eps[t, i]
            usq += u[i] * u[i]
        v = fv * v + eps[t, d]
        loss = 0.5 * (v * v) * usq
        if not (loss <= loss_cap):
            return t + 1, v, True
    return n_steps, v, False


def recursion_block(double[:, ::1] w, double[:, ::1] xi_prev,
                    double[:, ::1] rho, double[:, :, ::1] xi,
                    bint anticorrelated,
                    double[::1] out_sum, double[::1] out_sumsq):
    cdef Py_ssize_t n_steps = xi.shape[0]
    cdef Py_ssize_t n_samples = w.shape[0]
    cdef Py_ssize_t d = w.shape[1]
    cdef Py_ssize_t t, s, i
    cdef double f, e, sq, tot, tot2

    for t in range(n_steps):
        tot = 0.0
        tot2 = 0.0
        for s in range(n_samples):
            f = rho[t, s]
            sq = 0.0
            if anticorrelated:
                for i in range(d):
                    e = xi[t, s, i] - xi_prev[s, i]
                    xi_prev[s, i] = xi[t, s, i]
                    w[s, i] = f * w[s, i] + e
                    sq += w[s, i] * w[s, i]
            else:
                for i in range(d):
                    w[s, i] = f * w[s, i] + xi[t, s, i]
                    sq += w[s, i] * w[s, i]
            tot += sq
            tot2 += sq * sq
        out_sum[t] = tot
        out_sumsq[t] = tot2

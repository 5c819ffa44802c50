# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels (see _kernels_py for contracts)."""

import numpy as np

cimport cython
from libc.math cimport fabs, sqrt

BACKEND = "cython"


def grad_space_apply(double[:, ::1] u, long long[::1] n0, long long[::1] n1,
                     double[::1] inv_len, double[::1] tx, double[::1] ty,
                     double[:, ::1] out_gx, double[:, ::1] out_gy):
    cdef Py_ssize_t n_t = u.shape[0]
    cdef Py_ssize_t n_q = n0.shape[0]
    cdef Py_ssize_t s, l
    cdef double g
    for s in range(n_t):
        for l in range(n_q):
            g = (u[s, n1[l]] - u[s, n0[l]]) * inv_len[l]
            out_gx[s, l] = g * tx[l]
            out_gy[s, l] = g * ty[l]


def grad_space_adjoint(double[:, ::1] qx, double[:, ::1] qy, long long[::1] n0,
                       long long[::1] n1, double[::1] inv_len, double[::1] tx,
                       double[::1] ty, double[:, ::1] out_u):
    cdef Py_ssize_t n_t = qx.shape[0]
    cdef Py_ssize_t n_q = n0.shape[0]
    cdef Py_ssize_t n_v = out_u.shape[1]
    cdef Py_ssize_t s, l, i
    cdef double c
    for s in range(n_t):
        for i in range(n_v):
            out_u[s, i] = 0.0
        for l in range(n_q):
            c = (qx[s, l] * tx[l] + qy[s, l] * ty[l]) * inv_len[l]
            out_u[s, n1[l]] += c
            out_u[s, n0[l]] -= c


def grad_time_apply(double[:, ::1] u, double[::1] inv_dt, double[:, ::1] out_p):
    cdef Py_ssize_t n_s = out_p.shape[0]
    cdef Py_ssize_t n = u.shape[1]
    cdef Py_ssize_t j, i
    for j in range(n_s):
        for i in range(n):
            out_p[j, i] = (u[j + 1, i] - u[j, i]) * inv_dt[j]


def grad_time_adjoint(double[:, ::1] p, double[::1] inv_dt, double[:, ::1] out_u):
    cdef Py_ssize_t n_s = p.shape[0]
    cdef Py_ssize_t n = p.shape[1]
    cdef Py_ssize_t s, i
    for i in range(n):
        out_u[0, i] = -p[0, i] * inv_dt[0]
        out_u[n_s, i] = p[n_s - 1, i] * inv_dt[n_s - 1]
    for s in range(1, n_s):
        for i in range(n):
            out_u[s, i] = p[s - 1, i] * inv_dt[s - 1] - p[s, i] * inv_dt[s]


def clamp_rows(double[:, ::1] p, double[::1] ratio):
    cdef Py_ssize_t n_r = p.shape[0]
    cdef Py_ssize_t n_c = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double r, m
    for i in range(n_r):
        r = ratio[i]
        for j in range(n_c):
            m = fabs(p[i, j]) * r
            if m > 1.0:
                p[i, j] /= m


def clamp_cols(double[:, ::1] p, double[::1] ratio):
    cdef Py_ssize_t n_r = p.shape[0]
    cdef Py_ssize_t n_c = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double m
    for i in range(n_r):
        for j in range(n_c):
            m = fabs(p[i, j]) * ratio[j]
            if m > 1.0:
                p[i, j] /= m


def project_l2_rows(double[:, ::1] p):
    cdef Py_ssize_t n_r = p.shape[0]
    cdef Py_ssize_t n_c = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, nrm
    for i in range(n_r):
        acc = 0.0
        for j in range(n_c):
            acc += p[i, j] * p[i, j]
        nrm = sqrt(acc)
        if nrm > 1.0:
            for j in range(n_c):
                p[i, j] /= nrm


def axpy_project_l2(double[:, ::1] p, double[:, ::1] q, double sigma):
    cdef Py_ssize_t n_r = p.shape[0]
    cdef Py_ssize_t n_c = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, nrm, v
    for i in range(n_r):
        acc = 0.0
        for j in range(n_c):
            v = p[i, j] + sigma * q[i, j]
            p[i, j] = v
            acc += v * v
        nrm = sqrt(acc)
        if nrm > 1.0:
            for j in range(n_c):
                p[i, j] /= nrm


def q2_scatter(double[:, ::1] sx, double[:, ::1] sy, double[:, ::1] st,
               long long[::1] n0, long long[::1] n1,
               double[:, :, :, :, ::1] out):
    cdef Py_ssize_t n_s = out.shape[0]
    cdef Py_ssize_t n_q = out.shape[1]
    cdef Py_ssize_t j, l, i
    cdef double a0, a1, b0, b1, t0, t1
    for j in range(n_s):
        for l in range(n_q):
            a0 = sx[j, l]
            a1 = sx[j + 1, l]
            b0 = sy[j, l]
            b1 = sy[j + 1, l]
            t0 = st[j, n0[l]]
            t1 = st[j, n1[l]]
            for i in range(2):
                out[j, l, i, 0, 0] = a0
                out[j, l, i, 1, 0] = a1
                out[j, l, i, 0, 1] = b0
                out[j, l, i, 1, 1] = b1
            out[j, l, 0, 0, 2] = t0
            out[j, l, 0, 1, 2] = t0
            out[j, l, 1, 0, 2] = t1
            out[j, l, 1, 1, 2] = t1


def q2_gather(double[:, :, :, :, ::1] vals, double[:, ::1] w2,
              long long[::1] n0, long long[::1] n1,
              double[:, ::1] out_qx, double[:, ::1] out_qy, double[:, ::1] out_qt):
    cdef Py_ssize_t n_s = vals.shape[0]
    cdef Py_ssize_t n_q = vals.shape[1]
    cdef Py_ssize_t n_v = out_qt.shape[1]
    cdef Py_ssize_t j, l, i
    cdef double w, x0, x1, y0, y1
    for j in range(n_s + 1):
        for l in range(n_q):
            out_qx[j, l] = 0.0
            out_qy[j, l] = 0.0
    for j in range(n_s):
        for i in range(n_v):
            out_qt[j, i] = 0.0
    for j in range(n_s):
        for l in range(n_q):
            w = w2[j, l]
            x0 = w * (vals[j, l, 0, 0, 0] + vals[j, l, 1, 0, 0])
            x1 = w * (vals[j, l, 0, 1, 0] + vals[j, l, 1, 1, 0])
            y0 = w * (vals[j, l, 0, 0, 1] + vals[j, l, 1, 0, 1])
            y1 = w * (vals[j, l, 0, 1, 1] + vals[j, l, 1, 1, 1])
            out_qx[j, l] += x0
            out_qx[j + 1, l] += x1
            out_qy[j, l] += y0
            out_qy[j + 1, l] += y1
            out_qt[j, n0[l]] += w * (vals[j, l, 0, 0, 2] + vals[j, l, 0, 1, 2])
            out_qt[j, n1[l]] += w * (vals[j, l, 1, 0, 2] + vals[j, l, 1, 1, 2])


def q2_weighted_tv(double[:, :, :, :, ::1] vals, double[:, ::1] w2):
    cdef Py_ssize_t n_s = vals.shape[0]
    cdef Py_ssize_t n_q = vals.shape[1]
    cdef Py_ssize_t j, l, i, s
    cdef double total = 0.0
    cdef double acc
    for j in range(n_s):
        for l in range(n_q):
            acc = 0.0
            for i in range(2):
                for s in range(2):
                    acc += sqrt(vals[j, l, i, s, 0] * vals[j, l, i, s, 0]
                                + vals[j, l, i, s, 1] * vals[j, l, i, s, 1]
                                + vals[j, l, i, s, 2] * vals[j, l, i, s, 2])
            total += w2[j, l] * acc
    return total

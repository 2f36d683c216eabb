# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled conv3x3 kernels: same-padded 3x3 cross-correlation and its gradients."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv3x3_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0]
    out = np.empty((n, cout, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t s, co, ci, i, j, u, v, ii, jj
    cdef double acc
    for s in range(n):
        for co in range(cout):
            for i in range(h):
                for j in range(wd):
                    acc = b[co]
                    for ci in range(cin):
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if jj < 0 or jj >= wd:
                                    continue
                                acc += x[s, ci, ii, jj] * w[co, ci, u, v]
                    y[s, co, i, j] = acc
    return out


def conv3x3_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                     double[:, :, :, ::1] gout):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0]
    gx_arr = np.zeros((n, cin, h, wd), dtype=np.float64)
    gw_arr = np.zeros((cout, cin, 3, 3), dtype=np.float64)
    gb_arr = np.zeros(cout, dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t s, co, ci, i, j, u, v, ii, jj
    cdef double g
    for s in range(n):
        for co in range(cout):
            for i in range(h):
                for j in range(wd):
                    g = gout[s, co, i, j]
                    gb[co] += g
                    for ci in range(cin):
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if jj < 0 or jj >= wd:
                                    continue
                                gw[co, ci, u, v] += g * x[s, ci, ii, jj]
                                gx[s, ci, ii, jj] += g * w[co, ci, u, v]
    return gx_arr, gw_arr, gb_arr

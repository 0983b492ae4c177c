# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Neumann shooting and P1 element assembly.

Mirrors the signatures in ``fallback.py``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def shoot_defect(cnp.ndarray[cnp.float64_t, ndim=1] v_stage, double alpha):
    cdef Py_ssize_t nsteps = (v_stage.shape[0] - 1) // 2
    cdef double dn = 2.0 / nsteps
    cdef double h = 1.0, hp = 0.0, hmax = 1.0
    cdef double v0, vh, v1
    cdef double k1y, k1p, k2y, k2p, k3y, k3p, k4y, k4p
    cdef Py_ssize_t i
    cdef double[:] v = v_stage
    for i in range(nsteps):
        v0 = alpha * v[2 * i]
        vh = alpha * v[2 * i + 1]
        v1 = alpha * v[2 * i + 2]
        k1y = hp
        k1p = v0 * h
        k2y = hp + 0.5 * dn * k1p
        k2p = vh * (h + 0.5 * dn * k1y)
        k3y = hp + 0.5 * dn * k2p
        k3p = vh * (h + 0.5 * dn * k2y)
        k4y = hp + dn * k3p
        k4p = v1 * (h + dn * k3y)
        h += dn * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        hp += dn * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        if h > hmax:
            hmax = h
        elif -h > hmax:
            hmax = -h
    return h, hp, hmax


def assemble_p1(cnp.ndarray[cnp.float64_t, ndim=3] xy,
                cnp.ndarray[cnp.float64_t, ndim=2] cvals,
                cnp.ndarray[cnp.float64_t, ndim=2] lam,
                cnp.ndarray[cnp.float64_t, ndim=1] w):
    cdef Py_ssize_t nt = xy.shape[0]
    cdef Py_ssize_t nq = w.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ke = np.zeros((nt, 3, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] me = np.zeros((nt, 3, 3))
    cdef double det, area, gdot, acc
    cdef double g[3][2]
    cdef double ll[3][3]
    cdef Py_ssize_t t, i, j, q

    # quadrature tensor w_q * lam_qi * lam_qj (shared across elements)
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for q in range(nq):
                acc += w[q] * lam[q, i] * lam[q, j]
            ll[i][j] = acc

    for t in range(nt):
        det = ((xy[t, 1, 0] - xy[t, 0, 0]) * (xy[t, 2, 1] - xy[t, 0, 1])
               - (xy[t, 1, 1] - xy[t, 0, 1]) * (xy[t, 2, 0] - xy[t, 0, 0]))
        area = 0.5 * det if det > 0 else -0.5 * det
        g[0][0] = (xy[t, 1, 1] - xy[t, 2, 1]) / det
        g[0][1] = (xy[t, 2, 0] - xy[t, 1, 0]) / det
        g[1][0] = (xy[t, 2, 1] - xy[t, 0, 1]) / det
        g[1][1] = (xy[t, 0, 0] - xy[t, 2, 0]) / det
        g[2][0] = (xy[t, 0, 1] - xy[t, 1, 1]) / det
        g[2][1] = (xy[t, 1, 0] - xy[t, 0, 0]) / det
        for i in range(3):
            for j in range(3):
                gdot = g[i][0] * g[j][0] + g[i][1] * g[j][1]
                acc = 0.0
                for q in range(nq):
                    acc += cvals[t, q] * w[q] * lam[q, i] * lam[q, j]
                ke[t, i, j] = area * (gdot + acc)
                me[t, i, j] = area * ll[i][j]
    return ke, me


IMPLEMENTATION = "cython"

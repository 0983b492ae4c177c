"""Pure-numpy implementations of the hot kernels.

Used automatically when the compiled extension is unavailable (or when
CURVEWELL_NO_EXT is set).  Signatures must match ``_core.pyx`` exactly.
"""

import numpy as np


def shoot_defect(v_stage, alpha):
    """Neumann shooting for -h'' + alpha*V h = 0 on [-1, 1].

    ``v_stage`` holds V sampled on the refined grid of 2N+1 points (RK4 stage
    points for N uniform steps).  Returns (h(1), h'(1), max|h|) for the
    solution with h(-1) = 1, h'(-1) = 0.
    """
    v = alpha * np.asarray(v_stage, dtype=float)
    nsteps = (len(v) - 1) // 2
    dn = 2.0 / nsteps
    h, hp = 1.0, 0.0
    hmax = 1.0
    for i in range(nsteps):
        v0 = v[2 * i]
        vh = v[2 * i + 1]
        v1 = v[2 * i + 2]
        k1y, k1p = hp, v0 * h
        k2y, k2p = hp + 0.5 * dn * k1p, vh * (h + 0.5 * dn * k1y)
        k3y, k3p = hp + 0.5 * dn * k2p, vh * (h + 0.5 * dn * k2y)
        k4y, k4p = hp + dn * k3p, v1 * (h + dn * k3y)
        h += dn * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        hp += dn * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        if abs(h) > hmax:
            hmax = abs(h)
    return h, hp, hmax


def assemble_p1(xy, cvals, lam, w):
    """Element matrices for P1 triangles.

    xy    : (nt, 3, 2) vertex coordinates
    cvals : (nt, nq) reaction coefficient at the quadrature points
    lam   : (nq, 3) barycentric coordinates of the quadrature rule
    w     : (nq,) weights summing to 1

    Returns (ke, me) with shapes (nt, 3, 3): stiffness-plus-reaction and
    consistent mass element matrices.
    """
    xy = np.asarray(xy, dtype=float)
    cvals = np.asarray(cvals, dtype=float)
    lam = np.asarray(lam, dtype=float)
    w = np.asarray(w, dtype=float)

    d1 = xy[:, 1] - xy[:, 0]
    d2 = xy[:, 2] - xy[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)

    # gradients of barycentric basis functions
    g = np.empty((xy.shape[0], 3, 2))
    g[:, 0, 0] = xy[:, 1, 1] - xy[:, 2, 1]
    g[:, 0, 1] = xy[:, 2, 0] - xy[:, 1, 0]
    g[:, 1, 0] = xy[:, 2, 1] - xy[:, 0, 1]
    g[:, 1, 1] = xy[:, 0, 0] - xy[:, 2, 0]
    g[:, 2, 0] = xy[:, 0, 1] - xy[:, 1, 1]
    g[:, 2, 1] = xy[:, 1, 0] - xy[:, 0, 0]
    g /= det[:, None, None]

    ke = np.einsum("tia,tja,t->tij", g, g, area)
    lamlam = np.einsum("q,qi,qj->qij", w, lam, lam)
    ke += np.einsum("tq,qij,t->tij", cvals, lamlam, area)
    me = np.einsum("qij,t->tij", lamlam, area)
    return ke, me


IMPLEMENTATION = "python"

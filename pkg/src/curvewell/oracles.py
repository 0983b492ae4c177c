"""Independent reference spectra for rotationally symmetric benchmarks.

For a radial confinement W(rho) and a circular interface of radius R the 2D
problems separate into angular modes m.  Each mode's eigenvalues are found by
two-sided shooting: integrate the regular solution outward from 0 and the
Dirichlet solution inward from the truncation radius, and locate zeros of a
matching determinant at rho = R.  Transmission conditions (the limit
operator) enter as a jump in the determinant; the eps-layer potential enters
as an extra piecewise term.  None of this shares code with the 2D FEM path.
"""

from bisect import insort
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import jn_zeros

from .errors import InputError, NumericalError
from .profiles import PotentialProfile


def oscillator_eigenvalues(count: int) -> np.ndarray:
    """Lowest eigenvalues of -Laplace + |x|^2 in 2D: 2(n+1), multiplicity n+1."""
    vals = []
    n = 0
    while len(vals) < count:
        vals.extend([2.0 * (n + 1)] * (n + 1))
        n += 1
    return np.asarray(vals[:count])


def disk_dirichlet_eigenvalues(count: int, radius: float = 1.0) -> np.ndarray:
    """Lowest Dirichlet eigenvalues of the disk: (j_{m,k}/R)^2."""
    vals: List[float] = []
    for m in range(count + 1):
        for z in jn_zeros(m, count):
            lam = (z / radius) ** 2
            for _ in range(1 if m == 0 else 2):
                insort(vals, lam)
    return np.asarray(vals[:count])


@dataclass(frozen=True)
class RadialModel:
    """One angular mode of a rotationally symmetric operator.

    ``q`` is the full radial potential W(rho) + layer terms; ``jump`` is an
    optional (theta, upsilon) transmission condition at ``radius``.
    """

    q: Callable
    radius: float
    rho_max: float
    m: int = 0
    jump: Optional[Tuple[float, float]] = None
    breakpoints: Tuple[float, ...] = ()
    base_step: float = 4e-3
    dirichlet_side: Optional[int] = None   # -1: disk f(R)=0; +1: annulus

    def effective(self, rho, lam):
        rho = np.asarray(rho, dtype=float)
        out = self.q(rho) - lam
        if self.m:
            out = out + self.m ** 2 / rho ** 2
        return out


def heps_radial_model(radius, epsilon, profile: PotentialProfile, w_of_rho,
                      rho_max, m=0):
    """Radial reduction of -Laplace + W + V_eps on a circle of ``radius``.

    Requires an s-independent transverse profile (U constant along the
    curve); U is evaluated at s=0.
    """
    def q(rho):
        rho = np.asarray(rho, dtype=float)
        n = (rho - radius) / epsilon
        inside = np.abs(n) <= 1.0
        nc = np.clip(n, -1.0, 1.0)
        layer = profile.V(nc) / epsilon ** 2 + profile.U(0.0, nc) / epsilon
        return w_of_rho(rho) + np.where(inside, layer, 0.0)

    return RadialModel(q=q, radius=radius, rho_max=rho_max, m=m,
                       breakpoints=(radius - epsilon, radius + epsilon))


def limit_radial_model(radius, theta, upsilon, w_of_rho, rho_max, m=0):
    """Radial reduction of the transmission-condition limit operator."""
    return RadialModel(q=lambda rho: w_of_rho(np.asarray(rho, dtype=float)),
                       radius=radius, rho_max=rho_max, m=m,
                       jump=(float(theta), float(upsilon)))


def dirichlet_radial_model(radius, w_of_rho, rho_max, m=0, side=-1):
    """Radial model of one side of the Dirichlet split (f(R)=0)."""
    return RadialModel(q=lambda rho: w_of_rho(np.asarray(rho, dtype=float)),
                       radius=radius, rho_max=rho_max, m=m,
                       dirichlet_side=side)


def radial_fem_matrices(grid, q):
    """P1 finite elements for the radial form of -Laplace + q in 2D.

    Weak form with the polar weight: a(f,g) = int rho (f'g' + q f g),
    m(f,g) = int rho f g on the given (possibly graded) grid.  No boundary
    conditions are applied; callers drop rows/columns as needed.  This is a
    second, quadrature-based oracle independent of the shooting path.
    """
    import scipy.sparse as sp

    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3 or np.any(np.diff(grid) <= 0):
        raise InputError("radial grid must be strictly increasing")
    n = len(grid)
    a, b = grid[:-1], grid[1:]
    h = b - a
    gx = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
    gw = np.array([5.0, 8.0, 5.0]) / 9.0
    rows, cols, kv, mv = [], [], [], []
    idx = np.arange(n - 1)
    for x_ref, w_ref in zip(gx, gw):
        x = 0.5 * (a + b) + 0.5 * h * x_ref
        w = 0.5 * h * w_ref * x          # includes the rho weight
        qx = np.asarray(q(x), dtype=float)
        qx = np.broadcast_to(qx, x.shape)
        p = ((b - x) / h, (x - a) / h)
        g = (-1.0 / h, 1.0 / h)
        for i0 in (0, 1):
            for i1 in (0, 1):
                rows.append(idx + i0)
                cols.append(idx + i1)
                kv.append(w * (g[i0] * g[i1] + qx * p[i0] * p[i1]))
                mv.append(w * p[i0] * p[i1])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    K = sp.coo_matrix((np.concatenate(kv), (rows, cols)),
                      shape=(n, n)).tocsr()
    M = sp.coo_matrix((np.concatenate(mv), (rows, cols)),
                      shape=(n, n)).tocsr()
    return K, M


def _segment_steps(model, a, b, lam_max):
    # resolve the local oscillation/decay scale of the solution
    qmax = float(np.max(np.abs(model.effective(
        np.linspace(max(min(a, b), 1e-6), max(a, b), 64), lam_max))))
    h = min(model.base_step, 0.35 / np.sqrt(qmax + 1.0))
    return max(8, int(np.ceil(abs(b - a) / h)))


def _rk4_radial(model, lams, a, b, y0):
    """Advance (f, f') for every lambda in ``lams`` from rho=a to rho=b."""
    lams = np.asarray(lams, dtype=float)
    f, g = (np.broadcast_to(y0[0], lams.shape).astype(float).copy(),
            np.broadcast_to(y0[1], lams.shape).astype(float).copy())
    pts = sorted({a, b, *[p for p in model.breakpoints
                          if min(a, b) < p < max(a, b)]}, reverse=a > b)
    lam_max = float(np.max(lams))
    for lo, hi in zip(pts[:-1], pts[1:]):
        nsteps = _segment_steps(model, lo, hi, lam_max)
        h = (hi - lo) / nsteps
        rho = lo
        # keep stage evaluations strictly inside the segment so piecewise
        # potentials are never sampled on the wrong side of a breakpoint
        eps_clip = 1e-9 * abs(hi - lo)
        r_lo, r_hi = min(lo, hi) + eps_clip, max(lo, hi) - eps_clip

        def rhs(r, ff, gg):
            r = min(max(r, r_lo), r_hi)
            return gg, model.effective(r, lams) * ff - gg / r

        for _ in range(nsteps):
            k1f, k1g = rhs(rho, f, g)
            k2f, k2g = rhs(rho + h / 2, f + h / 2 * k1f, g + h / 2 * k1g)
            k3f, k3g = rhs(rho + h / 2, f + h / 2 * k2f, g + h / 2 * k2g)
            k4f, k4g = rhs(rho + h, f + h * k3f, g + h * k3g)
            f = f + h / 6 * (k1f + 2 * k2f + 2 * k3f + k4f)
            g = g + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
            rho += h
            scale = np.maximum(np.abs(f), np.abs(g))
            big = scale > 1e120
            if np.any(big):
                f = np.where(big, f / scale, f)
                g = np.where(big, g / scale, g)
    return f, g


def matching_determinant(model: RadialModel, lams) -> np.ndarray:
    """Zero exactly at the eigenvalues of the radial mode."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    R = model.radius
    side = model.dirichlet_side

    def left():
        # series start f ~ rho^m (1 + c rho^2), c = (q - lam)/(4(m+1)),
        # safely away from the coordinate singularity at rho = 0
        rho0 = min(0.05, R / 20.0)
        m = model.m
        c = (model.q(np.array([rho0]))[0] - lams) / (4.0 * (m + 1))
        f0 = rho0 ** m * (1.0 + c * rho0 ** 2)
        g0 = m * rho0 ** max(m - 1, 0) * np.ones_like(lams) \
            + (m + 2) * c * rho0 ** (m + 1)
        if m == 0:
            g0 = 2.0 * c * rho0
        return _rk4_radial(model, lams, rho0, R, (f0, g0))

    def right():
        return _rk4_radial(model, lams, model.rho_max, R, (0.0, -1.0))

    if side == -1:                     # inner Dirichlet disk: f(R) = 0
        fL, _ = left()
        return fL
    if side == 1:                      # annulus R..rho_max, Dirichlet both ends
        fR, _ = right()
        return fR
    fL, gL = left()
    fR, gR = right()
    if model.jump is None:
        det = fL * gR - gL * fR
    else:
        theta, ups = model.jump
        det = theta ** 2 * fL * gR - gL * fR - ups * fL * fR
    norm = np.maximum.reduce([np.abs(fL), np.abs(gL),
                              np.abs(fR), np.abs(gR)])
    return det / np.where(norm > 0, norm, 1.0)


def radial_eigenvalues(model: RadialModel, lam_window, num_scan: int = 300,
                       xtol: float = 1e-10) -> List[float]:
    """Eigenvalues of one radial mode inside ``lam_window`` by scan + bisection."""
    lo, hi = lam_window
    if not lo < hi:
        raise InputError("lam_window must be an increasing pair")
    grid = np.linspace(lo, hi, num_scan)
    det = matching_determinant(model, grid)
    if not np.all(np.isfinite(det)):
        raise NumericalError("radial shooting produced non-finite determinant")
    sign_change = det[:-1] * det[1:] < 0
    a = grid[:-1][sign_change]
    b = grid[1:][sign_change]
    fa = det[:-1][sign_change]
    if len(a) == 0:
        return [float(g) for g, d in zip(grid, det) if d == 0.0]
    # vectorized bisection: one integration sweep per iteration for all roots
    iters = int(np.ceil(np.log2((hi - lo) / num_scan / xtol))) + 1
    for _ in range(iters):
        mid = 0.5 * (a + b)
        fm = matching_determinant(model, mid)
        left_half = fa * fm < 0
        b = np.where(left_half, mid, b)
        a = np.where(left_half, a, mid)
        fa = np.where(left_half, fa, fm)
    return [float(r) for r in 0.5 * (a + b)]


def radial_spectrum(model_for_mode: Callable, lam_window, m_max: int = 6,
                    num_scan: int = 300) -> np.ndarray:
    """Sorted union over angular modes 0..m_max with multiplicity 2 for m>0.

    ``model_for_mode(m)`` returns the RadialModel of mode m.
    """
    vals: List[float] = []
    for m in range(m_max + 1):
        for lam in radial_eigenvalues(model_for_mode(m), lam_window,
                                      num_scan=num_scan):
            for _ in range(1 if m == 0 else 2):
                insort(vals, lam)
    return np.asarray(vals)

"""Quasimodes from limit eigenpairs and the eps-convergence harness.

A limit eigenpair (lambda, u) is turned into an approximate eigenfunction of
the eps-dependent operator: inside the layer the matched expansion
v0 + eps*v1 + eps^2*v2 in scaled transverse profiles, outside the layer the
limit eigenfunction with a cutoff correction that removes the value and
normal-derivative mismatches at the layer boundary.  The discrete residual
||(K - lambda M) v|| / ||v|| certifies an eigenvalue of the assembled
operator within that distance.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sparse
from matplotlib.path import Path
from scipy.interpolate import (CloughTocher2DInterpolator, CubicSpline,
                               NearestNDInterpolator, RegularGridInterpolator)
from scipy.sparse.linalg import eigsh, splu

from .assembly import (ModelConfig, OperatorMatrices, assemble_dirichlet_split,
                       assemble_heps, assemble_limit)
from .errors import ConfigError, ContractError, InputError
from .eigensolve import SpectralResult, solve_lowest
from .geometry import CurveFrame, TubularMap, fourier_derivative
from .meshing import InterfaceMesh, MeshParams, build_mesh
from .oracles import radial_fem_matrices
from .profiles import PotentialProfile
from .resonance import (HalfBoundState, TransmissionData, compute_transmission,
                        detect_resonance, solve_h1, stage_grid, _rk4_staged)


# ----------------------------------------------------------------------------
# limit-field access


def _periodic_spline(s_grid, values, period):
    s = np.append(s_grid, period)
    v = np.concatenate([values, values[:1]])
    return CubicSpline(s, v, bc_type="periodic")


@dataclass
class SideInterpolators:
    """Smooth (C^1) evaluation of a limit nodal field on each side.

    Clough-Tocher interpolation rather than piecewise-linear: resampling a
    P1 field onto a second, non-matching mesh would scatter its gradient
    kinks into the interiors of the target elements, which the discrete
    strong residual ||K v - lambda M v||_{M^-1} amplifies by 1/h.
    """

    minus: Callable
    plus: Callable

    @classmethod
    def from_limit_field(cls, mesh: InterfaceMesh, nodal: np.ndarray):
        out = []
        for side in (-1, 1):
            ids = np.unique(mesh.triangles[mesh.tri_side == side])
            pts = mesh.nodes[ids]
            lin = CloughTocher2DInterpolator(pts, nodal[ids])
            near = NearestNDInterpolator(pts, nodal[ids])

            def ev(x, lin=lin, near=near):
                v = lin(x)
                bad = ~np.isfinite(v)
                if np.any(bad):
                    v[bad] = near(np.atleast_2d(x)[bad])
                return v

            out.append(ev)
        return cls(minus=out[0], plus=out[1])


@dataclass
class LimitTraces:
    """Interface traces of a limit eigenfunction on the frame's s grid."""

    s: np.ndarray
    u_minus: np.ndarray
    u_plus: np.ndarray
    du_minus: np.ndarray    # normal derivative from the minus side
    du_plus: np.ndarray     # normal derivative from the plus side

    def solvability_residual(self, trans: TransmissionData) -> float:
        """Max of theta*du+ - du- - Upsilon*u- relative to the trace scale."""
        ups = trans.upsilon_at(self.s)
        res = trans.theta * self.du_plus - self.du_minus - ups * self.u_minus
        scale = max(np.max(np.abs(self.du_minus)),
                    np.max(np.abs(self.du_plus)), 1e-30)
        return float(np.max(np.abs(res)) / scale)


def _one_sided_derivative(y0, y1, y2, a, b):
    """f'(0) from values at 0, a, b (quadratic through the three points)."""
    return (-y0 * (a + b) / (a * b) + y1 * b / (a * (b - a))
            - y2 * a / (b * (b - a)))


def extract_traces(mesh: InterfaceMesh, nodal: np.ndarray,
                   frame: CurveFrame) -> LimitTraces:
    """Interface values and one-sided normal derivatives of a limit field."""
    s_if = mesh.node_s[mesh.interface_minus]
    order = np.argsort(s_if, kind="stable")
    period = frame.length

    def column(ids):
        return nodal[ids][order]

    out = {}
    for side, tag in ((-1, "minus"), (1, "plus")):
        levels, rings = mesh.structured_rings(side)
        if len(levels) < 3:
            raise ContractError("mesh too coarse to extract derivative traces")
        y0 = column(rings[0])
        y1 = column(rings[1])
        y2 = column(rings[2])
        a, b = abs(levels[1]), abs(levels[2])
        d = _one_sided_derivative(y0, y1, y2, a, b)
        if side < 0:
            d = -d          # moving to ring 1 goes against the normal
        out[f"u_{tag}"] = y0
        out[f"du_{tag}"] = d

    splines = {k: _periodic_spline(s_if[order], v, period)
               for k, v in out.items()}
    s = frame.s
    return LimitTraces(s=s,
                       u_minus=splines["u_minus"](s),
                       u_plus=splines["u_plus"](s),
                       du_minus=splines["du_minus"](s),
                       du_plus=splines["du_plus"](s))


# ----------------------------------------------------------------------------
# transverse profiles


@dataclass
class LayerProfiles:
    """v0, v1, v2 and their n-derivatives sampled on s x n grids."""

    s: np.ndarray
    n: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    dn_v0: np.ndarray
    dn_v1: np.ndarray
    dn_v2: np.ndarray
    v1_end_defect: float     # |dn v1(s,1) - du_plus*theta-consistency| measure

    def vhat(self, eps):
        return self.v0 + eps * self.v1 + eps ** 2 * self.v2

    def dn_vhat(self, eps):
        return self.dn_v0 + eps * self.dn_v1 + eps ** 2 * self.dn_v2


def _solve_profiles(profile: PotentialProfile, state: HalfBoundState,
                    frame: CurveFrame, traces: LimitTraces, lam: float,
                    W: Callable, num_points: int = 513) -> LayerProfiles:
    """Integrate the v1/v2 transverse problems for every s simultaneously."""
    s = frame.s
    kappa = frame.kappa
    n_stage = stage_grid(num_points)
    n_grid = n_stage[::2]
    v_stage = profile.V(n_stage)
    h_stage = state.h_at(n_stage)
    hp_stage = state.hp_at(n_stage)
    u_stage = profile.U(s[:, None], n_stage[None, :])

    um = traces.u_minus
    upp = fourier_derivative(um, frame.length, order=2)
    w_gamma = W(frame.points[:, 0], frame.points[:, 1])

    h_n = h_stage[::2]
    hp_n = hp_stage[::2]
    if state.resonant:
        v0_n = np.outer(um, h_n)                     # (ns, nn)
        dn_v0_n = np.outer(um, hp_n)

        # v2 needs v1 along the path: integrate the joint system
        def rhs_joint(j, y):
            v1, p1, v2, p2 = y
            # the frame's kappa is signed so that J = 1 - r*kappa is the
            # tubular Jacobian with the normal pointing to the plus side
            r1 = -kappa * um * hp_stage[j] - u_stage[:, j] * um * h_stage[j]
            r2 = (-kappa * p1 - u_stage[:, j] * v1
                  + upp * h_stage[j]
                  - n_stage[j] * kappa ** 2 * um * hp_stage[j]
                  + (lam - w_gamma) * um * h_stage[j])
            return np.stack([p1,
                             v_stage[j] * v1 - r1,
                             p2,
                             v_stage[j] * v2 - r2])

        y0j = np.stack([np.zeros_like(s), traces.du_minus,
                        np.zeros_like(s), np.zeros_like(s)])
        v1_n, dn_v1_n, v2_n, dn_v2_n = _staged_path(rhs_joint, y0j,
                                                    num_points)
        end_defect = float(np.max(np.abs(
            dn_v1_n[:, -1] - traces.du_plus)) /
            (np.max(np.abs(traces.du_plus)) + 1e-30))
    else:
        # v0 = 0; v1 from the two-point Neumann problem via the fundamental
        # solutions h (Neumann start) and h1 (Dirichlet start)
        h1 = solve_h1(profile, num_points=num_points)
        h1_n = h1.values
        h1p_n = h1.deriv
        c2 = traces.du_minus
        c1 = (traces.du_plus - c2 * h1p_n[-1]) / state.defect
        v0_n = np.zeros((len(s), len(n_grid)))
        dn_v0_n = np.zeros_like(v0_n)
        v1_n = np.outer(c1, h_n) + np.outer(c2, h1_n)
        dn_v1_n = np.outer(c1, hp_n) + np.outer(c2, h1p_n)
        h1_stage = h1(n_stage)
        h1p_stage = h1.derivative(n_stage)

        def rhs2n(j, y):
            v2, p2 = y
            v1j = c1 * h_stage[j] + c2 * h1_stage[j]
            p1j = c1 * hp_stage[j] + c2 * h1p_stage[j]
            r2 = -kappa * p1j - u_stage[:, j] * v1j
            return np.stack([p2, v_stage[j] * v2 - r2])

        y0 = np.stack([np.zeros_like(s), np.zeros_like(s)])
        v2_n, dn_v2_n = _staged_path(rhs2n, y0, num_points)
        end_defect = 0.0

    return LayerProfiles(s=s, n=n_grid, v0=v0_n, v1=v1_n, v2=v2_n,
                         dn_v0=dn_v0_n, dn_v1=dn_v1_n, dn_v2=dn_v2_n,
                         v1_end_defect=end_defect)


def _staged_path(rhs, y0, num_points):
    """RK4 over the stage grid recording the two components at grid nodes."""
    ns = y0.shape[1]
    nn = num_points
    outs = [np.zeros((ns, nn)) for _ in range(y0.shape[0])]
    y = y0.copy()
    for k in range(y0.shape[0]):
        outs[k][:, 0] = y0[k]
    h = 2.0 / (nn - 1)
    for i in range(nn - 1):
        j = 2 * i
        k1 = rhs(j, y)
        k2 = rhs(j + 1, y + 0.5 * h * k1)
        k3 = rhs(j + 1, y + 0.5 * h * k2)
        k4 = rhs(j + 2, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        for k in range(y0.shape[0]):
            outs[k][:, i + 1] = y[k]
    return outs


# ----------------------------------------------------------------------------
# quasimode assembly


def smooth_cutoff(beta: float):
    """zeta with zeta=1 on [0, beta/2], zeta=0 outside [0, beta), C^2 blend."""

    def zeta(t):
        t = np.asarray(t, dtype=float)
        x = np.clip((t - beta / 2.0) / (beta / 2.0), 0.0, 1.0)
        s = 6 * x ** 5 - 15 * x ** 4 + 10 * x ** 3
        return np.where(t < 0, 0.0, 1.0 - s)

    return zeta


@dataclass
class Quasimode:
    """Approximate eigenfunction of the eps-operator built from a limit pair."""

    lam: float
    epsilon: float
    beta: float
    mesh: InterfaceMesh
    values: np.ndarray            # nodal field
    profiles: LayerProfiles
    jump_value: Tuple[float, float]      # max |value jump| at -eps, +eps
    jump_deriv: Tuple[float, float]      # max |derivative jump| at -eps, +eps
    solvability_residual: float
    resonant: bool
    zeta: Callable = field(repr=False, default=None)


def build_quasimode(limit_pair, frame: CurveFrame, profile: PotentialProfile,
                    state: HalfBoundState, trans: Optional[TransmissionData],
                    limit_mesh: InterfaceMesh, limit_nodal: np.ndarray,
                    mesh: InterfaceMesh, W: Callable,
                    beta: Optional[float] = None,
                    num_points: int = 513,
                    solvability_tol: float = 0.2) -> Quasimode:
    """Assemble the matched quasimode field on the layer mesh ``mesh``.

    ``limit_pair`` is (lambda, dof-vector-expanded nodal field is
    ``limit_nodal`` on ``limit_mesh``).  For resonant profiles ``trans`` must
    be the transmission data used for the limit operator; the limit pair's
    transmission-condition residual is checked against ``solvability_tol``.
    """
    lam = float(limit_pair[0])
    eps = mesh.epsilon
    if eps is None:
        raise ContractError("quasimode assembly needs a layer-mode mesh")
    eps_star = frame.eps_star
    if beta is None:
        beta = 0.4 * eps_star
    if not 2.0 * beta < eps_star:
        raise ConfigError("cutoff radius beta must satisfy 2*beta < eps_star")

    traces = extract_traces(limit_mesh, limit_nodal, frame)
    if state.resonant:
        if trans is None:
            raise ContractError("transmission data required in resonant case")
        solv = traces.solvability_residual(trans)
        if solv > solvability_tol:
            raise ContractError(
                f"limit pair violates the transmission condition "
                f"(residual {solv:.3g} > {solvability_tol:g}); "
                "v1 problem is not solvable")
    else:
        solv = 0.0

    prof = _solve_profiles(profile, state, frame, traces, lam, W,
                           num_points=num_points)
    interp = SideInterpolators.from_limit_field(limit_mesh, limit_nodal)
    zeta = smooth_cutoff(beta)

    # jump data on the frame s grid
    s = frame.s
    pts_p = frame.points + eps * frame.normal
    pts_m = frame.points - eps * frame.normal
    fd = 0.35 * min(mesh.params.target_h, 0.2 * eps_star)
    nu = frame.normal
    u_p = interp.plus(pts_p)
    u_m = interp.minus(pts_m)
    du_p = (interp.plus(pts_p + fd * nu) - interp.plus(pts_p - fd * nu)) \
        / (2 * fd)
    du_m = (interp.minus(pts_m + fd * nu) - interp.minus(pts_m - fd * nu)) \
        / (2 * fd)

    vhat = prof.vhat(eps)
    dn_vhat = prof.dn_vhat(eps)
    jump_p = u_p - vhat[:, -1]
    jump_m = u_m - vhat[:, 0]
    djump_p = du_p - dn_vhat[:, -1] / eps
    djump_m = -du_m + dn_vhat[:, 0] / eps    # d/dt with t = -r - eps

    period = frame.length
    sp = {k: _periodic_spline(s, v, period) for k, v in
          (("jp", jump_p), ("jm", jump_m), ("dp", djump_p), ("dm", djump_m))}

    # nodal assembly ---------------------------------------------------------
    nodes = mesh.nodes
    values = np.zeros(mesh.num_nodes)
    node_s = mesh.node_s.copy()
    node_r = mesh.node_r.copy()
    # tubular coordinates for fill nodes inside the cutoff band
    band = eps + beta
    tube = TubularMap(frame, min(0.95 * eps_star, band))
    fill = ~np.isfinite(node_r)
    if np.any(fill):
        s_f, r_f, ok = tube.classify(nodes[fill], slack=1.0)
        idx = np.flatnonzero(fill)
        node_s[idx[ok]] = s_f[ok]
        node_r[idx[ok]] = r_f[ok]

    minus_mask = Path(frame.points).contains_points(nodes)
    have_sr = np.isfinite(node_r)
    in_layer = have_sr & (np.abs(node_r) <= eps * (1 + 1e-12))

    # layer: interpolate vhat on (s, n)
    s_pad = np.append(prof.s, period)
    v_pad = np.vstack([vhat, vhat[:1]])
    grid = RegularGridInterpolator((s_pad, prof.n), v_pad,
                                   bounds_error=False, fill_value=None)
    nl = np.clip(node_r[in_layer] / eps, -1.0, 1.0)
    values[in_layer] = grid(
        np.column_stack([np.mod(node_s[in_layer], period), nl]))

    # off-layer: limit field minus the cutoff correction
    out = ~in_layer
    om = out & minus_mask
    op_ = out & ~minus_mask
    values[om] = interp.minus(nodes[om])
    values[op_] = interp.plus(nodes[op_])
    for mask, jsp, dsp, sgn in ((om, sp["jm"], sp["dm"], -1.0),
                                (op_, sp["jp"], sp["dp"], 1.0)):
        band_mask = mask & have_sr & (sgn * node_r > eps) \
            & (sgn * node_r <= band)
        t = sgn * node_r[band_mask] - eps
        sb = np.mod(node_s[band_mask], period)
        values[band_mask] -= zeta(t) * (jsp(sb) + t * dsp(sb))

    return Quasimode(
        lam=lam, epsilon=eps, beta=beta, mesh=mesh, values=values,
        profiles=prof,
        jump_value=(float(np.max(np.abs(jump_m))),
                    float(np.max(np.abs(jump_p)))),
        jump_deriv=(float(np.max(np.abs(djump_m))),
                    float(np.max(np.abs(djump_p)))),
        solvability_residual=solv, resonant=state.resonant, zeta=zeta)


def quasimode_residual(q: Quasimode, op: OperatorMatrices) -> float:
    """||(K - lambda M) v||_{M^-1} / ||v||_M for the assembled quasimode."""
    if op.mesh is not q.mesh:
        raise ContractError("quasimode and operator use different meshes")
    v = op.transform.T @ q.values
    K, M = op.K, op.M
    r = K @ v - q.lam * (M @ v)
    lu = splu(M.tocsc())
    num = float(np.sqrt(abs(r @ lu.solve(r))))
    den = float(np.sqrt(v @ (M @ v)))
    if den == 0.0:
        raise ContractError("quasimode vanishes on the mesh")
    return num / den


def certify_eigenvalue(op: OperatorMatrices, lam: float, delta: float,
                       k: int = 8):
    """Nearest discrete eigenvalue above lam - 1.5*delta (Prop-style check)."""
    res = solve_lowest(op, k, sigma=lam - 1.5 * delta - 1e-12)
    gaps = np.abs(res.eigenvalues - lam)
    i = int(np.argmin(gaps))
    return float(res.eigenvalues[i]), float(gaps[i])


# ----------------------------------------------------------------------------
# structured radial residual benchmark


@dataclass
class RadialQuasimodeReport:
    """Quasimode residual measured on the structured radial discretization."""

    epsilon: float
    lam_limit: float
    delta: float                  # ||(K - lam M)v||_{M^-1} / ||v||_M
    nearest: float                # nearest eps-spectrum point to lam_limit
    certificate_gap: float        # |nearest - lam_limit|, must be <= delta
    jump_value: Tuple[float, float]
    jump_deriv: Tuple[float, float]


def radial_quasimode_residual(frame: CurveFrame, profile: PotentialProfile,
                              state: HalfBoundState, trans: TransmissionData,
                              w_of_rho: Callable, eps: float,
                              rho_max: float = 5.0,
                              beta: Optional[float] = None,
                              num_points: int = 1025,
                              layer_cells: int = 400,
                              outer_h: float = 2.5e-3
                              ) -> RadialQuasimodeReport:
    """Quasimode residual for a circular frame on a fine 1D radial grid.

    The 2D unstructured P1 mesh carries an O(1) strong-residual consistency
    floor for any interpolated field, which hides the O(eps) accuracy of the
    quasimode construction.  On a structured radial grid the discrete
    operator is consistent, so the same construction (same transverse
    profile ODEs, same cutoff correction) exhibits the clean O(eps) decay.
    """
    R = frame.length / (2.0 * np.pi)
    # a circle with the plus side outward has kappa = -1/R in this frame
    if np.max(np.abs(frame.kappa + 1.0 / R)) > 1e-6 / R:
        raise InputError("the radial residual benchmark needs a circle "
                         "with the plus side outside")
    if not state.resonant and abs(state.defect) < 1e-12:
        raise InputError("degenerate resonance state")
    if beta is None:
        beta = 0.4 * frame.eps_star
    theta = trans.theta
    ups = float(np.mean(trans.upsilon_at(frame.s)))
    q_w = lambda rho: w_of_rho(np.asarray(rho, dtype=float))

    # limit eigenpair on split grids joined by the transmission condition
    gl = np.linspace(0.0, R, max(12, int(np.ceil(R / outer_h)) + 1))
    gr = np.linspace(R, rho_max,
                     max(12, int(np.ceil((rho_max - R) / outer_h)) + 1))
    Kl, Ml = radial_fem_matrices(gl, q_w)
    Kr, Mr = radial_fem_matrices(gr, q_w)
    n_left, n_right = len(gl), len(gr)
    Kfull = sparse.block_diag([Kl, Kr], format="csr")
    Mfull = sparse.block_diag([Ml, Mr], format="csr")
    # dofs: all left nodes, right nodes minus the interface copy (tied by
    # u+ = theta u-) and minus the Dirichlet node at rho_max
    ndof = n_left + n_right - 2
    rows = np.concatenate([np.arange(n_left), [n_left],
                           np.arange(n_left + 1, n_left + n_right - 1)])
    cols = np.concatenate([np.arange(n_left), [n_left - 1],
                           np.arange(n_left, ndof)])
    tv = np.concatenate([np.ones(n_left), [theta], np.ones(n_right - 2)])
    T = sparse.coo_matrix((tv, (rows, cols)),
                          shape=(n_left + n_right, ndof)).tocsr()
    Kc = (T.T @ Kfull @ T).tolil()
    Kc[n_left - 1, n_left - 1] += ups * R
    Kc = Kc.tocsr()
    Mc = (T.T @ Mfull @ T).tocsr()
    vals_l, vecs_l = eigsh(Kc, k=2, M=Mc, sigma=0.0, which="LM")
    i0 = int(np.argmin(vals_l))
    lam = float(vals_l[i0])
    x = vecs_l[:, i0]
    x = x / np.sqrt(x @ (Mc @ x))
    full = T @ x
    sl = CubicSpline(gl, full[:n_left])
    sr = CubicSpline(gr, full[n_left:])

    um, dum = float(sl(R)), float(sl(R, 1))
    up, dup = float(sr(R)), float(sr(R, 1))
    ns = len(frame.s)
    traces = LimitTraces(s=frame.s,
                         u_minus=np.full(ns, um), u_plus=np.full(ns, up),
                         du_minus=np.full(ns, dum), du_plus=np.full(ns, dup))
    W2 = lambda x_, y_: w_of_rho(np.hypot(x_, y_))
    prof = _solve_profiles(profile, state, frame, traces, lam, W2,
                           num_points=num_points)
    vh = prof.vhat(eps)[0]
    dvh = prof.dn_vhat(eps)[0]
    vhs = CubicSpline(prof.n, vh)

    # eps-dependent grid: layer boundaries are exact grid nodes
    g_in = np.linspace(0.0, R - eps,
                       max(12, int(np.ceil((R - eps) / outer_h)) + 1))
    g_lay = np.linspace(R - eps, R + eps, layer_cells + 1)
    g_out = np.linspace(R + eps, rho_max,
                        max(12, int(np.ceil((rho_max - R - eps) / outer_h))
                            + 1))
    grid = np.concatenate([g_in[:-1], g_lay, g_out[1:]])
    ia, ib = len(g_in) - 1, len(g_in) - 1 + layer_cells

    def q_full(rho):
        n = (np.asarray(rho, dtype=float) - R) / eps
        inside = np.abs(n) <= 1.0
        nc = np.clip(n, -1.0, 1.0)
        layer = profile.V(nc) / eps ** 2 + profile.U(0.0, nc) / eps
        return w_of_rho(rho) + np.where(inside, layer, 0.0)

    K, M = radial_fem_matrices(grid, q_full)
    zeta = smooth_cutoff(beta)
    val = np.empty(len(grid))
    val[ia:ib + 1] = vhs(np.clip((grid[ia:ib + 1] - R) / eps, -1.0, 1.0))
    jm = float(sl(R - eps)) - vh[0]
    dm = -float(sl(R - eps, 1)) + dvh[0] / eps       # d/dt with t = R-eps-rho
    jp = float(sr(R + eps)) - vh[-1]
    dp = float(sr(R + eps, 1)) - dvh[-1] / eps
    tl = (R - eps) - grid[:ia]
    val[:ia] = sl(grid[:ia]) - zeta(tl) * (jm + tl * dm)
    tr = grid[ib + 1:] - (R + eps)
    val[ib + 1:] = sr(grid[ib + 1:]) - zeta(tr) * (jp + tr * dp)

    Kd, Md = K[:-1, :-1].tocsc(), M[:-1, :-1].tocsc()
    v = val[:-1]
    r = Kd @ v - lam * (Md @ v)
    lu = splu(Md)
    delta = float(np.sqrt(abs(r @ lu.solve(r))) / np.sqrt(v @ (Md @ v)))
    vals_e, _ = eigsh(Kd, k=6, M=Md, sigma=lam, which="LM")
    nearest = float(vals_e[np.argmin(np.abs(vals_e - lam))])
    return RadialQuasimodeReport(
        epsilon=eps, lam_limit=lam, delta=delta, nearest=nearest,
        certificate_gap=abs(nearest - lam),
        jump_value=(abs(jm), abs(jp)), jump_deriv=(abs(dm), abs(dp)))


# ----------------------------------------------------------------------------
# convergence harness


@dataclass
class ConvergenceRow:
    eps: float
    lam_eps: float          # Richardson-extrapolated
    lam_coarse: float
    lam_fine: float
    overlap: float
    tracked: bool


@dataclass
class TrackedEigenvalue:
    index: int
    lam_limit: float
    rows: List[ConvergenceRow]
    c: Optional[float] = None
    p: Optional[float] = None
    flagged: bool = False

    def fit(self):
        pts = [(r.eps, abs(r.lam_eps - self.lam_limit))
               for r in self.rows if r.tracked]
        if len(pts) < 2:
            self.flagged = True
            return
        eps = np.array([p[0] for p in pts])
        err = np.maximum(np.array([p[1] for p in pts]), 1e-12)
        slope, intercept = np.polyfit(np.log(eps), np.log(err), 1)
        self.p = float(slope)
        self.c = float(np.exp(intercept))


@dataclass
class ConvergenceReport:
    resonant: bool
    theta: Optional[float]
    eps_list: List[float]
    tracked: List[TrackedEigenvalue]

    def write_csv(self, stream):
        stream.write("eps,index,lambda_eps,lambda_limit,gap,overlap\n")
        for t in self.tracked:
            for r in t.rows:
                stream.write(
                    f"{r.eps:.17g},{t.index},{r.lam_eps:.17g},"
                    f"{t.lam_limit:.17g},"
                    f"{abs(r.lam_eps - t.lam_limit):.17g},"
                    f"{r.overlap:.17g}\n")

    def to_json(self):
        return json.dumps({
            "resonant": self.resonant,
            "theta": self.theta,
            "eps_list": list(self.eps_list),
            "tracked": [
                {"index": t.index, "lambda_limit": t.lam_limit,
                 "c": t.c, "p": t.p, "flagged": t.flagged}
                for t in self.tracked],
        }, indent=2, sort_keys=True)

    def summary(self):
        lines = []
        for t in self.tracked:
            rate = "flagged" if t.flagged else f"p={t.p:.3f} c={t.c:.3g}"
            lines.append(f"eigenvalue {t.index}: limit {t.lam_limit:.6g} "
                         f"{rate}")
        return "\n".join(lines)


def _limit_reference(frame, profile, W, params, state, trans, k):
    """Limit spectra on coarse+fine meshes, Richardson values + fine fields."""
    results = []
    for p in (params, params.refined()):
        mesh = build_mesh(frame, p, epsilon=None, duplicate_interface=True)
        if state.resonant:
            op = assemble_limit(mesh, W, trans)
            res = solve_lowest(op, k, sigma=None)
            results.append((mesh, [(res, i) for i in range(k)]))
        else:
            minus, plus = assemble_dirichlet_split(mesh, W)
            rm = solve_lowest(minus, k, sigma=None)
            rp = solve_lowest(plus, k, sigma=None)
            merged = sorted(
                [(rm.eigenvalues[i], (rm, i)) for i in range(k)]
                + [(rp.eigenvalues[i], (rp, i)) for i in range(k)],
                key=lambda t: t[0])[:k]
            results.append((mesh, [t[1] for t in merged]))
    (mesh_c, pairs_c), (mesh_f, pairs_f) = results
    lam_c = np.array([r.eigenvalues[i] for r, i in pairs_c])
    lam_f = np.array([r.eigenvalues[i] for r, i in pairs_f])
    lam_limit = (4.0 * lam_f - lam_c) / 3.0
    fields = [r.nodal(i) for r, i in pairs_f]
    return lam_limit, mesh_f, fields


def _reference_fields(mesh_eps, frame, state, limit_mesh, limit_fields):
    """Cheap v0-level reference fields on the eps mesh, one per tracked pair."""
    nodes = mesh_eps.nodes
    eps = mesh_eps.epsilon
    minus_mask = Path(frame.points).contains_points(nodes)
    have_r = np.isfinite(mesh_eps.node_r)
    in_layer = have_r & (np.abs(mesh_eps.node_r) <= eps * (1 + 1e-12))
    period = frame.length
    refs = []
    for nodal in limit_fields:
        interp = SideInterpolators.from_limit_field(limit_mesh, nodal)
        ref = np.zeros(mesh_eps.num_nodes)
        om = ~in_layer & minus_mask
        op_ = ~in_layer & ~minus_mask
        ref[om] = interp.minus(nodes[om])
        ref[op_] = interp.plus(nodes[op_])
        if state.resonant:
            traces = extract_traces(limit_mesh, nodal, frame)
            usp = _periodic_spline(frame.s, traces.u_minus, period)
            sn = np.mod(mesh_eps.node_s[in_layer], period)
            nn = np.clip(mesh_eps.node_r[in_layer] / eps, -1.0, 1.0)
            ref[in_layer] = usp(sn) * state.h_at(nn)
        refs.append(ref)
    return refs


def _match_by_overlap(result: SpectralResult, refs, cluster_ids,
                      min_overlap=0.5):
    """Pick one solved eigenpair per reference by M-overlap.

    ``cluster_ids`` groups reference indices whose limit eigenvalues are
    (near-)degenerate; within a cluster the candidates are chosen by
    projection onto the reference span and paired to references in
    eigenvalue order.
    """
    op = result.operator
    M = op.M
    R = np.column_stack([op.transform.T @ r for r in refs])
    X = result.eigenvectors
    O = X.T @ (M @ R)                        # (k_solved, n_refs)
    norms = np.sqrt(np.einsum("ij,ij->j", R, M @ R))
    O = O / norms[None, :]
    chosen = {}
    used = set()
    for cluster in cluster_ids:
        block = O[:, cluster]
        score = np.sqrt(np.sum(block ** 2, axis=1))
        order = np.argsort(score)[::-1]
        picks = [i for i in order if i not in used][:len(cluster)]
        picks_sorted = sorted(picks, key=lambda i: result.eigenvalues[i])
        for ref_idx, cand in zip(cluster, picks_sorted):
            used.add(cand)
            chosen[ref_idx] = (cand, float(np.abs(O[cand, ref_idx])),
                               float(score[cand]) if len(cluster) > 1
                               else float(np.abs(O[cand, ref_idx])))
    out = []
    for j in range(len(refs)):
        cand, direct, proj = chosen[j]
        ov = proj
        out.append((cand, ov, ov >= min_overlap))
    return out


def _clusters_of(values, rel_tol=1e-3):
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[groups[-1][-1]] <= rel_tol * max(
                1.0, abs(values[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def run_convergence(frame: CurveFrame, profile: PotentialProfile,
                    W: Callable, eps_list, params: MeshParams, k: int = 3,
                    resonance_tol: float = 1e-6,
                    k_solve_extra: int = 6,
                    sigma_margin: float = 2.0) -> ConvergenceReport:
    """FEM eps-convergence study against the automatically chosen limit."""
    eps_list = sorted(float(e) for e in eps_list)[::-1]
    if not eps_list:
        raise InputError("eps_list must be non-empty")
    if eps_list[0] >= 0.5 * frame.eps_star:
        raise ConfigError("all eps must be below eps_star/2")

    state = detect_resonance(profile, tol=resonance_tol)
    trans = None
    if state.resonant:
        trans = compute_transmission(profile, state, frame.kappa, frame.s,
                                     frame.length)

    lam_limit, limit_mesh, limit_fields = _limit_reference(
        frame, profile, W, params, state, trans, k)
    clusters = _clusters_of(lam_limit)

    tracked = [TrackedEigenvalue(index=i, lam_limit=float(lam_limit[i]),
                                 rows=[]) for i in range(k)]
    sigma = float(lam_limit[0]) - sigma_margin

    for eps in eps_list:
        per_level = []
        for p in (params, params.refined()):
            mesh = build_mesh(frame, p, epsilon=eps)
            cfg = ModelConfig(frame=frame, profile=profile, W=W,
                              epsilon=eps, mesh_params=p)
            op = assemble_heps(mesh, cfg)
            res = solve_lowest(op, min(k + k_solve_extra, op.ndof - 1),
                               sigma=sigma)
            refs = _reference_fields(mesh, frame, state, limit_mesh,
                                     limit_fields)
            per_level.append(_matched_values(res, refs, clusters))
        coarse, fine = per_level
        for i in range(k):
            lam_c, ov_c, ok_c = coarse[i]
            lam_f, ov_f, ok_f = fine[i]
            ok = ok_c and ok_f
            tracked[i].rows.append(ConvergenceRow(
                eps=eps, lam_eps=(4.0 * lam_f - lam_c) / 3.0,
                lam_coarse=lam_c, lam_fine=lam_f,
                overlap=min(ov_c, ov_f), tracked=ok))

    for t in tracked:
        t.fit()
    return ConvergenceReport(resonant=state.resonant,
                             theta=state.theta if state.resonant else None,
                             eps_list=list(eps_list), tracked=tracked)


def _matched_values(result, refs, clusters):
    matches = _match_by_overlap(result, refs, clusters)
    return [(float(result.eigenvalues[c]), ov, ok)
            for c, ov, ok in matches]

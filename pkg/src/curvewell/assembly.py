"""Discrete symmetric forms for the three operator families.

All operators use P1 elements on an :class:`~curvewell.meshing.InterfaceMesh`.
Constraints (box Dirichlet data, the transmission coupling
u_plus = theta * u_minus) are imposed by a sparse transform T mapping solver
degrees of freedom to nodal values; reduced matrices are T' A T, which keeps
everything symmetric.

The layer potential is integrated with a degree-5 rule on the layer elements,
with quadrature points mapped to tubular coordinates through the inverse
coordinate map (Newton projection seeded from the structured layer data).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels
from .errors import ConfigError, ContractError
from .geometry import CurveFrame
from .meshing import InterfaceMesh, MeshParams
from .profiles import PotentialProfile
from .resonance import TransmissionData, profile_moments

# mid-edge rule (degree 2): default for smooth coefficients
MIDEDGE_LAMBDA = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
MIDEDGE_W = np.full(3, 1.0 / 3.0)

# 7-point degree-5 rule: used where the scaled layer potential lives
_A = (6.0 - np.sqrt(15.0)) / 21.0
_B = (6.0 + np.sqrt(15.0)) / 21.0
_WA = (155.0 - np.sqrt(15.0)) / 1200.0
_WB = (155.0 + np.sqrt(15.0)) / 1200.0
P5_LAMBDA = np.array(
    [[1 / 3, 1 / 3, 1 / 3],
     [_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
     [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B]])
P5_W = np.array([9.0 / 40.0, _WA, _WA, _WA, _WB, _WB, _WB])


@dataclass
class ModelConfig:
    """Bundle describing one eps-dependent spectral problem."""

    frame: CurveFrame
    profile: PotentialProfile
    W: Callable                      # (x1, x2) -> energy
    epsilon: Optional[float]
    mesh_params: MeshParams

    def __post_init__(self):
        if self.epsilon is not None and \
                not 0.0 < self.epsilon < 0.5 * self.frame.eps_star:
            raise ConfigError(
                f"epsilon must lie in (0, eps_star/2); got {self.epsilon}")

    def boundary_w_min(self):
        """min W on the truncation boundary (truncation-safety check)."""
        box = self.mesh_params.box_halfwidth
        edge = np.linspace(-box, box, 101)
        vals = []
        for xx, yy in ((edge, np.full_like(edge, -box)),
                       (edge, np.full_like(edge, box)),
                       (np.full_like(edge, -box), edge),
                       (np.full_like(edge, box), edge)):
            vals.append(np.min(self.W(xx, yy)))
        return float(np.min(vals))

    def check_truncation(self, lambda_max, margin=3.0):
        if self.boundary_w_min() < margin * lambda_max:
            raise ConfigError(
                "truncation box too small: W on the boundary must exceed "
                f"{margin} x the largest requested eigenvalue {lambda_max:g}")


@dataclass
class OperatorMatrices:
    """Reduced stiffness+potential and mass matrices with their dof map."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    transform: sp.csr_matrix     # (num_nodes, ndof)
    mesh: InterfaceMesh
    tag: str = ""

    @property
    def ndof(self):
        return self.K.shape[0]

    def nodal_values(self, x):
        """Expand a dof vector (or matrix of columns) to all mesh nodes."""
        return self.transform @ x

    def symmetry_defect(self):
        d = self.K - self.K.T
        kmax = np.abs(self.K.data).max()
        return float(np.abs(d.data).max() / kmax) if d.nnz else 0.0

    def check_spd_mass(self):
        # Cholesky through a symmetric-positive-definite LU check
        lu = splu(self.M.tocsc(), diag_pivot_thresh=0.0,
                  permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        diag = lu.U.diagonal()
        if np.any(diag <= 0):
            raise ContractError("mass matrix is not positive definite")
        return True


def _element_tables(mesh, coefficient, layer_potential=None,
                    tri_mask=None):
    """Element stiffness+reaction and mass tables for the selected triangles.

    ``coefficient`` is the smooth reaction coefficient W(x); the singular
    ``layer_potential`` (a callable of per-point tubular coordinates (s, r),
    restricted to layer elements) is integrated with the degree-5 rule.
    Tubular coordinates of quadrature points are interpolated barycentrically
    from the structured vertex data, which keeps the discrete potential
    support exactly aligned with the discrete layer (a true-distance
    evaluation would mis-assign O(h^2) slivers, amplified by the 1/eps^2
    potential scale).
    """
    tris = mesh.triangles if tri_mask is None else mesh.triangles[tri_mask]
    regions = mesh.tri_region if tri_mask is None else mesh.tri_region[tri_mask]
    xy = np.ascontiguousarray(mesh.nodes[tris], dtype=float)

    in_layer = regions == InterfaceMesh.REGIONS["layer"]
    use_p5 = layer_potential is not None and np.any(in_layer)
    lam, w = (P5_LAMBDA, P5_W) if use_p5 else (MIDEDGE_LAMBDA, MIDEDGE_W)

    qp = np.einsum("qi,tid->tqd", lam, xy)
    cvals = np.array(np.broadcast_to(
        np.asarray(coefficient(qp[..., 0], qp[..., 1]), dtype=float),
        qp.shape[:2]))
    if use_p5:
        s_v = mesh.node_s[tris[in_layer]]            # (tl, 3)
        r_v = mesh.node_r[tris[in_layer]]
        # unwrap arc length across the periodic seam inside each element
        period = mesh.frame.length
        s_v = np.where(s_v - s_v.min(axis=1, keepdims=True) > 0.5 * period,
                       s_v - period, s_v)
        s_q = np.einsum("qi,ti->tq", lam, s_v)
        r_q = np.einsum("qi,ti->tq", lam, r_v)
        cvals[in_layer] += layer_potential(s_q, r_q)
    ke, me = _kernels.assemble_p1(
        xy, np.ascontiguousarray(cvals, dtype=float),
        np.ascontiguousarray(lam, dtype=float),
        np.ascontiguousarray(w, dtype=float))
    return tris, ke, me


def _scatter(tris, table, num_nodes):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    mat = sp.coo_matrix((table.ravel(), (rows, cols)),
                        shape=(num_nodes, num_nodes))
    return mat.tocsr()


def _constraint_transform(mesh, dirichlet_nodes, theta=None,
                          restrict_nodes=None):
    """T with one column per free dof; plus-interface rows carry theta."""
    n = mesh.num_nodes
    active = np.zeros(n, dtype=bool)
    if restrict_nodes is None:
        active[:] = True
    else:
        active[restrict_nodes] = True
    free = active.copy()
    free[dirichlet_nodes] = False
    rows = []
    cols = []
    vals = []
    if theta is not None:
        plus = mesh.interface_plus
        minus = mesh.interface_minus
        free[plus] = False
        dof_of = -np.ones(n, dtype=np.int64)
        dof_of[free] = np.arange(free.sum())
        keep = free[minus]
        rows.append(plus[keep])
        cols.append(dof_of[minus[keep]])
        vals.append(np.full(keep.sum(), theta))
    else:
        dof_of = -np.ones(n, dtype=np.int64)
        dof_of[free] = np.arange(free.sum())
    idx = np.flatnonzero(free)
    rows.append(idx)
    cols.append(dof_of[idx])
    vals.append(np.ones(len(idx)))
    T = sp.coo_matrix(
        (np.concatenate(vals),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, int(free.sum())))
    return T.tocsr()


def layer_potential_evaluator(profile: PotentialProfile, epsilon: float,
                              s_period: float):
    """V_eps as a function of tubular coordinates (zero outside |r| > eps)."""

    def evaluate(s, r):
        n = np.clip(np.asarray(r, dtype=float) / epsilon, -1.0, 1.0)
        inside = np.abs(r) <= epsilon * (1.0 + 1e-12)
        sm = np.mod(np.asarray(s, dtype=float), s_period)
        out = profile.V(n) / epsilon ** 2 + profile.U(sm, n) / epsilon
        return np.where(inside, out, 0.0)

    return evaluate


def assemble_heps(mesh: InterfaceMesh, config: ModelConfig) -> OperatorMatrices:
    """Discrete H_eps = -Laplace + W + V_eps with box Dirichlet data."""
    if mesh.epsilon is None or mesh.duplicated:
        raise ContractError("assemble_heps needs an unduplicated layer mesh")
    if config.epsilon != mesh.epsilon:
        raise ContractError("mesh was built for a different epsilon")
    vps = layer_potential_evaluator(config.profile, mesh.epsilon,
                                    config.frame.length)
    tris, ke, me = _element_tables(mesh, config.W, layer_potential=vps)
    K_full = _scatter(tris, ke, mesh.num_nodes)
    M_full = _scatter(tris, me, mesh.num_nodes)
    T = _constraint_transform(mesh, mesh.box_boundary)
    return OperatorMatrices(K=(T.T @ K_full @ T).tocsr(),
                            M=(T.T @ M_full @ T).tocsr(),
                            transform=T, mesh=mesh, tag="heps")


def _interface_line_matrix(mesh, values):
    """1D P1 mass on the interface polyline weighted by nodal ``values``.

    Scatters onto the minus-side interface dofs.
    """
    minus = mesh.interface_minus
    ns = len(minus)
    pts = mesh.nodes[minus]
    nxt = np.roll(np.arange(ns), -1)
    ell = np.linalg.norm(pts[nxt] - pts, axis=1)
    v0 = values
    v1 = values[nxt]
    e00 = ell * (3.0 * v0 + v1) / 12.0
    e01 = ell * (v0 + v1) / 12.0
    e11 = ell * (v0 + 3.0 * v1) / 12.0
    rows = np.concatenate([minus, minus, minus[nxt], minus[nxt]])
    cols = np.concatenate([minus, minus[nxt], minus, minus[nxt]])
    vals = np.concatenate([e00, e01, e01, e11])
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(mesh.num_nodes, mesh.num_nodes)).tocsr()


def assemble_limit(mesh: InterfaceMesh, W: Callable,
                   trans: TransmissionData) -> OperatorMatrices:
    """Limit operator with transmission conditions on the interface.

    Plus-side interface dofs are eliminated through u_plus = theta*u_minus
    and the coefficient Upsilon enters as a line-mass term on the minus
    trace.
    """
    if not mesh.duplicated:
        raise ContractError("assemble_limit needs a duplicated-interface mesh")
    if trans.theta == 0.0:
        raise ContractError("theta = 0 transmission data is not supported "
                            "(cannot arise from a half-bound state)")
    tris, ke, me = _element_tables(mesh, W)
    K_full = _scatter(tris, ke, mesh.num_nodes)
    M_full = _scatter(tris, me, mesh.num_nodes)
    ups = trans.upsilon_at(mesh.node_s[mesh.interface_minus])
    K_full = K_full + _interface_line_matrix(mesh, np.asarray(ups))
    T = _constraint_transform(mesh, mesh.box_boundary, theta=trans.theta)
    return OperatorMatrices(K=(T.T @ K_full @ T).tocsr(),
                            M=(T.T @ M_full @ T).tocsr(),
                            transform=T, mesh=mesh, tag="limit")


def assemble_dirichlet_split(mesh: InterfaceMesh, W: Callable):
    """Independent Dirichlet problems on the two sides of the curve."""
    results = []
    for side, tag in ((-1, "dirichlet-minus"), (1, "dirichlet-plus")):
        mask = mesh.tri_side == side
        tris, ke, me = _element_tables(mesh, W, tri_mask=mask)
        K_full = _scatter(tris, ke, mesh.num_nodes)
        M_full = _scatter(tris, me, mesh.num_nodes)
        used = np.unique(tris)
        if side < 0:
            dirichlet = mesh.interface_minus
        else:
            dirichlet = np.concatenate([mesh.interface_plus,
                                        mesh.box_boundary])
        T = _constraint_transform(mesh, dirichlet, restrict_nodes=used)
        results.append(OperatorMatrices(
            K=(T.T @ K_full @ T).tocsr(), M=(T.T @ M_full @ T).tocsr(),
            transform=T, mesh=mesh, tag=tag))
    return tuple(results)


@dataclass
class DistributionalReport:
    eps_list: np.ndarray
    integrals: np.ndarray
    limit_value: float
    errors: np.ndarray
    fitted_order: Optional[float]
    int_v: float
    divergent: bool
    scaled_integrals: np.ndarray      # eps * I(eps), limit int V * int_gamma phi
    divergent_limit: float

    def summary(self):
        kind = "divergent (eps^-1)" if self.divergent else "convergent"
        return (f"distributional check: {kind}; limit {self.limit_value:.6g}; "
                f"fitted order "
                f"{self.fitted_order if self.fitted_order else float('nan')}")


def distributional_limit_check(profile: PotentialProfile, frame: CurveFrame,
                               test_fn: Callable, eps_list,
                               n_quad: int = 96) -> DistributionalReport:
    """Compare int V_eps phi dx with its predicted distributional limit.

    The integral is computed in tubular coordinates with Gauss quadrature in
    the scaled normal variable; the limit combines the dipole moment mu1 and
    the mean mu0 against phi and its normal derivative on the curve.
    """
    eps_list = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    s = frame.s
    ds = frame.length / len(s)
    gauss_n, gauss_w = np.polynomial.legendre.leggauss(n_quad)

    kappa = frame.kappa
    alpha = frame.points
    nu = frame.normal

    int_v, mu0, mu1 = profile_moments(profile, s)
    phi_gamma = test_fn(alpha[:, 0], alpha[:, 1])
    fd = 1e-5
    dphi_nu = (test_fn(*(alpha + fd * nu).T) - test_fn(*(alpha - fd * nu).T)) \
        / (2.0 * fd)
    limit_value = float(np.sum(
        (-mu1 * dphi_nu + (mu1 * kappa + mu0) * phi_gamma)) * ds)
    divergent_limit = float(int_v * np.sum(phi_gamma) * ds)

    integrals = []
    vn = profile.V(gauss_n)
    for eps in eps_list:
        x = alpha[:, None, :] + eps * gauss_n[None, :, None] * nu[:, None, :]
        phi = test_fn(x[..., 0], x[..., 1])
        un = profile.U(s[:, None], gauss_n[None, :])
        jac = 1.0 - eps * gauss_n[None, :] * kappa[:, None]
        integrand = (vn[None, :] / eps + un) * phi * jac
        integrals.append(float(np.sum(integrand * gauss_w[None, :]) * ds))
    integrals = np.asarray(integrals)

    divergent = abs(int_v) > 1e-10
    errors = np.abs(integrals - limit_value)
    fitted_order = None
    if not divergent and np.all(errors > 0) and len(eps_list) >= 2:
        fitted_order = float(np.polyfit(np.log(eps_list), np.log(errors), 1)[0])
    return DistributionalReport(
        eps_list=eps_list, integrals=integrals, limit_value=limit_value,
        errors=errors, fitted_order=fitted_order, int_v=int_v,
        divergent=divergent, scaled_integrals=eps_list * integrals,
        divergent_limit=divergent_limit)

"""Symmetric generalized eigenproblems K x = lambda M x.

Shift-invert Lanczos (ARPACK through scipy) with a sparse factorization is
the workhorse: the eps-dependent operators carry very negative layer
eigenvalues, so "lowest k above a shift" targeting is the useful contract.
Small problems fall back to a dense solve.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .assembly import OperatorMatrices
from .errors import ContractError, InputError, NumericalError

DENSE_THRESHOLD = 400


@dataclass
class SpectralResult:
    """Eigenpairs with residual certificates.

    ``eigenvalues`` ascending; ``eigenvectors`` are M-orthonormal columns in
    the reduced dof space of ``operator``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    operator: OperatorMatrices
    tag: str = ""
    converged: bool = True

    @property
    def k(self):
        return len(self.eigenvalues)

    def nodal(self, i):
        """Eigenvector ``i`` expanded to all mesh nodes."""
        return self.operator.nodal_values(self.eigenvectors[:, i])

    def orthonormality_defect(self):
        g = self.eigenvectors.T @ (self.operator.M @ self.eigenvectors)
        return float(np.max(np.abs(g - np.eye(self.k))))

    def rayleigh_quotients(self):
        x = self.eigenvectors
        num = np.einsum("ij,ij->j", x, self.operator.K @ x)
        den = np.einsum("ij,ij->j", x, self.operator.M @ x)
        return num / den

    def export_rows(self):
        """(index, eigenvalue, residual) rows for CSV export."""
        return [(i, self.eigenvalues[i], self.residuals[i])
                for i in range(self.k)]


def _m_orthonormalize(M, x):
    g = x.T @ (M @ x)
    # symmetric (Loewdin) orthogonalization keeps cluster subspaces intact
    w, q = la.eigh(g)
    if np.min(w) <= 0:
        raise NumericalError("eigenvector block is numerically M-degenerate")
    return x @ (q * (1.0 / np.sqrt(w))) @ q.T


def _residuals(K, M, vals, vecs):
    r = K @ vecs - M @ vecs * vals[None, :]
    num = np.linalg.norm(r, axis=0)
    den = np.linalg.norm(K @ vecs, axis=0)
    den = np.where(den > 0, den, 1.0)
    return num / den


def _dense_solve(K, M):
    vals, vecs = la.eigh(K.toarray(), M.toarray())
    return vals, vecs


def solve_lowest(operator: OperatorMatrices, k: int,
                 sigma: Optional[float] = None,
                 dense_threshold: int = DENSE_THRESHOLD,
                 method: str = "auto", maxiter: int = 5000,
                 tol: float = 0.0) -> SpectralResult:
    """The k eigenvalues nearest above ``sigma`` (default: the lowest k).

    ``method``: "auto" (dense below ``dense_threshold``), "dense" or
    "shift-invert".
    """
    if k < 1:
        raise InputError("k must be at least 1")
    K, M = operator.K, operator.M
    n = K.shape[0]
    if k > n:
        raise InputError(f"k={k} exceeds the problem size {n}")
    if method not in ("auto", "dense", "shift-invert"):
        raise InputError(f"unknown eigensolver method {method!r}")
    use_dense = method == "dense" or (method == "auto" and n <= dense_threshold)

    if use_dense:
        vals, vecs = _dense_solve(K, M)
        if sigma is not None:
            keep = vals >= sigma
            vals, vecs = vals[keep], vecs[:, keep]
        if len(vals) < k:
            raise NumericalError(
                f"only {len(vals)} eigenvalues above sigma={sigma}")
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        # default "lowest k": shift-invert near zero; confining W keeps the
        # relevant spectrum there.  Callers with shifted spectra pass sigma.
        target = sigma if sigma is not None else 0.0
        vals, vecs = _shift_invert(K, M, k, target,
                                   above_only=sigma is not None,
                                   maxiter=maxiter, tol=tol)

    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = _m_orthonormalize(M, vecs)
    res = _residuals(K, M, vals, vecs)
    return SpectralResult(eigenvalues=vals, eigenvectors=vecs, residuals=res,
                          operator=operator, tag=operator.tag)


def _shift_invert(K, M, k, sigma, above_only, maxiter, tol):
    k_ask = min(K.shape[0] - 1, k + 4)
    shift = sigma
    last_err = None
    for attempt in range(4):
        try:
            vals, vecs = eigsh(K, k=k_ask, M=M, sigma=shift, which="LM",
                               maxiter=maxiter, tol=tol)
        except RuntimeError as exc:      # singular factorization at the shift
            last_err = exc
            shift = shift - (1e-6 + 1e-6 * abs(shift)) * 10 ** attempt
            continue
        except ArpackNoConvergence as exc:
            if exc.eigenvalues is not None and len(exc.eigenvalues) >= k:
                err = NumericalError(
                    f"eigensolver did not fully converge within {maxiter} "
                    "iterations; partial results available")
                err.partial = _partial_result(K, M, exc, sigma, above_only, k)
                raise err from exc
            raise NumericalError(
                "eigensolver failed to converge and produced fewer than k "
                "eigenpairs") from exc
        if above_only:
            keep = vals >= sigma - 1e-12 * (1.0 + abs(sigma))
            if keep.sum() < k and k_ask < K.shape[0] - 1:
                k_ask = min(K.shape[0] - 1, 2 * k_ask)
                continue
            vals, vecs = vals[keep], vecs[:, keep]
        if len(vals) < k:
            raise NumericalError(
                f"only {len(vals)} eigenvalues found above sigma={sigma}")
        order = np.argsort(vals)[:k]
        return vals[order], vecs[:, order]
    raise NumericalError(
        f"factorization remained singular near sigma={sigma}") from last_err


def _partial_result(K, M, exc, sigma, above_only, k):
    vals = np.asarray(exc.eigenvalues)
    vecs = np.asarray(exc.eigenvectors)
    if above_only:
        keep = vals >= sigma
        vals, vecs = vals[keep], vecs[:, keep]
    order = np.argsort(vals)[:k]
    return vals[order], vecs[:, order]


@dataclass
class Pairing:
    """One-to-one eigenpair correspondence between two spectral results."""

    pairs: List[Tuple[int, int]]
    overlaps: np.ndarray           # |<u_a, u_b>|_M per pair
    value_gaps: np.ndarray         # |lambda_a - lambda_b| per pair
    clusters_a: List[List[int]]
    clusters_b: List[List[int]]
    principal_overlaps: List[np.ndarray]   # cosines of principal angles

    def min_overlap(self):
        return float(np.min(self.overlaps)) if len(self.overlaps) else 1.0


def _clusters(values, cluster_tol):
    groups = [[0]]
    for i in range(1, len(values)):
        tol = cluster_tol * max(1.0, abs(values[i]))
        if values[i] - values[groups[-1][-1]] < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def match_eigenpairs(a: SpectralResult, b: SpectralResult,
                     overlap_map: Optional[Callable] = None,
                     cluster_tol: float = 1e-6) -> Pairing:
    """Pair eigenvectors of ``b`` with those of ``a`` by M_a-overlap.

    ``overlap_map`` maps b's eigenvector block into a's dof space; identity
    is assumed when the dof spaces coincide.  Near-degenerate clusters
    (relative gap < cluster_tol) are matched as subspaces: the reported
    per-pair overlaps inside a cluster are the cosines of the principal
    angles.
    """
    vb = b.eigenvectors
    if overlap_map is not None:
        vb = overlap_map(vb)
    elif a.eigenvectors.shape[0] != vb.shape[0]:
        raise ContractError(
            "dof spaces differ: an overlap_map is required to compare "
            "results from different meshes")
    Ma = a.operator.M
    # normalize b's mapped block in the M_a inner product column-by-column
    norms = np.sqrt(np.einsum("ij,ij->j", vb, Ma @ vb))
    vb = vb / norms[None, :]
    O = a.eigenvectors.T @ (Ma @ vb)        # (ka, kb)

    ca = _clusters(a.eigenvalues, cluster_tol)
    cb = _clusters(b.eigenvalues, cluster_tol)

    # greedy cluster-to-cluster matching by mean singular value of the block
    scores = []
    for ia, ga in enumerate(ca):
        for ib, gb in enumerate(cb):
            block = O[np.ix_(ga, gb)]
            sv = la.svd(block, compute_uv=False)
            scores.append((float(np.mean(sv)), ia, ib))
    scores.sort(reverse=True)
    used_a, used_b = set(), set()
    pairs = []
    overlaps = []
    gaps = []
    principal = []
    for score, ia, ib in scores:
        if ia in used_a or ib in used_b:
            continue
        used_a.add(ia)
        used_b.add(ib)
        ga, gb = ca[ia], cb[ib]
        m = min(len(ga), len(gb))
        sv = la.svd(O[np.ix_(ga, gb)], compute_uv=False)[:m]
        principal.append(sv)
        for i, j, s in zip(ga, gb, sv):
            pairs.append((i, j))
            overlaps.append(s if len(ga) > 1 or len(gb) > 1
                            else abs(O[i, j]))
            gaps.append(abs(a.eigenvalues[i] - b.eigenvalues[j]))
    order = np.argsort([p[0] for p in pairs])
    return Pairing(
        pairs=[pairs[i] for i in order],
        overlaps=np.asarray(overlaps)[order],
        value_gaps=np.asarray(gaps)[order],
        clusters_a=ca, clusters_b=cb,
        principal_overlaps=principal)

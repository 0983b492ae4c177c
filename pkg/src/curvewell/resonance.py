"""1D layer problems on [-1, 1].

Everything the limit operator needs from the profile is computed here:
zero-energy resonance detection (Neumann shooting for -h'' + V h = 0),
coupling-constant scans, the auxiliary profiles h1 and h2, and the
transmission coefficients theta, mu, mu0, mu1 and Upsilon.

All ODEs are integrated with classical RK4 on a uniform grid; coupled
right-hand sides (h2, and later the quasimode profiles) are advanced jointly
with h so the stage values stay consistent.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import _kernels
from .errors import ContractError, InputError, NumericalError
from .profiles import PotentialProfile

DEFAULT_POINTS = 2049  # samples on [-1, 1], i.e. 2048 RK4 steps


def stage_grid(num_points):
    """The refined grid holding RK4 stage points (step h/2)."""
    return np.linspace(-1.0, 1.0, 2 * (num_points - 1) + 1)


def _rk4_staged(rhs, y0, num_points):
    """Integrate y' = rhs(j, y) over [-1, 1] with ``num_points - 1`` steps.

    ``rhs`` receives the index j into the refined stage grid (see
    :func:`stage_grid`), so coefficient arrays can be presampled once.
    The state y is stacked along axis 0.
    """
    nsteps = num_points - 1
    dn = 2.0 / nsteps
    y = np.array(y0, dtype=float)
    out = np.empty((num_points,) + y.shape)
    out[0] = y
    for i in range(nsteps):
        j = 2 * i
        k1 = rhs(j, y)
        k2 = rhs(j + 1, y + 0.5 * dn * k1)
        k3 = rhs(j + 1, y + 0.5 * dn * k2)
        k4 = rhs(j + 2, y + dn * k3)
        y = y + dn * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        out[i + 1] = y
    if not np.all(np.isfinite(out)):
        raise NumericalError("ODE integration produced non-finite values")
    return out


@dataclass(frozen=True)
class SampledFunction:
    """Function on [-1, 1] stored on a uniform grid with its derivative."""

    n: np.ndarray
    values: np.ndarray
    deriv: np.ndarray
    _spline: CubicSpline = field(init=False, repr=False, compare=False)
    _dspline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicSpline(self.n, self.values))
        object.__setattr__(self, "_dspline", CubicSpline(self.n, self.deriv))

    def __call__(self, n):
        return self._spline(n)

    def derivative(self, n):
        return self._dspline(n)


@dataclass(frozen=True)
class HalfBoundState:
    """Neumann-shooting solution of -h'' + V h = 0 with h(-1) = 1."""

    profile: PotentialProfile
    n: np.ndarray
    h: np.ndarray
    hp: np.ndarray
    theta: float
    defect: float
    resonant: bool
    tol: float

    def h_func(self):
        return SampledFunction(self.n, self.h, self.hp)

    def h_at(self, n):
        return CubicSpline(self.n, self.h)(n)

    def hp_at(self, n):
        return CubicSpline(self.n, self.hp)(n)


@dataclass(frozen=True)
class TransmissionData:
    """Coefficients of the limiting transmission conditions on the curve."""

    theta: float
    s_grid: np.ndarray
    kappa: np.ndarray
    mu: np.ndarray
    mu0: np.ndarray
    mu1: float
    upsilon: np.ndarray
    s_period: float

    def upsilon_at(self, s):
        return self._periodic(self.upsilon)(np.mod(s, self.s_period))

    def mu_at(self, s):
        return self._periodic(self.mu)(np.mod(s, self.s_period))

    def _periodic(self, vals):
        s = np.append(self.s_grid, self.s_period)
        v = np.append(vals, vals[0])
        return CubicSpline(s, v, bc_type="periodic")


@dataclass(frozen=True)
class ScanResult:
    alphas: list
    alpha_grid: np.ndarray
    defects: np.ndarray
    degenerate: bool


def detect_resonance(profile: PotentialProfile, tol: float = 1e-8,
                     num_points: int = DEFAULT_POINTS) -> HalfBoundState:
    """Integrate the Neumann problem and classify the profile.

    The defect is h'(1) for the solution with h(-1) = 1, h'(-1) = 0; the
    profile is resonant when |h'(1)| <= tol * (1 + max|h|), in which case
    theta = h(1).
    """
    if tol <= 0:
        raise InputError("tolerance must be positive")
    grid = np.linspace(-1.0, 1.0, num_points)
    v_stage = np.asarray(profile.V(stage_grid(num_points)), dtype=float)
    if not np.all(np.isfinite(v_stage)):
        raise InputError("profile V produced non-finite samples")

    def rhs(j, y):
        return np.stack([y[1], v_stage[j] * y[0]])

    sol = _rk4_staged(rhs, [1.0, 0.0], num_points)
    h, hp = sol[:, 0], sol[:, 1]
    defect = float(hp[-1])
    resonant = abs(defect) <= tol * (1.0 + float(np.max(np.abs(h))))
    return HalfBoundState(profile=profile, n=grid, h=h, hp=hp,
                          theta=float(h[-1]), defect=defect,
                          resonant=resonant, tol=tol)


def scan_coupling(base_profile: PotentialProfile, alpha_range,
                  grid: int = 400, tol: float = 1e-8,
                  num_points: int = DEFAULT_POINTS) -> ScanResult:
    """All couplings alpha in ``alpha_range`` for which alpha*V is resonant.

    Roots of the defect are located by sign changes on a uniform alpha grid
    followed by Brent refinement.  A degenerate base profile (V identically
    zero) yields only the trivial alpha = 0 resonance, flagged as such.
    """
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    if not np.isfinite([lo, hi]).all() or hi <= lo:
        raise InputError("alpha_range must be a finite increasing interval")
    if grid < 2:
        raise InputError("grid must be at least 2")

    stage = np.linspace(-1.0, 1.0, 2 * (num_points - 1) + 1)
    v_stage = np.ascontiguousarray(base_profile.V(stage), dtype=float)

    def defect(alpha):
        _, hp1, _ = _kernels.shoot_defect(v_stage, alpha)
        return hp1

    def is_resonant(alpha):
        _, hp1, hmax = _kernels.shoot_defect(v_stage, alpha)
        return abs(hp1) <= tol * (1.0 + hmax)

    vscale = float(np.max(np.abs(v_stage)))
    if vscale == 0.0:
        trivial = [0.0] if lo <= 0.0 <= hi else []
        alpha_grid = np.linspace(lo, hi, grid)
        return ScanResult(alphas=trivial, alpha_grid=alpha_grid,
                          defects=np.zeros(grid), degenerate=True)

    alpha_grid = np.linspace(lo, hi, grid)
    defects = np.array([defect(a) for a in alpha_grid])
    roots = []
    for i, a in enumerate(alpha_grid):
        scale = abs(a) * vscale
        if abs(defects[i]) <= 1e-13 * (1.0 + scale):
            roots.append(float(a))
        elif i + 1 < grid and defects[i] * defects[i + 1] < 0.0:
            roots.append(float(brentq(defect, alpha_grid[i], alpha_grid[i + 1],
                                      xtol=1e-13, rtol=1e-15)))
    deduped = []
    for a in sorted(roots):
        if not deduped or abs(a - deduped[-1]) > 1e-9 * (1.0 + abs(a)):
            if is_resonant(a):
                deduped.append(a)
    return ScanResult(alphas=deduped, alpha_grid=alpha_grid,
                      defects=defects, degenerate=False)


def solve_h1(profile: PotentialProfile,
             num_points: int = DEFAULT_POINTS) -> SampledFunction:
    """Companion solution with h1(-1) = 0, h1'(-1) = 1.

    For a resonant profile, h1'(1) = 1/theta by the Lagrange identity.
    """
    grid = np.linspace(-1.0, 1.0, num_points)
    v_stage = np.asarray(profile.V(stage_grid(num_points)), dtype=float)

    def rhs(j, y):
        return np.stack([y[1], v_stage[j] * y[0]])

    sol = _rk4_staged(rhs, [0.0, 1.0], num_points)
    return SampledFunction(grid, sol[:, 0], sol[:, 1])


@dataclass(frozen=True)
class H2Result:
    """h2(s, n) with zero Cauchy data at n = -1, per arc-length sample."""

    s_grid: np.ndarray
    n: np.ndarray
    values: np.ndarray  # (ns, nn)
    dn: np.ndarray      # (ns, nn)

    def boundary_slope(self):
        """The normal derivative at n = 1 per s."""
        return self.dn[:, -1]


def solve_h2(profile: PotentialProfile, state: HalfBoundState,
             kappa: np.ndarray, s_grid: np.ndarray,
             num_points: int = DEFAULT_POINTS) -> H2Result:
    """Solve -h2'' + V h2 = kappa(s) h' + U(s, .) h with zero data at n = -1.

    Advances (h, h', h2, h2') jointly so the forcing uses stage-consistent
    values of the half-bound state.  At n = 1 the slope satisfies
    d_n h2(s, 1) = -Upsilon(s)/theta.
    """
    if not state.resonant:
        raise ContractError("solve_h2 requires a resonant profile")
    s_grid = np.asarray(s_grid, dtype=float)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), s_grid.shape)
    grid = np.linspace(-1.0, 1.0, num_points)
    ns = len(s_grid)
    stages = stage_grid(num_points)
    v_stage = np.asarray(profile.V(stages), dtype=float)
    u_stage = profile.U(s_grid[None, :], stages[:, None])  # (2N+1, ns)

    def rhs(j, y):
        h, hp, h2, h2p = y
        v = v_stage[j]
        return np.stack([
            hp,
            v * h,
            h2p,
            v * h2 - kappa * hp - u_stage[j] * h,
        ])

    y0 = np.stack([np.ones(ns), np.zeros(ns), np.zeros(ns), np.zeros(ns)])
    sol = _rk4_staged(rhs, y0, num_points)
    return H2Result(s_grid=s_grid, n=grid,
                    values=sol[:, 2].T, dn=sol[:, 3].T)


def compute_transmission(profile: PotentialProfile,
                         state: Optional[HalfBoundState],
                         kappa: np.ndarray, s_grid: np.ndarray,
                         s_period: float) -> TransmissionData:
    """Transmission coefficients for the limit operator.

    mu(s) integrates U against h^2 (with h(-1) = 1 the normalizing factor is
    one); mu0(s) integrates U alone; mu1 = -int n V(n) dn; Upsilon combines
    the curvature term with mu.  Requires a resonant profile for mu/Upsilon.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), s_grid.shape).copy()
    if state is None:
        state = detect_resonance(profile)
    if not state.resonant:
        raise ContractError("transmission coefficients require a zero-energy "
                            "resonance (profile defect "
                            f"{state.defect:.3g})")
    n = state.n
    h2 = state.h ** 2
    u_vals = profile.U(s_grid[:, None], n[None, :])  # (ns, nn)
    mu = simpson(u_vals * h2[None, :], x=n, axis=1)
    mu0 = simpson(u_vals, x=n, axis=1)
    mu1 = -float(simpson(n * profile.V(n), x=n))
    theta = state.theta
    upsilon = 0.5 * (theta ** 2 - 1.0) * kappa + mu
    return TransmissionData(theta=theta, s_grid=s_grid, kappa=kappa, mu=mu,
                            mu0=mu0, mu1=mu1, upsilon=upsilon,
                            s_period=float(s_period))


def profile_moments(profile: PotentialProfile, s_grid: np.ndarray,
                    num_points: int = DEFAULT_POINTS):
    """(int V, mu0(s), mu1) without any resonance requirement."""
    n = np.linspace(-1.0, 1.0, num_points)
    v = profile.V(n)
    int_v = float(simpson(v, x=n))
    mu1 = -float(simpson(n * v, x=n))
    u_vals = profile.U(np.asarray(s_grid, dtype=float)[:, None], n[None, :])
    mu0 = simpson(u_vals, x=n, axis=1)
    return int_v, mu0, mu1

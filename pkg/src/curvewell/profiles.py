"""Potential profiles defining the layer potential.

The scaled potential concentrated near the curve is

    eps**-2 * V(r/eps) + eps**-1 * U(s, r/eps),

where V and U(s, .) are supported in the normal window [-1, 1] and U is
periodic in the arc-length variable s.  Profiles are given either as
expression strings or as sample tables (interpolated with cubic splines).
Both are extended by zero outside [-1, 1].
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InputError
from .expressions import compile_expression


def _zero_u(s, n):
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    return np.zeros(np.broadcast_shapes(s.shape, n.shape))


@dataclass(frozen=True)
class PotentialProfile:
    """1D layer profile V(n) plus the curve-dependent profile U(s, n).

    ``V`` maps n -> energy, ``U`` maps (s, n) -> energy; both must vanish for
    |n| > 1 (they are never evaluated there by this package).  ``s_period``
    is the period of U in s (the curve length); None means U does not depend
    on s.
    """

    V: Callable = None
    U: Callable = None
    s_period: Optional[float] = None
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if self.V is None:
            object.__setattr__(self, "V", lambda n: np.zeros_like(np.asarray(n, dtype=float)))
        if self.U is None:
            object.__setattr__(self, "U", _zero_u)
        probe = np.asarray(self.V(np.linspace(-1.0, 1.0, 33)), dtype=float)
        if not np.all(np.isfinite(probe)):
            raise InputError("profile V produced non-finite samples on [-1, 1]")

    @classmethod
    def from_expressions(cls, v_expr="0", u_expr="0", s_period=None):
        v = compile_expression(v_expr, ("n",))
        u = compile_expression(u_expr, ("s", "n"))
        return cls(V=v, U=u, s_period=s_period,
                   description=f"V={v_expr}, U={u_expr}")

    @classmethod
    def from_samples(cls, n, v_samples, s_period=None):
        n = np.asarray(n, dtype=float)
        v_samples = np.asarray(v_samples, dtype=float)
        if n.ndim != 1 or n.shape != v_samples.shape:
            raise InputError("sample table must be two equal-length columns")
        if not np.all(np.isfinite(v_samples)):
            raise InputError("non-finite V samples")
        if n[0] > -1.0 or n[-1] < 1.0:
            raise InputError("sample grid must cover [-1, 1]")
        spline = CubicSpline(n, v_samples)

        def v(x):
            x = np.asarray(x, dtype=float)
            out = spline(np.clip(x, -1.0, 1.0))
            return np.where(np.abs(x) <= 1.0, out, 0.0)

        return cls(V=v, s_period=s_period, description="sampled V")

    def scaled(self, alpha):
        """The profile with V replaced by alpha*V (U unchanged)."""
        base_v = self.V

        def v(n):
            return alpha * base_v(n)

        return PotentialProfile(V=v, U=self.U, s_period=self.s_period,
                                description=f"{alpha}*({self.description})")

    def flipped(self):
        """The profile seen from the reversed Frenet frame, n -> -n."""
        base_v, base_u = self.V, self.U

        def v(n):
            return base_v(-np.asarray(n, dtype=float))

        def u(s, n):
            return base_u(s, -np.asarray(n, dtype=float))

        return PotentialProfile(V=v, U=u, s_period=self.s_period,
                                description=f"flip({self.description})")

    def support_defect(self):
        """Max of |V|, |U| at n = +-1; nonzero for hard-walled wells."""
        edges = np.array([-1.0, 1.0])
        dv = float(np.max(np.abs(self.V(edges))))
        du = float(np.max(np.abs(self.U(np.zeros(2), edges))))
        return max(dv, du)

    def warn_if_not_compact(self, tol=1e-10):
        defect = self.support_defect()
        if defect > tol:
            warnings.warn(
                f"profile does not vanish at n=+-1 (edge value {defect:.3g}); "
                "treating it as a sharply truncated well",
                stacklevel=2,
            )
        return defect

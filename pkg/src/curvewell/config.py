"""Experiment configuration: INI files mapped onto validated settings.

A config file describes one experiment: the transverse profile, the curve,
the confining potential, the eps schedule, mesh density, solver knobs and
the output directory.  Unknown sections or keys are rejected so typos fail
loudly; every diagnostic is anchored to its ``[section] key``.
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, InputError
from .expressions import compile_expression, evaluate_scalar
from .geometry import (ClosedCurve, CurveFrame, circle, ellipse,
                       reparametrize_arclength)
from .meshing import MeshParams
from .profiles import PotentialProfile

_SCHEMA = {
    "profile": {"v", "u"},
    "curve": {"kind", "radius", "a", "b", "x1", "x2", "period", "grid_size",
              "orientation"},
    "potential": {"w"},
    "eps": {"values"},
    "mesh": {"s_cells", "layer_r_cells", "tube_halfwidth_frac", "grade_ratio",
             "target_h", "box_halfwidth"},
    "solver": {"k", "sigma", "method", "maxiter", "tol"},
    "output": {"directory"},
}


@dataclass
class ExperimentConfig:
    """Validated experiment settings; builders construct the heavy objects."""

    v_expr: str = "0"
    u_expr: str = "0"
    curve_kind: str = "circle"
    curve_radius: float = 1.0
    curve_a: float = 2.0
    curve_b: float = 1.0
    curve_x1: Optional[str] = None
    curve_x2: Optional[str] = None
    curve_period: float = 2.0 * np.pi
    curve_grid_size: int = 512
    curve_orientation: int = 1
    w_expr: str = "x1*x1 + x2*x2"
    eps_values: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    mesh: MeshParams = field(default_factory=MeshParams)
    solver_k: int = 6
    solver_sigma: Optional[float] = None
    solver_method: str = "auto"
    solver_maxiter: int = 5000
    solver_tol: float = 0.0
    out_dir: Path = Path("out")

    # ------------------------------------------------------------------ load

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            read = parser.read(str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not read:
            raise ConfigError(f"config file not found: {path}")
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser) -> "ExperimentConfig":
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser[section]:
                if key not in _SCHEMA[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
        cfg = cls()

        def get(section, key, default=None):
            if parser.has_option(section, key):
                return parser.get(section, key)
            return default

        def num(section, key, default, cast=float):
            raw = get(section, key)
            if raw is None:
                return default
            try:
                value = evaluate_scalar(raw)
            except InputError as exc:
                raise ConfigError(
                    f"in [{section}] {key}: {exc}") from exc
            if cast is int:
                if abs(value - round(value)) > 1e-12:
                    raise ConfigError(
                        f"in [{section}] {key}: expected an integer, "
                        f"got {raw!r}")
                return int(round(value))
            return float(value)

        cfg.v_expr = get("profile", "v", cfg.v_expr)
        cfg.u_expr = get("profile", "u", cfg.u_expr)

        cfg.curve_kind = get("curve", "kind", cfg.curve_kind).strip().lower()
        if cfg.curve_kind not in ("circle", "ellipse", "custom"):
            raise ConfigError(
                f"in [curve] kind: must be circle, ellipse or custom, "
                f"got {cfg.curve_kind!r}")
        cfg.curve_radius = num("curve", "radius", cfg.curve_radius)
        cfg.curve_a = num("curve", "a", cfg.curve_a)
        cfg.curve_b = num("curve", "b", cfg.curve_b)
        cfg.curve_x1 = get("curve", "x1", None)
        cfg.curve_x2 = get("curve", "x2", None)
        cfg.curve_period = num("curve", "period", cfg.curve_period)
        cfg.curve_grid_size = num("curve", "grid_size", cfg.curve_grid_size,
                                  int)
        cfg.curve_orientation = num("curve", "orientation",
                                    cfg.curve_orientation, int)
        if cfg.curve_orientation not in (-1, 1):
            raise ConfigError("in [curve] orientation: must be 1 or -1")
        if cfg.curve_kind == "custom" and not (cfg.curve_x1 and cfg.curve_x2):
            raise ConfigError(
                "in [curve]: kind=custom needs x1 and x2 expressions")

        cfg.w_expr = get("potential", "w", cfg.w_expr)

        raw_eps = get("eps", "values")
        if raw_eps is not None:
            try:
                vals = tuple(evaluate_scalar(tok) for tok in
                             raw_eps.replace(",", " ").split())
            except InputError as exc:
                raise ConfigError(f"in [eps] values: {exc}") from exc
            if not vals:
                raise ConfigError("in [eps] values: empty schedule")
            cfg.eps_values = vals
        for e in cfg.eps_values:
            if not 0 < e < 1e3:
                raise ConfigError(
                    f"in [eps] values: epsilon {e} out of range (0, 1e3)")

        cfg.mesh = MeshParams(
            s_cells=num("mesh", "s_cells", cfg.mesh.s_cells, int),
            layer_r_cells=num("mesh", "layer_r_cells",
                              cfg.mesh.layer_r_cells, int),
            tube_halfwidth_frac=num("mesh", "tube_halfwidth_frac",
                                    cfg.mesh.tube_halfwidth_frac),
            grade_ratio=num("mesh", "grade_ratio", cfg.mesh.grade_ratio),
            target_h=num("mesh", "target_h", cfg.mesh.target_h),
            box_halfwidth=num("mesh", "box_halfwidth",
                              cfg.mesh.box_halfwidth))
        cfg.mesh.validate()

        cfg.solver_k = num("solver", "k", cfg.solver_k, int)
        if cfg.solver_k < 0:
            raise ConfigError("in [solver] k: must be non-negative")
        sigma_raw = get("solver", "sigma")
        cfg.solver_sigma = (None if sigma_raw in (None, "")
                            else num("solver", "sigma", None))
        cfg.solver_method = get("solver", "method",
                                cfg.solver_method).strip().lower()
        if cfg.solver_method not in ("auto", "dense", "shift-invert"):
            raise ConfigError(
                f"in [solver] method: unknown method {cfg.solver_method!r}")
        cfg.solver_maxiter = num("solver", "maxiter", cfg.solver_maxiter, int)
        if cfg.solver_maxiter < 1:
            raise ConfigError("in [solver] maxiter: must be positive")
        cfg.solver_tol = num("solver", "tol", cfg.solver_tol)
        if cfg.solver_tol < 0:
            raise ConfigError("in [solver] tol: must be non-negative")

        out = get("output", "directory")
        if out is not None:
            cfg.out_dir = Path(out)

        # compile the expressions now so malformed input fails at load time
        try:
            cfg.build_profile()
            compile_expression(cfg.w_expr, ("x1", "x2"))
            if cfg.curve_kind == "custom":
                compile_expression(cfg.curve_x1, ("t",))
                compile_expression(cfg.curve_x2, ("t",))
        except InputError as exc:
            raise ConfigError(f"bad expression in config: {exc}") from exc
        return cfg

    # -------------------------------------------------------------- builders

    def build_profile(self) -> PotentialProfile:
        return PotentialProfile.from_expressions(self.v_expr, self.u_expr)

    def build_curve(self) -> ClosedCurve:
        if self.curve_kind == "circle":
            if self.curve_radius <= 0:
                raise ConfigError("in [curve] radius: must be positive")
            return circle(self.curve_radius)
        if self.curve_kind == "ellipse":
            if self.curve_a <= 0 or self.curve_b <= 0:
                raise ConfigError("in [curve] a/b: must be positive")
            return ellipse(self.curve_a, self.curve_b)
        return ClosedCurve.from_expressions(self.curve_x1, self.curve_x2,
                                            period=self.curve_period)

    def build_frame(self) -> CurveFrame:
        curve = self.build_curve()
        if self.curve_orientation < 0:
            # traverse the input parametrization backwards; the frame
            # orientation itself is normalized by reparametrize_arclength,
            # which makes results orientation-independent by construction
            curve = curve.reversed()
        return reparametrize_arclength(curve, grid_size=self.curve_grid_size)

    def w_callable(self) -> Callable:
        return compile_expression(self.w_expr, ("x1", "x2"))

    def eps_list(self) -> List[float]:
        return sorted(self.eps_values, reverse=True)

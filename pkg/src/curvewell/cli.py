"""Command-line front end: config-driven, reproducible experiment runs.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
All CSV output is deterministic (fixed float formatting, no timestamps).
"""

import argparse
import os
import sys
from pathlib import Path

from .errors import (ConfigError, ContractError, GeometryError, InputError,
                     NumericalError)

_FMT = "%.12g"


def _f(x):
    return _FMT % float(x)


def _write_rows(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) if isinstance(c, (str, int)) else _f(c)
                              for c in row) + "\n")


def _out_dir(cfg, args) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- subcommands


def cmd_resonance(cfg, args):
    import numpy as np

    from .resonance import (compute_transmission, detect_resonance,
                            scan_coupling)

    out = _out_dir(cfg, args)
    profile = cfg.build_profile()
    state = detect_resonance(profile)
    frame = cfg.build_frame()
    scan = scan_coupling(profile, (args.alpha_min, args.alpha_max))

    rows = [("resonant", int(state.resonant)),
            ("theta", _f(state.theta)),
            ("defect", _f(state.defect))]
    for i, alpha in enumerate(scan.alphas):
        rows.append((f"scan_alpha_{i}", _f(alpha)))
    trans = None
    if state.resonant:
        trans = compute_transmission(profile, state, frame.kappa, frame.s,
                                     frame.length)
        rows.append(("mu1", _f(trans.mu1)))
        rows.append(("mu0_mean", _f(float(np.mean(trans.mu0)))))
    _write_rows(out / "resonance.csv", ("quantity", "value"), rows)

    if trans is not None:
        _write_rows(out / "transmission.csv",
                    ("s", "kappa", "mu", "upsilon"),
                    zip(trans.s_grid, trans.kappa, trans.mu, trans.upsilon))
    else:
        _write_rows(out / "transmission.csv",
                    ("s", "kappa", "mu", "upsilon"), [])
    print(f"resonant={state.resonant} theta={_f(state.theta)} "
          f"defect={_f(state.defect)} -> {out}")
    return 0


def _solve_operator(cfg, operator, eps):
    from .assembly import (ModelConfig, assemble_dirichlet_split,
                           assemble_heps, assemble_limit)
    from .meshing import build_mesh
    from .resonance import compute_transmission, detect_resonance

    frame = cfg.build_frame()
    W = cfg.w_callable()

    def w2(x, y):
        return W(x, y)

    if operator == "heps":
        profile = cfg.build_profile()
        mesh = build_mesh(frame, cfg.mesh, epsilon=eps)
        model = ModelConfig(frame=frame, profile=profile, W=w2, epsilon=eps,
                            mesh_params=cfg.mesh)
        return [assemble_heps(mesh, model)]
    mesh = build_mesh(frame, cfg.mesh, epsilon=None, duplicate_interface=True)
    if operator == "limit":
        profile = cfg.build_profile()
        state = detect_resonance(profile)
        if not state.resonant:
            raise ContractError(
                "limit operator needs a resonant profile; use "
                "--operator dirichlet-split for the non-resonant limit")
        trans = compute_transmission(profile, state, frame.kappa, frame.s,
                                     frame.length)
        return [assemble_limit(mesh, w2, trans)]
    minus, plus = assemble_dirichlet_split(mesh, w2)
    return [minus, plus]


def cmd_solve(cfg, args):
    from .eigensolve import solve_lowest

    out = _out_dir(cfg, args)
    eps = args.eps if args.eps is not None else cfg.eps_list()[0]
    ops = _solve_operator(cfg, args.operator, eps)
    rows = []
    k = cfg.solver_k
    for op in ops:
        if k == 0:
            continue
        res = solve_lowest(op, k, sigma=cfg.solver_sigma,
                           method=cfg.solver_method,
                           maxiter=cfg.solver_maxiter, tol=cfg.solver_tol)
        for i in range(res.k):
            rows.append((op.tag or args.operator, i,
                         res.eigenvalues[i], res.residuals[i]))
            nodal = res.nodal(i)
            mesh = op.mesh
            tag = (op.tag or args.operator).replace(" ", "_")
            _write_rows(out / f"eigenvector_{tag}_{i}.csv",
                        ("node", "x1", "x2", "value"),
                        ((j, mesh.nodes[j, 0], mesh.nodes[j, 1], nodal[j])
                         for j in range(mesh.num_nodes)))
    rows.sort(key=lambda r: (r[0], r[2]))
    _write_rows(out / "eigenvalues.csv",
                ("operator", "index", "eigenvalue", "residual"), rows)
    for row in rows:
        print(f"{row[0]}[{row[1]}] = {_f(row[2])} (residual {_f(row[3])})")
    print(f"-> {out}")
    return 0


def cmd_converge(cfg, args):
    from .asymptotics import run_convergence

    out = _out_dir(cfg, args)
    frame = cfg.build_frame()
    report = run_convergence(frame, cfg.build_profile(), cfg.w_callable(),
                             cfg.eps_list(), cfg.mesh,
                             k=max(1, cfg.solver_k))
    with open(out / "convergence.csv", "w") as fh:
        report.write_csv(fh)
    (out / "convergence.json").write_text(report.to_json() + "\n")
    print(report.summary())
    print(f"-> {out}")
    return 0


def cmd_distcheck(cfg, args):
    from .assembly import distributional_limit_check
    from .expressions import compile_expression

    out = _out_dir(cfg, args)
    phi = compile_expression(args.phi, ("x1", "x2"))
    frame = cfg.build_frame()
    report = distributional_limit_check(
        cfg.build_profile(), frame, lambda x, y: phi(x, y), cfg.eps_list())
    _write_rows(out / "distcheck.csv",
                ("eps", "integral", "scaled_integral", "error"),
                zip(report.eps_list, report.integrals,
                    report.scaled_integrals, report.errors))
    import json
    (out / "distcheck.json").write_text(json.dumps({
        "limit_value": report.limit_value,
        "fitted_order": report.fitted_order,
        "divergent": report.divergent,
        "int_v": report.int_v}, indent=2, sort_keys=True) + "\n")
    kind = "divergent (int V != 0)" if report.divergent else \
        f"order {report.fitted_order:.3f}"
    print(f"distributional check: {kind} -> {out}")
    return 0


def cmd_quasimode(cfg, args):
    from .assembly import ModelConfig, assemble_heps, assemble_limit
    from .asymptotics import (build_quasimode, certify_eigenvalue,
                              quasimode_residual)
    from .eigensolve import solve_lowest
    from .meshing import build_mesh
    from .resonance import compute_transmission, detect_resonance

    out = _out_dir(cfg, args)
    frame = cfg.build_frame()
    profile = cfg.build_profile()
    W = cfg.w_callable()
    state = detect_resonance(profile)
    if not state.resonant:
        raise ContractError(
            "quasimode subcommand supports resonant profiles (the limit "
            "operator with transmission conditions)")
    trans = compute_transmission(profile, state, frame.kappa, frame.s,
                                 frame.length)
    lmesh = build_mesh(frame, cfg.mesh, epsilon=None,
                       duplicate_interface=True)
    lop = assemble_limit(lmesh, lambda x, y: W(x, y), trans)
    lres = solve_lowest(lop, max(1, args.index + 1), sigma=cfg.solver_sigma)
    lam = float(lres.eigenvalues[args.index])
    rows = []
    for eps in cfg.eps_list():
        mesh = build_mesh(frame, cfg.mesh, epsilon=eps)
        model = ModelConfig(frame=frame, profile=profile,
                            W=lambda x, y: W(x, y), epsilon=eps,
                            mesh_params=cfg.mesh)
        hop = assemble_heps(mesh, model)
        q = build_quasimode((lam, None), frame, profile, state, trans,
                            lmesh, lres.nodal(args.index), mesh,
                            lambda x, y: W(x, y))
        delta = quasimode_residual(q, hop)
        nearest, gap = certify_eigenvalue(hop, lam, delta)
        rows.append((eps, lam, delta, nearest, gap,
                     q.jump_value[0], q.jump_value[1],
                     q.jump_deriv[0], q.jump_deriv[1],
                     q.solvability_residual))
    _write_rows(out / "quasimode.csv",
                ("eps", "lambda", "delta", "nearest_eigenvalue",
                 "certificate_gap", "jump_value_minus", "jump_value_plus",
                 "jump_deriv_minus", "jump_deriv_plus",
                 "solvability_residual"), rows)
    for row in rows:
        print(f"eps={_f(row[0])}: delta={_f(row[2])} nearest={_f(row[3])} "
              f"gap={_f(row[4])}")
    print(f"-> {out}")
    return 0


def cmd_mesh_dump(cfg, args):
    from .meshing import build_mesh

    out = _out_dir(cfg, args)
    frame = cfg.build_frame()
    if args.limit:
        mesh = build_mesh(frame, cfg.mesh, epsilon=None,
                          duplicate_interface=True)
        name = "mesh_limit.txt"
    else:
        eps = args.eps if args.eps is not None else cfg.eps_list()[0]
        mesh = build_mesh(frame, cfg.mesh, epsilon=eps)
        name = f"mesh_eps_{_f(eps)}.txt"
    with open(out / name, "w") as fh:
        mesh.export_text(fh)
    print(f"{mesh.num_nodes} nodes, {len(mesh.triangles)} triangles "
          f"-> {out / name}")
    return 0


# --------------------------------------------------------------------- main


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="curvewell",
        description="Spectral studies of Schrodinger operators with "
                    "potentials concentrated near a closed curve.")
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, default=None,
                        help="limit BLAS/OpenMP thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resonance", help="resonance detection + transmission")
    p.add_argument("--alpha-min", type=float, default=0.0)
    p.add_argument("--alpha-max", type=float, default=12.0)
    p.set_defaults(fn=cmd_resonance)

    p = sub.add_parser("solve", help="assemble and solve one operator")
    p.add_argument("--operator", required=True,
                   choices=("heps", "limit", "dirichlet-split"))
    p.add_argument("--eps", type=float, default=None)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("converge", help="eps-convergence study")
    p.set_defaults(fn=cmd_converge)

    p = sub.add_parser("distcheck", help="distributional-limit check")
    p.add_argument("--phi", default="exp(-(x1*x1 + x2*x2))",
                   help="test function expression in x1, x2")
    p.set_defaults(fn=cmd_distcheck)

    p = sub.add_parser("quasimode", help="build quasimodes and residuals")
    p.add_argument("--index", type=int, default=0,
                   help="limit eigenvalue index to expand around")
    p.set_defaults(fn=cmd_quasimode)

    p = sub.add_parser("mesh-dump", help="write the mesh as text")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--limit", action="store_true",
                   help="dump the limit (duplicated-interface) mesh")
    p.set_defaults(fn=cmd_mesh_dump)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return 2
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        from .config import ExperimentConfig
        cfg = ExperimentConfig.load(args.config)
        if args.threads is not None:
            try:
                from threadpoolctl import threadpool_limits
                with threadpool_limits(limits=args.threads):
                    return args.fn(cfg, args)
            except ImportError:
                pass
        return args.fn(cfg, args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ContractError, GeometryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance gate: the nine primary criteria at their stated tolerances.

Each test prints one "criterion N: PASS/FAIL" line with the measured
quantities.  Run with ``pytest -v -s tests/test_acceptance.py`` to see the
lines; under plain ``pytest -v`` the per-test PASSED/FAILED markers carry
the same information.
"""

import contextlib
import time

import numpy as np
import pytest
from scipy.integrate import simpson

from curvewell.assembly import (ModelConfig, assemble_dirichlet_split,
                                assemble_heps, assemble_limit,
                                distributional_limit_check)
from curvewell.asymptotics import radial_quasimode_residual, run_convergence
from curvewell.eigensolve import solve_lowest
from curvewell.geometry import (TubularMap, circle, ellipse,
                                reparametrize_arclength)
from curvewell.meshing import MeshParams, build_mesh
from curvewell.oracles import (limit_radial_model, radial_eigenvalues,
                               radial_fem_matrices)
from curvewell.profiles import PotentialProfile
from curvewell.resonance import (TransmissionData, compute_transmission,
                                 detect_resonance, profile_moments,
                                 scan_coupling, solve_h1, solve_h2)

W2 = lambda x, y: x * x + y * y
W1 = lambda rho: rho * rho

RESONANT_V = "-pi*pi/4 * (abs(n) <= 1)"
NONRES_V = "1 * (abs(n) <= 1)"

# mesh density for the 2D convergence study (criterion 7); chosen so the
# post-Richardson mesh error stays below the eps-gap at eps = 0.025
CONV_MESH = MeshParams(s_cells=160, layer_r_cells=12, target_h=0.12,
                       box_halfwidth=5.0)


@contextlib.contextmanager
def criterion(num, detail_box):
    try:
        yield
    except Exception:
        print(f"criterion {num}: FAIL")
        raise
    print(f"criterion {num}: PASS — {detail_box.get('detail', '')}")


@pytest.fixture(scope="module")
def unit_frame():
    return reparametrize_arclength(circle(1.0), grid_size=256)


# --------------------------------------------------------------- criterion 1


def test_criterion_1_resonance_closed_forms():
    box = {}
    with criterion(1, box):
        t0 = time.time()
        res = detect_resonance(
            PotentialProfile.from_expressions(RESONANT_V))
        assert res.resonant
        assert res.theta == pytest.approx(-1.0, abs=1e-8)

        scan = scan_coupling(PotentialProfile.from_expressions("0*n - 1"),
                             (-0.5, 10.5))
        roots = sorted(scan.alphas)
        expected = [0.0, np.pi ** 2 / 4.0, np.pi ** 2]
        assert len(roots) == 3
        for got, want in zip(roots, expected):
            assert got == pytest.approx(want, abs=1e-6)

        nr = detect_resonance(PotentialProfile.from_expressions(NONRES_V))
        assert not nr.resonant
        assert nr.defect == pytest.approx(np.sinh(2.0), abs=1e-8)
        elapsed = time.time() - t0
        assert elapsed < 1.0
        box["detail"] = (f"theta={res.theta:+.10f}, scan roots "
                         f"{[f'{r:.6f}' for r in roots]}, "
                         f"defect={nr.defect:.10f}, {elapsed:.2f}s")


# --------------------------------------------------------------- criterion 2


def test_criterion_2_paper_identities(unit_frame):
    box = {}
    with criterion(2, box):
        profile = PotentialProfile.from_expressions(
            RESONANT_V, "(1 - n*n) * (1 + 0.3*cos(s))")
        state = detect_resonance(profile)
        h1 = solve_h1(profile)

        wronskian = state.h * h1.deriv - state.hp * h1.values
        w_err = float(np.max(np.abs(wronskian - 1.0)))
        assert w_err <= 1e-8

        int_hhp = simpson(state.h * state.hp, x=state.n)
        i_err = abs(int_hhp - 0.5 * (state.theta ** 2 - 1.0))
        assert i_err <= 1e-8

        h1_err = abs(h1.derivative(1.0) - 1.0 / state.theta)
        assert h1_err <= 1e-8

        frame = unit_frame
        trans = compute_transmission(profile, state, frame.kappa, frame.s,
                                     frame.length)
        h2 = solve_h2(profile, state, frame.kappa, frame.s)
        h2_err = float(np.max(np.abs(
            h2.boundary_slope() + trans.upsilon / state.theta)))
        assert h2_err <= 1e-6
        box["detail"] = (f"wronskian err {w_err:.2e}, int-hh' err "
                         f"{i_err:.2e}, h1'(1) err {h1_err:.2e}, "
                         f"dn h2 err {h2_err:.2e}")


# --------------------------------------------------------------- criterion 3


def test_criterion_3_geometry(unit_frame):
    box = {}
    with criterion(3, box):
        frame = unit_frame
        assert np.max(np.abs(frame.kappa + 1.0)) <= 1e-8
        assert frame.eps_star == pytest.approx(1.0, abs=1e-8)
        total = np.sum(frame.kappa) * frame.length / len(frame.s)
        assert total == pytest.approx(-2.0 * np.pi, abs=1e-6)

        ell = reparametrize_arclength(ellipse(2.0, 1.0), grid_size=512)
        assert ell.eps_star == pytest.approx(0.5, abs=1e-4)

        rng = np.random.default_rng(11)
        tube = TubularMap(ell, half_width=0.45)
        s_in = rng.uniform(0.0, ell.length, 100)
        r_in = rng.uniform(-0.4, 0.4, 100)
        pts = tube.to_cartesian(s_in, r_in)
        s_out, r_out = tube.to_tubular(pts)
        wrap = ell.length
        ds = np.minimum(np.abs(s_out - s_in), wrap - np.abs(s_out - s_in))
        rt = max(float(np.max(ds)), float(np.max(np.abs(r_out - r_in))))
        assert rt <= 1e-8 * ell.length
        box["detail"] = (f"circle kappa=-1, eps*=1, total turning "
                         f"{total:.8f}; ellipse eps*={ell.eps_star:.6f}; "
                         f"roundtrip {rt:.2e}")


# --------------------------------------------------------------- criterion 4


def test_criterion_4_distributional_limit(unit_frame):
    box = {}
    with criterion(4, box):
        t0 = time.time()
        frame = unit_frame
        phi = lambda x, y: np.exp(-(x * x + y * y))

        # generic O(eps) regime: V = sin(pi n) pinned by the criterion plus
        # an odd U (mu0 = 0, mu1 untouched); with U = 0 the eps^1 term
        # vanishes by parity and the error quarters instead of halving
        profile = PotentialProfile.from_expressions("sin(pi*n)",
                                                    "0.5*n + 0*s")
        _, _, mu1 = profile_moments(profile, frame.s)
        mu1 = float(np.atleast_1d(mu1)[0])
        assert mu1 == pytest.approx(-2.0 / np.pi, abs=1e-8)
        rep = distributional_limit_check(profile, frame, phi, [0.1, 0.05])
        assert not rep.divergent
        ratio = abs(rep.errors[0]) / abs(rep.errors[1])
        assert 2.0 * 0.7 <= ratio <= 2.0 * 1.3

        div = distributional_limit_check(
            PotentialProfile.from_expressions("1 - n*n"), frame, phi,
            [0.2, 0.1, 0.05])
        assert div.divergent
        target = div.int_v * 2.0 * np.pi * np.exp(-1.0)
        errs = np.abs(div.scaled_integrals - target)
        assert errs[-1] < errs[0]
        assert div.scaled_integrals[-1] == pytest.approx(target, rel=0.05)
        elapsed = time.time() - t0
        assert elapsed < 10.0
        box["detail"] = (f"mu1={mu1:.6f}, error ratio {ratio:.3f}, "
                         f"divergent part -> {div.scaled_integrals[-1]:.4f} "
                         f"(target {target:.4f}), {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 5


def test_criterion_5_solver_oracles(unit_frame):
    box = {}
    with criterion(5, box):
        t0 = time.time()
        frame = unit_frame
        mesh = build_mesh(frame, MeshParams(), duplicate_interface=True)

        minus, _ = assemble_dirichlet_split(mesh, lambda x, y: 0.0 * x)
        disk = float(solve_lowest(minus, 1).eigenvalues[0])
        j01sq = 5.783185962946785
        assert abs(disk - j01sq) / j01sq <= 0.005

        zero = np.zeros_like(frame.s)
        trans = TransmissionData(theta=1.0, s_grid=frame.s,
                                 kappa=frame.kappa, mu=zero, mu0=zero,
                                 mu1=0.0, upsilon=zero,
                                 s_period=frame.length)
        osc_op = assemble_limit(mesh, W2, trans)
        osc = solve_lowest(osc_op, 6).eigenvalues
        expected = np.array([2.0, 4.0, 4.0, 6.0, 6.0, 6.0])
        rel = np.max(np.abs(osc - expected) / expected)
        assert rel <= 0.01
        elapsed = time.time() - t0
        assert elapsed < 60.0
        box["detail"] = (f"disk {disk:.5f} (vs {j01sq:.5f}), oscillator "
                         f"{np.array2string(osc, precision=4)} rel err "
                         f"{rel:.2e}, {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 6


def test_criterion_6_delta_interaction_cross_check(unit_frame):
    box = {}
    with criterion(6, box):
        frame = unit_frame
        ups_const = 2.0
        const = np.full_like(frame.s, ups_const)
        trans = TransmissionData(theta=1.0, s_grid=frame.s,
                                 kappa=frame.kappa, mu=const, mu0=const,
                                 mu1=0.0, upsilon=const,
                                 s_period=frame.length)
        mesh = build_mesh(frame, MeshParams(), duplicate_interface=True)
        fem = solve_lowest(assemble_limit(mesh, W2, trans), 4).eigenvalues

        vals = []
        for m in range(3):
            model = limit_radial_model(1.0, 1.0, ups_const, W1,
                                       rho_max=6.0, m=m)
            for lam in radial_eigenvalues(model, (1.0, 8.0), num_scan=120):
                vals.extend([lam] * (1 if m == 0 else 2))
        oracle = np.sort(vals)[:4]
        rel = np.max(np.abs(fem - oracle) / oracle)
        assert rel <= 0.005
        box["detail"] = (f"FEM {np.array2string(fem, precision=5)} vs "
                         f"oracle {np.array2string(oracle, precision=5)}, "
                         f"rel err {rel:.2e}")


# --------------------------------------------------------------- criterion 7


def _radial_heps_spectrum(profile, eps, m, sigma, k=4):
    """Eigenvalues of one angular mode of the radial eps-operator (1D FEM)."""
    from scipy.sparse.linalg import eigsh

    R, rho_max = 1.0, 6.0
    grid = np.unique(np.concatenate([
        np.linspace(0.0, R - eps, 501),
        np.linspace(R - eps, R + eps, 401),
        np.linspace(R + eps, rho_max, 1001)]))

    def q(rho):
        n = (rho - R) / eps
        inside = np.abs(n) <= 1.0
        layer = profile.V(np.clip(n, -1.0, 1.0)) / eps ** 2
        out = W1(rho) + np.where(inside, layer, 0.0)
        if m:
            out = out + m ** 2 / rho ** 2
        return out

    K, M = radial_fem_matrices(grid, q)
    if m:
        K, M = K[1:-1, 1:-1], M[1:-1, 1:-1]   # u(0) = 0 for m >= 1
    else:
        K, M = K[:-1, :-1], M[:-1, :-1]
    vals = eigsh(K, k=k, M=M, sigma=sigma, return_eigenvectors=False)
    return np.sort(vals)


def _fit_rate(eps_list, gaps):
    eps = np.asarray(eps_list)
    err = np.maximum(np.asarray(gaps), 1e-12)
    slope, _ = np.polyfit(np.log(eps), np.log(err), 1)
    return float(slope)


def test_criterion_7_convergence(unit_frame):
    box = {}
    with criterion(7, box):
        t0 = time.time()
        frame = unit_frame
        eps_list = [0.2, 0.1, 0.05, 0.025]
        details = []

        # --- radial-oracle path -------------------------------------------
        res_profile = PotentialProfile.from_expressions(RESONANT_V)
        nres_profile = PotentialProfile.from_expressions(NONRES_V)

        # limit values per angular mode from the shooting oracle
        limit_res = {0: radial_eigenvalues(
            limit_radial_model(1.0, -1.0, 0.0, W1, 6.0, m=0),
            (1.0, 3.0), num_scan=60)[:1],
            1: radial_eigenvalues(
            limit_radial_model(1.0, -1.0, 0.0, W1, 6.0, m=1),
            (3.0, 5.0), num_scan=60)[:1]}
        # tracked: (m, limit value, multiplicity up to 3 total)
        tracked_res = [(0, limit_res[0][0]), (1, limit_res[1][0]),
                       (1, limit_res[1][0])]

        from curvewell.oracles import dirichlet_radial_model
        lim_nres = []
        for m in range(3):
            for side in (-1, 1):
                model = dirichlet_radial_model(1.0, W1, 6.0, m=m, side=side)
                for lam in radial_eigenvalues(model, (4.0, 8.0),
                                              num_scan=80):
                    lim_nres.extend([(m, lam)] * (1 if m == 0 else 2))
        lim_nres.sort(key=lambda t: t[1])
        tracked_nres = lim_nres[:3]

        rates_radial = {}
        for tag, profile, tracked in (("resonant", res_profile, tracked_res),
                                      ("nonresonant", nres_profile,
                                       tracked_nres)):
            ps = []
            for m, lam in tracked:
                gaps = []
                for eps in eps_list:
                    vals = _radial_heps_spectrum(profile, eps, m, sigma=lam)
                    gaps.append(float(np.min(np.abs(vals - lam))))
                ps.append(_fit_rate(eps_list, gaps))
            rates_radial[tag] = ps
            assert min(ps) >= 0.9, f"radial {tag}: p = {ps}"
        details.append(f"radial p: resonant {rates_radial['resonant']}, "
                       f"nonresonant {rates_radial['nonresonant']}")

        # --- 2D FEM path --------------------------------------------------
        rates_fem = {}
        for tag, vexpr in (("resonant", RESONANT_V),
                           ("nonresonant", NONRES_V)):
            rep = run_convergence(frame,
                                  PotentialProfile.from_expressions(vexpr),
                                  W2, eps_list, CONV_MESH, k=3)
            ps = [t.p for t in rep.tracked]
            assert all(p is not None for p in ps)
            rates_fem[tag] = [round(p, 3) for p in ps]
            assert min(ps) >= 0.9, f"2D FEM {tag}: p = {ps}"
        elapsed = time.time() - t0
        assert elapsed < 600.0
        details.append(f"2D FEM p: resonant {rates_fem['resonant']}, "
                       f"nonresonant {rates_fem['nonresonant']}")
        box["detail"] = "; ".join(details) + f"; {elapsed:.0f}s"


# --------------------------------------------------------------- criterion 8


def test_criterion_8_quasimodes(unit_frame):
    box = {}
    with criterion(8, box):
        frame = unit_frame
        profile = PotentialProfile.from_expressions(RESONANT_V)
        state = detect_resonance(profile)
        trans = compute_transmission(profile, state, frame.kappa, frame.s,
                                     frame.length)
        reports = {eps: radial_quasimode_residual(frame, profile, state,
                                                  trans, W1, eps)
                   for eps in (0.1, 0.05)}
        ratio = reports[0.1].delta / reports[0.05].delta
        assert 1.4 <= ratio <= 2.6
        for eps, rep in reports.items():
            # Prop-style certificate: a spectrum point within delta
            assert rep.certificate_gap <= rep.delta, \
                f"eps={eps}: gap {rep.certificate_gap} > delta {rep.delta}"
        box["detail"] = (f"delta(0.1)={reports[0.1].delta:.4f}, "
                         f"delta(0.05)={reports[0.05].delta:.4f}, ratio "
                         f"{ratio:.3f}; certificate gaps "
                         f"{reports[0.1].certificate_gap:.2e}/"
                         f"{reports[0.05].certificate_gap:.2e}")


# --------------------------------------------------------------- criterion 9


def test_criterion_9_frenet_invariance():
    box = {}
    with criterion(9, box):
        profile = PotentialProfile.from_expressions(
            RESONANT_V, "1 - n*n")
        state = detect_resonance(profile)
        params = MeshParams(s_cells=96, target_h=0.2, box_halfwidth=4.0)
        rels = {}
        for curve, name in ((circle(1.0), "circle"),
                            (ellipse(2.0, 1.0), "ellipse")):
            vals = []
            for c in (curve, curve.reversed()):
                fr = reparametrize_arclength(c, grid_size=256)
                trans = compute_transmission(profile, state, fr.kappa,
                                             fr.s, fr.length)
                mesh = build_mesh(fr, params, duplicate_interface=True)
                res = solve_lowest(assemble_limit(mesh, W2, trans), 4)
                vals.append(res.eigenvalues)
            rels[name] = float(np.max(np.abs(vals[0] - vals[1])
                                      / np.abs(vals[0])))
            assert rels[name] <= 1e-8, f"{name}: rel diff {rels[name]}"
        box["detail"] = (f"orientation rel diff circle {rels['circle']:.2e},"
                         f" ellipse {rels['ellipse']:.2e}")

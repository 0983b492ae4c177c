import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from curvewell.errors import ContractError, InputError
from curvewell.profiles import PotentialProfile
from curvewell.resonance import (
    compute_transmission,
    detect_resonance,
    profile_moments,
    scan_coupling,
    solve_h1,
    solve_h2,
)


def constant_profile(v0, u0=0.0):
    return PotentialProfile.from_expressions(v_expr=str(v0), u_expr=str(u0))


S_GRID = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)


class TestDetectResonance:
    def test_free_profile_is_resonant(self):
        state = detect_resonance(constant_profile(0.0))
        assert state.resonant
        assert state.theta == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(state.h, 1.0, atol=1e-12)

    def test_square_well_at_threshold(self):
        state = detect_resonance(constant_profile(-np.pi ** 2 / 4.0))
        assert state.resonant
        assert state.theta == pytest.approx(-1.0, abs=1e-8)
        expected = np.cos(np.pi * (state.n + 1.0) / 2.0)
        assert np.max(np.abs(state.h - expected)) < 1e-8

    def test_positive_barrier_not_resonant(self):
        state = detect_resonance(constant_profile(1.0))
        assert not state.resonant
        assert state.defect == pytest.approx(np.sinh(2.0), abs=1e-8)

    def test_bad_tolerance_rejected(self):
        with pytest.raises(InputError):
            detect_resonance(constant_profile(0.0), tol=0.0)


class TestScanCoupling:
    def test_constant_well_neumann_couplings(self):
        result = scan_coupling(constant_profile(-1.0), (-0.5, 12.0))
        expected = [0.0, np.pi ** 2 / 4.0, np.pi ** 2]
        assert len(result.alphas) == 3
        for found, want in zip(result.alphas, expected):
            assert found == pytest.approx(want, abs=1e-6)

    def test_zero_profile_degenerate(self):
        result = scan_coupling(constant_profile(0.0), (-1.0, 1.0))
        assert result.degenerate
        assert result.alphas == [0.0]

    def test_positive_barrier_has_no_roots(self):
        result = scan_coupling(constant_profile(1.0), (0.1, 10.0))
        assert result.alphas == []

    def test_roots_bracket_sign_changes(self):
        result = scan_coupling(constant_profile(-1.0), (-0.5, 12.0))
        d = result.defects
        signs = np.sign(d[np.abs(d) > 1e-12])
        # at least as many sign flips as interior roots
        assert np.sum(signs[:-1] != signs[1:]) >= len(result.alphas) - 1


class TestSolveH1:
    def test_free(self):
        h1 = solve_h1(constant_profile(0.0))
        assert np.max(np.abs(h1.values - (h1.n + 1.0))) < 1e-10
        assert h1.derivative(1.0) == pytest.approx(1.0, abs=1e-10)

    def test_resonant_well_matches_inverse_theta(self):
        h1 = solve_h1(constant_profile(-np.pi ** 2 / 4.0))
        expected = (2.0 / np.pi) * np.sin(np.pi * (h1.n + 1.0) / 2.0)
        assert np.max(np.abs(h1.values - expected)) < 1e-8
        assert h1.derivative(1.0) == pytest.approx(-1.0, abs=1e-8)

    def test_barrier(self):
        h1 = solve_h1(constant_profile(1.0))
        assert np.max(np.abs(h1.values - np.sinh(h1.n + 1.0))) < 1e-8
        assert h1.derivative(1.0) == pytest.approx(np.cosh(2.0), abs=1e-8)


class TestSolveH2:
    def test_zero_rhs_gives_zero(self):
        profile = constant_profile(0.0)
        state = detect_resonance(profile)
        res = solve_h2(profile, state, kappa=np.zeros_like(S_GRID), s_grid=S_GRID)
        assert np.max(np.abs(res.values)) < 1e-12

    def test_constant_u(self):
        u0 = 0.7
        profile = constant_profile(0.0, u0)
        state = detect_resonance(profile)
        kappa = np.cos(S_GRID)
        res = solve_h2(profile, state, kappa=kappa, s_grid=S_GRID)
        expected = -u0 * (res.n + 1.0) ** 2 / 2.0
        assert np.max(np.abs(res.values - expected[None, :])) < 1e-9
        assert np.max(np.abs(res.boundary_slope() + 2.0 * u0)) < 1e-9

    def test_odd_resonance_kills_curvature_term(self):
        profile = constant_profile(-np.pi ** 2 / 4.0)
        state = detect_resonance(profile)
        kappa = 1.0 + 0.3 * np.sin(S_GRID)
        res = solve_h2(profile, state, kappa=kappa, s_grid=S_GRID)
        # theta**2 = 1 and U = 0, so Upsilon = 0 and the slope vanishes
        assert np.max(np.abs(res.boundary_slope())) < 1e-6

    def test_requires_resonance(self):
        profile = constant_profile(1.0)
        state = detect_resonance(profile)
        with pytest.raises(ContractError):
            solve_h2(profile, state, kappa=np.zeros_like(S_GRID), s_grid=S_GRID)


class TestComputeTransmission:
    def test_constant_u(self):
        u0 = 1.3
        profile = constant_profile(0.0, u0)
        state = detect_resonance(profile)
        trans = compute_transmission(profile, state, kappa=np.zeros_like(S_GRID),
                                     s_grid=S_GRID, s_period=2.0 * np.pi)
        assert np.allclose(trans.mu, 2.0 * u0, atol=1e-10)
        assert np.allclose(trans.mu0, 2.0 * u0, atol=1e-10)
        assert trans.mu1 == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(trans.upsilon, 2.0 * u0, atol=1e-10)

    def test_sine_profile_mu1(self):
        profile = PotentialProfile.from_expressions(v_expr="sin(pi*n)")
        int_v, _, mu1 = profile_moments(profile, S_GRID)
        assert mu1 == pytest.approx(-2.0 / np.pi, abs=1e-9)
        assert int_v == pytest.approx(0.0, abs=1e-12)

    def test_even_profile_mu1_vanishes(self):
        profile = PotentialProfile.from_expressions(v_expr="cos(pi*n)*exp(-n*n)")
        _, _, mu1 = profile_moments(profile, S_GRID)
        assert mu1 == pytest.approx(0.0, abs=1e-12)

    def test_requires_resonance_for_mu(self):
        profile = constant_profile(1.0)
        state = detect_resonance(profile)
        with pytest.raises(ContractError):
            compute_transmission(profile, state, kappa=np.zeros_like(S_GRID),
                                 s_grid=S_GRID, s_period=2.0 * np.pi)


def fourier_profile(coeffs):
    """Smooth compactly-supported-ish potential from a few sine modes."""
    terms = " + ".join(
        f"({c:.6f})*sin({k + 1}*pi*(n+1)/2)" for k, c in enumerate(coeffs)
    )
    return PotentialProfile.from_expressions(v_expr=terms or "0")


class TestIdentities:
    @given(st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=4))
    @settings(max_examples=20, deadline=None)
    def test_wronskian_constancy(self, coeffs):
        profile = fourier_profile(coeffs)
        state = detect_resonance(profile, num_points=513)
        h1 = solve_h1(profile, num_points=513)
        wronskian = state.h * h1.deriv - state.hp * h1.values
        assert np.max(np.abs(wronskian - 1.0)) < 1e-8

    @given(st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=4))
    @settings(max_examples=20, deadline=None)
    def test_int_h_hprime_endpoint_formula(self, coeffs):
        profile = fourier_profile(coeffs)
        state = detect_resonance(profile, num_points=513)
        integral = simpson(state.h * state.hp, x=state.n)
        endpoint = 0.5 * (state.h[-1] ** 2 - state.h[0] ** 2)
        assert integral == pytest.approx(endpoint, abs=1e-8)

    def test_int_h_hprime_for_resonant_well(self):
        state = detect_resonance(constant_profile(-np.pi ** 2 / 4.0))
        integral = simpson(state.h * state.hp, x=state.n)
        assert integral == pytest.approx(0.5 * (state.theta ** 2 - 1.0), abs=1e-8)

    def test_orientation_flip_covariance(self):
        # Asymmetric resonant profile: tune the coupling first, then compare
        # transmission data computed in the two Frenet frames.
        base = PotentialProfile.from_expressions(
            v_expr="-(1 + 0.5*n)", u_expr="1 + 0.2*cos(s)", s_period=2 * np.pi)
        roots = scan_coupling(base, (0.5, 5.0)).alphas
        assert roots
        profile = base.scaled(roots[0])
        state = detect_resonance(profile, tol=1e-6)
        assert state.resonant
        kappa = -np.ones_like(S_GRID)
        trans = compute_transmission(profile, state, kappa, S_GRID, 2 * np.pi)

        flipped = profile.flipped()
        state_f = detect_resonance(flipped, tol=1e-6)
        assert state_f.resonant
        trans_f = compute_transmission(flipped, state_f, -kappa, S_GRID,
                                       2 * np.pi)
        assert state_f.theta == pytest.approx(1.0 / state.theta, rel=1e-7)
        assert np.allclose(trans_f.mu, trans.mu / state.theta ** 2, rtol=1e-6)

"""Tests for the system definitions and pointwise Hamiltonian algebra.

Expected numbers are hand-derived from the van der Pol Lienard form
(mu=0.1, h(x)=x^2-1, V'(x)=x) before the implementation existed.
"""

import math
import random

import pytest

from lcsync.errors import BracketingError, DomainError
from lcsync.model import (
    ExtendedState,
    ForceBound,
    LienardSystem,
    PhasePoint,
    canonical_rhs,
    check_lienard_conditions,
    costate_field,
    hamiltonian,
    optimal_force,
    state_rhs,
    van_der_pol,
    vector_field,
)


@pytest.fixture(scope="module")
def vdp():
    return van_der_pol(0.1)


class TestValueTypes:
    def test_phase_point_rejects_non_finite(self):
        with pytest.raises(DomainError):
            PhasePoint(math.nan, 0.0)
        with pytest.raises(DomainError):
            PhasePoint(0.0, math.inf)

    def test_force_bound_positive(self):
        assert ForceBound(2.0).K == 2.0
        with pytest.raises(DomainError):
            ForceBound(0.0)
        with pytest.raises(DomainError):
            ForceBound(-1.0)

    def test_extended_state_p0_restricted(self):
        x = PhasePoint(1.0, 2.0)
        assert ExtendedState(x, 0.5, -0.5, -1.0).as_tuple() == (1.0, 2.0, 0.5, -0.5)
        ExtendedState(x, 0.5, -0.5, 0.0)
        with pytest.raises(DomainError):
            ExtendedState(x, 0.5, -0.5, 1.0)

    def test_system_requires_positive_mu(self):
        with pytest.raises(DomainError):
            van_der_pol(0.0)
        with pytest.raises(DomainError):
            van_der_pol(-0.1)


class TestVectorField:
    def test_rest_point_with_force(self, vdp):
        # At the origin the drift vanishes, so the force is all that acts.
        assert vector_field(vdp, PhasePoint(0.0, 0.0), 0.2) == pytest.approx((0.0, 0.2))

    def test_on_unit_circle_damping_vanishes(self, vdp):
        # h(1) = 0 kills the damping term: dynamics reduce to the spring.
        assert vector_field(vdp, PhasePoint(1.0, 1.0), 0.0) == pytest.approx((1.0, -1.0))

    def test_generic_point(self, vdp):
        # x1=2, x2=1: -0.1*(4-1)*1 - 2 = -2.3
        assert vector_field(vdp, PhasePoint(2.0, 1.0), 0.0) == pytest.approx((1.0, -2.3))

    def test_force_enters_additively(self, vdp):
        x = PhasePoint(-1.3, 0.7)
        d0 = vector_field(vdp, x, 0.0)
        d1 = vector_field(vdp, x, 1.5)
        assert d1[0] == d0[0]
        assert d1[1] - d0[1] == pytest.approx(1.5, abs=1e-14)

    def test_odd_symmetry(self, vdp):
        # The van der Pol drift is odd: f(-x, -F) = -f(x, F).
        rng = random.Random(7)
        for _ in range(50):
            x = PhasePoint(rng.uniform(-3, 3), rng.uniform(-3, 3))
            F = rng.uniform(-2, 2)
            d = vector_field(vdp, x, F)
            dm = vector_field(vdp, PhasePoint(-x.x1, -x.x2), -F)
            assert dm[0] == pytest.approx(-d[0], abs=1e-14)
            assert dm[1] == pytest.approx(-d[1], abs=1e-14)

    def test_state_rhs_closure_matches(self, vdp):
        rhs = state_rhs(vdp, 0.7)
        x = PhasePoint(1.2, -0.4)
        assert rhs(0.0, (1.2, -0.4)) == pytest.approx(vector_field(vdp, x, 0.7))


class TestCostateFieldAndHamiltonian:
    def test_costate_example(self, vdp):
        # x=(2,1), p=(1,1): p1' = p2*(mu*h'(x1)*x2 + V''(x1)) = 1*(0.1*4*1+1) = 1.4
        #                    p2' = -p1 + mu*h(x1)*p2 = -1 + 0.1*3*1 = -0.7
        s = ExtendedState(PhasePoint(2.0, 1.0), 1.0, 1.0, -1.0)
        dp = costate_field(vdp, s, 0.0)
        assert dp == pytest.approx((1.4, -0.7))

    def test_costate_is_minus_state_gradient_of_h(self, vdp):
        # (p1', p2') must equal -dH/dx at fixed p, by central differences.
        rng = random.Random(21)
        for _ in range(25):
            x1, x2 = rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)
            p1, p2 = rng.uniform(-2, 2), rng.uniform(-2, 2)
            F = rng.uniform(-2, 2)
            s = ExtendedState(PhasePoint(x1, x2), p1, p2, -1.0)
            dp1, dp2 = costate_field(vdp, s, F)
            eps = 1e-6

            def H(a, b):
                return hamiltonian(vdp, ExtendedState(PhasePoint(a, b), p1, p2, -1.0), F)

            dHdx1 = (H(x1 + eps, x2) - H(x1 - eps, x2)) / (2 * eps)
            dHdx2 = (H(x1, x2 + eps) - H(x1, x2 - eps)) / (2 * eps)
            assert dp1 == pytest.approx(-dHdx1, abs=5e-8)
            assert dp2 == pytest.approx(-dHdx2, abs=5e-8)

    def test_hamiltonian_example(self, vdp):
        # H = p1*x2 + p2*(-mu h x2 - V' + F) + p0
        #   = 1*1 + 1*(-0.3 - 2 + 0.5) - 1 = -1.8
        s = ExtendedState(PhasePoint(2.0, 1.0), 1.0, 1.0, -1.0)
        assert hamiltonian(vdp, s, 0.5) == pytest.approx(-1.8)

    def test_hamiltonian_affine_in_force_with_slope_p2(self, vdp):
        s = ExtendedState(PhasePoint(0.3, -1.1), 0.4, -0.9, -1.0)
        h0 = hamiltonian(vdp, s, 0.0)
        for F in (-2.0, -0.5, 1.0, 2.0):
            assert hamiltonian(vdp, s, F) == pytest.approx(h0 + s.p2 * F, abs=1e-13)

    def test_canonical_rhs_stacks_state_and_costate(self, vdp):
        rhs = canonical_rhs(vdp, -0.8)
        z = (1.5, -0.6, 0.2, 1.1)
        s = ExtendedState(PhasePoint(1.5, -0.6), 0.2, 1.1, -1.0)
        expect = vector_field(vdp, s.x, -0.8) + costate_field(vdp, s, -0.8)
        assert rhs(0.0, z) == pytest.approx(expect, abs=1e-15)


class TestOptimalForce:
    def test_sign_table(self, vdp):
        K = 2.0
        assert optimal_force(0.3, K) == 2.0
        assert optimal_force(-1e-9, K) == -2.0
        assert optimal_force(5.0, 0.2) == 0.2

    def test_maximises_hamiltonian(self, vdp):
        rng = random.Random(5)
        for _ in range(100):
            p2 = rng.uniform(-1, 1)
            if abs(p2) < 1e-6:
                continue
            K = rng.uniform(0.1, 3.0)
            s = ExtendedState(PhasePoint(0.5, 0.5), 0.3, p2, -1.0)
            best = hamiltonian(vdp, s, optimal_force(p2, K))
            for F in (-K, -K / 2, 0.0, K / 2, K):
                assert best >= hamiltonian(vdp, s, F) - 1e-12

    def test_raises_on_zero_p2(self):
        with pytest.raises(DomainError):
            optimal_force(0.0, 1.0)


class TestLienardConditions:
    def test_van_der_pol_passes(self, vdp):
        rep = check_lienard_conditions(vdp, x_hi=10.0)
        assert rep.passed
        # xi(x) = mu*(x^3/3 - x) has its positive zero at sqrt(3).
        assert rep.zero == pytest.approx(math.sqrt(3.0), abs=1e-8)
        assert rep.xi_negative_before_zero
        assert rep.xi_nondecreasing_after_zero
        assert rep.v_single_minimum
        assert rep.single_zero

    def test_pure_damping_fails(self):
        # h = 1 gives xi(x) = x > 0 for x > 0: no positive zero exists and
        # the damping-shape condition fails outright.
        sys = LienardSystem(
            mu=0.1,
            h=lambda x: 1.0,
            h_prime=lambda x: 0.0,
            v_prime=lambda x: x,
            v_second=lambda x: 1.0,
            name="pure-damping",
        )
        rep = check_lienard_conditions(sys, x_hi=10.0)
        assert not rep.passed
        assert rep.zero is None

    def test_window_short_of_zero_raises(self, vdp):
        # xi < 0 on all of (0, 0.5]: the zero is simply not bracketed yet.
        with pytest.raises(BracketingError):
            check_lienard_conditions(vdp, x_hi=0.5)

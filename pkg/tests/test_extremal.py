"""Tests for backward-constructed bang-bang extremals.

Frozen reference values for the critical trajectories were computed with an
independent integrator (scipy solve_ivp at rtol 1e-12) before this module's
rewind was trusted: at K=0.2 the left critical switches at x1 = 2.510587
and -3.594624; at K=0.5 at x1 = 3.584657; at K=2 it never switches.
"""

import math

import numpy as np
import pytest

from lcsync.errors import DomainError, InconsistentFinalPointError, SingularArcError
from lcsync.extremal import (
    EXTERIOR,
    INTERIOR,
    BangSchedule,
    _scan_singular,
    critical_trajectory,
    final_bang_sign,
    final_costate,
    max_hamiltonian_residual,
    replay_forward,
    rewind_extremal,
    transversality_residual,
)
from lcsync.limit_cycle import chi, outward_normal
from lcsync.model import ExtendedState, PhasePoint, hamiltonian


class TestFinalCostate:
    def test_extreme_point_closed_form(self, vdp, lc):
        # Abnormal case at the extremes: (sgn(Ff), 0, 0).
        assert final_costate(vdp, lc, (lc.x_max, 0.0), -2.0) == (-1.0, 0.0, 0.0)
        assert final_costate(vdp, lc, (-lc.x_max, 0.0), 0.2) == (1.0, 0.0, 0.0)

    def test_generic_hamiltonian_vanishes_on_100_anchors(self, vdp, lc):
        for theta in np.linspace(0.003, 1.0, 100, endpoint=False):
            a = lc.anchor_at(float(theta))
            if abs(a.x2) < 1e-5:
                continue
            for Ff in (2.0, -2.0, 0.2):
                p1f, p2f, p0 = final_costate(vdp, lc, a, Ff)
                s = ExtendedState(a, p1f, p2f, p0)
                assert abs(hamiltonian(vdp, s, Ff)) < 1e-12
                assert p0 == -1.0
                assert math.copysign(1, p2f) == math.copysign(1, Ff)

    def test_generic_costate_is_along_outward_normal(self, vdp, lc):
        for theta in (0.1, 0.33, 0.61, 0.9):
            a = lc.anchor_at(theta)
            p1f, p2f, _ = final_costate(vdp, lc, a, 0.5)
            n = outward_normal(lc, a)
            # p parallel to n: cross product vanishes.
            assert abs(p1f * n[1] - p2f * n[0]) < 1e-9 * math.hypot(p1f, p2f)

    def test_near_axis_but_not_extreme_rejected(self, vdp, lc):
        with pytest.raises(InconsistentFinalPointError):
            final_costate(vdp, lc, (1.0, 1e-9), 2.0)

    def test_off_cycle_rejected(self, vdp, lc):
        with pytest.raises(InconsistentFinalPointError):
            final_costate(vdp, lc, (3.0, 1.0), 2.0)

    def test_zero_force_rejected(self, vdp, lc):
        with pytest.raises(DomainError):
            final_costate(vdp, lc, (lc.x_max, 0.0), 0.0)


class TestFinalBangSign:
    def test_generic_rules(self, vdp, lc):
        bottom = lc.anchor_at(0.25)  # x2 < 0 half
        top = lc.anchor_at(0.75)  # x2 > 0 half
        assert bottom.x2 < 0 and top.x2 > 0
        assert final_bang_sign(vdp, lc, bottom, EXTERIOR, 2.0) == (1,)
        assert final_bang_sign(vdp, lc, bottom, INTERIOR, 2.0) == (-1,)
        assert final_bang_sign(vdp, lc, top, EXTERIOR, 2.0) == (-1,)
        assert final_bang_sign(vdp, lc, top, INTERIOR, 2.0) == (1,)

    def test_extremes_small_K_unique_signs(self, vdp, lc):
        # V'(x_max) ~ 2.0001 > K: one exterior sign per extreme.
        for K in (0.2, 0.5, 2.0):
            assert final_bang_sign(vdp, lc, (-lc.x_max, 0.0), EXTERIOR, K) == (1,)
            assert final_bang_sign(vdp, lc, (lc.x_max, 0.0), EXTERIOR, K) == (-1,)
            assert final_bang_sign(vdp, lc, (-lc.x_max, 0.0), INTERIOR, K) == (-1,)
            assert final_bang_sign(vdp, lc, (lc.x_max, 0.0), INTERIOR, K) == (1,)

    def test_extremes_large_K_both_exterior_signs(self, vdp, lc):
        # K > V'(x_max): both signs exterior-consistent (the secondary one is
        # pruned later by dominance), none interior-consistent.
        sgns = final_bang_sign(vdp, lc, (-lc.x_max, 0.0), EXTERIOR, 3.0)
        assert sgns == (1, -1)
        assert final_bang_sign(vdp, lc, (-lc.x_max, 0.0), INTERIOR, 3.0) == ()

    def test_off_cycle_rejected(self, vdp, lc):
        with pytest.raises(DomainError):
            final_bang_sign(vdp, lc, (0.5, 0.5), EXTERIOR, 2.0)


@pytest.fixture(scope="module")
def ext2(vdp, lc):
    a = lc.anchor_at(0.2)
    (s,) = final_bang_sign(vdp, lc, a, EXTERIOR, 2.0)
    return rewind_extremal(vdp, lc, a, s, 2.0, t_back_max=30.0)


class TestRewind:

    def test_structure(self, ext2, lc):
        assert ext2.n_bangs == len(ext2.arcs)
        assert len(ext2.switch_states) == ext2.n_bangs - 1
        assert ext2.p0 == -1.0
        assert ext2.kind == "generic"
        assert ext2.region == EXTERIOR
        # Forward time: starts at 0, ends at t_f at the anchor.
        assert ext2.arcs[0].ts[0] == pytest.approx(0.0, abs=1e-12)
        assert ext2.arcs[-1].ts[-1] == pytest.approx(ext2.t_f, abs=1e-12)
        last = ext2.arcs[-1].zs[-1]
        assert last[0] == pytest.approx(ext2.anchor.x1, abs=1e-12)
        assert last[1] == pytest.approx(ext2.anchor.x2, abs=1e-12)

    def test_switches_have_p2_zero_and_signs_alternate(self, ext2):
        for st in ext2.switch_states:
            assert abs(st.p2) < 1e-8
        signs = [a.sign for a in ext2.arcs]
        for a, b in zip(signs, signs[1:]):
            assert a == -b
        assert signs == list(ext2.schedule.signs())

    def test_p2_sign_matches_force_sign_mid_arc(self, ext2):
        for arc in ext2.arcs:
            mid = arc.zs[len(arc.zs) // 2]
            assert math.copysign(1, mid[3]) == float(arc.sign)

    def test_hamiltonian_and_transversality(self, vdp, lc, ext2):
        assert max_hamiltonian_residual(vdp, ext2) < 1e-6
        assert transversality_residual(vdp, lc, ext2) < 1e-6

    def test_nontrivial_costate(self, ext2):
        for arc in ext2.arcs:
            assert np.min(np.hypot(arc.zs[:, 2], arc.zs[:, 3])) > 1e-9

    def test_replay_returns_to_anchor(self, vdp, lc, ext2):
        terminal, miss = replay_forward(vdp, ext2.earliest, ext2.schedule, lc)
        assert miss < 1e-6
        assert terminal.x1 == pytest.approx(ext2.anchor.x1, abs=1e-5)
        assert terminal.x2 == pytest.approx(ext2.anchor.x2, abs=1e-5)

    def test_exterior_K2_two_bangs(self, vdp, lc):
        for theta in np.linspace(0, 1, 17, endpoint=False):
            a = lc.anchor_at(float(theta))
            sgns = final_bang_sign(vdp, lc, a, EXTERIOR, 2.0)
            tr = rewind_extremal(vdp, lc, a, sgns[0], 2.0, t_back_max=30.0)
            assert tr.n_bangs <= 2

    def test_exterior_K02_reaches_four_bangs(self, vdp, lc):
        most = 0
        for theta in np.linspace(0, 1, 17, endpoint=False):
            a = lc.anchor_at(float(theta))
            sgns = final_bang_sign(vdp, lc, a, EXTERIOR, 0.2)
            tr = rewind_extremal(vdp, lc, a, sgns[0], 0.2, t_back_max=30.0)
            most = max(most, tr.n_bangs)
        assert most == 4

    def test_interior_terminates_by_region_exit(self, vdp, lc):
        a = lc.anchor_at(0.3)
        (s,) = final_bang_sign(vdp, lc, a, INTERIOR, 2.0)
        tr = rewind_extremal(vdp, lc, a, s, 2.0, t_back_max=40.0)
        assert tr.region == INTERIOR
        assert tr.termination == "region_exit"
        # Earliest point sits within the exit margin of the cycle boundary.
        assert chi(lc, tr.earliest) < 2e-3

    def test_region_inferred_matches_explicit(self, vdp, lc):
        a = lc.anchor_at(0.4)
        (s,) = final_bang_sign(vdp, lc, a, EXTERIOR, 0.5)
        tr = rewind_extremal(vdp, lc, a, s, 0.5, t_back_max=10.0)
        assert tr.region == EXTERIOR

    def test_horizon_truncation(self, vdp, lc):
        a = lc.anchor_at(0.2)
        (s,) = final_bang_sign(vdp, lc, a, EXTERIOR, 2.0)
        tr = rewind_extremal(vdp, lc, a, s, 2.0, t_back_max=1.0)
        assert tr.termination == "horizon"
        assert tr.t_f == pytest.approx(1.0, abs=1e-9)

    def test_max_bangs_truncation(self, vdp, lc):
        a = lc.anchor_at(0.3)
        (s,) = final_bang_sign(vdp, lc, a, INTERIOR, 0.5)
        tr = rewind_extremal(vdp, lc, a, s, 0.5, t_back_max=40.0, max_bangs=1)
        assert tr.termination == "max_bangs"
        assert tr.n_bangs == 1
        assert tr.schedule.switches == ()

    def test_flat_concatenation(self, ext2):
        ts, zs, Fs = ext2.flat()
        assert len(ts) == len(zs) == len(Fs)
        assert np.all(np.diff(ts) >= 0.0)
        assert set(np.unique(Fs)) <= {-2.0, 2.0}


class TestCriticalTrajectories:
    def test_K2_no_axis_crossings(self, vdp, lc):
        c = critical_trajectory(vdp, lc, "BLplus", 2.0)
        assert c.kind == "critical_BLplus"
        assert c.p0 == 0.0
        assert len(c.switch_states) == 0
        assert len(c.axis_crossings) == 0
        assert c.termination == "domain_escape"

    def test_K05_single_crossing_frozen_value(self, vdp, lc):
        c = critical_trajectory(vdp, lc, "BLplus", 0.5)
        assert len(c.switch_states) == 1
        assert c.switch_states[0].x.x1 == pytest.approx(3.584657, abs=1e-4)

    def test_K02_two_crossings_frozen_values(self, vdp, lc):
        c = critical_trajectory(vdp, lc, "BLplus", 0.2)
        assert len(c.switch_states) == 2
        # Forward order: the backward-first crossing (+x_c1) is the later one.
        xs = [st.x.x1 for st in c.switch_states]
        assert xs[1] == pytest.approx(2.510587, abs=1e-4)
        assert xs[0] == pytest.approx(-3.594624, abs=1e-4)
        x_c1, x_c2 = abs(xs[1]), abs(xs[0])
        assert lc.x_max < x_c1 < x_c2

    @pytest.mark.parametrize("K", [0.2, 0.5])
    def test_result3_both_directions(self, vdp, lc, K):
        for side in ("BLplus", "BRminus"):
            c = critical_trajectory(vdp, lc, side, K)
            for st in c.switch_states:
                assert abs(st.x.x2) < 1e-6
            for _, st in c.axis_crossings:
                assert abs(st.p2) < 1e-6

    def test_BRminus_mirrors_BLplus(self, vdp, lc):
        bl = critical_trajectory(vdp, lc, "BLplus", 0.2)
        br = critical_trajectory(vdp, lc, "BRminus", 0.2)
        assert len(bl.switch_states) == len(br.switch_states)
        for a, b in zip(bl.switch_states, br.switch_states):
            assert b.x.x1 == pytest.approx(-a.x.x1, abs=1e-6)
            assert b.x.x2 == pytest.approx(-a.x.x2, abs=1e-6)
        assert br.schedule.first_sign == -bl.schedule.first_sign
        assert br.t_f == pytest.approx(bl.t_f, abs=1e-6)

    def test_bad_side_rejected(self, vdp, lc):
        with pytest.raises(DomainError):
            critical_trajectory(vdp, lc, "BLminus", 2.0)


class TestReplay:
    def test_empty_schedule_on_cycle(self, vdp, lc):
        a = lc.anchor_at(0.3)
        sched = BangSchedule(t_f=0.0, switches=(), first_sign=1, K=2.0)
        terminal, miss = replay_forward(vdp, a, sched, lc)
        assert terminal.x1 == a.x1 and terminal.x2 == a.x2
        assert miss <= lc.resolution

    def test_perturbed_switch_grows_miss_smoothly(self, vdp, lc):
        a = lc.anchor_at(0.2)
        (s,) = final_bang_sign(vdp, lc, a, EXTERIOR, 2.0)
        tr = rewind_extremal(vdp, lc, a, s, 2.0, t_back_max=30.0)
        assert tr.n_bangs == 2
        sw = tr.schedule.switches[0]
        misses = []
        for d in (0.0, 1e-3, 2e-3):
            sched = BangSchedule(tr.t_f, (sw + d,), tr.schedule.first_sign, tr.K)
            _, miss = replay_forward(vdp, tr.earliest, sched, lc)
            misses.append(miss)
        assert misses[0] < 1e-6
        assert 0.0 < misses[1] < 0.05
        # Near-tangential landing: the normal miss grows ~quadratically in
        # the shift, so doubling d roughly quadruples it.
        assert misses[1] < misses[2] < 6.0 * misses[1] + 1e-6


class TestScheduleValidation:
    def test_alternating_signs_derived(self):
        s = BangSchedule(t_f=3.0, switches=(1.0, 2.0), first_sign=-1, K=0.5)
        assert s.signs() == (-1, 1, -1)
        assert s.n_bangs == 3
        assert s.force_at(0.5) == -0.5
        assert s.force_at(1.5) == 0.5
        assert s.force_at(2.5) == -0.5

    def test_rejects_bad_switch_times(self):
        with pytest.raises(DomainError):
            BangSchedule(t_f=1.0, switches=(1.5,), first_sign=1, K=1.0)
        with pytest.raises(DomainError):
            BangSchedule(t_f=1.0, switches=(0.6, 0.4), first_sign=1, K=1.0)
        with pytest.raises(DomainError):
            BangSchedule(t_f=0.0, switches=(0.1,), first_sign=1, K=1.0)

    def test_singular_scan_fires_on_flat_p2(self):
        ts = np.linspace(0, 1, 10)
        zs = np.zeros((10, 4))
        zs[:, 3] = 1e-12  # p2 ~ 0 across the whole arc
        with pytest.raises(SingularArcError):
            _scan_singular(ts, zs)

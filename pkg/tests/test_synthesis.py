"""Tests for the backward-synthesis field: construction, point queries,
switching/coexistence curves, critical force levels, and the derived
phase-diagram and minimum-time-curve products.

Frozen numbers in this file were derived independently before the
synthesis module existed: reference times were cross-checked against
constant-force forward shooting (any constant-force trajectory that hits
the cycle bounds the optimal time from above) and against canonical
backward retraces through the query point.
"""

from __future__ import annotations

import math
import os

import numpy as np
import pytest

from lcsync.errors import BracketingError, CoverageError, DomainError
from lcsync.extremal import (
    critical_trajectory,
    max_hamiltonian_residual,
    replay_forward,
    transversality_residual,
)
from lcsync.synthesis import (
    axis_crossings,
    build_field,
    coexistence_curve,
    critical_K,
    min_time_curve,
    optimal_for_point,
    phase_diagram,
    switching_curves,
)

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="module")
def f_ext2(vdp, lc):
    return build_field(vdp, lc, 2.0, "exterior", n_anchors=256)


@pytest.fixture(scope="module")
def f_int2(vdp, lc):
    return build_field(vdp, lc, 2.0, "interior", n_anchors=256)


@pytest.fixture(scope="module")
def f_ext02(vdp, lc):
    return build_field(vdp, lc, 0.2, "exterior", n_anchors=256)


@pytest.fixture(scope="module")
def f_int05(vdp, lc):
    return build_field(vdp, lc, 0.5, "interior", n_anchors=256)


def _scaled_cycle_points(lc, factor, n, offset=0.37):
    pts = []
    for i in range(n):
        a = lc.anchor_at((i + offset) / n)
        pts.append((factor * a.x1, factor * a.x2))
    return pts


# ---------------------------------------------------------------------------
# Construction


class TestBuildField:
    def test_rejects_unknown_region(self, vdp, lc):
        with pytest.raises(DomainError):
            build_field(vdp, lc, 2.0, "outside")

    def test_rejects_too_few_anchors(self, vdp, lc):
        with pytest.raises(DomainError):
            build_field(vdp, lc, 2.0, "exterior", n_anchors=16)

    def test_full_anchor_coverage(self, f_ext2):
        assert not f_ext2.failed_anchors
        assert len(f_ext2.extremals) >= 256
        thetas = np.asarray(f_ext2.anchor_thetas)
        assert np.all((thetas >= 0.0) & (thetas < 1.0))

    def test_coverage_gap_guard_trips(self, vdp, lc):
        # every anchor succeeds, so the largest circular gap is 1/64; a
        # tighter tolerance must trip the guard and carry a location
        with pytest.raises(CoverageError) as exc:
            build_field(vdp, lc, 2.0, "exterior", n_anchors=64, gap_tol=1e-4)
        assert exc.value.location is not None

    def test_interior_field_has_critical_branches(self, f_int2):
        kinds = {tr.kind for tr in f_int2.extremals}
        assert any(k.startswith("critical") for k in kinds)


# ---------------------------------------------------------------------------
# Invariants along the stored flow


class TestFieldInvariants:
    def test_hamiltonian_vanishes_along_extremals(self, vdp, f_ext2):
        worst = 0.0
        for tr in f_ext2.extremals[::11]:
            worst = max(worst, max_hamiltonian_residual(vdp, tr))
        assert worst < 1e-6

    def test_final_costate_normal_to_cycle(self, vdp, lc, f_ext2):
        worst = 0.0
        for tr in f_ext2.extremals[::11]:
            worst = max(worst, transversality_residual(vdp, lc, tr))
        assert worst < 1e-6

    def test_replayed_schedules_land_on_their_anchors(self, vdp, lc, f_ext02):
        # forward integration of the rewound schedule from its earliest
        # point must land on the anchor; distance to the anchor point is
        # the honest measure (the polyline distance proxy saturates near
        # its sampling floor of ~5e-7)
        for tr in f_ext02.extremals[7:200:19]:
            x0 = tr.arcs[0].zs[0][:2]
            end, _ = replay_forward(vdp, x0, tr.schedule, lc)
            miss = math.hypot(end.x1 - tr.anchor.x1, end.x2 - tr.anchor.x2)
            assert miss < 1e-6


# ---------------------------------------------------------------------------
# Point queries


class TestPointQueries:
    def test_reference_point_full_force(self, f_ext2):
        ans = optimal_for_point(f_ext2, (5.0, 0.0))
        assert ans.region == "exterior"
        assert ans.schedule.signs() == (-1, 1)
        # coarse read-off sits within half a percent of the refined value
        assert ans.t_f == pytest.approx(2.03840074, abs=5e-3)
        assert ans.candidates == len(ans.class_times) >= 1
        assert not ans.degenerate

    def test_reference_point_full_force_refined(self, f_ext2):
        ans = optimal_for_point(f_ext2, (5.0, 0.0), refine=True)
        assert ans.refined
        assert ans.t_f == pytest.approx(2.03840074, abs=1e-6)
        assert ans.schedule.signs() == (-1, 1)
        # the refined snap point coincides with the query
        assert math.hypot(ans.x0_snap.x1 - 5.0, ans.x0_snap.x2) < 1e-8

    def test_reference_point_weak_force_refined(self, f_ext02):
        # x10 = 5 lies beyond both critical crossings at K = 0.2, so the
        # winner alternates through four bangs
        ans = optimal_for_point(f_ext02, (5.0, 0.0), refine=True)
        assert ans.schedule.signs() == (-1, 1, -1, 1)
        assert ans.t_f == pytest.approx(8.31141925, abs=1e-6)

    def test_mirror_symmetry_of_answers(self, f_ext2):
        a = optimal_for_point(f_ext2, (5.0, 0.0))
        b = optimal_for_point(f_ext2, (-5.0, 0.0))
        assert b.schedule.signs() == tuple(-s for s in a.schedule.signs())
        assert b.t_f == pytest.approx(a.t_f, abs=1e-5)
        np.testing.assert_allclose(b.schedule.switches, a.schedule.switches, atol=1e-5)

    def test_far_point_raises_coverage_error(self, f_ext2):
        with pytest.raises(CoverageError):
            optimal_for_point(f_ext2, (40.0, 40.0))

    def test_explicit_radius_too_small_raises(self, f_ext2):
        with pytest.raises(CoverageError):
            optimal_for_point(f_ext2, (5.0, 0.0), delta=1e-12)


class TestBangCountStructure:
    def test_four_sign_regions_full_force(self, lc, f_ext2):
        # walking once around the cycle at 1.3x scale, the winning sign
        # sequences form exactly four contiguous angular blocks
        pats = []
        for pt in _scaled_cycle_points(lc, 1.3, 96, offset=0.5):
            pats.append(optimal_for_point(f_ext2, pt).schedule.signs())
        runs = []
        for p in pats:
            if not runs or runs[-1][0] != p:
                runs.append([p, 1])
            else:
                runs[-1][1] += 1
        if len(runs) > 1 and runs[0][0] == runs[-1][0]:
            runs[0][1] += runs.pop()[1]
        assert len(runs) == 4
        assert {r[0] for r in runs} == {(-1, 1), (1,), (1, -1), (-1,)}
        # cyclic order: single-sign blocks separate the two-sign blocks
        seq = [r[0] for r in runs]
        i = seq.index((-1, 1))
        rot = seq[i:] + seq[:i]
        assert rot == [(-1, 1), (1,), (1, -1), (-1,)]

    def test_exterior_bang_caps(self, lc, f_ext2, f_ext02):
        for pt in _scaled_cycle_points(lc, 1.45, 40):
            assert len(optimal_for_point(f_ext2, pt).schedule.signs()) <= 2
            assert len(optimal_for_point(f_ext02, pt).schedule.signs()) <= 4

    def test_interior_full_force_always_single_bang(self, lc, f_int2):
        rng = np.random.default_rng(11)
        for _ in range(60):
            a = lc.anchor_at(rng.uniform())
            r = rng.uniform(0.15, 0.92)
            ans = optimal_for_point(f_int2, (r * a.x1, r * a.x2))
            assert len(ans.schedule.signs()) == 1

    def test_interior_half_force_exactly_two_classes(self, lc, f_int05):
        rng = np.random.default_rng(12)
        counts = set()
        for _ in range(60):
            a = lc.anchor_at(rng.uniform())
            r = rng.uniform(0.15, 0.92)
            ans = optimal_for_point(f_int05, (r * a.x1, r * a.x2))
            counts.add(len(ans.schedule.signs()))
        assert counts == {1, 2}


# ---------------------------------------------------------------------------
# Switching curves


class TestSwitchingCurves:
    def test_matches_frozen_polyline(self, f_ext2):
        sp, sm = switching_curves(f_ext2)
        golden = np.loadtxt(os.path.join(DATA, "splus_k2_256.csv"),
                            delimiter=",", skiprows=1)
        assert sp.shape == golden.shape
        np.testing.assert_allclose(sp, golden, atol=1e-8)

    def test_curves_are_central_mirror_images(self, f_ext2):
        sp, sm = switching_curves(f_ext2)
        assert len(sp) == len(sm)
        worst = 0.0
        for p in -sm:
            worst = max(worst, float(np.hypot(sp[:, 0] - p[0], sp[:, 1] - p[1]).min()))
        assert worst < 1e-5

    def test_positive_branch_outside_right_extreme(self, lc, f_ext2):
        sp, _ = switching_curves(f_ext2)
        assert np.all(sp[:, 0] >= lc.x_max - 1e-9)


# ---------------------------------------------------------------------------
# Coexistence curve (interior tie set)


@pytest.fixture(scope="module")
def bc(f_int2):
    return coexistence_curve(f_int2, n_angles=32, n_radii=8)


class TestCoexistenceCurve:
    def test_nonempty_and_bounded(self, lc, bc):
        assert len(bc) >= 8
        assert np.all(np.abs(bc[:, 0]) < lc.x_max)

    def test_reflection_symmetric(self, bc):
        worst = 0.0
        for p in -bc:
            worst = max(worst, float(np.hypot(bc[:, 0] - p[0], bc[:, 1] - p[1]).min()))
        assert worst < 1e-5

    def test_top_two_classes_tie_on_the_curve(self, f_int2, bc):
        for p in bc[:: max(1, len(bc) // 8)]:
            ans = optimal_for_point(f_int2, p)
            times = sorted(ans.class_times.values())
            assert len(times) >= 2
            assert times[1] - times[0] < 1e-5
            assert ans.degenerate

    def test_rejects_exterior_field(self, f_ext2):
        with pytest.raises(DomainError):
            coexistence_curve(f_ext2)


# ---------------------------------------------------------------------------
# Critical extremals and critical force levels


class TestCriticalStructure:
    def test_axis_crossing_positions_weak_force(self, vdp, lc):
        tr = critical_trajectory(vdp, lc, "BLplus", 0.2)
        xs = axis_crossings(tr)
        assert xs == pytest.approx([2.510587, 3.594624], abs=1e-4)
        assert lc.x_max < xs[0] < xs[1]

    def test_axis_crossing_positions_half_force(self, vdp, lc):
        tr = critical_trajectory(vdp, lc, "BLplus", 0.5)
        assert axis_crossings(tr) == pytest.approx([3.584657], abs=1e-4)

    def test_no_crossings_at_full_force(self, vdp, lc):
        tr = critical_trajectory(vdp, lc, "BLplus", 2.0)
        assert axis_crossings(tr) == []

    def test_axis_crossings_rejects_generic_trajectory(self, vdp, lc, f_ext2):
        generic = next(tr for tr in f_ext2.extremals if tr.kind == "generic")
        with pytest.raises(DomainError):
            axis_crossings(generic)

    @pytest.mark.parametrize("K", [0.2, 0.5])
    @pytest.mark.parametrize("side", ["BLplus", "BRminus"])
    def test_switches_on_axis_and_crossings_switch(self, vdp, lc, side, K):
        tr = critical_trajectory(vdp, lc, side, K)
        for st in tr.switch_states:
            assert abs(st.x.x2) < 1e-6
        for _, st in tr.axis_crossings:
            assert abs(st.p2) < 1e-6

    def test_critical_levels_interleave_study_forces(self, vdp, lc):
        kc1 = critical_K(vdp, lc, 1, bracket=(0.5, 2.0))
        kc2 = critical_K(vdp, lc, 2, bracket=(0.2, 0.5))
        kc3 = critical_K(vdp, lc, 3, bracket=(0.05, 0.2))
        assert kc1 == pytest.approx(0.69130, abs=2e-4)
        assert kc2 == pytest.approx(0.27211, abs=2e-4)
        assert kc3 == pytest.approx(0.13624, abs=2e-4)
        assert kc3 < 0.2 < kc2 < 0.5 < kc1 < 2.0

    def test_bad_bracket_reports_itself(self, vdp, lc):
        with pytest.raises(BracketingError) as exc:
            critical_K(vdp, lc, 1, bracket=(1.0, 2.0))
        assert exc.value.bracket == (1.0, 2.0)

    def test_interior_level_exists_above_half_force(self, vdp, lc):
        # the interior critical gains crossings below K = 1 where the
        # in-cycle equilibrium of the constant-force flow changes type
        kc = critical_K(vdp, lc, 2, region="interior", bracket=(0.5, 2.0))
        assert 0.9 < kc < 1.1


# ---------------------------------------------------------------------------
# Dominance pruning of secondary critical branches


class TestSecondaryBranches:
    def test_strong_force_build_prunes_or_keeps_secondaries(self, vdp, lc):
        # above K = 2.0001 the off-sign critical branches exist; the build
        # must either keep them or record them as dominance-pruned
        fld = build_field(vdp, lc, 3.0, "exterior", n_anchors=64)
        kinds = [tr.kind for tr in fld.extremals]
        n_secondary = sum(1 for k in kinds if k.startswith("critical")) - 2
        assert n_secondary + len(fld.pruned) >= 0
        ans = optimal_for_point(fld, (5.0, 0.0))
        assert ans.t_f > 0
        assert len(ans.schedule.signs()) <= 2


# ---------------------------------------------------------------------------
# Derived products


class TestMinTimeCurve:
    def test_reference_curve_shape(self, vdp, lc):
        grid = np.linspace(0.5, 2.0, 6)
        mtc = min_time_curve(vdp, lc, (5.0, 0.0), grid, n_anchors=96)
        assert mtc.region == "exterior"
        assert np.all(np.diff(mtc.t_fs) < 0)
        assert np.all(np.diff(mtc.bangs) <= 0)
        assert mtc.t_fs[-1] == pytest.approx(2.03840074, abs=1e-4)

    def test_rejects_tiny_grid(self, vdp, lc):
        with pytest.raises(DomainError):
            min_time_curve(vdp, lc, (5.0, 0.0), np.array([0.5, 2.0]))


class TestPhaseDiagram:
    def test_small_grid_counts(self, vdp, lc):
        pd = phase_diagram(
            vdp, lc, np.array([0.5, 2.0]), np.array([0.5, 3.0, 5.0]),
            n_anchors=96,
        )
        np.testing.assert_array_equal(pd.bang_counts, [[2, 2, 3], [1, 2, 2]])
        assert pd.missing == []
        ext1 = dict(pd.critical_curves[("exterior", 1)])
        assert ext1[0.5] == pytest.approx(3.5847, abs=1e-3)

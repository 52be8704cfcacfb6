"""Global bang-bang synthesis over one side of the limit cycle.

A synthesis field is a family of extremals rewound from a sweep of anchor
points on the cycle, plus the critical extremals from the two extreme
points, organised under a uniform spatial grid index.  Minimum-time
queries match a phase point against nearby stored extremals, group the
matches into candidate classes (by remaining bang count and force signs),
and report the fastest class; optional refinement continues the anchor
parameter until an extremal passes through the query point exactly.

On top of field queries the module computes the switching curves, the
interior coexistence curve (locus of time ties between the two final-bang
families), axis-crossing positions of critical extremals, the critical
force levels where those crossings appear, bang-count phase diagrams over
(K, x10) grids, and minimum-time-vs-K curves with kink detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import (
    BracketingError,
    CoverageError,
    DomainError,
    LcsyncError,
    NumericalError,
)
from .extremal import (
    EXTERIOR,
    INTERIOR,
    BangSchedule,
    ExtremalTrajectory,
    critical_trajectory,
    final_bang_sign,
    rewind_extremal,
)
from .limit_cycle import LimitCycle, chi
from .model import ForceBound, LienardSystem, PhasePoint

__all__ = [
    "OptimalAnswer",
    "SynthesisField",
    "PhaseDiagram",
    "MinTimeCurve",
    "build_field",
    "optimal_for_point",
    "switching_curves",
    "coexistence_curve",
    "axis_crossings",
    "critical_K",
    "phase_diagram",
    "min_time_curve",
]

TIME_TIE_TOL = 1e-5
_CELL = 0.25
_PACK = 1 << 20  # segment index packing: code = traj_idx * _PACK + sample_idx
_MIN_ANCHORS = 64


def _as_K(bound) -> float:
    if isinstance(bound, ForceBound):
        return bound.K
    K = float(bound)
    if not (math.isfinite(K) and K > 0.0):
        raise DomainError(f"force bound K must be positive, got {bound!r}")
    return K


def _as_xy(x) -> tuple[float, float]:
    if isinstance(x, PhasePoint):
        return (x.x1, x.x2)
    x1, x2 = float(x[0]), float(x[1])
    if not (math.isfinite(x1) and math.isfinite(x2)):
        raise DomainError(f"non-finite phase point {x!r}")
    return (x1, x2)


# ---------------------------------------------------------------------------
# Field data structures


@dataclass
class OptimalAnswer:
    """Minimum-time answer at one query point.

    candidates counts the distinct candidate classes (remaining bang count,
    first and final force sign) found within the match radius; degenerate
    flags a time tie between the top two classes closer than the tie
    tolerance.
    """

    t_f: float
    schedule: BangSchedule
    x0_snap: PhasePoint
    candidates: int
    degenerate: bool
    region: str
    K: float
    traj_index: int
    refined: bool
    class_times: dict = dc_field(default_factory=dict)


@dataclass
class _Match:
    traj: int
    dist: float
    t: float  # forward time on the stored extremal at the closest point
    tau: float  # remaining time to the anchor, corrected to the query point
    point: tuple
    key: tuple  # (bangs_remaining, first_sign, final_sign)
    side: int  # sign of the query's cross-track offset from this passage


class SynthesisField:
    """A family of rewound extremals for one region at one force bound,
    with a uniform-grid spatial index over their polyline segments."""

    def __init__(
        self,
        sys: LienardSystem,
        lc: LimitCycle,
        K: float,
        region: str,
        extremals: list[ExtremalTrajectory],
        anchor_thetas: list[float],
        failed_anchors: list[tuple[float, str]],
        pruned: list[ExtremalTrajectory],
        cell: float = _CELL,
        rtol: float = 1e-10,
    ) -> None:
        self.sys = sys
        self.lc = lc
        self.K = K
        self.region = region
        self.extremals = extremals
        self.anchor_thetas = anchor_thetas
        self.failed_anchors = failed_anchors
        self.pruned = pruned
        self.cell = cell
        self.rtol = rtol
        self._build_arrays()
        self._build_index()

    @property
    def n_anchors(self) -> int:
        return len(self.extremals)

    def _build_arrays(self) -> None:
        self._ts: list[np.ndarray] = []
        self._zs: list[np.ndarray] = []
        self._Fs: list[np.ndarray] = []
        self._speed: list[np.ndarray] = []
        self._arc_of: list[np.ndarray] = []
        self._n_arcs: list[int] = []
        mu = self.sys.mu
        for traj in self.extremals:
            ts, zs, Fs = traj.flat()
            self._ts.append(ts)
            self._zs.append(zs)
            self._Fs.append(Fs)
            v1 = zs[:, 1]
            hv = np.array([self.sys.h(x) for x in zs[:, 0]])
            vp = np.array([self.sys.v_prime(x) for x in zs[:, 0]])
            v2 = -mu * hv * zs[:, 1] - vp + Fs
            self._speed.append(np.hypot(v1, v2))
            arc_of = np.concatenate(
                [np.full(len(a.ts), i) for i, a in enumerate(traj.arcs)]
            )
            self._arc_of.append(arc_of)
            self._n_arcs.append(len(traj.arcs))

    def _build_index(self) -> None:
        inv = 1.0 / self.cell
        index: dict[tuple[int, int], list[int]] = {}
        for ti, zs in enumerate(self._zs):
            if len(zs) < 2:
                continue
            a = zs[:-1]
            b = zs[1:]
            keep = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]) > 0.0
            lo_x = np.floor(np.minimum(a[:, 0], b[:, 0]) * inv).astype(np.int64)
            hi_x = np.floor(np.maximum(a[:, 0], b[:, 0]) * inv).astype(np.int64)
            lo_y = np.floor(np.minimum(a[:, 1], b[:, 1]) * inv).astype(np.int64)
            hi_y = np.floor(np.maximum(a[:, 1], b[:, 1]) * inv).astype(np.int64)
            base = ti * _PACK
            for si in np.nonzero(keep)[0]:
                code = base + int(si)
                for ix in range(lo_x[si], hi_x[si] + 1):
                    for iy in range(lo_y[si], hi_y[si] + 1):
                        index.setdefault((ix, iy), []).append(code)
        self.spatial_index = index

    def _segments_near(self, x1: float, x2: float, rings: int) -> list[int]:
        inv = 1.0 / self.cell
        cx = math.floor(x1 * inv)
        cy = math.floor(x2 * inv)
        out: list[int] = []
        for ix in range(cx - rings, cx + rings + 1):
            for iy in range(cy - rings, cy + rings + 1):
                got = self.spatial_index.get((ix, iy))
                if got:
                    out.extend(got)
        return out

    def segment_time_at(self, ti: int, si: int, xq: tuple[float, float]):
        """Project xq on segment si of trajectory ti.

        Returns (dist, t, point, p): distance to the segment, forward time
        at the projection via a cubic Hermite in arclength (the endpoint
        time derivatives 1/speed are known analytically), the projection,
        and the costate (p1, p2) interpolated there.
        """
        zs = self._zs[ti]
        ts = self._ts[ti]
        ax, ay = zs[si, 0], zs[si, 1]
        bx, by = zs[si + 1, 0], zs[si + 1, 1]
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        if L2 == 0.0:
            d = math.hypot(xq[0] - ax, xq[1] - ay)
            return d, float(ts[si]), (float(ax), float(ay)), (float(zs[si, 2]), float(zs[si, 3])), 1
        s = ((xq[0] - ax) * dx + (xq[1] - ay) * dy) / L2
        s = min(1.0, max(0.0, s))
        px, py = ax + s * dx, ay + s * dy
        d = math.hypot(xq[0] - px, xq[1] - py)
        L = math.sqrt(L2)
        t0, t1 = float(ts[si]), float(ts[si + 1])
        m0 = L / max(self._speed[ti][si], 1e-300)
        m1 = L / max(self._speed[ti][si + 1], 1e-300)
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        t = h00 * t0 + h10 * m0 + h01 * t1 + h11 * m1
        p1 = (1 - s) * zs[si, 2] + s * zs[si + 1, 2]
        p2 = (1 - s) * zs[si, 3] + s * zs[si + 1, 3]
        cross = dx * (xq[1] - py) - dy * (xq[0] - px)
        side = 1 if cross >= 0.0 else -1
        return d, t, (float(px), float(py)), (float(p1), float(p2)), side


# ---------------------------------------------------------------------------
# Field construction


def build_field(
    sys: LienardSystem,
    lc: LimitCycle,
    bound: "ForceBound | float",
    region: str = EXTERIOR,
    n_anchors: int = 256,
    t_back_max: float = 60.0,
    max_bangs: int = 8,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    cell: float = _CELL,
    gap_tol: float | None = None,
) -> SynthesisField:
    """Rewind a uniform sweep of anchors plus the critical extremals.

    Anchors are placed at cycle phases (i + 1/2)/n_anchors so the exact
    extreme points are left to the critical extremals, which rewind with
    the admissible axis-consistent sign(s).  Extra critical branches that
    exist only for K > V'(x_max) are kept only where some sample of theirs
    beats every other stored extremal (dominance pruning).

    Raises CoverageError if anchor failures open a gap in cycle phase
    wider than gap_tol (default 3/n_anchors).
    """
    if region not in (EXTERIOR, INTERIOR):
        raise DomainError(f"unknown region {region!r}")
    if n_anchors < _MIN_ANCHORS:
        raise DomainError(f"n_anchors must be at least {_MIN_ANCHORS}, got {n_anchors}")
    K = _as_K(bound)
    if gap_tol is None:
        gap_tol = 3.0 / n_anchors

    extremals: list[ExtremalTrajectory] = []
    thetas: list[float] = []
    failed: list[tuple[float, str]] = []
    ok_thetas: list[float] = []
    for i in range(n_anchors):
        theta = (i + 0.5) / n_anchors
        a = lc.anchor_at(theta)
        try:
            signs = final_bang_sign(sys, lc, a, region, K)
            traj = rewind_extremal(
                sys,
                lc,
                a,
                signs[0],
                K,
                t_back_max=t_back_max,
                max_bangs=max_bangs,
                region=region,
                rtol=rtol,
                atol=atol,
            )
        except LcsyncError as exc:
            failed.append((theta, f"{type(exc).__name__}: {exc}"))
            continue
        extremals.append(traj)
        thetas.append(theta)
        ok_thetas.append(theta)

    if not extremals:
        raise CoverageError("every anchor rewind failed", location=None)
    # Gap check over the successful anchor phases (circular).
    ok_thetas.sort()
    gaps = [b - a for a, b in zip(ok_thetas, ok_thetas[1:])]
    gaps.append(ok_thetas[0] + 1.0 - ok_thetas[-1])
    widest = max(gaps)
    if widest > gap_tol:
        at = ok_thetas[gaps.index(widest) % len(ok_thetas)]
        raise CoverageError(
            f"anchor sweep gap of {widest:.4f} cycle phase exceeds {gap_tol:.4f}",
            location=at,
        )

    # Critical extremals from the two extreme points.  The primary signs
    # (exterior BL+/BR-, interior BL-/BR+) always exist for K below
    # V'(x_max); secondary branches appear above it and face pruning.
    primaries: list[ExtremalTrajectory] = []
    secondaries: list[ExtremalTrajectory] = []
    sec_thetas: list[float] = []
    pri_thetas: list[float] = []
    for ext_theta, x1e in ((0.5, -lc.x_max), (0.0, lc.x_max)):
        ext_side = "BL" if x1e < 0 else "BR"
        try:
            signs = final_bang_sign(sys, lc, (x1e, 0.0), region, K)
        except LcsyncError as exc:
            failed.append((ext_theta, f"{type(exc).__name__}: {exc}"))
            continue
        for j, s in enumerate(signs):
            kind = f"critical_{ext_side}{'plus' if s > 0 else 'minus'}"
            try:
                if region == EXTERIOR and kind in ("critical_BLplus", "critical_BRminus"):
                    traj = critical_trajectory(
                        sys,
                        lc,
                        "BLplus" if ext_side == "BL" else "BRminus",
                        K,
                        t_back_max=t_back_max,
                        max_bangs=max_bangs,
                        rtol=rtol,
                        atol=atol,
                    )
                else:
                    traj = rewind_extremal(
                        sys,
                        lc,
                        (x1e, 0.0),
                        s,
                        K,
                        t_back_max=t_back_max,
                        max_bangs=max_bangs,
                        region=region,
                        record_axis_crossings=True,
                        kind=kind,
                        rtol=rtol,
                        atol=atol,
                    )
            except LcsyncError as exc:
                failed.append((ext_theta, f"{kind}: {type(exc).__name__}: {exc}"))
                continue
            if j == 0:
                primaries.append(traj)
                pri_thetas.append(ext_theta)
            else:
                secondaries.append(traj)
                sec_thetas.append(ext_theta)

    extremals.extend(primaries)
    thetas.extend(pri_thetas)

    field = SynthesisField(
        sys, lc, K, region, extremals, thetas, failed, [], cell=cell, rtol=rtol
    )
    if secondaries:
        field = _prune_secondaries(field, secondaries, sec_thetas)
    return field


def _prune_secondaries(
    field: SynthesisField,
    secondaries: list[ExtremalTrajectory],
    sec_thetas: list[float],
) -> SynthesisField:
    """Keep a secondary critical branch only if some probe sample along it
    strictly beats every primary-field answer there (it is then part of the
    optimal synthesis); otherwise it is dominated and dropped."""
    kept: list[ExtremalTrajectory] = []
    kept_thetas: list[float] = []
    pruned: list[ExtremalTrajectory] = []
    for traj, theta in zip(secondaries, sec_thetas):
        ts, zs, _ = traj.flat()
        n = len(ts)
        probe_idx = np.linspace(0, n - 1, min(15, n)).astype(int)
        dominated = True
        for j in probe_idx:
            tau_self = traj.t_f - float(ts[j])
            if tau_self <= 1e-9:
                continue
            try:
                ans = optimal_for_point(field, (zs[j, 0], zs[j, 1]))
            except CoverageError:
                dominated = False
                break
            if ans.t_f > tau_self + 1e-9:
                dominated = False
                break
        if dominated:
            pruned.append(traj)
        else:
            kept.append(traj)
            kept_thetas.append(theta)
    if not kept:
        field.pruned = pruned
        return field
    return SynthesisField(
        field.sys,
        field.lc,
        field.K,
        field.region,
        field.extremals + kept,
        field.anchor_thetas + kept_thetas,
        field.failed_anchors,
        pruned,
        cell=field.cell,
        rtol=field.rtol,
    )


# ---------------------------------------------------------------------------
# Queries


def _collect_matches(
    field: SynthesisField,
    xq: tuple[float, float],
    delta: float | None,
    max_expand: int = 4,
) -> tuple[list[_Match], float]:
    """Local closest approaches of stored extremals around xq, one match
    per passage (a spiral visiting the neighbourhood several times yields
    several matches with distinct remaining-bang counts), filtered down to
    the candidate classes that plausibly cover xq.

    With an explicit delta, a passage matches iff it comes within delta.
    Otherwise each class (key) is judged on its own local geometry: it is
    kept when its two nearest passages straddle xq (opposite cross-track
    sides - xq lies between them), or when the nearest passage is closer
    than twice the gap to the next one (xq within about one inter-extremal
    spacing of the class's envelope), or trivially when it passes through
    xq.  A class seen only once is kept if it is within the search window.
    """
    rings = 2
    codes: list[int] = []
    window = 0.0
    for attempt in range(max_expand + 1):
        window = (rings + 1) * field.cell
        codes = field._segments_near(xq[0], xq[1], rings)
        if codes:
            seen = {c // _PACK for c in codes}
            if len(seen) >= 2 or attempt == max_expand:
                break
        rings *= 2
    if not codes:
        raise CoverageError(
            f"no stored extremal near ({xq[0]:g}, {xq[1]:g})", location=xq
        )

    by_traj: dict[int, list[int]] = {}
    for c in sorted(set(codes)):
        by_traj.setdefault(c // _PACK, []).append(c % _PACK)

    passages: list[_Match] = []
    for ti, sis in by_traj.items():
        runs: list[list[int]] = [[sis[0]]]
        for a, b in zip(sis, sis[1:]):
            if b - a <= 3:
                runs[-1].append(b)
            else:
                runs.append([b])
        n_arcs = field._n_arcs[ti]
        traj = field.extremals[ti]
        tf = traj.t_f
        final_sign = traj.arcs[-1].sign
        for run in runs:
            best = None
            for si in run:
                d, t, pt, p, sd = field.segment_time_at(ti, si, xq)
                if best is None or d < best[0]:
                    best = (d, t, pt, p, sd, si)
            d, t, pt, p, sd, si = best
            arc_i = int(field._arc_of[ti][si])
            bangs_rem = n_arcs - arc_i
            first = traj.arcs[arc_i].sign
            raw = tf - t
            corr = 0.0
            if traj.p0 == -1.0:
                # Along normal extremals the costate is minus the gradient
                # of the time-to-go, so the first-order transverse error of
                # reading the time at the projection instead of the query
                # point can be removed -- but only over distances where a
                # first-order extrapolation is meaningful.
                corr = p[0] * (xq[0] - pt[0]) + p[1] * (xq[1] - pt[1])
                if abs(corr) > 0.5 * max(raw, 0.2):
                    corr = 0.0
            tau = raw - corr
            if tau <= 0.0 and d > 1e-6:
                continue
            passages.append(
                _Match(ti, d, t, tau, pt, (bangs_rem, first, final_sign), sd)
            )

    if delta is not None:
        matched = [m for m in passages if m.dist <= delta]
        if not matched:
            near = min(m.dist for m in passages)
            raise CoverageError(
                f"nearest stored extremal is {near:.3g} away at "
                f"({xq[0]:g}, {xq[1]:g}), beyond the match radius {delta:.3g}",
                location=xq,
            )
        return matched, float(delta)

    if not passages:
        raise CoverageError(
            f"no usable extremal passage near ({xq[0]:g}, {xq[1]:g})", location=xq
        )
    d_floor = min(m.dist for m in passages)
    groups: dict[tuple, list[_Match]] = {}
    for m in passages:
        groups.setdefault(m.key, []).append(m)
    matched = []
    delta_used = 0.0
    for key, ms in groups.items():
        ms.sort(key=lambda m: m.dist)
        d1 = ms[0].dist
        if len(ms) >= 2:
            d2 = ms[1].dist
            covered = (
                d1 <= 1e-7
                or ms[0].side != ms[1].side
                or d1 <= 2.0 * (d2 - d1)
            )
        else:
            # A class seen once in the window: trust it only when it is
            # comparable to the best match at this query (sparse far-field
            # coverage), not when it is a distant stray passage.
            covered = d1 <= max(6.0 * d_floor, 0.5 * window)
        if covered:
            matched.extend(ms)
            delta_used = max(delta_used, d1)
    if not matched:
        near = min(m.dist for m in passages)
        raise CoverageError(
            f"no candidate class covers ({xq[0]:g}, {xq[1]:g}); nearest "
            f"stored extremal passes {near:.3g} away",
            location=xq,
        )
    return matched, max(delta_used, 1e-9)


def _remaining_schedule(
    traj: ExtremalTrajectory, t_m: float, K: float
) -> BangSchedule:
    rem = tuple(s - t_m for s in traj.schedule.switches if s > t_m)
    tf = traj.t_f - t_m
    first = traj.arcs[-1].sign * (-1) ** len(rem)
    if tf <= 0.0:
        return BangSchedule(t_f=0.0, switches=(), first_sign=first, K=K)
    return BangSchedule(t_f=tf, switches=rem, first_sign=first, K=K)


def optimal_for_point(
    field: SynthesisField,
    x0: "PhasePoint | Sequence[float]",
    delta: float | None = None,
    refine: bool = False,
    time_tie_tol: float = TIME_TIE_TOL,
) -> OptimalAnswer:
    """Minimum-time answer at x0 from the stored field.

    Matches are grouped into candidate classes keyed by (remaining bang
    count, first force sign, final force sign); the fastest class wins.
    With refine=True the winning class (and the runner-up, if any) is
    re-solved by continuing the anchor phase until an extremal passes
    through x0 exactly, giving a time accurate to the integration
    tolerance instead of the sample spacing.
    """
    xq = _as_xy(x0)
    matched, delta_used = _collect_matches(field, xq, delta)

    clusters: dict[tuple, _Match] = {}
    for m in matched:
        cur = clusters.get(m.key)
        if cur is None or m.dist < cur.dist:
            clusters[m.key] = m
    ranked = sorted(clusters.values(), key=lambda m: m.tau)

    refined_flags = {}
    results: dict[tuple, tuple[float, BangSchedule, tuple, int]] = {}
    for m in ranked:
        traj = field.extremals[m.traj]
        results[m.key] = (
            m.tau,
            _remaining_schedule(traj, m.t, field.K),
            m.point,
            m.traj,
        )
        refined_flags[m.key] = False

    if refine:
        for m in ranked[:2]:
            got = _refine_by_continuation(field, xq, m)
            if got is not None:
                results[m.key] = got
                refined_flags[m.key] = True

    order = sorted(results.items(), key=lambda kv: kv[1][0])
    best_key, (t_best, sched, snap, ti) = order[0]
    degenerate = len(order) > 1 and (order[1][1][0] - t_best) < time_tie_tol
    return OptimalAnswer(
        t_f=t_best,
        schedule=sched,
        x0_snap=PhasePoint(snap[0], snap[1]),
        candidates=len(clusters),
        degenerate=degenerate,
        region=field.region,
        K=field.K,
        traj_index=ti,
        refined=refined_flags[best_key],
        class_times={k: v[0] for k, v in order},
    )


def _final_sign_interval(region: str, final_sign: int) -> tuple[float, float]:
    """Anchor-phase interval (within one half-cycle) on which the generic
    final bang sign equals final_sign.  Phase 0 is the right extreme; the
    bottom half (x2 < 0) spans (0, 0.5)."""
    bottom = (region == EXTERIOR and final_sign > 0) or (
        region == INTERIOR and final_sign < 0
    )
    return (0.0, 0.5) if bottom else (0.5, 1.0)


def _refine_by_continuation(
    field: SynthesisField, xq: tuple[float, float], m: _Match
):
    """Continue the anchor phase of the matched class until its extremal
    passes through xq; returns (tau, schedule, snap, traj_index) or None.

    The signed offset of xq from the rewound extremal (cross product of the
    velocity with the offset at the closest-approach event nearest the
    expected time-to-go) changes sign across the matching anchor; brentq
    drives it to zero.  The time-to-go is read off the approach event, so
    its accuracy is set by the event tolerance, not the sample spacing.
    """
    sys_, lc, K = field.sys, field.lc, field.K
    traj0 = field.extremals[m.traj]
    theta0 = field.anchor_thetas[m.traj] % 1.0
    final_sign = traj0.arcs[-1].sign
    bangs_rem, first_sign, _ = m.key
    tau_exp = m.tau
    lo_b, hi_b = _final_sign_interval(field.region, final_sign)
    eps = 1e-7
    lo_b += eps
    hi_b -= eps
    theta0 = min(hi_b, max(lo_b, theta0))
    t_back = tau_exp + 2.0
    bang_cap = bangs_rem + 2

    cache: dict[float, tuple[float, float, object]] = {}

    def probe(theta: float):
        theta = min(hi_b, max(lo_b, theta))
        if theta in cache:
            return cache[theta]
        a = lc.anchor_at(theta)
        try:
            tr = rewind_extremal(
                sys_,
                lc,
                a,
                final_sign,
                K,
                t_back_max=t_back,
                max_bangs=bang_cap,
                region=field.region,
                approach_point=xq,
                rtol=field.rtol,
            )
        except LcsyncError:
            cache[theta] = (math.nan, math.nan, None)
            return cache[theta]
        best = None
        for t_fwd, z, d in tr.approach_events:
            tau = tr.t_f - t_fwd
            if abs(tau - tau_exp) > 1.0:
                continue
            if best is None or d < best[2]:
                best = (t_fwd, tau, d, z)
        if best is None and tr.approach_events:
            t_fwd, z, d = min(tr.approach_events, key=lambda e: e[2])
            best = (t_fwd, tr.t_f - t_fwd, d, z)
        if best is None:
            cache[theta] = (math.nan, math.nan, None)
            return cache[theta]
        t_fwd, tau, d, z = best
        F = tr.schedule.force_at(min(t_fwd, tr.t_f * (1 - 1e-12)))
        v1 = z[1]
        v2 = -sys_.mu * sys_.h(z[0]) * z[1] - sys_.v_prime(z[0]) + F
        side = v1 * (xq[1] - z[1]) - v2 * (xq[0] - z[0])
        cache[theta] = (side, tau, (tr, t_fwd, z, d))
        return cache[theta]

    s0, tau0, _ = probe(theta0)
    if math.isnan(s0):
        return None
    step = max(1.2 / max(field.n_anchors, _MIN_ANCHORS), 1e-4)
    bracket = None
    for _ in range(5):
        cand = []
        for th in (theta0 - step, theta0 + step):
            th = min(hi_b, max(lo_b, th))
            s, _, _ = probe(th)
            if not math.isnan(s) and s * s0 < 0.0:
                cand.append(th)
        if cand:
            other = cand[0]
            bracket = (min(theta0, other), max(theta0, other))
            break
        step *= 2.0
        if theta0 - step <= lo_b and theta0 + step >= hi_b:
            break
    if bracket is None:
        return None

    from scipy.optimize import brentq

    try:
        theta_star = brentq(
            lambda th: probe(th)[0], bracket[0], bracket[1], xtol=1e-12, rtol=8.9e-16
        )
    except ValueError:
        return None
    side, tau, extra = probe(theta_star)
    if extra is None:
        best_theta = min(
            (th for th, v in cache.items() if v[2] is not None),
            key=lambda th: cache[th][2][3],
            default=None,
        )
        if best_theta is None:
            return None
        side, tau, extra = cache[best_theta]
    tr, t_fwd, z, d = extra
    sched = _remaining_schedule(tr, t_fwd, K)
    return (tau, sched, (z[0], z[1]), m.traj)


# ---------------------------------------------------------------------------
# Switching structure


def switching_curves(field: SynthesisField) -> tuple[np.ndarray, np.ndarray]:
    """Switch points of all stored extremals split by half-plane:
    S+ collects x1 >= 0, S- collects x1 < 0.

    Each branch is ordered by (switch depth from the cycle, anchor phase),
    which runs along the curve for a fixed depth; either may be empty
    (shape (0, 2)), e.g. S+ and S- are both empty above the first critical
    force level where no extremal switches."""
    recs_p: list[tuple[float, float, float, float]] = []
    recs_m: list[tuple[float, float, float, float]] = []
    for ti, traj in enumerate(field.extremals):
        n_sw = len(traj.switch_states)
        th = field.anchor_thetas[ti]
        for si, st in enumerate(traj.switch_states):
            depth = n_sw - si
            rec = (depth, th, st.x.x1, st.x.x2)
            (recs_p if st.x.x1 >= 0.0 else recs_m).append(rec)
    recs_p.sort(key=lambda r: (r[0], r[1]))
    recs_m.sort(key=lambda r: (r[0], r[1]))
    S_plus = np.array([(r[2], r[3]) for r in recs_p]).reshape(-1, 2)
    S_minus = np.array([(r[2], r[3]) for r in recs_m]).reshape(-1, 2)
    return S_plus, S_minus


def coexistence_curve(
    field: SynthesisField,
    n_angles: int = 64,
    n_radii: int = 10,
    radius_span: tuple[float, float] = (0.15, 0.92),
    pos_tol: float = 1e-9,
) -> np.ndarray:
    """Locus of minimum-time ties between the two final-bang families
    inside the cycle, ordered by polar angle.

    The interior is sampled on a cycle-shaped polar grid; wherever two
    neighbouring nodes are won by classes with opposite final force sign,
    bisection on the winning sign locates the tie point on the connecting
    segment.  Crossing the curve flips the winner's final bang sign; the
    curve ends where flips stop appearing in the grid."""
    if field.region != INTERIOR:
        raise DomainError("the coexistence curve is an interior-region object")
    lc = field.lc
    n_s = lc.n_samples
    if n_s % n_angles != 0:
        raise DomainError(
            f"n_angles must divide the cycle sample count {n_s} for a "
            "reflection-symmetric grid"
        )
    stride = n_s // n_angles
    rim = lc.samples[:-1:stride]
    rhos = np.linspace(radius_span[0], radius_span[1], n_radii)

    def winner(pt) -> int | None:
        try:
            ans = optimal_for_point(field, pt)
        except LcsyncError:
            return None
        return ans.schedule.first_sign * (-1) ** len(ans.schedule.switches)

    win = np.zeros((n_angles, n_radii), dtype=int)
    for i in range(n_angles):
        for j, rho in enumerate(rhos):
            w = winner((rim[i, 0] * rho, rim[i, 1] * rho))
            win[i, j] = 0 if w is None else w

    def bisect(pa, pb) -> tuple[float, float] | None:
        wa = winner(pa)
        wb = winner(pb)
        if wa is None or wb is None or wa == wb:
            return None
        ax, ay = pa
        bx, by = pb
        while math.hypot(bx - ax, by - ay) > pos_tol:
            mx, my = 0.5 * (ax + bx), 0.5 * (ay + by)
            wm = winner((mx, my))
            if wm is None:
                return None
            if wm == wa:
                ax, ay = mx, my
            else:
                bx, by = mx, my
        return (0.5 * (ax + bx), 0.5 * (ay + by))

    points: list[tuple[float, float]] = []
    for i in range(n_angles):
        for j in range(n_radii):
            if win[i, j] == 0:
                continue
            # Radial neighbour.
            if j + 1 < n_radii and win[i, j + 1] != 0 and win[i, j + 1] != win[i, j]:
                pa = (rim[i, 0] * rhos[j], rim[i, 1] * rhos[j])
                pb = (rim[i, 0] * rhos[j + 1], rim[i, 1] * rhos[j + 1])
                got = bisect(pa, pb)
                if got:
                    points.append(got)
            # Angular neighbour.
            i2 = (i + 1) % n_angles
            if win[i2, j] != 0 and win[i2, j] != win[i, j]:
                pa = (rim[i, 0] * rhos[j], rim[i, 1] * rhos[j])
                pb = (rim[i2, 0] * rhos[j], rim[i2, 1] * rhos[j])
                got = bisect(pa, pb)
                if got:
                    points.append(got)
    pts = np.array(points).reshape(-1, 2)
    if len(pts):
        order = np.argsort(np.arctan2(pts[:, 1], pts[:, 0]))
        pts = pts[order]
    return pts


def axis_crossings(traj: ExtremalTrajectory) -> list[float]:
    """|x1| at each x1-axis crossing of a critical extremal, ordered from
    the latest (closest to the cycle) to the earliest, i.e. backward.

    Critical extremals switch exactly on the axis, so the crossings are
    the switch positions."""
    if not traj.kind.startswith("critical"):
        raise DomainError(
            f"axis crossings are defined for critical extremals, got kind {traj.kind!r}"
        )
    return [abs(st.x.x1) for st in reversed(traj.switch_states)]


# ---------------------------------------------------------------------------
# Critical force levels


def _critical_for_region(
    sys: LienardSystem,
    lc: LimitCycle,
    K: float,
    region: str,
    t_back_max: float = 80.0,
    max_bangs: int = 14,
    strict: bool = True,
) -> ExtremalTrajectory:
    """The left-extreme critical extremal for the region (its mirror image
    has the same crossing structure by the central symmetry)."""
    if region == EXTERIOR:
        return critical_trajectory(
            sys,
            lc,
            "BLplus",
            K,
            t_back_max=t_back_max,
            max_bangs=max_bangs,
            strict=strict,
        )
    signs = final_bang_sign(sys, lc, (-lc.x_max, 0.0), INTERIOR, K)
    if not signs:
        raise DomainError(
            f"no interior-consistent final sign at the extremes for K = {K:g}"
        )
    return rewind_extremal(
        sys,
        lc,
        (-lc.x_max, 0.0),
        signs[0],
        K,
        t_back_max=t_back_max,
        max_bangs=max_bangs,
        region=INTERIOR,
        record_axis_crossings=True,
        kind=f"critical_BL{'plus' if signs[0] > 0 else 'minus'}",
    )


def _crossing_count(traj: ExtremalTrajectory) -> int:
    """Axis crossings of a critical extremal: its switches, plus any
    recorded crossing not accounted for by a switch (defensive; none occur
    when the axis-switching equivalence holds)."""
    count = len(traj.switch_states)
    for t_c, _ in traj.axis_crossings:
        if all(abs(t_c - ts) > 1e-3 for ts in traj.schedule.switches):
            count += 1
    return count


def critical_K(
    sys: LienardSystem,
    lc: LimitCycle,
    n: int,
    region: str = EXTERIOR,
    bracket: tuple[float, float] = (0.05, 2.0),
    tol: float = 1e-4,
    t_back_max: float = 80.0,
    max_bangs: int = 14,
) -> float:
    """The force level K_cn below which the region's critical extremal has
    at least n axis crossings, found by bisection on the crossing count.

    Requires count(bracket[0]) >= n > count(bracket[1]); otherwise raises
    BracketingError carrying the bracket."""
    if n < 1:
        raise DomainError("n must be a positive crossing count")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0.0 < lo < hi):
        raise DomainError(f"bad bracket {bracket!r}")

    def count(K: float) -> int:
        # strict switch-on-axis verification is skipped here: only the
        # crossing count matters, and near small critical levels the long
        # backward trajectories accumulate more event error than the
        # verification gate allows.
        return _crossing_count(
            _critical_for_region(
                sys,
                lc,
                K,
                region,
                t_back_max=t_back_max,
                max_bangs=max_bangs,
                strict=False,
            )
        )

    c_lo, c_hi = count(lo), count(hi)
    if not (c_lo >= n > c_hi):
        raise BracketingError(
            f"crossing counts {c_lo} at K={lo:g} and {c_hi} at K={hi:g} do not "
            f"straddle n={n}",
            bracket=(lo, hi),
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count(mid) >= n:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Phase diagram and minimum-time curves


@dataclass
class PhaseDiagram:
    """Optimal bang counts over a (K, x10) grid of x1-axis initial points,
    with the critical-crossing curves overlaid.

    bang_counts[i, j] is the winning bang count at (K_grid[i], x10_grid[j]),
    0 where the query failed or the point sits on the cycle boundary
    (reasons in missing).  critical_curves maps (region, n) to the list of
    (K, crossing position) pairs tracing the n-th crossing curve."""

    K_grid: np.ndarray
    x10_grid: np.ndarray
    bang_counts: np.ndarray
    critical_curves: dict
    missing: list


def phase_diagram(
    sys: LienardSystem,
    lc: LimitCycle,
    K_grid: Sequence[float],
    x10_grid: Sequence[float],
    n_anchors: int = 128,
    t_back_max: float = 60.0,
    max_bangs: int = 10,
) -> PhaseDiagram:
    Ks = np.asarray(list(K_grid), dtype=float)
    xs = np.asarray(list(x10_grid), dtype=float)
    counts = np.zeros((len(Ks), len(xs)), dtype=int)
    curves: dict = {}
    missing: list = []
    btol = 2.0 * lc.resolution
    for i, K in enumerate(Ks):
        for region in (EXTERIOR, INTERIOR):
            try:
                crossings = axis_crossings(
                    _critical_for_region(sys, lc, K, region, t_back_max=t_back_max)
                )
            except LcsyncError as exc:
                missing.append((i, None, f"{region} critical: {type(exc).__name__}"))
                continue
            for nidx, xc in enumerate(crossings, start=1):
                curves.setdefault((region, nidx), []).append((float(K), xc))
        fields: dict[str, SynthesisField | None] = {}
        for j, x10 in enumerate(xs):
            if abs(abs(x10) - lc.x_max) <= btol:
                missing.append((i, j, "on the cycle boundary"))
                continue
            region = EXTERIOR if abs(x10) > lc.x_max else INTERIOR
            if region not in fields:
                try:
                    fields[region] = build_field(
                        sys,
                        lc,
                        K,
                        region,
                        n_anchors=n_anchors,
                        t_back_max=t_back_max,
                        max_bangs=max_bangs,
                    )
                except LcsyncError as exc:
                    fields[region] = None
                    missing.append((i, None, f"{region} field: {type(exc).__name__}"))
            fld = fields[region]
            if fld is None:
                missing.append((i, j, "field build failed"))
                continue
            try:
                ans = optimal_for_point(fld, (x10, 0.0))
            except LcsyncError as exc:
                missing.append((i, j, type(exc).__name__))
                continue
            counts[i, j] = ans.schedule.n_bangs
    return PhaseDiagram(Ks, xs, counts, curves, missing)


@dataclass
class MinTimeCurve:
    """Minimum time to the cycle from a fixed start as a function of the
    force bound, with detected slope-break (kink) locations."""

    x0: tuple
    region: str
    Ks: np.ndarray
    t_fs: np.ndarray
    bangs: np.ndarray
    kinks: list[float]
    slope_jumps: np.ndarray


def min_time_curve(
    sys: LienardSystem,
    lc: LimitCycle,
    x0: "PhasePoint | Sequence[float]",
    K_grid: Sequence[float],
    n_anchors: int = 96,
    refine: bool = True,
    t_back_max: float = 60.0,
    max_bangs: int = 10,
    kink_factor: float = 5.0,
) -> MinTimeCurve:
    """t_f(K) over the grid via one field build and refined query per K.

    Kinks are grid points where the one-sided slope jump exceeds
    kink_factor times the median jump (the smooth-curvature noise floor);
    adjacent flagged points collapse to the largest jump among them."""
    xq = _as_xy(x0)
    region = EXTERIOR if chi(lc, xq) > 0.0 else INTERIOR
    Ks = np.asarray(list(K_grid), dtype=float)
    if len(Ks) < 5:
        raise DomainError("K_grid must have at least 5 points for kink detection")
    t_fs = np.full(len(Ks), np.nan)
    bangs = np.zeros(len(Ks), dtype=int)
    for i, K in enumerate(Ks):
        fld = build_field(
            sys,
            lc,
            K,
            region,
            n_anchors=n_anchors,
            t_back_max=t_back_max,
            max_bangs=max_bangs,
        )
        ans = optimal_for_point(fld, xq, refine=refine)
        t_fs[i] = ans.t_f
        bangs[i] = ans.schedule.n_bangs

    slopes = np.diff(t_fs) / np.diff(Ks)
    jumps = np.abs(np.diff(slopes))
    base = float(np.median(jumps))
    flagged = np.nonzero(jumps > kink_factor * max(base, 1e-12))[0]
    kinks: list[float] = []
    group: list[int] = []
    for idx in flagged:
        if group and idx - group[-1] > 1:
            top = max(group, key=lambda g: jumps[g])
            kinks.append(float(Ks[top + 1]))
            group = []
        group.append(idx)
    if group:
        top = max(group, key=lambda g: jumps[g])
        kinks.append(float(Ks[top + 1]))
    return MinTimeCurve(xq, region, Ks, t_fs, bangs, kinks, jumps)

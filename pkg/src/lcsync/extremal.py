"""Single bang-bang extremals, built backward from the limit cycle.

An extremal is grown by integrating the canonical state+costate equations
backward in time from a final point (anchor) on the cycle, starting from
the closed-form final costate and final force sign, and flipping the force
at every p2 zero crossing.  The rewind stops at the horizon, at the bang
budget, when the trajectory crosses the cycle into the other region (such
a candidate would have reached the target earlier elsewhere, so it cannot
be optimal beyond that point), or when it leaves the working domain box
(backward trajectories blow up in finite time, so a spatial cutoff is the
effective horizon for exterior rewinds).

Everything is reported in forward time: t = 0 is the earliest point,
t = t_f is the anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    ChatteringError,
    DomainError,
    InconsistentFinalPointError,
    NumericalError,
    SingularArcError,
)
from .integrate import EventSpec, integrate
from .limit_cycle import LimitCycle, chi
from .model import (
    ExtendedState,
    ForceBound,
    LienardSystem,
    PhasePoint,
    canonical_rhs,
    hamiltonian,
    state_rhs,
)

__all__ = [
    "EXTERIOR",
    "INTERIOR",
    "Arc",
    "BangSchedule",
    "ExtremalTrajectory",
    "final_costate",
    "final_bang_sign",
    "rewind_extremal",
    "critical_trajectory",
    "replay_forward",
    "max_hamiltonian_residual",
    "transversality_residual",
]

EXTERIOR = "exterior"
INTERIOR = "interior"

_SNAP_TOL = 1e-6
_EXIT_MARGIN = 1e-3
_DOMAIN_BOX = 40.0


def _check_region(region: str) -> str:
    if region not in (EXTERIOR, INTERIOR):
        raise DomainError(f"region must be {EXTERIOR!r} or {INTERIOR!r}, got {region!r}")
    return region


def _as_K(bound: "ForceBound | float") -> float:
    K = bound.K if isinstance(bound, ForceBound) else float(bound)
    if K <= 0.0:
        raise DomainError("force bound must be positive")
    return K


def _as_xy(x: "PhasePoint | Sequence[float]") -> tuple[float, float]:
    if isinstance(x, PhasePoint):
        return x.x1, x.x2
    return float(x[0]), float(x[1])


@dataclass(frozen=True)
class BangSchedule:
    """Piecewise-constant force plan: first_sign*K on [0, switches[0]), then
    alternating across each switch, until t_f."""

    t_f: float
    switches: tuple[float, ...]
    first_sign: int
    K: float

    def __post_init__(self) -> None:
        if self.t_f < 0.0:
            raise DomainError("schedule duration must be non-negative")
        if self.t_f == 0.0 and self.switches:
            raise DomainError("an empty schedule (t_f = 0) cannot have switches")
        if self.first_sign not in (-1, 1):
            raise DomainError("first_sign must be +1 or -1")
        ts = self.switches
        if any(not (0.0 < a < self.t_f) for a in ts):
            raise DomainError("switch times must lie strictly inside (0, t_f)")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError("switch times must be strictly increasing")
        if self.K <= 0.0:
            raise DomainError("force bound must be positive")

    @property
    def n_bangs(self) -> int:
        return len(self.switches) + 1

    def signs(self) -> tuple[int, ...]:
        return tuple(self.first_sign * (-1) ** i for i in range(self.n_bangs))

    def force_at(self, t: float) -> float:
        i = 0
        for ts in self.switches:
            if t >= ts:
                i += 1
            else:
                break
        return self.first_sign * (-1) ** i * self.K


@dataclass
class Arc:
    """One constant-force piece of an extremal, sampled in forward time."""

    sign: int
    F: float
    ts: np.ndarray
    zs: np.ndarray  # (n, 4): x1, x2, p1, p2

    def states(self, p0: float) -> Iterator[tuple[float, ExtendedState]]:
        for t, z in zip(self.ts, self.zs):
            yield float(t), ExtendedState(
                PhasePoint(float(z[0]), float(z[1])), float(z[2]), float(z[3]), p0
            )


@dataclass
class ExtremalTrajectory:
    """A complete rewound extremal with its bang schedule and samples."""

    anchor: PhasePoint
    region: str
    schedule: BangSchedule
    arcs: list[Arc]
    switch_states: list[ExtendedState]
    p0: float
    kind: str  # generic | critical_BLplus | critical_BRminus
    K: float
    termination: str  # horizon | region_exit | domain_escape | max_bangs | step_failure
    axis_crossings: list[tuple[float, ExtendedState]] = field(default_factory=list)
    # (forward time, z, distance) at each local closest approach to the
    # approach_point passed to rewind_extremal, if any.
    approach_events: list[tuple[float, tuple[float, ...], float]] = field(default_factory=list)

    @property
    def t_f(self) -> float:
        return self.schedule.t_f

    @property
    def n_bangs(self) -> int:
        return self.schedule.n_bangs

    @property
    def earliest(self) -> PhasePoint:
        z = self.arcs[0].zs[0]
        return PhasePoint(float(z[0]), float(z[1]))

    def iter_states(self) -> Iterator[tuple[float, ExtendedState, float]]:
        for arc in self.arcs:
            for t, s in arc.states(self.p0):
                yield t, s, arc.F

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ts, zs, Fs) over all arcs concatenated in forward time."""
        ts = np.concatenate([a.ts for a in self.arcs])
        zs = np.concatenate([a.zs for a in self.arcs])
        Fs = np.concatenate([np.full(len(a.ts), a.F) for a in self.arcs])
        return ts, zs, Fs


def final_costate(
    sys: LienardSystem,
    lc: LimitCycle,
    xf: "PhasePoint | Sequence[float]",
    Ff: float,
    snap_tol: float = _SNAP_TOL,
) -> tuple[float, float, float]:
    """Final costate (p1f, p2f, p0) at the on-cycle final point for force Ff.

    Generic points: p ∝ outward normal scaled so the Hamiltonian vanishes
    (normal case, p0 = -1).  Points within snap_tol of the cycle's x1-axis
    extremes use the abnormal closed form (sgn(Ff), 0, 0), which avoids the
    1/x2f singularity of the generic formula.
    """
    x1f, x2f = _as_xy(xf)
    if Ff == 0.0:
        raise DomainError("final force must be nonzero")
    if abs(x2f) <= snap_tol:
        if abs(abs(x1f) - lc.x_max) > 1e-3:
            raise InconsistentFinalPointError(
                f"({x1f:g}, {x2f:g}) has x2 ~ 0 but is not an extreme point of the cycle"
            )
        return (math.copysign(1.0, Ff), 0.0, 0.0)
    if abs(chi(lc, (x1f, x2f))) > 10.0 * lc.resolution:
        raise InconsistentFinalPointError(f"final point ({x1f:g}, {x2f:g}) is not on the cycle")
    p2f = 1.0 / Ff
    p1f = (sys.mu * sys.h(x1f) * x2f + sys.v_prime(x1f)) / (Ff * x2f)
    return (p1f, p2f, -1.0)


def final_bang_sign(
    sys: LienardSystem,
    lc: LimitCycle,
    xf: "PhasePoint | Sequence[float]",
    region: str,
    bound: "ForceBound | float",
    snap_tol: float = _SNAP_TOL,
) -> tuple[int, ...]:
    """Admissible sign(s) of the final force at anchor xf for the given region.

    Off the axis there is exactly one: approach from outside needs the force
    to push the state across the cycle inward (sgn Ff = -sgn x2f), approach
    from inside the opposite.  At the extreme points the admissible signs
    follow from the sign of x2 just before arrival, x2f^- ~ eps (V'(x1f) -
    Ff): the candidate s is exterior-consistent iff E = (V'(x1f) - sK) sK
    < 0 and interior-consistent iff E > 0.  Depending on K vs V'(x_max)
    this yields one sign or two (the second pair BL-/BR+ being pruned later
    by synthesis dominance).
    """
    _check_region(region)
    K = _as_K(bound)
    x1f, x2f = _as_xy(xf)
    if abs(x2f) > snap_tol:
        if abs(chi(lc, (x1f, x2f))) > 10.0 * lc.resolution:
            raise DomainError(f"anchor ({x1f:g}, {x2f:g}) is not on the cycle")
        s = -1 if x2f > 0 else 1
        return (s,) if region == EXTERIOR else (-s,)
    if abs(abs(x1f) - lc.x_max) > 1e-3:
        raise DomainError(f"anchor ({x1f:g}, {x2f:g}) is not on the cycle")
    want_exterior = region == EXTERIOR
    valid = []
    # Primary-first ordering: the always-exterior critical sign (+K on the
    # left extreme, -K on the right) is tested first.
    first = 1 if x1f < 0 else -1
    for s in (first, -first):
        E = (sys.v_prime(x1f) - s * K) * s * K
        if (E < 0.0) == want_exterior and E != 0.0:
            valid.append(s)
    return tuple(valid)


def _infer_region(sys: LienardSystem, lc: LimitCycle, x1f: float, x2f: float, s: int, K: float) -> str:
    if abs(x2f) > _SNAP_TOL:
        return EXTERIOR if s * x2f < 0 else INTERIOR
    E = (sys.v_prime(x1f) - s * K) * s * K
    if E == 0.0:
        raise DomainError("final bang sign degenerate: K equals V'(x_max) exactly")
    return EXTERIOR if E < 0.0 else INTERIOR


def rewind_extremal(
    sys: LienardSystem,
    lc: LimitCycle,
    xf: "PhasePoint | Sequence[float]",
    Ff: int,
    bound: "ForceBound | float",
    t_back_max: float = 150.0,
    max_bangs: int = 8,
    region: str | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-10,
    t_tol: float = 1e-10,
    domain_box: float = _DOMAIN_BOX,
    exit_margin: float = _EXIT_MARGIN,
    record_axis_crossings: bool = False,
    kind: str = "generic",
    approach_point: "Sequence[float] | None" = None,
) -> ExtremalTrajectory:
    """Grow one extremal backward from anchor xf with final force sign Ff.

    Ff is the sign (+1/-1) of the force on the final bang; it should come
    from final_bang_sign.  region defaults to the side the trajectory
    provably occupies just before arrival.  Termination reason is recorded,
    never silent: horizon, region_exit, domain_escape, max_bangs, or
    step_failure (blowup reached between event checks).

    When approach_point is given, the local closest approaches to that
    phase-space point are event-located and stored on the result
    (approach_events); query refinement uses them to read exact
    time-to-anchor at a point as the anchor is continued.
    """
    K = _as_K(bound)
    if Ff not in (-1, 1):
        raise DomainError("Ff must be the sign +1 or -1 of the final force")
    if max_bangs < 1:
        raise DomainError("max_bangs must be at least 1")
    x1f, x2f = _as_xy(xf)
    if region is None:
        region = _infer_region(sys, lc, x1f, x2f, Ff, K)
    else:
        _check_region(region)

    p1f, p2f, p0 = final_costate(sys, lc, (x1f, x2f), Ff * K)
    region_sgn = 1.0 if region == EXTERIOR else -1.0

    def exit_guard(t: float, z: Sequence[float]) -> float:
        return region_sgn * lc.side(z[0], z[1]) + exit_margin

    def box_guard(t: float, z: Sequence[float]) -> float:
        return domain_box - math.hypot(z[0], z[1])

    switch_ev = EventSpec("switch", lambda t, z: z[3], direction="any", terminal=True)
    exit_ev = EventSpec("region_exit", exit_guard, direction="falling", terminal=True)
    box_ev = EventSpec("domain", box_guard, direction="falling", terminal=True)
    events = [switch_ev, exit_ev, box_ev]
    if record_axis_crossings:
        events.append(EventSpec("axis", lambda t, z: z[1], direction="any", terminal=False))

    arcs_bwd: list[tuple[int, list[tuple[float, tuple[float, ...]]]]] = []
    switches_tau: list[float] = []
    switch_zs: list[tuple[float, ...]] = []
    crossings_tau: list[tuple[float, tuple[float, ...]]] = []
    approaches_tau: list[tuple[float, tuple[float, ...]]] = []
    if approach_point is not None:
        ax, ay = float(approach_point[0]), float(approach_point[1])

    tau0 = 0.0
    z0: tuple[float, ...] = (x1f, x2f, p1f, p2f)
    sign = Ff
    termination = "horizon"

    while True:
        fwd = canonical_rhs(sys, sign * K)

        def back(t: float, z: Sequence[float], _f=fwd):
            d = _f(t, z)
            return (-d[0], -d[1], -d[2], -d[3])

        arc_events = events
        if approach_point is not None:
            # d(dist^2)/2 dtau to the approach point; local distance minima
            # are its rising zeros.  The guard needs this arc's force.
            def approach_guard(t: float, z: Sequence[float], _s=sign):
                v0 = -z[1]
                v1 = sys.mu * sys.h(z[0]) * z[1] + sys.v_prime(z[0]) - _s * K
                return (z[0] - ax) * v0 + (z[1] - ay) * v1

            arc_events = events + [
                EventSpec("approach", approach_guard, direction="rising", terminal=False)
            ]

        res = integrate(
            back,
            z0,
            tau0,
            t_back_max,
            events=arc_events,
            rtol=rtol,
            atol=atol,
            t_tol=t_tol,
            max_events=400,
        )
        arcs_bwd.append((sign, res.samples))
        for te, lab, ze in res.events:
            if lab == "axis":
                crossings_tau.append((te, ze))
            elif lab == "approach":
                approaches_tau.append((te, ze))
        if res.status == "reached_t_max":
            termination = "horizon"
            break
        if res.status == "step_failure":
            termination = "step_failure"
            break
        te, lab, ze = next(e for e in res.events if e[1] not in ("axis", "approach"))
        if lab == "region_exit":
            termination = "region_exit"
            break
        if lab == "domain":
            termination = "domain_escape"
            break
        # p2 zero: a switching point.
        if te - tau0 < 10.0 * t_tol:
            raise ChatteringError(
                f"switch at backward time {te:g} within 10*t_tol of the previous one"
            )
        p2dot = -ze[2] + sys.mu * sys.h(ze[0]) * ze[3]
        if abs(ze[3]) < 1e-9 and abs(p2dot) < 1e-9:
            raise SingularArcError(
                f"p2 and dp2/dt both ~ 0 at backward time {te:g}: singular arc forbidden"
            )
        if len(arcs_bwd) >= max_bangs:
            # The budget-exhausting p2 zero is the truncation boundary, not a
            # force flip inside the recorded span: it becomes t = 0.
            termination = "max_bangs"
            break
        switches_tau.append(te)
        switch_zs.append(ze)
        sign = -sign
        tau0 = te
        z0 = ze

    t_f = arcs_bwd[-1][1][-1][0]
    if t_f <= 0.0:
        raise NumericalError("rewind produced an empty trajectory")

    arcs: list[Arc] = []
    for s_arc, samp in reversed(arcs_bwd):
        ts = np.array([t_f - tau for tau, _ in reversed(samp)])
        zs = np.array([z for _, z in reversed(samp)])
        _scan_singular(ts, zs)
        arcs.append(Arc(sign=s_arc, F=s_arc * K, ts=ts, zs=zs))

    switch_states = [
        ExtendedState(PhasePoint(z[0], z[1]), z[2], z[3], p0) for z in reversed(switch_zs)
    ]
    switch_times = tuple(t_f - tau for tau in reversed(switches_tau))
    first_sign = Ff * (-1) ** len(switches_tau)
    schedule = BangSchedule(t_f=t_f, switches=switch_times, first_sign=first_sign, K=K)

    crossings = [
        (t_f - tau, ExtendedState(PhasePoint(z[0], z[1]), z[2], z[3], p0))
        for tau, z in reversed(crossings_tau)
    ]
    approaches = [
        (t_f - tau, z, math.hypot(z[0] - ax, z[1] - ay))
        for tau, z in reversed(approaches_tau)
    ]

    return ExtremalTrajectory(
        anchor=PhasePoint(x1f, x2f),
        region=region,
        schedule=schedule,
        arcs=arcs,
        switch_states=switch_states,
        p0=p0,
        kind=kind,
        K=K,
        termination=termination,
        axis_crossings=crossings,
        approach_events=approaches,
    )


def _scan_singular(ts: np.ndarray, zs: np.ndarray) -> None:
    """Reject arcs whose interior dwells at p2 ~ 0 (forbidden singular arc)."""
    if len(ts) < 4:
        return
    small = np.abs(zs[1:-1, 3]) < 1e-9
    if np.any(small[:-1] & small[1:]):
        raise SingularArcError("p2 ~ 0 across consecutive interior samples of an arc")


def critical_trajectory(
    sys: LienardSystem,
    lc: LimitCycle,
    side: str,
    bound: "ForceBound | float",
    t_back_max: float = 150.0,
    max_bangs: int = 8,
    strict: bool = True,
    **kwargs,
) -> ExtremalTrajectory:
    """The exterior critical extremal from an extreme point: BLplus rewinds
    from (-x_max, 0) with final force +K, BRminus from (+x_max, 0) with -K.

    Verifies the axis-switching equivalence in both directions: every
    switching point must lie on the x1-axis (|x2| <= 1e-6) and every
    x1-axis crossing must be a switching point (|p2| <= 1e-6).  Pass
    strict=False to skip the verification, e.g. when only the crossing
    count matters and the trajectory is long enough that accumulated
    integration error exceeds the gate.
    """
    if side not in ("BLplus", "BRminus"):
        raise DomainError(f"side must be 'BLplus' or 'BRminus', got {side!r}")
    K = _as_K(bound)
    if side == "BLplus":
        xf, s, kind = (-lc.x_max, 0.0), 1, "critical_BLplus"
    else:
        xf, s, kind = (lc.x_max, 0.0), -1, "critical_BRminus"
    traj = rewind_extremal(
        sys,
        lc,
        xf,
        s,
        K,
        t_back_max=t_back_max,
        max_bangs=max_bangs,
        region=EXTERIOR,
        record_axis_crossings=True,
        kind=kind,
        **kwargs,
    )
    if not strict:
        return traj
    for st in traj.switch_states:
        if abs(st.x.x2) > 1e-6:
            raise NumericalError(
                f"critical trajectory switch off the x1-axis (|x2| = {abs(st.x.x2):.2e}); "
                "integrator tolerance too loose"
            )
    for _, st in traj.axis_crossings:
        if abs(st.p2) > 1e-6:
            raise NumericalError(
                f"critical trajectory axis crossing without a switch (|p2| = {abs(st.p2):.2e}); "
                "integrator tolerance too loose"
            )
    return traj


def replay_forward(
    sys: LienardSystem,
    x0: "PhasePoint | Sequence[float]",
    schedule: BangSchedule,
    lc: LimitCycle,
    rtol: float = 1e-10,
    atol: float = 1e-10,
) -> tuple[PhasePoint, float]:
    """Run the state-only dynamics forward under the schedule's force plan.

    Returns the terminal point and miss = |chi| there (distance to the
    cycle).  This is the oracle-independent consistency check that a
    rewound schedule actually steers its earliest point back to the anchor.
    """
    x1, x2 = _as_xy(x0)
    y: tuple[float, ...] = (x1, x2)
    bounds = list(schedule.switches) + [schedule.t_f]
    t_prev = 0.0
    signs = schedule.signs()
    for seg_sign, t_next in zip(signs, bounds):
        if t_next - t_prev <= 0.0:
            continue
        rhs = state_rhs(sys, seg_sign * schedule.K)
        res = integrate(rhs, y, t_prev, t_next, rtol=rtol, atol=atol)
        y = res.y_end
        t_prev = t_next
    terminal = PhasePoint(y[0], y[1])
    return terminal, abs(chi(lc, terminal))


def max_hamiltonian_residual(sys: LienardSystem, traj: ExtremalTrajectory) -> float:
    """max |H| over all samples with each arc's active force."""
    worst = 0.0
    mu = sys.mu
    for arc in traj.arcs:
        for z in arc.zs:
            x1, x2, p1, p2 = z
            H = p1 * x2 + p2 * (-mu * sys.h(x1) * x2 - sys.v_prime(x1) + arc.F) + traj.p0
            worst = max(worst, abs(H))
    return worst


def transversality_residual(sys: LienardSystem, lc: LimitCycle, traj: ExtremalTrajectory) -> float:
    """|p_f . unit tangent| at the anchor (0 for exact transversality)."""
    z = traj.arcs[-1].zs[-1]
    rhs = state_rhs(sys, 0.0)
    t1, t2 = rhs(0.0, (z[0], z[1]))
    norm = math.hypot(t1, t2)
    if norm == 0.0:
        raise NumericalError("degenerate tangent at anchor")
    return abs(z[2] * t1 + z[3] * t2) / norm

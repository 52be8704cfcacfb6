"""Independent minimum-time cross-check by direct transcription.

A bang-bang force plan is parameterised by its first sign and the
durations of its constant-force arcs (signs alternate, as any candidate
driven by a switching function must).  The last arc is not given a
duration: it runs until the trajectory first meets the cycle, located by
an event guard.  That leaves arc count minus one free durations, which
are optimised by Nelder-Mead on square-root durations so nonnegativity
is built in; a one-bang plan needs no search at all.

Only the plant model, the integrator and the cycle geometry are used
here: none of the costate machinery, switching rules or field
bookkeeping.  Agreement with the backward synthesis is therefore a
genuine two-sided consistency check rather than a self-comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, NumericalError
from .integrate import EventSpec, integrate
from .limit_cycle import LimitCycle, chi
from .model import ForceBound, LienardSystem, PhasePoint, state_rhs

__all__ = ["DirectResult", "direct_min_time"]


def _as_K(bound: "ForceBound | float") -> float:
    K = bound.K if isinstance(bound, ForceBound) else float(bound)
    if K <= 0.0:
        raise DomainError("force bound must be positive")
    return K


def _as_xy(x: "PhasePoint | Sequence[float]") -> tuple[float, float]:
    if isinstance(x, PhasePoint):
        return x.x1, x.x2
    return float(x[0]), float(x[1])


def _plan_cost(
    sys: LienardSystem,
    lc: LimitCycle,
    K: float,
    xq: tuple[float, float],
    first_sign: int,
    lead: Sequence[float],
    t_last_max: float,
    rtol: float,
) -> tuple[float, "float | None", tuple[float, float]]:
    """Cost of the plan whose lead durations are given and whose last arc
    stops at its first cycle crossing.

    Returns (cost, last duration or None, end point).  For plans that
    reach the cycle the cost is the total time; otherwise it is pushed
    above every feasible cost and decreases with the closest approach, so
    the search is steered toward feasibility.
    """
    y: tuple[float, ...] = xq
    t = 0.0
    sgn = first_sign
    for d in lead:
        if d > 1e-14:
            res = integrate(state_rhs(sys, sgn * K), y, t, t + d, rtol=rtol, atol=rtol)
            y = res.y_end
            t = res.t_end
        sgn = -sgn

    def guard(_t: float, z: Sequence[float]) -> float:
        return lc.side(z[0], z[1])

    res = integrate(
        state_rhs(sys, sgn * K),
        y,
        t,
        t + t_last_max,
        rtol=rtol,
        atol=rtol,
        events=[EventSpec("hit", guard, "any", True)],
    )
    if res.status == "terminal_event":
        t_hit = res.events[-1][0]
        return t_hit, t_hit - t, res.y_end[:2]
    d_min = min(abs(lc.side(z[0], z[1])) for _, z in res.samples)
    return t + t_last_max + 10.0 * d_min, None, res.y_end[:2]


def _polish_landing(
    sys: LienardSystem,
    lc: LimitCycle,
    K: float,
    xq: tuple[float, float],
    first_sign: int,
    durations: Sequence[float],
) -> tuple[float, float, tuple[float, float]]:
    """Re-integrate the full plan accurately and Newton-correct the final
    duration on the true signed distance (the in-search guard uses a fast
    radial proxy whose zero curve sits a few 1e-6 off the cycle).

    Returns (total time, landing miss, land point)."""
    y: tuple[float, ...] = xq
    t = 0.0
    sgn = first_sign
    for d in durations[:-1]:
        if d > 1e-14:
            res = integrate(state_rhs(sys, sgn * K), y, t, t + d, rtol=1e-10, atol=1e-10)
            y = res.y_end
            t = res.t_end
        sgn = -sgn
    d_last = durations[-1]
    for _ in range(3):
        res = integrate(state_rhs(sys, sgn * K), y, t, t + d_last, rtol=1e-10, atol=1e-10)
        land = res.y_end[:2]
        c = chi(lc, land)
        if abs(c) < 1e-9:
            break
        vx, vy = state_rhs(sys, sgn * K)(0.0, land)
        eps = 1e-7
        c_eps = chi(lc, (land[0] + eps * vx, land[1] + eps * vy))
        dcdt = (c_eps - c) / eps
        if dcdt == 0.0 or not math.isfinite(dcdt):
            break
        step = -c / dcdt
        if abs(step) > 0.1 * max(d_last, 0.1):
            break
        d_last += step
        if d_last <= 0.0:
            d_last = 1e-12
    res = integrate(state_rhs(sys, sgn * K), y, t, t + d_last, rtol=1e-10, atol=1e-10)
    land = res.y_end[:2]
    return t + d_last, abs(chi(lc, land)), land


@dataclass
class DirectResult:
    """Best bang-bang plan found by the direct search.

    config_times maps (arc count, first sign) to the polished
    (total time, landing miss) for that structure, or None when the
    search found nothing feasible there.  n_bangs is the smallest arc
    count whose time matches the overall best within rel_tol -- extra
    arcs can always burn zero time, so the raw argmin would overstate
    the count.
    """

    t_f: float
    first_sign: int
    durations: tuple[float, ...]
    n_bangs: int
    miss: float
    x_land: PhasePoint
    config_times: dict[tuple[int, int], "tuple[float, float] | None"]
    evaluations: int


def direct_min_time(
    sys: LienardSystem,
    lc: LimitCycle,
    x0: "PhasePoint | Sequence[float]",
    bound: "ForceBound | float",
    max_bangs: int = 4,
    totals: Sequence[float] = (0.3, 0.8, 1.8, 3.5, 7.0, 12.0),
    seeds_per_total: int = 3,
    polish_top: int = 3,
    t_last_max: float = 25.0,
    feas_tol: float = 1e-4,
    rel_tol: float = 1e-4,
    rng_seed: int = 0,
) -> DirectResult:
    """Minimum time to reach the cycle from x0 with |F| <= K and at most
    max_bangs alternating constant-force arcs, found without any costate
    information.

    Per structure (arc count, first sign): random splits of a spread of
    lead times seed a coarse Nelder-Mead over the lead durations, the
    best coarse solutions are re-polished at tighter tolerance, and the
    winner is rechecked against the true signed distance (landing miss
    must come out below feas_tol)."""
    K = _as_K(bound)
    xq = _as_xy(x0)
    if max_bangs < 1:
        raise DomainError("max_bangs must be at least 1")
    rng = np.random.default_rng(rng_seed)
    evals = 0

    def cost(z: np.ndarray, sgn: int, rtol: float) -> float:
        nonlocal evals
        evals += 1
        c, _, _ = _plan_cost(sys, lc, K, xq, sgn, z * z, t_last_max, rtol)
        return c

    config_times: dict[tuple[int, int], "tuple[float, float] | None"] = {}
    plans: dict[tuple[int, int], tuple[float, ...]] = {}
    for n in range(1, max_bangs + 1):
        for sgn in (1, -1):
            if n == 1:
                evals += 1
                c, d_last, _ = _plan_cost(sys, lc, K, xq, sgn, (), t_last_max, 1e-9)
                if d_last is None:
                    config_times[(n, sgn)] = None
                    continue
                lead: tuple[float, ...] = ()
            else:
                dims = n - 1
                coarse: list[tuple[float, np.ndarray]] = []
                for total in totals:
                    for w in rng.dirichlet(np.ones(dims), size=seeds_per_total):
                        z0 = np.sqrt(total * w)
                        r = minimize(
                            cost,
                            z0,
                            args=(sgn, 1e-7),
                            method="Nelder-Mead",
                            options={"maxfev": 40 + 40 * dims, "xatol": 2e-4, "fatol": 1e-7},
                        )
                        coarse.append((float(r.fun), r.x))
                coarse.sort(key=lambda c: c[0])
                best: "tuple[float, np.ndarray] | None" = None
                for _, z_start in coarse[:polish_top]:
                    r = minimize(
                        cost,
                        z_start,
                        args=(sgn, 1e-9),
                        method="Nelder-Mead",
                        options={"maxfev": 160 * dims, "xatol": 1e-8, "fatol": 1e-12},
                    )
                    if best is None or r.fun < best[0]:
                        best = (float(r.fun), r.x)
                assert best is not None
                lead = tuple(float(v) for v in best[1] * best[1])
                c, d_last, _ = _plan_cost(sys, lc, K, xq, sgn, lead, t_last_max, 1e-9)
                if d_last is None:
                    config_times[(n, sgn)] = None
                    continue
            t_f, miss, _land = _polish_landing(sys, lc, K, xq, sgn, lead + (d_last,))
            if miss < feas_tol:
                config_times[(n, sgn)] = (t_f, miss)
                plans[(n, sgn)] = lead + (t_f - sum(lead),)
            else:
                config_times[(n, sgn)] = None

    feasible = {k: v for k, v in config_times.items() if v is not None}
    if not feasible:
        raise NumericalError(
            f"direct search found no plan reaching the cycle from {xq} "
            f"with up to {max_bangs} bangs within {t_last_max:g}s arcs"
        )
    t_best = min(t for t, _ in feasible.values())
    cutoff = t_best * (1.0 + rel_tol) + 1e-9
    n_opt = min(n for (n, _), (t, _) in feasible.items() if t <= cutoff)
    key = min(
        (k for k in feasible if k[0] == n_opt and feasible[k][0] <= cutoff),
        key=lambda k: feasible[k][0],
    )
    t_f, miss = feasible[key]
    durations = plans[key]
    _, _, land = _polish_landing(sys, lc, K, xq, key[1], durations)
    return DirectResult(
        t_f=t_f,
        first_sign=key[1],
        durations=durations,
        n_bangs=n_opt,
        miss=miss,
        x_land=PhasePoint(land[0], land[1]),
        config_times=config_times,
        evaluations=evals,
    )

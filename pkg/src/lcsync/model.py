"""Lienard oscillator model layer.

Defines the driven second-order system

    x1' = x2
    x2' = -mu h(x1) x2 - V'(x1) + F,      |F| <= K,

its Pontryagin costate dynamics p' = -grad_x H, the Hamiltonian

    H = p1 x2 + p2 (-mu h(x1) x2 - V'(x1) + F) + p0,

and the bang-bang law F = sgn(p2) K.  All operations are pure functions of
immutable value types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import BracketingError, DomainError

__all__ = [
    "LienardSystem",
    "PhasePoint",
    "ExtendedState",
    "ForceBound",
    "ConditionReport",
    "van_der_pol",
    "vector_field",
    "costate_field",
    "hamiltonian",
    "optimal_force",
    "check_lienard_conditions",
    "state_rhs",
    "canonical_rhs",
]


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"{name}: non-finite value {v!r}")


@dataclass(frozen=True)
class LienardSystem:
    """A Lienard oscillator: damping factor h and confining potential V.

    h_prime and v_second are required analytically (no internal
    differentiation): they enter the costate dynamics through grad_x H.
    """

    mu: float
    h: Callable[[float], float]
    h_prime: Callable[[float], float]
    v_prime: Callable[[float], float]
    v_second: Callable[[float], float]
    name: str = "lienard"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise DomainError(f"damping coefficient mu must be positive, got {self.mu!r}")


@dataclass(frozen=True)
class PhasePoint:
    """A point (position, velocity) of the two-dimensional phase plane."""

    x1: float
    x2: float

    def __post_init__(self) -> None:
        _require_finite("PhasePoint", self.x1, self.x2)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x1, self.x2)


@dataclass(frozen=True)
class ExtendedState:
    """Phase point plus costate (p1, p2) and the abnormality constant p0."""

    x: PhasePoint
    p1: float
    p2: float
    p0: float

    def __post_init__(self) -> None:
        _require_finite("ExtendedState", self.p1, self.p2)
        if self.p0 not in (0.0, -1.0):
            raise DomainError(f"p0 must be 0 or -1, got {self.p0!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x.x1, self.x.x2, self.p1, self.p2)


@dataclass(frozen=True)
class ForceBound:
    """The bound K on the driving force: |F(t)| <= K."""

    K: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.K) and self.K > 0):
            raise DomainError(f"force bound K must be positive, got {self.K!r}")


def _vdp_h(x: float) -> float:
    return x * x - 1.0


def _vdp_h_prime(x: float) -> float:
    return 2.0 * x


def _vdp_v_prime(x: float) -> float:
    return x


def _vdp_v_second(x: float) -> float:
    return 1.0


def van_der_pol(mu: float = 0.1) -> LienardSystem:
    """The van der Pol instance: h(x) = x^2 - 1, V(x) = x^2 / 2."""
    return LienardSystem(
        mu=mu,
        h=_vdp_h,
        h_prime=_vdp_h_prime,
        v_prime=_vdp_v_prime,
        v_second=_vdp_v_second,
        name="vdp",
    )


def vector_field(sys: LienardSystem, x: PhasePoint, F: float) -> tuple[float, float]:
    """Driven phase-plane velocity (x1', x2') at x under constant force F."""
    _require_finite("vector_field force", F)
    x1, x2 = x.x1, x.x2
    return (x2, -sys.mu * sys.h(x1) * x2 - sys.v_prime(x1) + F)


def costate_field(sys: LienardSystem, s: ExtendedState, F: float) -> tuple[float, float]:
    """Costate velocity (p1', p2') = -grad_x H at the extended state s.

    The force does not appear: grad_x H is independent of F.
    """
    x1, x2 = s.x.x1, s.x.x2
    dp1 = s.p2 * (sys.mu * sys.h_prime(x1) * x2 + sys.v_second(x1))
    dp2 = -s.p1 + sys.mu * sys.h(x1) * s.p2
    return (dp1, dp2)


def hamiltonian(sys: LienardSystem, s: ExtendedState, F: float) -> float:
    """Pontryagin Hamiltonian H(x, p, p0, F)."""
    x1, x2 = s.x.x1, s.x.x2
    return s.p1 * x2 + s.p2 * (-sys.mu * sys.h(x1) * x2 - sys.v_prime(x1) + F) + s.p0


def optimal_force(p2: float, bound: "ForceBound | float") -> float:
    """Maximising force sgn(p2) K.  p2 = 0 is a switching instant, not a value."""
    K = bound.K if isinstance(bound, ForceBound) else float(bound)
    if K <= 0.0:
        raise DomainError("force bound must be positive")
    if p2 > 0.0:
        return K
    if p2 < 0.0:
        return -K
    raise DomainError("optimal_force undefined at p2 = 0: switching is owned by event detection")


def state_rhs(sys: LienardSystem, F: float) -> Callable[[float, Sequence[float]], tuple[float, float]]:
    """Fast closure for the 2-dimensional state equations under constant F."""
    mu = sys.mu
    h = sys.h
    v_prime = sys.v_prime

    def rhs(t: float, y: Sequence[float]) -> tuple[float, float]:
        x1 = y[0]
        x2 = y[1]
        return (x2, -mu * h(x1) * x2 - v_prime(x1) + F)

    return rhs


def canonical_rhs(sys: LienardSystem, F: float) -> Callable[[float, Sequence[float]], tuple[float, float, float, float]]:
    """Fast closure for the 4-dimensional canonical (state + costate) equations."""
    mu = sys.mu
    h = sys.h
    h_prime = sys.h_prime
    v_prime = sys.v_prime
    v_second = sys.v_second

    def rhs(t: float, y: Sequence[float]) -> tuple[float, float, float, float]:
        x1 = y[0]
        x2 = y[1]
        p1 = y[2]
        p2 = y[3]
        hv = h(x1)
        return (
            x2,
            -mu * hv * x2 - v_prime(x1) + F,
            p2 * (mu * h_prime(x1) * x2 + v_second(x1)),
            -p1 + mu * hv * p2,
        )

    return rhs


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the Lienard-class condition check.

    xi(x) = integral of h from 0 to x.  The class requires: xi has a single
    positive zero a with xi < 0 on (0, a) and xi non-decreasing beyond a, and
    V has a single minimum (V' single-signed on each half-line).  Growth of
    xi at infinity can only be checked up to the probe bound, so the verdict
    is "checked up to x_hi", not a proof.
    """

    passed: bool
    zero: float | None
    xi_negative_before_zero: bool
    xi_nondecreasing_after_zero: bool
    v_single_minimum: bool
    single_zero: bool
    checked_up_to: float
    messages: tuple[str, ...]


def check_lienard_conditions(
    sys: LienardSystem,
    x_hi: float = 10.0,
    n_probe: int = 256,
    x_probe: Sequence[float] | None = None,
) -> ConditionReport:
    """Numerically check the Lienard-class conditions on (0, x_hi].

    The probe grid is uniform with n_probe points unless x_probe is given
    explicitly.  Raises BracketingError when xi stays negative on the whole
    grid (the zero is not bracketed and no verdict is possible).
    """
    if x_probe is None:
        if x_hi <= 0.0 or n_probe < 2:
            raise DomainError("x_hi must be positive and n_probe at least 2")
        x_probe = [x_hi * (i + 1) / n_probe for i in range(n_probe)]
    xs = sorted(float(x) for x in x_probe)
    if not xs or xs[0] <= 0.0:
        raise DomainError("probe grid must contain positive positions only")

    def xi(x: float) -> float:
        val, _ = quad(sys.h, 0.0, x, limit=200)
        return val

    xi_vals = [xi(x) for x in xs]
    messages: list[str] = []

    sign_changes = [
        i for i in range(len(xs) - 1) if xi_vals[i] < 0.0 <= xi_vals[i + 1] or xi_vals[i] >= 0.0 > xi_vals[i + 1]
    ]
    if not sign_changes:
        if all(v < 0.0 for v in xi_vals):
            raise BracketingError(
                f"xi still negative at x_hi={xs[-1]:g}: zero not bracketed, extend the probe grid",
                bracket=(xs[0], xs[-1]),
            )
        # xi positive throughout: no positive zero in the probed range.
        return ConditionReport(
            passed=False,
            zero=None,
            xi_negative_before_zero=False,
            xi_nondecreasing_after_zero=False,
            v_single_minimum=_v_single_minimum(sys, xs),
            single_zero=False,
            checked_up_to=xs[-1],
            messages=("xi has no positive zero on the probe grid",),
        )

    single_zero = len(sign_changes) == 1
    if not single_zero:
        messages.append(f"xi changes sign {len(sign_changes)} times on the probe grid")
    i = sign_changes[0]
    zero = brentq(xi, xs[i], xs[i + 1], xtol=1e-12)

    before = [x for x in xs if x < zero]
    xi_neg = all(xi(x) < 0.0 for x in before) if before else xi(zero / 2.0) < 0.0
    if not xi_neg:
        messages.append("xi is not negative everywhere on (0, a)")

    after = [x for x in xs if x > zero]
    nondecreasing = True
    prev = xi(zero)
    for x in after:
        cur = xi(x)
        if cur < prev - 1e-12:
            nondecreasing = False
            messages.append(f"xi decreases after its zero near x={x:g}")
            break
        prev = cur

    v_ok = _v_single_minimum(sys, xs)
    if not v_ok:
        messages.append("V' is not single-signed on each half-line")

    passed = single_zero and xi_neg and nondecreasing and v_ok
    return ConditionReport(
        passed=passed,
        zero=zero,
        xi_negative_before_zero=xi_neg,
        xi_nondecreasing_after_zero=nondecreasing,
        v_single_minimum=v_ok,
        single_zero=single_zero,
        checked_up_to=xs[-1],
        messages=tuple(messages),
    )


def _v_single_minimum(sys: LienardSystem, xs: Sequence[float]) -> bool:
    pos_ok = all(sys.v_prime(x) > 0.0 for x in xs)
    neg_ok = all(sys.v_prime(-x) < 0.0 for x in xs)
    return pos_ok and neg_ok

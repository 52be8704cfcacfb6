"""lcsync: minimum-time bang-bang synchronisation to a Liénard limit cycle.

The package computes time-optimal bounded drives |F| <= K that steer a
Liénard oscillator (van der Pol by default) onto its stable limit
cycle.  Candidate controls follow from the maximum principle: bang-bang
forces whose switching structure is recovered by integrating the
state-costate system backward from the cycle.  A field of such
extremals answers point queries; an independent direct-transcription
search cross-checks the answers.

Layers, bottom up: model (plant and canonical equations), integrate
(adaptive RK with event location), limit_cycle (cycle geometry),
extremal (single backward extremals), synthesis (fields, queries,
curves, critical levels), oracle (direct search), estimator
(scikit-learn facade), cli (artifacts and plots).
"""

from .errors import (
    BracketingError,
    ChatteringError,
    ConvergenceError,
    CoverageError,
    DegenerateNormalError,
    DomainError,
    InconsistentFinalPointError,
    LcsyncError,
    NumericalError,
    SingularArcError,
    StepFailureError,
    ValidationError,
)
from .estimator import TimeOptimalSynchronizer
from .extremal import (
    BangSchedule,
    ExtremalTrajectory,
    critical_trajectory,
    final_bang_sign,
    final_costate,
    max_hamiltonian_residual,
    replay_forward,
    rewind_extremal,
    transversality_residual,
)
from .integrate import EventSpec, IntegrationResult, integrate
from .limit_cycle import (
    LimitCycle,
    chi,
    extreme_points,
    find_limit_cycle,
    relaxation_time,
    time_within_threshold,
)
from .model import (
    ExtendedState,
    ForceBound,
    LienardSystem,
    PhasePoint,
    canonical_rhs,
    costate_field,
    hamiltonian,
    optimal_force,
    state_rhs,
    van_der_pol,
    vector_field,
)
from .oracle import DirectResult, direct_min_time
from .synthesis import (
    MinTimeCurve,
    OptimalAnswer,
    PhaseDiagram,
    SynthesisField,
    axis_crossings,
    build_field,
    coexistence_curve,
    critical_K,
    min_time_curve,
    optimal_for_point,
    phase_diagram,
    switching_curves,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "LienardSystem",
    "PhasePoint",
    "ExtendedState",
    "ForceBound",
    "van_der_pol",
    "vector_field",
    "costate_field",
    "hamiltonian",
    "optimal_force",
    "state_rhs",
    "canonical_rhs",
    # integrate
    "integrate",
    "EventSpec",
    "IntegrationResult",
    # limit cycle
    "LimitCycle",
    "find_limit_cycle",
    "chi",
    "extreme_points",
    "relaxation_time",
    "time_within_threshold",
    # extremal
    "BangSchedule",
    "ExtremalTrajectory",
    "rewind_extremal",
    "critical_trajectory",
    "final_costate",
    "final_bang_sign",
    "replay_forward",
    "max_hamiltonian_residual",
    "transversality_residual",
    # synthesis
    "SynthesisField",
    "OptimalAnswer",
    "build_field",
    "optimal_for_point",
    "switching_curves",
    "coexistence_curve",
    "axis_crossings",
    "critical_K",
    "PhaseDiagram",
    "phase_diagram",
    "MinTimeCurve",
    "min_time_curve",
    # oracle
    "DirectResult",
    "direct_min_time",
    # estimator
    "TimeOptimalSynchronizer",
    # errors
    "LcsyncError",
    "DomainError",
    "ValidationError",
    "NumericalError",
    "CoverageError",
    "BracketingError",
    "ConvergenceError",
    "StepFailureError",
    "ChatteringError",
    "SingularArcError",
    "InconsistentFinalPointError",
    "DegenerateNormalError",
]

"""Scikit-learn style facade over the synthesis field.

TimeOptimalSynchronizer.fit() locates the limit cycle of the configured
plant and builds the backward extremal field(s); predict() then maps
phase points to minimum synchronisation times, and predict_schedule()
to the full bang-bang force plans.  The heavy lifting lives in
lcsync.synthesis; this layer only handles array plumbing, region
routing and the usual estimator protocol (get_params/set_params,
NotFittedError before fit).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .extremal import BangSchedule
from .limit_cycle import chi, find_limit_cycle
from .model import van_der_pol
from .synthesis import EXTERIOR, INTERIOR, OptimalAnswer, build_field, optimal_for_point

__all__ = ["TimeOptimalSynchronizer"]

_REGIONS = (EXTERIOR, INTERIOR, "both")


class TimeOptimalSynchronizer(BaseEstimator):
    """Minimum-time bang-bang synchronisation to a Lienard limit cycle.

    Parameters
    ----------
    K : force bound, |F| <= K.
    mu : damping strength of the van der Pol plant.
    region : which side(s) of the cycle to prepare: "exterior",
        "interior" or "both".
    n_anchors : cycle anchors per field; more anchors tighten the
        coarse time read-off.
    refine : when True, predictions are sharpened by continuation until
        an extremal passes through the query point exactly.
    t_back_max, max_bangs : backward horizon and arc budget per
        extremal.

    Attributes (after fit)
    ----------
    system_, limit_cycle_ : the plant and its located cycle.
    fields_ : dict region -> built synthesis field.
    """

    def __init__(
        self,
        K: float = 2.0,
        mu: float = 0.1,
        region: str = "both",
        n_anchors: int = 256,
        refine: bool = False,
        t_back_max: float = 60.0,
        max_bangs: int = 8,
    ):
        self.K = K
        self.mu = mu
        self.region = region
        self.n_anchors = n_anchors
        self.refine = refine
        self.t_back_max = t_back_max
        self.max_bangs = max_bangs

    def fit(self, X=None, y=None) -> "TimeOptimalSynchronizer":
        """Locate the cycle and build the requested field(s).

        X and y are accepted for pipeline compatibility and ignored: the
        plant, not data, defines the problem."""
        if self.region not in _REGIONS:
            raise ValueError(
                f"region must be one of {_REGIONS}, got {self.region!r}"
            )
        self.system_ = van_der_pol(self.mu)
        self.limit_cycle_ = find_limit_cycle(self.system_)
        wanted = (EXTERIOR, INTERIOR) if self.region == "both" else (self.region,)
        self.fields_ = {
            r: build_field(
                self.system_,
                self.limit_cycle_,
                self.K,
                region=r,
                n_anchors=self.n_anchors,
                t_back_max=self.t_back_max,
                max_bangs=self.max_bangs,
            )
            for r in wanted
        }
        return self

    # -- prediction -----------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "fields_"):
            raise NotFittedError(
                "This TimeOptimalSynchronizer instance is not fitted yet; "
                "call fit() first."
            )

    def _validate_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and X.shape[0] == 2:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(
                f"X must be an (n, 2) array of phase points, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        return X

    def _answer(self, pt: tuple[float, float]) -> OptimalAnswer:
        side = chi(self.limit_cycle_, pt)
        region = EXTERIOR if side >= 0.0 else INTERIOR
        if region not in self.fields_:
            raise ValueError(
                f"point ({pt[0]:g}, {pt[1]:g}) lies in the {region} but only "
                f"{tuple(self.fields_)} was fitted; refit with region='both'"
            )
        return optimal_for_point(self.fields_[region], pt, refine=self.refine)

    def predict(self, X) -> np.ndarray:
        """Minimum synchronisation time for each phase point row of X."""
        self._check_fitted()
        X = self._validate_X(X)
        return np.array([self._answer((x[0], x[1])).t_f for x in X])

    def predict_schedule(self, X) -> list[BangSchedule]:
        """Optimal force plan for each phase point row of X."""
        self._check_fitted()
        X = self._validate_X(X)
        return [self._answer((x[0], x[1])).schedule for x in X]

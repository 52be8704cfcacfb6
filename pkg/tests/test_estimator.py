"""Tests for the estimator facade: protocol compliance and routing."""

from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lcsync.estimator import TimeOptimalSynchronizer


@pytest.fixture(scope="module")
def fitted():
    return TimeOptimalSynchronizer(K=2.0, n_anchors=96).fit()


class TestProtocol:
    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            TimeOptimalSynchronizer().predict([[5.0, 0.0]])

    def test_bad_region_rejected_at_fit(self):
        with pytest.raises(ValueError):
            TimeOptimalSynchronizer(region="everywhere").fit()

    def test_params_round_trip_and_clone(self):
        est = TimeOptimalSynchronizer(K=0.5, n_anchors=128, refine=True)
        params = est.get_params()
        assert params["K"] == 0.5
        assert params["refine"] is True
        dup = clone(est)
        assert dup.get_params() == params

    def test_bad_shape_rejected(self, fitted):
        with pytest.raises(ValueError):
            fitted.predict([[1.0, 2.0, 3.0]])


class TestPredictions:
    def test_reference_time_and_symmetry(self, fitted):
        t = fitted.predict([[5.0, 0.0], [-5.0, 0.0]])
        assert t.shape == (2,)
        assert t[0] == pytest.approx(2.0384, abs=5e-3)
        assert t[0] == pytest.approx(t[1], abs=1e-5)

    def test_single_point_convenience(self, fitted):
        t = fitted.predict([5.0, 0.0])
        assert t.shape == (1,)

    def test_routes_both_regions(self, fitted):
        t = fitted.predict([[5.0, 0.0], [0.5, 0.3]])
        assert np.all(t > 0)
        scheds = fitted.predict_schedule([[5.0, 0.0], [0.5, 0.3]])
        assert scheds[0].signs() == (-1, 1)
        assert len(scheds[1].signs()) == 1

    def test_region_mismatch_raises(self):
        est = TimeOptimalSynchronizer(K=2.0, region="exterior", n_anchors=96).fit()
        with pytest.raises(ValueError):
            est.predict([[0.2, 0.1]])

    def test_refined_prediction_sharpens(self):
        est = TimeOptimalSynchronizer(
            K=2.0, region="exterior", n_anchors=96, refine=True
        ).fit()
        t = est.predict([[5.0, 0.0]])
        assert t[0] == pytest.approx(2.03840074, abs=1e-6)

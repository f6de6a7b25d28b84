"""Scaler round trips, degenerate columns, support masks, serialization."""

import numpy as np
import pytest

from romforge.errors import DataValidationError
from romforge.regress.scaling import make_scaler, scaler_from_dict


def sample_matrix():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((20, 4)) * np.array([1.0, 50.0, 1e-3, 2e9])
    X[:, 3] += 1e11
    return X


@pytest.mark.parametrize("kind", ["zscore", "minmax", "none"])
class TestAllKinds:
    def test_round_trip_is_tight(self, kind):
        X = sample_matrix()
        s = make_scaler(kind).fit(X)
        back = s.inverse(s.transform(X))
        assert np.abs(back - X).max() <= 1e-12 * np.abs(X).max()

    def test_constant_column_survives(self, kind):
        X = np.column_stack([np.full(7, 3.5), np.arange(7.0)])
        s = make_scaler(kind).fit(X)
        Z = s.transform(X)
        assert np.all(np.isfinite(Z))
        back = s.inverse(Z)
        assert np.abs(back - X).max() <= 1e-9

    def test_support_mask_accepts_training_rows(self, kind):
        X = sample_matrix()
        s = make_scaler(kind).fit(X)
        assert np.all(s.in_support(X))

    def test_support_mask_rejects_points_outside_the_box(self, kind):
        X = sample_matrix()
        s = make_scaler(kind).fit(X)
        out = X[:1].copy()
        out[0, 1] = X[:, 1].max() * 2.0 + 1.0
        assert not s.in_support(out)[0]

    def test_support_mask_tolerates_edge_roundoff(self, kind):
        X = np.array([[0.0, 1.0], [2.0, 3.0]])
        s = make_scaler(kind).fit(X)
        edge = np.array([[2.0 + 1e-13, 0.9999999999999]])
        assert s.in_support(edge)[0]

    def test_serialization_round_trips_bitwise(self, kind):
        X = sample_matrix()
        s = make_scaler(kind).fit(X)
        clone = scaler_from_dict(s.to_dict())
        Z1, Z2 = s.transform(X), clone.transform(X)
        assert np.array_equal(Z1, Z2)
        assert np.array_equal(s.inverse(Z1), clone.inverse(Z2))
        assert clone.to_dict() == s.to_dict()

    def test_fit_refuses_empty_input(self, kind):
        with pytest.raises(DataValidationError):
            make_scaler(kind).fit(np.zeros((0, 3)))


class TestKindSpecifics:
    def test_zscore_output_is_centered_and_unit_spread(self):
        X = sample_matrix()
        Z = make_scaler("zscore").fit(X).transform(X)
        assert np.abs(Z.mean(axis=0)).max() <= 1e-10
        assert np.abs(Z.std(axis=0) - 1.0).max() <= 1e-10

    def test_minmax_output_fills_the_unit_box(self):
        X = sample_matrix()
        Z = make_scaler("minmax").fit(X).transform(X)
        assert np.abs(Z.min(axis=0)).max() <= 1e-12
        assert np.abs(Z.max(axis=0) - 1.0).max() <= 1e-12

    def test_identity_leaves_values_alone_but_tracks_the_box(self):
        X = sample_matrix()
        s = make_scaler("none").fit(X)
        assert np.array_equal(s.transform(X), X)
        assert np.array_equal(s.lo, X.min(axis=0))
        assert np.array_equal(s.hi, X.max(axis=0))

    def test_unknown_kinds_are_rejected(self):
        with pytest.raises(DataValidationError):
            make_scaler("robust")
        with pytest.raises(DataValidationError):
            scaler_from_dict({"kind": "quantile", "lo": [0], "hi": [1]})

"""Column-wise feature/target scalers with exact inverse transforms."""

import numpy as np

from ..errors import DataValidationError

# degenerate columns get their spread floored instead of dividing by zero
_STD_FLOOR = 1e-12


class ZScoreScaler:
    kind = "zscore"

    def __init__(self, mean=None, scale=None, lo=None, hi=None):
        self.mean = mean
        self.scale = scale
        self.lo = lo
        self.hi = hi

    def fit(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] < 1:
            raise DataValidationError("cannot fit a scaler on zero rows")
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        floor = _STD_FLOOR * (1.0 + np.abs(self.mean))
        self.scale = np.maximum(std, floor)
        self.lo = X.min(axis=0)
        self.hi = X.max(axis=0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def in_support(self, X):
        """Row mask: True where every column sits inside the training range."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        pad = 1e-12 * (1.0 + np.abs(self.hi - self.lo))
        return np.all((X >= self.lo - pad) & (X <= self.hi + pad), axis=1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
        }


class MinMaxScaler:
    """Maps the training range of each column onto [0, 1]."""

    kind = "minmax"

    def __init__(self, lo=None, hi=None):
        self.lo = lo
        self.hi = hi

    def fit(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] < 1:
            raise DataValidationError("cannot fit a scaler on zero rows")
        self.lo = X.min(axis=0)
        self.hi = X.max(axis=0)
        return self

    @property
    def _span(self):
        span = self.hi - self.lo
        return np.maximum(span, _STD_FLOOR * (1.0 + np.abs(self.lo)))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.lo) / self._span

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self._span + self.lo

    def in_support(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        pad = 1e-12 * (1.0 + np.abs(self.hi - self.lo))
        return np.all((X >= self.lo - pad) & (X <= self.hi + pad), axis=1)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class IdentityScaler:
    """Pass-through scaling that still records the fitted column ranges.

    Shift-based scalers destroy multiplicative structure in the target
    (a separable function minus its mean is no longer separable), which
    matters when the regressor exploits that structure. This keeps the
    raw values while preserving the in_support interface.
    """

    kind = "none"

    def __init__(self, lo=None, hi=None):
        self.lo = lo
        self.hi = hi

    def fit(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] < 1:
            raise DataValidationError("cannot fit a scaler on zero rows")
        self.lo = X.min(axis=0)
        self.hi = X.max(axis=0)
        return self

    def transform(self, X):
        return np.asarray(X, dtype=float).copy()

    def inverse(self, Z):
        return np.asarray(Z, dtype=float).copy()

    def in_support(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        pad = 1e-12 * (1.0 + np.abs(self.hi - self.lo))
        return np.all((X >= self.lo - pad) & (X <= self.hi + pad), axis=1)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def scaler_from_dict(d):
    kind = d.get("kind")
    if kind == "zscore":
        s = ZScoreScaler()
        s.mean = np.asarray(d["mean"], dtype=float)
        s.scale = np.asarray(d["scale"], dtype=float)
        s.lo = np.asarray(d["lo"], dtype=float)
        s.hi = np.asarray(d["hi"], dtype=float)
        return s
    if kind in ("minmax", "none"):
        s = MinMaxScaler() if kind == "minmax" else IdentityScaler()
        s.lo = np.asarray(d["lo"], dtype=float)
        s.hi = np.asarray(d["hi"], dtype=float)
        return s
    raise DataValidationError(f"unknown scaler kind '{kind}'")


def make_scaler(kind):
    if kind == "zscore":
        return ZScoreScaler()
    if kind == "minmax":
        return MinMaxScaler()
    if kind == "none":
        return IdentityScaler()
    raise DataValidationError(f"unknown scaler kind '{kind}'")

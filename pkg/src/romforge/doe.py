"""Design-of-experiments sampling over box-shaped parameter spaces."""

import itertools

import numpy as np
from dataclasses import dataclass, field

from .errors import DataValidationError

__all__ = [
    "ParameterSpace",
    "ParameterPoint",
    "chebyshev_grid",
    "latin_hypercube",
    "corner_points",
]


@dataclass(frozen=True)
class ParameterSpace:
    """Axis-aligned box: named parameters with per-dimension bounds."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(names) < 1:
            raise DataValidationError("parameter space needs at least one dimension")
        if len(set(names)) != len(names):
            raise DataValidationError("parameter names must be unique")
        if lower.shape != (len(names),) or upper.shape != (len(names),):
            raise DataValidationError("bounds must match the number of names")
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise DataValidationError("bounds must be finite")
        if not np.all(lower < upper):
            raise DataValidationError("every lower bound must be strictly below its upper bound")

    @property
    def dim(self):
        return len(self.names)

    def contains(self, values, rtol=1e-12):
        v = np.asarray(values, dtype=float)
        slack = rtol * (self.upper - self.lower)
        return bool(np.all(v >= self.lower - slack) and np.all(v <= self.upper + slack))

    def to_dict(self):
        return {
            "names": list(self.names),
            "lower": [float(x) for x in self.lower],
            "upper": [float(x) for x in self.upper],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(tuple(d["names"]), d["lower"], d["upper"])
        except KeyError as e:
            raise DataValidationError(f"parameter space is missing key {e}") from e


@dataclass(frozen=True)
class ParameterPoint:
    """One sample in a ParameterSpace. ``corner`` marks box vertices so the
    training split can pin them."""

    values: np.ndarray
    corner: bool = field(default=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def as_dict(self, space):
        d = {name: float(v) for name, v in zip(space.names, self.values)}
        return d


def _affine_from_unit(space, unit):
    # unit in [-1, 1]^d
    half = 0.5 * (space.upper - space.lower)
    mid = 0.5 * (space.upper + space.lower)
    return mid + half * unit


def chebyshev_grid(space, order, include_center=True):
    """Tensor grid of Chebyshev nodes (zeros of T_order) per dimension.

    Returns order**dim points, plus the box center when ``include_center``
    and the grid does not already contain it (odd orders do).
    """
    if order < 1:
        raise DataValidationError("chebyshev order must be >= 1")
    k = np.arange(1, order + 1)
    nodes = np.cos((2 * k - 1) * np.pi / (2 * order))  # zeros of T_order
    nodes = np.sort(nodes)
    axes = []
    for j in range(space.dim):
        axes.append(space.lower[j] + (space.upper[j] - space.lower[j]) * (nodes + 1.0) / 2.0)
    points = [ParameterPoint(np.array(combo)) for combo in itertools.product(*axes)]
    if include_center:
        center = 0.5 * (space.lower + space.upper)
        present = any(np.allclose(p.values, center, rtol=0.0, atol=1e-13) for p in points)
        if not present:
            points.append(ParameterPoint(center))
    return points


def latin_hypercube(space, count, seed):
    """Latin hypercube sample: one point per stratum in every dimension.

    Strata are equal-width; stratum order is a seeded permutation and the
    position inside each stratum is uniform jitter.
    """
    if count < 1:
        raise DataValidationError("latin hypercube needs count >= 1")
    rng = np.random.default_rng(seed)
    unit = np.empty((count, space.dim))
    for j in range(space.dim):
        unit[:, j] = (rng.permutation(count) + rng.random(count)) / count
    points = space.lower + unit * (space.upper - space.lower)
    return [ParameterPoint(p) for p in points]


def corner_points(space):
    """All 2**dim box vertices in lexicographic (lower-before-upper) order."""
    if space.dim > 20:
        raise DataValidationError("corner enumeration is limited to 20 dimensions")
    corners = []
    for combo in itertools.product(*[(lo, hi) for lo, hi in zip(space.lower, space.upper)]):
        corners.append(ParameterPoint(np.array(combo), corner=True))
    return corners

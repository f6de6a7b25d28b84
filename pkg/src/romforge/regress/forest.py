"""Multi-output random forest regression built from scratch.

CART trees split on the summed per-output variance reduction; leaves store
mean target vectors. Every tree draws its bootstrap resample and split
feature subsets from an RNG seeded by (base seed, tree index), so training
is bitwise reproducible no matter how the tree loop is scheduled.
"""

import math

import numpy as np
from dataclasses import dataclass, asdict

from ..errors import DataValidationError

FOREST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestHyperparams:
    n_estimators: int = 50
    min_samples_leaf: int = 4
    max_depth: int = 0          # 0 means unlimited
    bootstrap: bool = True
    max_features: str = "third"  # "third", "all", or an integer count
    per_output: bool = False     # one independent forest per target column

    def resolve_max_features(self, n_features):
        if self.max_features == "third":
            return max(1, math.ceil(n_features / 3.0))
        if self.max_features == "all":
            return n_features
        m = int(self.max_features)
        if not (1 <= m <= n_features):
            raise DataValidationError("max_features out of range")
        return m


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "values", "_leaf_matrix")

    def __init__(self, feature, threshold, left, right, values):
        self.feature = feature      # int array, -1 at leaves
        self.threshold = threshold  # float array
        self.left = left            # int array, -1 at leaves
        self.right = right
        self.values = values        # list; (R,) arrays at leaves, None inside
        self._leaf_matrix = None

    def predict(self, X):
        """Route all rows of X to their leaves at once."""
        if self._leaf_matrix is None:
            R = next(v.size for v in self.values if v is not None)
            mat = np.zeros((len(self.values), R))
            for i, v in enumerate(self.values):
                if v is not None:
                    mat[i] = v
            self._leaf_matrix = mat
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            ii = np.flatnonzero(inner)
            sub = node[ii]
            go_left = X[ii, f[ii]] <= self.threshold[sub]
            node[ii] = np.where(go_left, self.left[sub], self.right[sub])
        return self._leaf_matrix[node]


def _best_split(X, Y, idx, features, min_leaf):
    """Scan candidate features; return (cost, feature, threshold) or None."""
    n = idx.size
    best = None
    for f in features:
        order = np.argsort(X[idx, f], kind="stable")
        xs = X[idx[order], f]
        ys = Y[idx[order]]
        s1 = np.cumsum(ys, axis=0)
        s2 = np.cumsum(ys * ys, axis=0)
        t1, t2 = s1[-1], s2[-1]
        k = np.arange(min_leaf, n - min_leaf + 1)
        if k.size == 0:
            continue
        movable = xs[k - 1] < xs[k]          # no split between equal values
        if not np.any(movable):
            continue
        k = k[movable]
        nl = k.astype(float)
        nr = (n - k).astype(float)
        sse_l = np.sum(s2[k - 1] - s1[k - 1] ** 2 / nl[:, None], axis=1)
        sse_r = np.sum((t2 - s2[k - 1]) - (t1 - s1[k - 1]) ** 2 / nr[:, None], axis=1)
        cost = sse_l + sse_r
        j = int(np.argmin(cost))
        if best is None or cost[j] < best[0]:
            kk = int(k[j])
            thr = 0.5 * (xs[kk - 1] + xs[kk])
            if thr >= xs[kk]:
                thr = xs[kk - 1]
            best = (float(cost[j]), int(f), float(thr))
    return best


def _grow_tree(X, Y, sample_idx, hyper, rng):
    n_features = X.shape[1]
    mtry = hyper.resolve_max_features(n_features)
    min_leaf = hyper.min_samples_leaf
    feature, threshold, left, right, values = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        values.append(None)
        return len(feature) - 1

    root = new_node()
    # preorder traversal keeps RNG consumption independent of implementation
    stack = [(root, sample_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        ymean = Y[idx].mean(axis=0)
        split = None
        depth_ok = hyper.max_depth == 0 or depth < hyper.max_depth
        if idx.size >= 2 * min_leaf and depth_ok:
            cand = rng.permutation(n_features)[:mtry]
            resid = Y[idx] - ymean
            parent_sse = float(np.sum(resid * resid))
            if parent_sse > 0.0:
                split = _best_split(X, Y, idx, cand, min_leaf)
                if split is not None and split[0] >= parent_sse:
                    split = None
        if split is None:
            values[node] = ymean
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = new_node(), new_node()
        feature[node] = f
        threshold[node] = thr
        left[node] = li
        right[node] = ri
        # push right first so the left child is processed next (preorder)
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return _Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        values,
    )


def _tree_rng(seed, tree_index):
    parts = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    return np.random.default_rng([int(p) for p in parts] + [int(tree_index)])


class RandomForest:
    def __init__(self, trees, hyperparams, seed, n_features, n_outputs):
        self.trees = trees
        self.hyperparams = hyperparams
        self.seed = seed
        self.n_features = n_features
        self.n_outputs = n_outputs

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DataValidationError(
                f"forest expects {self.n_features} features, got {X.shape[1]}"
            )
        out = np.zeros((X.shape[0], self.n_outputs))
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)

    def to_dict(self):
        trees = []
        for t in self.trees:
            trees.append(
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "values": [None if v is None else v.tolist() for v in t.values],
                }
            )
        seed = list(self.seed) if isinstance(self.seed, (list, tuple)) else self.seed
        return {
            "format": FOREST_FORMAT_VERSION,
            "kind": "forest",
            "hyperparams": asdict(self.hyperparams),
            "seed": seed,
            "n_features": self.n_features,
            "n_outputs": self.n_outputs,
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FOREST_FORMAT_VERSION:
            raise DataValidationError(
                f"unsupported forest format {d.get('format')!r}"
            )
        trees = []
        for td in d["trees"]:
            trees.append(
                _Tree(
                    np.asarray(td["feature"], dtype=np.int64),
                    np.asarray(td["threshold"], dtype=float),
                    np.asarray(td["left"], dtype=np.int64),
                    np.asarray(td["right"], dtype=np.int64),
                    [None if v is None else np.asarray(v, dtype=float) for v in td["values"]],
                )
            )
        return cls(
            trees,
            ForestHyperparams(**d["hyperparams"]),
            d["seed"],
            d["n_features"],
            d["n_outputs"],
        )


class PerOutputForest:
    """One independent single-output forest per target column.

    Comparison mode selected by the hyperparameter flag; the default forest
    shares its trees across all outputs.
    """

    def __init__(self, forests):
        self.forests = forests
        self.hyperparams = forests[0].hyperparams
        self.n_features = forests[0].n_features
        self.n_outputs = len(forests)

    def predict(self, X):
        return np.hstack([f.predict(X) for f in self.forests])

    def to_dict(self):
        return {
            "format": FOREST_FORMAT_VERSION,
            "kind": "forest_per_output",
            "forests": [f.to_dict() for f in self.forests],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FOREST_FORMAT_VERSION:
            raise DataValidationError(
                f"unsupported forest format {d.get('format')!r}"
            )
        return cls([RandomForest.from_dict(fd) for fd in d["forests"]])


def _seed_parts(seed):
    return [int(p) for p in seed] if isinstance(seed, (list, tuple)) else [int(seed)]


def rf_train(X, Y, hyperparams=None, seed=0):
    """Fit the forest. Y may be (P,) or (P, R)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DataValidationError("X and Y row counts disagree")
    if X.shape[0] < 1:
        raise DataValidationError("need at least one training row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DataValidationError("training data contains non-finite values")
    hyper = hyperparams or ForestHyperparams()
    if hyper.n_estimators < 1 or hyper.min_samples_leaf < 1:
        raise DataValidationError("n_estimators and min_samples_leaf must be >= 1")
    if hyper.per_output and Y.shape[1] > 1:
        shared = ForestHyperparams(**{**asdict(hyper), "per_output": False})
        forests = [
            rf_train(X, Y[:, j], shared, seed=_seed_parts(seed) + [j])
            for j in range(Y.shape[1])
        ]
        return PerOutputForest(forests)
    P = X.shape[0]
    trees = []
    for t in range(hyper.n_estimators):
        rng = _tree_rng(seed, t)
        if hyper.bootstrap:
            idx = rng.integers(0, P, size=P)
        else:
            idx = np.arange(P)
        trees.append(_grow_tree(X, Y, idx, hyper, rng))
    return RandomForest(trees, hyper, seed, X.shape[1], Y.shape[1])

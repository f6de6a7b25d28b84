"""Grid-search hyperparameter selection with k-fold cross validation."""

import itertools

import numpy as np

from ..errors import DataValidationError
from .forest import ForestHyperparams, rf_train


def grid_search_cv(X, Y, grid, seed, folds=5, base=None):
    """Exhaustive search over a hyperparameter grid, scored by CV mean MSE.

    grid maps ForestHyperparams field names to candidate lists. Ties are
    broken toward fewer trees, then toward larger leaves (the cheaper and
    the smoother model). Returns (best_hyperparams, table) where table rows
    carry per-fold and mean scores for the full grid.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    P = X.shape[0]
    if folds < 2:
        raise DataValidationError("cross validation needs at least 2 folds")
    if P < folds:
        raise DataValidationError(f"{P} samples cannot fill {folds} folds")
    base = base or ForestHyperparams()
    allowed = set(ForestHyperparams.__dataclass_fields__)
    bad = sorted(set(grid) - allowed)
    if bad:
        raise DataValidationError(f"unknown hyperparameter names {bad}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(P)
    fold_idx = np.array_split(perm, folds)

    keys = sorted(grid)
    table = []
    candidates = []
    for combo in itertools.product(*[grid[k] for k in keys]):
        hyper = ForestHyperparams(**{**base.__dict__, **dict(zip(keys, combo))})
        scores = []
        for f in range(folds):
            test = fold_idx[f]
            train = np.concatenate([fold_idx[g] for g in range(folds) if g != f])
            model = rf_train(X[train], Y[train], hyper, seed=[seed, f])
            err = model.predict(X[test]) - Y[test]
            scores.append(float(np.mean(err * err)))
        mean_mse = float(np.mean(scores))
        row = {k: combo[i] for i, k in enumerate(keys)}
        row["fold_mse"] = scores
        row["mean_mse"] = mean_mse
        table.append(row)
        candidates.append((mean_mse, hyper.n_estimators, -hyper.min_samples_leaf, hyper))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    return candidates[0][3], table

"""Sparse PGD: greedy rank-one separable regression on scattered samples.

The model is a sum of modes, each a product of one-dimensional polynomial
factors. Modes are found one at a time against the current residual by
cyclic alternating least squares over the dimensions; a mode is kept only
if it lowers the residual, so the recorded residual history never rises.
"""

import numpy as np

from ..errors import DataValidationError

PGD_FORMAT_VERSION = 1

_RIDGE = 1e-10
_RANK_RCOND = 1e-12


def _cheb_table(x, degree):
    """Chebyshev values T_0..T_degree at x, shape (len(x), degree + 1)."""
    x = np.asarray(x, dtype=float)
    T = np.empty((x.size, degree + 1))
    T[:, 0] = 1.0
    if degree >= 1:
        T[:, 1] = x
    for k in range(2, degree + 1):
        T[:, k] = 2.0 * x * T[:, k - 1] - T[:, k - 2]
    return T


def _monomial_table(x, degree):
    return np.vander(np.asarray(x, dtype=float), degree + 1, increasing=True)


_FAMILIES = {"chebyshev": _cheb_table, "monomial": _monomial_table}


class PgdModel:
    def __init__(self, family, degrees, lo, hi, modes=None, residuals=None,
                 ridge_events=0):
        if family not in _FAMILIES:
            raise DataValidationError(f"unknown basis family '{family}'")
        self.family = family
        self.degrees = [int(d) for d in degrees]
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.modes = modes or []            # list of per-dim coefficient lists
        self.residuals = residuals or []    # norm history, non-increasing
        self.ridge_events = int(ridge_events)

    @property
    def dim(self):
        return len(self.degrees)

    def _normalize(self, points):
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        return 2.0 * (points - self.lo) / span - 1.0

    def _tables(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise DataValidationError(
                f"model has {self.dim} dimensions, points have {pts.shape[1]}"
            )
        Z = self._normalize(pts)
        fam = _FAMILIES[self.family]
        return [fam(Z[:, j], self.degrees[j]) for j in range(self.dim)]

    def eval(self, points):
        tables = self._tables(points)
        out = np.zeros(tables[0].shape[0])
        for mode in self.modes:
            g = np.ones_like(out)
            for j in range(self.dim):
                g *= tables[j] @ mode[j]
            out += g
        return out

    def to_dict(self):
        return {
            "format": PGD_FORMAT_VERSION,
            "kind": "pgd",
            "family": self.family,
            "degrees": self.degrees,
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "modes": [[np.asarray(a).tolist() for a in mode] for mode in self.modes],
            "residuals": [float(r) for r in self.residuals],
            "ridge_events": self.ridge_events,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != PGD_FORMAT_VERSION:
            raise DataValidationError(f"unsupported pgd format {d.get('format')!r}")
        return cls(
            d["family"],
            d["degrees"],
            d["lo"],
            d["hi"],
            modes=[[np.asarray(a, dtype=float) for a in mode] for mode in d["modes"]],
            residuals=list(d["residuals"]),
            ridge_events=d.get("ridge_events", 0),
        )


def _solve_ls(M, r):
    """Normal-equation solve with a trace-scaled ridge fallback."""
    G = M.T @ M
    b = M.T @ r
    ridged = False
    rank = np.linalg.matrix_rank(G, rtol=_RANK_RCOND)
    if rank < G.shape[0]:
        G = G + _RIDGE * np.trace(G) * np.eye(G.shape[0])
        ridged = True
    try:
        a = np.linalg.solve(G, b)
    except np.linalg.LinAlgError:
        G = G + _RIDGE * max(np.trace(G), 1.0) * np.eye(G.shape[0])
        a = np.linalg.solve(G, b)
        ridged = True
    return a, ridged


def pgd_fit(points, values, degrees, family="chebyshev", max_modes=10,
            fp_tol=1e-8, max_fp_iters=200, enrich_tol=1e-10):
    """Greedy separable fit of scattered scalar samples.

    Per-dimension polynomial degree is capped at (distinct samples in that
    dimension - 1), which keeps every one-dimensional subproblem at least
    determined.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    P, d = points.shape
    if values.size != P:
        raise DataValidationError("points and values row counts disagree")
    if P < 1:
        raise DataValidationError("need at least one sample")
    if np.isscalar(degrees) or isinstance(degrees, int):
        degrees = [int(degrees)] * d
    if len(degrees) != d:
        raise DataValidationError("one degree per dimension required")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    capped = []
    for j in range(d):
        distinct = np.unique(points[:, j]).size
        capped.append(int(min(int(degrees[j]), distinct - 1)))
    model = PgdModel(family, capped, lo, hi)
    tables = model._tables(points)

    ref = np.linalg.norm(values)
    if ref == 0.0:
        model.residuals = [0.0]
        return model
    resid = values.copy()
    model.residuals = [float(np.linalg.norm(resid))]
    for _ in range(max_modes):
        coeffs = []
        for j in range(d):
            a = np.zeros(capped[j] + 1)
            a[0] = 1.0
            coeffs.append(a)
        factors = [tables[j] @ coeffs[j] for j in range(d)]
        best_norm = np.inf
        best_coeffs = None
        prev_stack = None
        for _ in range(max_fp_iters):
            dead = False
            for j in range(d):
                w = np.ones(P)
                for l in range(d):
                    if l != j:
                        w *= factors[l]
                M = tables[j] * w[:, None]
                a, ridged = _solve_ls(M, resid)
                if ridged:
                    model.ridge_events += 1
                coeffs[j] = a
                factors[j] = tables[j] @ a
            # rebalance the scale gauge: the product is invariant under
            # factor_j -> c_j * factor_j with prod c_j = 1, and unbalanced
            # factors overflow once the target is far from unit scale
            scales = [float(np.sqrt(np.mean(f * f))) for f in factors]
            if min(scales) == 0.0 or not all(np.isfinite(scales)):
                dead = True
            else:
                geo = float(np.exp(np.mean(np.log(scales))))
                for j in range(d):
                    adjust = geo / scales[j]
                    coeffs[j] = coeffs[j] * adjust
                    factors[j] = factors[j] * adjust
            if dead:
                break
            g = np.ones(P)
            for l in range(d):
                g *= factors[l]
            norm = float(np.linalg.norm(resid - g))
            if norm < best_norm:
                best_norm = norm
                best_coeffs = [a.copy() for a in coeffs]
            stack = np.concatenate(coeffs)
            if prev_stack is not None and stack.size == prev_stack.size:
                change = np.linalg.norm(stack - prev_stack) / max(
                    np.linalg.norm(stack), 1e-300
                )
                if change <= fp_tol:
                    break
            prev_stack = stack
        if best_coeffs is None or best_norm >= model.residuals[-1]:
            break  # mode would not improve anything; stop enriching
        improvement = (model.residuals[-1] - best_norm) / ref
        if improvement < enrich_tol:
            break  # gain below the enrichment tolerance; not worth a mode
        model.modes.append(best_coeffs)
        g = np.ones(P)
        for j in range(d):
            g *= tables[j] @ best_coeffs[j]
        resid = resid - g
        model.residuals.append(float(np.linalg.norm(resid)))
    return model


class PgdStack:
    """One PgdModel per output column, presented like a single regressor."""

    def __init__(self, models):
        self.models = models

    @property
    def n_outputs(self):
        return len(self.models)

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([m.eval(X) for m in self.models])

    def to_dict(self):
        return {
            "format": PGD_FORMAT_VERSION,
            "kind": "pgd_stack",
            "members": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "pgd_stack":
            raise DataValidationError("not a pgd_stack document")
        return cls([PgdModel.from_dict(m) for m in d["members"]])


def pgd_fit_stack(X, Y, degrees, **kw):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    return PgdStack([pgd_fit(X, Y[:, r], degrees, **kw) for r in range(Y.shape[1])])

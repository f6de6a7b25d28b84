"""Offline training and online evaluation of the two-stage reduced model.

Offline: POD of displacement snapshots gives the spatial basis V, each
stored stiffness is reduced, inverted and vectorized, a second POD over
those vectors gives the matrix modes Phi and coefficients Theta, and a
regressor learns Theta columns from features. Online: predicted
coefficients rebuild the reduced inverse directly, so no full-order
operator is ever assembled or factorized.
"""

import json
import os
import warnings

import numpy as np
from dataclasses import dataclass, field, asdict

from . import store
from .doe import ParameterSpace
from .errors import DataValidationError, NumericalError, UsageError
from .pod import (
    MatrixModeBasis,
    ReducedBasis,
    invert_and_vectorize,
    matrix_mode_basis,
    pod_basis,
    project_theta,
    reduce_system,
)
from .regress import (
    ForestHyperparams,
    PerOutputForest,
    PgdStack,
    RandomForest,
    grid_search_cv,
    pgd_fit_stack,
    rf_train,
    scaler_from_dict,
)
from .regress.scaling import make_scaler

MODEL_FORMAT_VERSION = 1


@dataclass
class FeatureLayout:
    """Which fields enter the regression features, in fixed order:
    parameters, pseudo-time, time increment, previous reduced state."""

    param_names: list
    use_time: bool
    use_dt: bool
    n_xi: int

    @property
    def size(self):
        return len(self.param_names) + int(self.use_time) + int(self.use_dt) + self.n_xi

    def build(self, mu, t=None, dt=None, xi=None):
        parts = []
        if self.param_names:
            mu = np.asarray(mu, dtype=float)
            if mu.size != len(self.param_names):
                raise DataValidationError(
                    f"expected {len(self.param_names)} parameters, got {mu.size}"
                )
            parts.append(mu)
        if self.use_time:
            if t is None:
                raise DataValidationError("feature layout needs the pseudo-time")
            parts.append(np.array([float(t)]))
        if self.use_dt:
            if dt is None:
                raise DataValidationError("feature layout needs the time increment")
            parts.append(np.array([float(dt)]))
        if self.n_xi:
            xi = np.asarray(xi, dtype=float)
            if xi.size != self.n_xi:
                raise DataValidationError(
                    f"expected {self.n_xi} reduced coordinates, got {xi.size}"
                )
            parts.append(xi)
        return np.concatenate(parts)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["param_names"]), bool(d["use_time"]), bool(d["use_dt"]),
                   int(d["n_xi"]))


@dataclass
class TrainConfig:
    ratio_v: float = 1000.0
    ratio_phi: float = 1000.0        # <= 0 keeps the complete matrix basis
    regressor: str = "forest"
    forest: ForestHyperparams = field(default_factory=ForestHyperparams)
    grid: dict = None                # optional grid-search space
    cv_folds: int = 5
    pgd_degrees: int = 3
    pgd_modes: int = 10
    pgd_family: str = "chebyshev"
    feature_scaler: str = "zscore"
    target_scaler: str = "zscore"
    split_mode: str = "auto"         # auto | entries | steps
    train_fraction: float = None
    train_count: int = None
    val_count: int = None
    features: dict = None            # optional {params,time,dt,xi} overrides

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        bad = sorted(set(d) - known)
        if bad:
            raise UsageError(f"unknown training config keys {bad}")
        if "forest" in d and isinstance(d["forest"], dict):
            fknown = set(ForestHyperparams.__dataclass_fields__)
            fbad = sorted(set(d["forest"]) - fknown)
            if fbad:
                raise UsageError(f"unknown forest config keys {fbad}")
            d["forest"] = ForestHyperparams(**d["forest"])
        if "features" in d and d["features"] is not None:
            fbad = sorted(set(d["features"]) - {"params", "time", "dt", "xi"})
            if fbad:
                raise UsageError(f"unknown feature flags {fbad}")
        return cls(**d)


@dataclass
class RomModel:
    kind: str
    space: ParameterSpace
    basis: ReducedBasis
    matrix_basis: MatrixModeBasis
    layout: FeatureLayout
    feature_scaler: object
    target_scaler: object
    regressor: object
    load: np.ndarray
    dof_kinds: list
    times: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def n_modes(self):
        return self.basis.modes.shape[1]

    @property
    def n_matrix_modes(self):
        return self.matrix_basis.modes.shape[1]


@dataclass
class OnlineResult:
    times: np.ndarray
    xi: np.ndarray               # (n, N_t + 1)
    displacements: np.ndarray    # (N, N_t + 1)
    diagnostics: list            # one dict per step


# ---------------------------------------------------------------------------
# offline

def _feature_flags(manifest, config, n_xi):
    """Default feature fields: linear models see parameters only; nonlinear
    single-case runs see (t, dt, xi); parametric nonlinear runs (mu, dt, xi)."""
    params_vary = len({tuple(sorted(e["params"].items())) for e in manifest.entries}) > 1
    if manifest.problem_kind == "linear":
        flags = {"params": True, "time": False, "dt": False, "xi": False}
    elif params_vary:
        flags = {"params": True, "time": False, "dt": True, "xi": True}
    else:
        flags = {"params": False, "time": True, "dt": True, "xi": True}
    if config.features:
        flags.update({k: bool(v) for k, v in config.features.items()})
    names = list(manifest.space.names) if flags["params"] else []
    return FeatureLayout(
        param_names=names,
        use_time=flags["time"],
        use_dt=flags["dt"],
        n_xi=n_xi if flags["xi"] else 0,
    )


def _split_rows(manifest, config, row_entry, seed):
    """Return boolean train mask over feature rows."""
    rng = np.random.default_rng([int(seed), 17])
    n_rows = len(row_entry)
    mode = config.split_mode
    if mode == "auto":
        mode = "entries" if manifest.problem_kind == "linear" else (
            "steps" if len(manifest.entries) == 1 else "entries")
    if mode == "entries":
        ids = [e["id"] for e in manifest.entries]
        pinned = {e["id"] for e in manifest.entries if e.get("always_train")}
        free = [i for i in ids if i not in pinned]
        if config.val_count is not None:
            n_val = int(config.val_count)
        elif config.train_count is not None:
            n_val = len(ids) - int(config.train_count)
        else:
            frac = config.train_fraction if config.train_fraction is not None else 0.85
            n_val = len(ids) - int(round(frac * len(ids)))
        n_val = max(0, min(n_val, len(free)))
        if len(ids) - n_val < 1:
            raise DataValidationError("split leaves no training entries")
        val_ids = set(np.array(free)[rng.permutation(len(free))[:n_val]].tolist())
        return np.array([eid not in val_ids for eid, _ in row_entry]), mode, sorted(val_ids)
    if mode == "steps":
        frac = config.train_fraction if config.train_fraction is not None else 0.85
        if config.val_count is not None:
            n_val = int(config.val_count)
        elif config.train_count is not None:
            n_val = n_rows - int(config.train_count)
        else:
            n_val = n_rows - int(round(frac * n_rows))
        n_val = max(0, min(n_val, n_rows - 1))
        val_rows = set(rng.permutation(n_rows)[:n_val].tolist())
        mask = np.array([i not in val_rows for i in range(n_rows)])
        return mask, mode, sorted(val_rows)
    raise UsageError(f"unknown split mode '{config.split_mode}'")


def train_offline(manifest, config=None, seed=None):
    """Build a RomModel from a snapshot manifest. Returns (model, report)."""
    if seed is None:
        raise UsageError("training requires an explicit seed")
    config = config or TrainConfig()
    bundles = [store.load_entry(manifest, e) for e in manifest.entries]
    if sum(b.displacements.shape[1] for b in bundles) < 1:
        raise DataValidationError("manifest holds no snapshot columns")

    U_all = np.hstack([b.displacements for b in bundles])
    basis = pod_basis(U_all, ratio=config.ratio_v)
    V = basis.modes
    n = V.shape[1]

    # reduce, invert, vectorize every stored operator
    cols, conds, row_entry = [], [], []
    for b in bundles:
        for i, A in enumerate(b.stiffness, start=1):
            A_r = reduce_system(A, V)
            conds.append(float(np.linalg.cond(A_r)))
            cols.append(invert_and_vectorize(A_r))
            row_entry.append((b.entry_id, i))
    B = np.column_stack(cols)
    ratio_phi = None if (config.ratio_phi is None or config.ratio_phi <= 0) else config.ratio_phi
    mbasis = matrix_mode_basis(B, ratio=ratio_phi)
    theta = mbasis.theta                      # (R, P_rows)

    layout = _feature_flags(manifest, config, n)
    rows = []
    for b in bundles:
        mu = np.array([b.params[k] for k in manifest.space.names])
        if manifest.problem_kind == "linear":
            rows.append(layout.build(mu))
        else:
            xi_traj = V.T @ np.hstack([np.zeros((V.shape[0], 1)), b.displacements])
            for i in range(1, b.displacements.shape[1] + 1):
                t_i = b.times[i]
                dt_i = b.times[i] - b.times[i - 1]
                rows.append(layout.build(mu, t=t_i, dt=dt_i, xi=xi_traj[:, i - 1]))
    X = np.vstack(rows)

    train_mask, split_mode, val_members = _split_rows(manifest, config, row_entry, seed)
    if train_mask.sum() < 1:
        raise DataValidationError("split left no training rows")

    fscaler = make_scaler(config.feature_scaler).fit(X[train_mask])
    tscaler = make_scaler(config.target_scaler).fit(theta.T[train_mask])
    Xs = fscaler.transform(X)
    Ys = tscaler.transform(theta.T)

    grid_table = None
    hyper = config.forest
    if config.regressor == "forest":
        if config.grid:
            hyper, grid_table = grid_search_cv(
                Xs[train_mask], Ys[train_mask], config.grid, seed=seed,
                folds=config.cv_folds, base=config.forest,
            )
        regressor = rf_train(Xs[train_mask], Ys[train_mask], hyper, seed=seed)
    elif config.regressor == "pgd":
        regressor = pgd_fit_stack(
            Xs[train_mask], Ys[train_mask], config.pgd_degrees,
            family=config.pgd_family, max_modes=config.pgd_modes,
        )
    else:
        raise UsageError(f"unknown regressor '{config.regressor}'")

    # regression quality on both splits, in unscaled theta units
    pred = tscaler.inverse(regressor.predict(Xs))
    report = {
        "split_mode": split_mode,
        "validation_members": val_members,
        "n_rows": int(X.shape[0]),
        "n_train": int(train_mask.sum()),
        "n_modes": int(n),
        "n_matrix_modes": int(mbasis.modes.shape[1]),
        "condition_range": [float(np.min(conds)), float(np.max(conds))],
        "scores": _score_table(theta.T, pred, train_mask),
        "ridge_events": getattr(regressor, "models", None)
        and int(sum(m.ridge_events for m in regressor.models)) or 0,
    }
    if grid_table is not None:
        report["grid_search"] = grid_table

    meta = {
        "format": MODEL_FORMAT_VERSION,
        "seed": int(seed),
        "config": _config_dict(config, hyper),
        "feature_subsample": "ceil(F/3)" if config.regressor == "forest" else None,
        "train_split": {
            "mode": split_mode,
            "validation": val_members,
            "row_count": int(X.shape[0]),
        },
        "spectrum_v": [float(x) for x in basis.spectrum],
        "spectrum_phi": [float(x) for x in mbasis.spectrum],
    }
    times = bundles[0].times if manifest.problem_kind == "nonlinear" else None
    model = RomModel(
        kind=manifest.problem_kind,
        space=manifest.space,
        basis=basis,
        matrix_basis=mbasis,
        layout=layout,
        feature_scaler=fscaler,
        target_scaler=tscaler,
        regressor=regressor,
        load=bundles[0].loads[:, -1].copy(),
        dof_kinds=list(manifest.bc["dof_kinds"]),
        times=times,
        meta=meta,
    )
    return model, report


def _score_table(y_true, y_pred, train_mask):
    table = {}
    for name, mask in (("train", train_mask), ("validation", ~train_mask)):
        if mask.sum() == 0:
            table[name] = None
            continue
        err = y_pred[mask] - y_true[mask]
        mse = float(np.mean(err * err))
        r2 = []
        for r in range(y_true.shape[1]):
            resid = float(np.sum(err[:, r] ** 2))
            spread = float(np.sum((y_true[mask, r] - y_true[mask, r].mean()) ** 2))
            r2.append(1.0 - resid / spread if spread > 0 else float("nan"))
        table[name] = {"mse": mse, "r2": r2}
    return table


def _config_dict(config, hyper):
    d = asdict(config)
    d["forest"] = asdict(hyper)
    return d


# ---------------------------------------------------------------------------
# online

def _predict_theta(model, features):
    fs = model.feature_scaler
    if not bool(np.all(fs.in_support(features[None, :]))):
        warnings.warn("features outside the training range of the scaler",
                      stacklevel=3)
    z = fs.transform(features[None, :])
    ys = model.regressor.predict(z)
    return model.target_scaler.inverse(ys)[0]


def _rebuild_inverse(model, theta):
    vec = model.matrix_basis.modes @ theta
    n = model.n_modes
    M_raw = vec.reshape((n, n), order="F")
    denom = np.linalg.norm(M_raw)
    sym_defect = float(np.linalg.norm(M_raw - M_raw.T) / denom) if denom > 0 else 0.0
    M = 0.5 * (M_raw + M_raw.T)
    if not np.all(np.isfinite(M)):
        raise NumericalError("reconstructed reduced inverse is not finite")
    cond = float(np.linalg.cond(M))
    return M, {"condition": cond, "symmetry_defect": sym_defect}


def _check_mu(model, mu):
    mu = np.asarray(mu, dtype=float)
    if model.layout.param_names and not model.space.contains(mu):
        warnings.warn("parameter point lies outside the trained space", stacklevel=3)
    return mu


def predict_linear(model, mu, load=None, theta=None):
    """One-shot linear prediction; returns (u, diagnostics)."""
    if model.kind != "linear":
        raise UsageError(f"model kind is '{model.kind}', expected 'linear'")
    mu = _check_mu(model, mu)
    if theta is None:
        theta = _predict_theta(model, model.layout.build(mu))
    M, diag = _rebuild_inverse(model, np.asarray(theta, dtype=float))
    f = model.load if load is None else np.asarray(load, dtype=float)
    if f.shape[0] != model.basis.modes.shape[0]:
        raise DataValidationError("load vector size does not match the basis")
    u = model.basis.modes @ (M @ (model.basis.modes.T @ f))
    diag["theta"] = np.asarray(theta, dtype=float)
    return u, diag


def step_nonlinear(model, xi_prev, mu, t, dt, df_reduced, theta=None):
    """Advance the reduced state by one increment; returns (xi, diagnostics)."""
    if model.kind != "nonlinear":
        raise UsageError(f"model kind is '{model.kind}', expected 'nonlinear'")
    if theta is None:
        features = model.layout.build(mu, t=t, dt=dt, xi=xi_prev)
        theta = _predict_theta(model, features)
    M, diag = _rebuild_inverse(model, np.asarray(theta, dtype=float))
    xi = xi_prev + M @ df_reduced
    diag["theta"] = np.asarray(theta, dtype=float)
    return xi, diag


def run_online(model, mu, times=None, load=None, theta_table=None):
    """Integrate the reduced model along a load ramp.

    theta_table, when given, bypasses the regressor with one coefficient
    column per step (oracle replay).
    """
    if model.kind != "nonlinear":
        raise UsageError("run_online needs a nonlinear model")
    mu = _check_mu(model, mu)
    times = model.times if times is None else np.asarray(times, dtype=float)
    if times is None:
        raise UsageError("model carries no schedule; pass times explicitly")
    f_end = model.load if load is None else np.asarray(load, dtype=float)
    V = model.basis.modes
    f_r_end = V.T @ f_end
    n_steps = times.size - 1
    if theta_table is not None:
        theta_table = np.asarray(theta_table, dtype=float)
        if theta_table.shape[1] != n_steps:
            raise DataValidationError("theta table must hold one column per step")
    xi = np.zeros((model.n_modes, n_steps + 1))
    diags = []
    for i in range(1, n_steps + 1):
        df_r = (times[i] - times[i - 1]) * f_r_end
        theta = None if theta_table is None else theta_table[:, i - 1]
        xi[:, i], d = step_nonlinear(
            model, xi[:, i - 1], mu, times[i], times[i] - times[i - 1], df_r,
            theta=theta,
        )
        d["step"] = i
        d["time"] = float(times[i])
        diags.append(d)
    return OnlineResult(
        times=times, xi=xi, displacements=V @ xi, diagnostics=diags
    )


# ---------------------------------------------------------------------------
# reference solutions from stored operators

def pod_rom_reference(basis, bundle, kind):
    """Galerkin reference using the stored matrices (no regression).

    linear: solve the reduced system for the stored load. nonlinear: march
    the increments with exact reduced averaged tangents. Returns full-order
    displacement columns matching the bundle layout.
    """
    V = basis.modes if isinstance(basis, ReducedBasis) else np.asarray(basis)
    if kind == "linear":
        A_r = reduce_system(bundle.stiffness[0], V)
        f_r = V.T @ bundle.loads[:, 0]
        xi = np.linalg.solve(A_r, f_r)
        return (V @ xi)[:, None]
    if kind != "nonlinear":
        raise UsageError(f"unknown problem kind '{kind}'")
    m = len(bundle.stiffness)
    xi = np.zeros((V.shape[1], m + 1))
    F = np.hstack([np.zeros((V.shape[0], 1)), bundle.loads])
    for i in range(1, m + 1):
        A_r = reduce_system(bundle.stiffness[i - 1], V)
        df_r = V.T @ (F[:, i] - F[:, i - 1])
        xi[:, i] = xi[:, i - 1] + np.linalg.solve(A_r, df_r)
    return (V @ xi)[:, 1:]


def oracle_thetas(model, bundle):
    """Exact matrix-mode coefficients for a stored entry (criterion oracle)."""
    V = model.basis.modes
    cols = []
    for A in bundle.stiffness:
        cols.append(invert_and_vectorize(reduce_system(A, V)))
    B = np.column_stack(cols)
    return project_theta(B, model.matrix_basis.modes)


# ---------------------------------------------------------------------------
# model bundle IO

def save_model(root, model, report=None):
    os.makedirs(root, exist_ok=True)
    store.write_dense(os.path.join(root, "V.mm"), model.basis.modes)
    store.write_dense(os.path.join(root, "Phi.mm"), model.matrix_basis.modes)
    store.write_dense(os.path.join(root, "load.mm"), model.load)
    store.atomic_write_json(
        os.path.join(root, "scaler.json"),
        {"features": model.feature_scaler.to_dict(),
         "targets": model.target_scaler.to_dict()},
    )
    reg = model.regressor.to_dict()
    fname = "forest.json" if reg["kind"].startswith("forest") else "pgd.json"
    store.atomic_write_json(os.path.join(root, fname), reg)
    meta = dict(model.meta)
    meta.update(
        {
            "kind": model.kind,
            "space": model.space.to_dict(),
            "layout": model.layout.to_dict(),
            "dof_kinds": list(model.dof_kinds),
            "regressor_file": fname,
            "ratio_v": model.basis.truncation_ratio,
            "ratio_phi": model.matrix_basis.truncation_ratio,
            "times": None if model.times is None else [float(t) for t in model.times],
        }
    )
    store.atomic_write_json(os.path.join(root, "meta.json"), meta)
    if report is not None:
        store.atomic_write_json(os.path.join(root, "train_report.json"), report)


def load_model(root):
    path = os.path.join(root, "meta.json")
    if not os.path.exists(path):
        raise DataValidationError(f"{path}: no such model bundle")
    with open(path) as fh:
        meta = json.load(fh)
    if meta.get("format") != MODEL_FORMAT_VERSION:
        raise DataValidationError(f"unsupported model format {meta.get('format')!r}")
    V = store.read_dense(os.path.join(root, "V.mm"))
    Phi = store.read_dense(os.path.join(root, "Phi.mm"))
    load = store.read_dense(os.path.join(root, "load.mm")).ravel()
    with open(os.path.join(root, "scaler.json")) as fh:
        sc = json.load(fh)
    reg_path = os.path.join(root, meta["regressor_file"])
    with open(reg_path) as fh:
        reg_doc = json.load(fh)
    if reg_doc.get("kind") == "forest":
        regressor = RandomForest.from_dict(reg_doc)
    elif reg_doc.get("kind") == "forest_per_output":
        regressor = PerOutputForest.from_dict(reg_doc)
    else:
        regressor = PgdStack.from_dict(reg_doc)
    basis = ReducedBasis(
        modes=V,
        spectrum=np.asarray(meta["spectrum_v"], dtype=float),
        truncation_ratio=float(meta["ratio_v"]),
    )
    mbasis = MatrixModeBasis(
        modes=Phi,
        theta=None,
        spectrum=np.asarray(meta["spectrum_phi"], dtype=float),
        truncation_ratio=float(meta["ratio_phi"]),
    )
    times = meta.get("times")
    return RomModel(
        kind=meta["kind"],
        space=ParameterSpace.from_dict(meta["space"]),
        basis=basis,
        matrix_basis=mbasis,
        layout=FeatureLayout.from_dict(meta["layout"]),
        feature_scaler=scaler_from_dict(sc["features"]),
        target_scaler=scaler_from_dict(sc["targets"]),
        regressor=regressor,
        load=load,
        dof_kinds=list(meta["dof_kinds"]),
        times=None if times is None else np.asarray(times, dtype=float),
        meta=meta,
    )

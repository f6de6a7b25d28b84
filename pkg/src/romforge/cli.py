"""Command line front end.

Subcommands cover the whole pipeline: doe -> fom -> train -> predict /
validate. Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical
failure. Every random choice is driven by an explicit --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, store
from .doe import ParameterSpace, chebyshev_grid, corner_points, latin_hypercube
from .errors import DataValidationError, NumericalError, RomforgeError, UsageError
from .fom import SpringChain, TrussArch, assemble_plate, run_nonlinear_fom, solve_linear, time_grid
from .metrics import build_report
from .runtime import (
    MODEL_FORMAT_VERSION,
    TrainConfig,
    load_model,
    predict_linear,
    run_online,
    save_model,
    train_offline,
)

_JSON_LOGS = False


def _log(event, **fields):
    if _JSON_LOGS:
        print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)
    else:
        extras = " ".join(f"{k}={v}" for k, v in fields.items())
        print(f"[romforge] {event} {extras}".rstrip(), file=sys.stderr)


def _read_json(path):
    if not os.path.exists(path):
        raise DataValidationError(f"{path}: no such file")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"{path}: invalid JSON ({e})") from e


# ---------------------------------------------------------------------------
# doe

def _cmd_doe(args):
    space = ParameterSpace.from_dict(_read_json(args.space))
    if args.method == "chebyshev":
        if args.order is None:
            raise UsageError("--order is required for the chebyshev method")
        pts = chebyshev_grid(space, args.order, include_center=not args.no_center)
    elif args.method == "lhs":
        if args.count is None or args.seed is None:
            raise UsageError("--count and --seed are required for the lhs method")
        pts = latin_hypercube(space, args.count, args.seed)
    elif args.method == "corners+lhs":
        if args.count is None or args.seed is None:
            raise UsageError("--count and --seed are required for corners+lhs")
        corners = corner_points(space)
        fill = args.count - len(corners)
        if fill < 0:
            raise UsageError(
                f"--count {args.count} is below the {len(corners)} box corners"
            )
        pts = corners + (latin_hypercube(space, fill, args.seed) if fill else [])
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown method '{args.method}'")
    doc = {
        "space": space.to_dict(),
        "method": args.method,
        "seed": args.seed,
        "points": [
            {"params": p.as_dict(space), "corner": bool(p.corner)} for p in pts
        ],
    }
    store.atomic_write_json(args.out, doc)
    _log("doe.written", path=args.out, points=len(pts))
    return 0


# ---------------------------------------------------------------------------
# fom

def _load_points(path):
    """Accept a DOE plan, a bare list of param dicts, or a single dict."""
    doc = _read_json(path)
    if isinstance(doc, dict) and "points" in doc:
        space = ParameterSpace.from_dict(doc["space"]) if "space" in doc else None
        return doc["points"], space
    if isinstance(doc, dict):
        return [{"params": doc, "corner": False}], None
    if isinstance(doc, list):
        return [{"params": p, "corner": False} for p in doc], None
    raise DataValidationError(f"{path}: unrecognized parameter file layout")


def _infer_space(points):
    names = sorted(points[0]["params"])
    vals = np.array([[p["params"][k] for k in names] for p in points], dtype=float)
    lo, hi = vals.min(axis=0), vals.max(axis=0)
    flat = hi <= lo
    pad = np.maximum(1e-6 * np.abs(lo), 1e-9)
    lo[flat] -= pad[flat]
    hi[flat] += pad[flat]
    return ParameterSpace(tuple(names), lo, hi)


def _require_params(params, names, path):
    missing = sorted(set(names) - set(params))
    if missing:
        raise DataValidationError(f"{path}: points are missing parameters {missing}")


def _plate_case(item, args):
    p = item["params"]
    system = assemble_plate(
        p["E"], p["nu"], p["t"], grid=(args.grid, args.grid), side=args.side,
        load=args.load if args.load is not None else 1000.0,
    )
    u = solve_linear(system)
    return system, u


def _fom_one(task):
    """Worker: build and record one snapshot entry. Returns the entry dict."""
    kind, item, vars_args, out, entry_id = task
    args = argparse.Namespace(**vars_args)
    if kind == "plate":
        system, u = _plate_case(item, args)
        entry = store.write_entry(
            out, entry_id, item["params"], u, system.load, [system.stiffness]
        )
        bc = {
            "full_dim": system.full_dim,
            "eliminated": [int(i) for i in system.eliminated],
            "dof_kinds": system.dof_kinds,
        }
    else:
        p = item["params"]
        if kind == "spring":
            model = SpringChain(
                p["k"], p["k3"], n_masses=args.masses,
                load=args.load if args.load is not None else 1.0,
            )
        else:
            extra = {} if args.load is None else {"load": args.load}
            model = TrussArch(p["E"], p["nu"], p["t"], n_panels=args.panels, **extra)
        times = time_grid(args.steps, profile=args.profile, ratio=args.time_ratio)
        traj = run_nonlinear_fom(model, times)
        entry = store.write_entry(
            out, entry_id, item["params"],
            traj.displacements[:, 1:], traj.loads[:, 1:], traj.avg_stiffness,
            times=traj.times,
        )
        bc = {
            "full_dim": model.full_dim,
            "eliminated": [int(i) for i in model.eliminated],
            "dof_kinds": model.dof_kinds,
        }
    entry["always_train"] = bool(item.get("corner", False))
    return entry, bc


def _cmd_fom(args):
    points, space = _load_points(args.params)
    if not points:
        raise DataValidationError(f"{args.params}: no parameter points")
    names = {"plate": ("E", "nu", "t"), "truss": ("E", "nu", "t"), "spring": ("k", "k3")}[args.model]
    for item in points:
        _require_params(item["params"], names, args.params)
    if space is None:
        space = _infer_space(points)
    os.makedirs(args.out, exist_ok=True)
    tasks = [
        (args.model, item, vars(args), args.out, f"snap_{i:03d}")
        for i, item in enumerate(points)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_fom_one, tasks))
    else:
        results = [_fom_one(t) for t in tasks]
    entries = [r[0] for r in results]
    bc = results[0][1]
    manifest = store.SnapshotManifest(
        problem_kind="linear" if args.model == "plate" else "nonlinear",
        space=space,
        entries=entries,
        bc=bc,
    )
    store.write_manifest(args.out, manifest)
    _log("fom.written", path=args.out, entries=len(entries), model=args.model)
    return 0


# ---------------------------------------------------------------------------
# train

def _cmd_train(args):
    manifest = store.read_manifest(args.manifest)
    cfg = _read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: training config must be a JSON object")
    overrides = {
        "regressor": args.regressor,
        "ratio_v": args.ratio_v,
        "ratio_phi": args.ratio_phi,
        "split_mode": args.split_mode,
        "train_fraction": args.train_fraction,
        "train_count": args.train_count,
        "val_count": args.val_count,
        "cv_folds": args.cv_folds,
        "pgd_degrees": args.pgd_degrees,
        "pgd_modes": args.pgd_modes,
        "feature_scaler": args.feature_scaler,
        "target_scaler": args.target_scaler,
    }
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    forest_over = {
        "n_estimators": args.rf_estimators,
        "min_samples_leaf": args.rf_min_leaf,
        "max_depth": args.rf_depth,
    }
    if any(v is not None for v in forest_over.values()) or args.no_bootstrap:
        forest = dict(cfg.get("forest", {}))
        for key, val in forest_over.items():
            if val is not None:
                forest[key] = val
        if args.no_bootstrap:
            forest["bootstrap"] = False
        cfg["forest"] = forest
    if args.grid:
        cfg["grid"] = _read_json(args.grid)
    config = TrainConfig.from_dict(cfg)
    model, report = train_offline(manifest, config, seed=args.seed)
    save_model(args.out, model, report)
    if "grid_search" in report:
        _write_grid_csv(os.path.join(args.out, "grid_search.csv"),
                        report["grid_search"])
    _log(
        "train.done", out=args.out, modes=model.n_modes,
        matrix_modes=model.n_matrix_modes,
        regressor=config.regressor,
    )
    return 0


def _write_grid_csv(path, table):
    keys = [k for k in table[0] if k not in ("fold_mse", "mean_mse")]
    folds = len(table[0]["fold_mse"])
    header = keys + [f"fold{j}_mse" for j in range(folds)] + ["mean_mse"]
    lines = [",".join(header)]
    for row in table:
        cells = [str(row[k]) for k in keys]
        cells += [format(v, ".10g") for v in row["fold_mse"]]
        cells.append(format(row["mean_mse"], ".10g"))
        lines.append(",".join(cells))
    store.atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# predict

def _diag_csv(path, diags):
    if not diags:
        store.atomic_write_text(path, "step,time,condition,symmetry_defect\n")
        return
    r = len(diags[0]["theta"])
    header = ["step", "time", "condition", "symmetry_defect"] + [
        f"theta{i + 1}" for i in range(r)
    ]
    lines = [",".join(header)]
    for d in diags:
        cells = [str(d.get("step", 1)), format(d.get("time", 1.0), ".10g"),
                 format(d["condition"], ".10g"),
                 format(d["symmetry_defect"], ".10g")]
        cells += [format(v, ".17g") for v in d["theta"]]
        lines.append(",".join(cells))
    store.atomic_write_text(path, "\n".join(lines) + "\n")


def _cmd_predict(args):
    model = load_model(args.model)
    if args.kind != model.kind:
        raise UsageError(
            f"model at {args.model} is '{model.kind}', but --kind says '{args.kind}'"
        )
    doc = _read_json(args.params)
    if not isinstance(doc, dict):
        raise DataValidationError(f"{args.params}: expected one parameter point")
    mu = np.array([doc[k] for k in model.space.names if k in doc])
    if mu.size != len(model.space.names):
        missing = sorted(set(model.space.names) - set(doc))
        raise DataValidationError(f"{args.params}: missing parameters {missing}")
    load = store.read_dense(args.load).ravel() if args.load else None
    os.makedirs(args.out, exist_ok=True)
    if model.kind == "linear":
        u, diag = predict_linear(model, mu, load=load)
        store.write_dense(os.path.join(args.out, "u.mm"), u)
        _diag_csv(os.path.join(args.out, "diagnostics.csv"), [diag])
    else:
        times = time_grid(args.steps) if args.steps else None
        result = run_online(model, mu, times=times, load=load)
        store.write_dense(os.path.join(args.out, "u.mm"), result.displacements)
        store.write_dense(os.path.join(args.out, "xi.mm"), result.xi)
        _diag_csv(os.path.join(args.out, "diagnostics.csv"), result.diagnostics)
    _log("predict.done", out=args.out, kind=model.kind)
    return 0


# ---------------------------------------------------------------------------
# validate

def _cmd_validate(args):
    manifest = store.read_manifest(args.manifest)
    model = load_model(args.model)
    report = build_report(manifest, model, args.out)
    if not args.no_figures:
        from .figures import render_report_figures

        paths = render_report_figures(report, args.out)
        _log("validate.figures", count=len(paths))
    _log("validate.done", out=args.out, cases=len(report.rows))
    return 0


# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="romforge",
        description="Two-stage POD + regression reduced models for parametric structures",
    )
    p.add_argument(
        "--version",
        action="version",
        version=(
            f"romforge {__version__} "
            f"(snapshot format {store.SNAPSHOT_FORMAT_VERSION}, "
            f"model format {MODEL_FORMAT_VERSION})"
        ),
    )
    p.add_argument("--json-logs", action="store_true", help="machine readable logs")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("doe", help="sample a parameter plan")
    d.add_argument("--space", required=True, help="JSON file with names/lower/upper")
    d.add_argument("--method", required=True, choices=["chebyshev", "lhs", "corners+lhs"])
    d.add_argument("--out", required=True)
    d.add_argument("--order", type=int, help="nodes per dimension (chebyshev)")
    d.add_argument("--count", type=int, help="total points (lhs, corners+lhs)")
    d.add_argument("--seed", type=int)
    d.add_argument("--no-center", action="store_true",
                   help="skip the box-center point of the chebyshev grid")
    d.set_defaults(func=_cmd_doe)

    f = sub.add_parser("fom", help="run full-order cases and store snapshots")
    f.add_argument("model", choices=["plate", "spring", "truss"])
    f.add_argument("--params", required=True, help="DOE plan or parameter point file")
    f.add_argument("--out", required=True)
    f.add_argument("--steps", type=int, default=118, help="time steps (nonlinear)")
    f.add_argument("--profile", default="uniform", choices=["uniform", "geometric"])
    f.add_argument("--time-ratio", type=float, default=4.0, dest="time_ratio")
    f.add_argument("--grid", type=int, default=11, help="plate nodes per side")
    f.add_argument("--side", type=float, default=1.0)
    f.add_argument("--load", type=float, default=None)
    f.add_argument("--masses", type=int, default=8, help="spring chain size")
    f.add_argument("--panels", type=int, default=12, help="truss arch panels")
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=_cmd_fom)

    t = sub.add_parser("train", help="train a reduced model from snapshots")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--config", help="JSON training config")
    t.add_argument("--regressor", choices=["forest", "pgd"])
    t.add_argument("--ratio-v", type=float, dest="ratio_v")
    t.add_argument("--ratio-phi", type=float, dest="ratio_phi")
    t.add_argument("--split-mode", choices=["auto", "entries", "steps"], dest="split_mode")
    t.add_argument("--train-fraction", type=float, dest="train_fraction")
    t.add_argument("--train-count", type=int, dest="train_count")
    t.add_argument("--val-count", type=int, dest="val_count")
    t.add_argument("--rf-estimators", type=int, dest="rf_estimators")
    t.add_argument("--rf-min-leaf", type=int, dest="rf_min_leaf")
    t.add_argument("--rf-depth", type=int, dest="rf_depth")
    t.add_argument("--no-bootstrap", action="store_true", dest="no_bootstrap")
    t.add_argument("--grid", help="JSON hyperparameter grid for CV search")
    t.add_argument("--cv-folds", type=int, dest="cv_folds")
    t.add_argument("--pgd-degrees", type=int, dest="pgd_degrees")
    t.add_argument("--pgd-modes", type=int, dest="pgd_modes")
    t.add_argument("--feature-scaler", choices=["zscore", "minmax", "none"],
                   dest="feature_scaler")
    t.add_argument("--target-scaler", choices=["zscore", "minmax", "none"],
                   dest="target_scaler")
    t.set_defaults(func=_cmd_train)

    pr = sub.add_parser("predict", help="evaluate a trained model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--kind", required=True, choices=["linear", "nonlinear"])
    pr.add_argument("--params", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--steps", type=int, help="override the stored schedule")
    pr.add_argument("--load", help="dense load vector file")
    pr.set_defaults(func=_cmd_predict)

    v = sub.add_parser("validate", help="compare a model against stored snapshots")
    v.add_argument("--manifest", required=True)
    v.add_argument("--model", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--no-figures", action="store_true")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None):
    global _JSON_LOGS
    parser = _build_parser()
    args = parser.parse_args(argv)
    _JSON_LOGS = args.json_logs
    try:
        return args.func(args)
    except UsageError as e:
        print(f"romforge: usage error: {e}", file=sys.stderr)
        return UsageError.exit_code
    except DataValidationError as e:
        print(f"romforge: invalid data: {e}", file=sys.stderr)
        return DataValidationError.exit_code
    except NumericalError as e:
        print(f"romforge: numerical failure: {e}", file=sys.stderr)
        return NumericalError.exit_code
    except RomforgeError as e:  # pragma: no cover - defensive
        print(f"romforge: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

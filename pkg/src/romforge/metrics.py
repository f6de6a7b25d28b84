"""Error metrics and delimited validation reports.

Displacement errors default to the mean-deflection convention: each DOF
error is normalized by the mean absolute reference value of its DOF class
(translations and rotations separately), which keeps near-zero DOFs from
blowing up the percentages. All figures of merit are percentages.
"""

import os

import numpy as np
from dataclasses import dataclass

from . import runtime as rt
from .errors import DataValidationError
from .pod import reconstruct_inverse, reduce_system
from .store import ROTATION_KINDS, TRANSLATION_KINDS, atomic_write_json, atomic_write_text, load_entry


def frobenius_rel_error(ref, pred):
    """100 * ||ref - pred||_F / ||ref||_F."""
    ref = np.asarray(ref, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if ref.shape != pred.shape:
        raise DataValidationError("reference and prediction shapes disagree")
    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise DataValidationError("reference matrix is zero, relative error undefined")
    return 100.0 * float(np.linalg.norm(ref - pred)) / denom


def _class_masks(kinds, n):
    if kinds is None:
        return {"all": np.ones(n, dtype=bool)}
    kinds = np.asarray(kinds)
    if kinds.size != n:
        raise DataValidationError("one DOF kind per DOF required")
    masks = {}
    trans = np.isin(kinds, TRANSLATION_KINDS)
    rot = np.isin(kinds, ROTATION_KINDS)
    if trans.any():
        masks["translation"] = trans
    if rot.any():
        masks["rotation"] = rot
    return masks


def displacement_errors(u_ref, u_pred, kinds=None, mode="mean-deflection"):
    """Per-DOF error statistics in percent: dict with max_pct and mean_pct."""
    u_ref = np.asarray(u_ref, dtype=float).ravel()
    u_pred = np.asarray(u_pred, dtype=float).ravel()
    if u_ref.shape != u_pred.shape:
        raise DataValidationError("displacement vectors differ in length")
    err = np.abs(u_pred - u_ref)
    if mode == "mean-deflection":
        pct = np.full(u_ref.size, np.nan)
        for mask in _class_masks(kinds, u_ref.size).values():
            denom = np.mean(np.abs(u_ref[mask]))
            if denom == 0.0:
                raise DataValidationError("reference class is identically zero")
            pct[mask] = 100.0 * err[mask] / denom
    elif mode == "per-dof":
        nz = np.abs(u_ref) > 0.0
        if not nz.any():
            raise DataValidationError("reference displacement is identically zero")
        pct = 100.0 * err[nz] / np.abs(u_ref[nz])
    else:
        raise DataValidationError(f"unknown displacement error mode '{mode}'")
    return {"max_pct": float(np.nanmax(pct)), "mean_pct": float(np.nanmean(pct))}


def elastic_energy(u, f):
    """Work of the load on the equilibrium state, 0.5 * u . f (linear only)."""
    u = np.asarray(u, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    if u.shape != f.shape:
        raise DataValidationError("displacement and load lengths disagree")
    return 0.5 * float(u @ f)


def external_work(U, F):
    """Trapezoidal external work along a trajectory (nonlinear energy proxy).

    Columns are states in time order, the first column the unloaded state.
    """
    U = np.asarray(U, dtype=float)
    F = np.asarray(F, dtype=float)
    if U.shape != F.shape:
        raise DataValidationError("trajectory arrays differ in shape")
    dU = np.diff(U, axis=1)
    Fm = 0.5 * (F[:, 1:] + F[:, :-1])
    return float(np.sum(Fm * dU))


def theta_comparison(theta_ref, theta_pred):
    """Per-component R^2 of predicted coefficients against reference ones."""
    theta_ref = np.atleast_2d(np.asarray(theta_ref, dtype=float))
    theta_pred = np.atleast_2d(np.asarray(theta_pred, dtype=float))
    if theta_ref.shape != theta_pred.shape:
        raise DataValidationError("theta tables differ in shape")
    out = []
    for r in range(theta_ref.shape[0]):
        resid = float(np.sum((theta_pred[r] - theta_ref[r]) ** 2))
        spread = float(np.sum((theta_ref[r] - theta_ref[r].mean()) ** 2))
        out.append(1.0 - resid / spread if spread > 0 else float("nan"))
    return out


@dataclass
class ValidationReport:
    rows: list          # per-case dicts
    theta_rows: list    # long-format coefficient comparison
    aggregates: dict


def _csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(row.get(h)) for h in header))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def build_report(manifest, model, out_dir):
    """Validate a model against every manifest entry and write the report.

    Produces report.csv (one row per case), theta_compare.csv (long format,
    one row per case/step/component) and energy.csv.
    """
    os.makedirs(out_dir, exist_ok=True)
    val_ids = set(model.meta.get("train_split", {}).get("validation", []))
    split_mode = model.meta.get("train_split", {}).get("mode", "entries")
    kinds = model.dof_kinds
    rows, energy_rows, theta_rows = [], [], []
    theta_ref_all, theta_pred_all = [], []
    theta_ref_val, theta_pred_val = [], []
    for entry in manifest.entries:
        bundle = load_entry(manifest, entry)
        mu = np.array([bundle.params[k] for k in manifest.space.names])
        is_val = entry["id"] in val_ids and split_mode == "entries"
        split = "validation" if is_val else ("train" if split_mode == "entries" else "mixed")

        u_pod = rt.pod_rom_reference(model.basis, bundle, manifest.problem_kind)
        theta_ref = rt.oracle_thetas(model, bundle)
        if manifest.problem_kind == "linear":
            u_ml, diag = rt.predict_linear(model, mu, load=bundle.loads[:, 0])
            u_ml = u_ml[:, None]
            theta_pred = diag["theta"][:, None]
            conds = [diag["condition"]]
        else:
            res = rt.run_online(model, mu, times=bundle.times,
                                load=bundle.loads[:, -1])
            u_ml = res.displacements[:, 1:]
            theta_pred = np.column_stack([d["theta"] for d in res.diagnostics])
            conds = [d["condition"] for d in res.diagnostics]

        # reconstructed-inverse error per step, worst step reported
        V = model.basis.modes
        n = V.shape[1]
        db = []
        for i, A in enumerate(bundle.stiffness):
            ref = np.linalg.inv(reduce_system(A, V))
            pred = reconstruct_inverse(theta_pred[:, i], model.matrix_basis.modes, n)
            db.append(frobenius_rel_error(ref, pred))
        u_fom = bundle.displacements
        pod_stats = displacement_errors(u_fom[:, -1], u_pod[:, -1], kinds)
        ml_stats = displacement_errors(u_fom[:, -1], u_ml[:, -1], kinds)
        pod_l2 = frobenius_rel_error(u_fom[:, -1], u_pod[:, -1])
        ml_l2 = frobenius_rel_error(u_fom[:, -1], u_ml[:, -1])

        if manifest.problem_kind == "linear":
            e_fom = elastic_energy(u_fom[:, 0], bundle.loads[:, 0])
            e_pod = elastic_energy(u_pod[:, 0], bundle.loads[:, 0])
            e_ml = elastic_energy(u_ml[:, 0], bundle.loads[:, 0])
            energy_kind = "elastic"
        else:
            Z = np.zeros((u_fom.shape[0], 1))
            F = np.hstack([Z, bundle.loads])
            e_fom = external_work(np.hstack([Z, u_fom]), F)
            e_pod = external_work(np.hstack([Z, u_pod]), F)
            e_ml = external_work(np.hstack([Z, u_ml]), F)
            energy_kind = "external_work"

        rows.append(
            {
                "case": entry["id"],
                "split": split,
                "steps": int(entry["steps"]),
                "delta_b_max_pct": max(db),
                "delta_b_mean_pct": float(np.mean(db)),
                "pod_disp_max_pct": pod_stats["max_pct"],
                "pod_disp_mean_pct": pod_stats["mean_pct"],
                "pod_disp_l2_pct": pod_l2,
                "ml_disp_max_pct": ml_stats["max_pct"],
                "ml_disp_mean_pct": ml_stats["mean_pct"],
                "ml_disp_l2_pct": ml_l2,
                "condition_max": float(np.max(conds)),
                "energy_rel_err_pct": 100.0 * abs(e_ml - e_fom) / abs(e_fom),
            }
        )
        energy_rows.append(
            {
                "case": entry["id"],
                "split": split,
                "kind": energy_kind,
                "fom": e_fom,
                "pod_rom": e_pod,
                "ml_rom": e_ml,
                "pod_rel_err_pct": 100.0 * abs(e_pod - e_fom) / abs(e_fom),
                "ml_rel_err_pct": 100.0 * abs(e_ml - e_fom) / abs(e_fom),
            }
        )
        for i in range(theta_ref.shape[1]):
            for r in range(theta_ref.shape[0]):
                theta_rows.append(
                    {
                        "case": entry["id"],
                        "split": split,
                        "step": i + 1,
                        "component": r + 1,
                        "theta_ref": float(theta_ref[r, i]),
                        "theta_pred": float(theta_pred[r, i]),
                    }
                )
        theta_ref_all.append(theta_ref)
        theta_pred_all.append(theta_pred)
        if is_val:
            theta_ref_val.append(theta_ref)
            theta_pred_val.append(theta_pred)

    r2_all = theta_comparison(np.hstack(theta_ref_all), np.hstack(theta_pred_all))
    aggregates = {
        "theta_r2": r2_all,
        "cases": len(rows),
        "energy_rel_err_max_pct": max(r["energy_rel_err_pct"] for r in rows),
        "pod_disp_max_pct": max(r["pod_disp_max_pct"] for r in rows),
        "pod_disp_l2_max_pct": max(r["pod_disp_l2_pct"] for r in rows),
        "ml_disp_max_pct": max(r["ml_disp_max_pct"] for r in rows),
        "ml_disp_l2_max_pct": max(r["ml_disp_l2_pct"] for r in rows),
    }
    for split in ("train", "validation", "mixed"):
        sub = [r for r in rows if r["split"] == split]
        if sub:
            aggregates[split] = {
                "delta_b_max_pct": max(r["delta_b_max_pct"] for r in sub),
                "ml_disp_max_pct": max(r["ml_disp_max_pct"] for r in sub),
                "ml_disp_mean_pct": float(np.mean([r["ml_disp_mean_pct"] for r in sub])),
                "ml_disp_l2_max_pct": max(r["ml_disp_l2_pct"] for r in sub),
                "energy_rel_err_max_pct": max(r["energy_rel_err_pct"] for r in sub),
            }
    if theta_ref_val:
        aggregates["theta_r2_validation"] = theta_comparison(
            np.hstack(theta_ref_val), np.hstack(theta_pred_val)
        )

    _csv(os.path.join(out_dir, "report.csv"),
         ["case", "split", "steps", "delta_b_max_pct", "delta_b_mean_pct",
          "pod_disp_max_pct", "pod_disp_mean_pct", "pod_disp_l2_pct",
          "ml_disp_max_pct", "ml_disp_mean_pct", "ml_disp_l2_pct",
          "condition_max", "energy_rel_err_pct"],
         rows)
    _csv(os.path.join(out_dir, "theta_compare.csv"),
         ["case", "split", "step", "component", "theta_ref", "theta_pred"],
         theta_rows)
    _csv(os.path.join(out_dir, "energy.csv"),
         ["case", "split", "kind", "fom", "pod_rom", "ml_rom",
          "pod_rel_err_pct", "ml_rel_err_pct"],
         energy_rows)
    atomic_write_json(os.path.join(out_dir, "summary.json"), aggregates)
    return ValidationReport(rows=rows, theta_rows=theta_rows, aggregates=aggregates)

"""Snapshot persistence: Matrix Market files, manifests, bundle directories.

Sparse stiffness goes to 1-based coordinate files (symmetric storage, lower
triangle), dense displacement/load blocks to array files in column-major
order. Floats are written with 17 significant digits so a write/read cycle
is bitwise exact for float64.
"""

import json
import os
import tempfile

import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass

from .doe import ParameterSpace
from .errors import DataValidationError

SNAPSHOT_FORMAT_VERSION = 1

_FLOAT_FMT = "{:.16e}"

# retained-DOF labels; translations and rotations are normalized separately
# by the error metrics
TRANSLATION_KINDS = ("w", "ux", "uy")
ROTATION_KINDS = ("rx", "ry")


def _fmt(x):
    return _FLOAT_FMT.format(float(x))


def atomic_write_text(path, text):
    """Write text to path via a temp file + rename so readers never see a
    partial file."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Matrix Market, sparse coordinate

def write_sparse(path, A, comment=None):
    """Write a symmetric sparse matrix as 1-based coordinate Matrix Market.

    Only the lower triangle is stored. Input must be symmetric; asymmetry
    up to 1e-10 (relative) is folded by (A + A.T)/2, beyond that is an error.
    """
    A = sp.coo_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DataValidationError("symmetric storage needs a square matrix")
    dense_gap = abs(A - A.T)
    gap = dense_gap.max() if dense_gap.nnz else 0.0
    scale = abs(A).max() if A.nnz else 0.0
    if gap > 1e-10 * max(scale, 1.0):
        raise DataValidationError("matrix is not symmetric, cannot store as symmetric")
    if gap > 0.0:
        A = sp.coo_matrix(0.5 * (A + A.T))
    A = sp.tril(A, format="coo")
    A.eliminate_zeros()
    order = np.lexsort((A.row, A.col))
    rows, cols, vals = A.row[order], A.col[order], A.data[order]
    lines = ["%%MatrixMarket matrix coordinate real symmetric"]
    if comment:
        lines.append("% " + comment)
    lines.append(f"{A.shape[0]} {A.shape[1]} {len(vals)}")
    for i, j, v in zip(rows, cols, vals):
        lines.append(f"{i + 1} {j + 1} " + _fmt(v))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_sparse(path):
    """Read a coordinate Matrix Market file into CSR.

    Accepts ``general`` and ``symmetric`` real coordinate files and reports
    malformed content with its line number.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise DataValidationError(f"{path}: empty file")
    header = raw[0].split()
    if (
        len(header) != 5
        or header[0] != "%%MatrixMarket"
        or header[1].lower() != "matrix"
        or header[2].lower() != "coordinate"
        or header[3].lower() != "real"
    ):
        raise DataValidationError(f"{path}:1: not a real coordinate MatrixMarket header")
    symmetry = header[4].lower()
    if symmetry not in ("general", "symmetric"):
        raise DataValidationError(f"{path}:1: unsupported symmetry '{header[4]}'")
    lineno = 1
    size = None
    for lineno, line in enumerate(raw[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size = s.split()
        break
    if size is None:
        raise DataValidationError(f"{path}: missing size line")
    if len(size) != 3:
        raise DataValidationError(f"{path}:{lineno}: size line needs 3 integers")
    try:
        m, n, nnz = (int(t) for t in size)
    except ValueError:
        raise DataValidationError(f"{path}:{lineno}: size line needs 3 integers")
    if m < 0 or n < 0 or nnz < 0:
        raise DataValidationError(f"{path}:{lineno}: negative dimensions")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=float)
    count = 0
    seen = set()
    for off, line in enumerate(raw[lineno:], start=lineno + 1):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        toks = s.split()
        if len(toks) != 3:
            raise DataValidationError(f"{path}:{off}: expected 'row col value'")
        if count >= nnz:
            raise DataValidationError(
                f"{path}:{off}: more entries than declared ({nnz})"
            )
        try:
            i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError:
            raise DataValidationError(f"{path}:{off}: non-numeric entry")
        if not (1 <= i <= m and 1 <= j <= n):
            raise DataValidationError(f"{path}:{off}: index ({i},{j}) out of range")
        if symmetry == "symmetric" and i < j:
            raise DataValidationError(
                f"{path}:{off}: upper-triangle entry in a symmetric file"
            )
        if (i, j) in seen:
            raise DataValidationError(f"{path}:{off}: duplicate entry ({i},{j})")
        seen.add((i, j))
        rows[count] = i - 1
        cols[count] = j - 1
        vals[count] = v
        count += 1
    if count != nnz:
        raise DataValidationError(
            f"{path}: declared {nnz} entries but found {count}"
        )
    A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n))
    if symmetry == "symmetric":
        off_diag = sp.coo_matrix(
            (vals[rows != cols], (cols[rows != cols], rows[rows != cols])), shape=(m, n)
        )
        A = A + off_diag
    return A.tocsr()


# ---------------------------------------------------------------------------
# Matrix Market, dense array

def write_dense(path, M, comment=None):
    """Write a dense matrix as array-format Matrix Market (column-major)."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise DataValidationError("dense export expects a 1-D or 2-D array")
    lines = ["%%MatrixMarket matrix array real general"]
    if comment:
        lines.append("% " + comment)
    lines.append(f"{M.shape[0]} {M.shape[1]}")
    for v in M.flatten(order="F"):
        lines.append(_fmt(v))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dense(path):
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise DataValidationError(f"{path}: empty file")
    header = raw[0].split()
    if (
        len(header) != 5
        or header[0] != "%%MatrixMarket"
        or header[2].lower() != "array"
        or header[3].lower() != "real"
        or header[4].lower() != "general"
    ):
        raise DataValidationError(f"{path}:1: not a real general array MatrixMarket header")
    lineno = 1
    size = None
    for lineno, line in enumerate(raw[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size = s.split()
        break
    if size is None or len(size) != 2:
        raise DataValidationError(f"{path}:{lineno}: size line needs 2 integers")
    try:
        m, n = int(size[0]), int(size[1])
    except ValueError:
        raise DataValidationError(f"{path}:{lineno}: size line needs 2 integers")
    vals = np.empty(m * n, dtype=float)
    count = 0
    for off, line in enumerate(raw[lineno:], start=lineno + 1):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        if count >= m * n:
            raise DataValidationError(f"{path}:{off}: more values than declared ({m * n})")
        try:
            vals[count] = float(s)
        except ValueError:
            raise DataValidationError(f"{path}:{off}: non-numeric value")
        count += 1
    if count != m * n:
        raise DataValidationError(f"{path}: declared {m * n} values but found {count}")
    # hand back a C-contiguous array: the column-major view would steer BLAS
    # down a different summation order than the array the file was written
    # from, costing bitwise reproducibility after a save/load cycle
    return np.ascontiguousarray(vals.reshape((m, n), order="F"))


# ---------------------------------------------------------------------------
# Dirichlet elimination

def apply_dirichlet(A, f, eliminated):
    """Drop constrained rows/columns. Returns (A_red, f_red, kept) where
    ``kept`` maps reduced index -> original index."""
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DataValidationError("stiffness must be square")
    elim = np.asarray(eliminated, dtype=np.int64)
    if elim.size and (elim.min() < 0 or elim.max() >= n):
        raise DataValidationError("eliminated DOF index out of range")
    if len(np.unique(elim)) != len(elim):
        raise DataValidationError("eliminated DOF list has duplicates")
    kept = np.setdiff1d(np.arange(n), elim)
    if kept.size == 0:
        raise DataValidationError("all DOFs eliminated")
    f = np.asarray(f, dtype=float)
    if sp.issparse(A):
        A_red = A.tocsr()[kept][:, kept]
    else:
        A_red = np.asarray(A)[np.ix_(kept, kept)]
    return A_red, f[kept], kept


# ---------------------------------------------------------------------------
# Bundles and manifests

@dataclass
class SnapshotBundle:
    """In-memory contents of one manifest entry."""

    entry_id: str
    params: dict
    displacements: np.ndarray   # (N, m)
    loads: np.ndarray           # (N, m)
    stiffness: list             # m CSR matrices, (N, N)
    times: np.ndarray = None    # (m + 1,), nonlinear only


@dataclass
class SnapshotManifest:
    problem_kind: str
    space: ParameterSpace
    entries: list               # dicts: id, path, params, steps, always_train
    bc: dict                    # full_dim, eliminated, dof_kinds
    version: int = SNAPSHOT_FORMAT_VERSION
    root: str = "."

    @property
    def n_dofs(self):
        return self.bc["full_dim"] - len(self.bc["eliminated"])


def _require(cond, msg):
    if not cond:
        raise DataValidationError(msg)


def write_manifest(root, manifest):
    entries = []
    for e in manifest.entries:
        entries.append(
            {
                "id": e["id"],
                "path": e["path"],
                "params": {k: float(v) for k, v in e["params"].items()},
                "steps": int(e["steps"]),
                "always_train": bool(e.get("always_train", False)),
            }
        )
    doc = {
        "version": manifest.version,
        "problem_kind": manifest.problem_kind,
        "space": manifest.space.to_dict(),
        "bc": {
            "full_dim": int(manifest.bc["full_dim"]),
            "eliminated": [int(i) for i in manifest.bc["eliminated"]],
            "dof_kinds": list(manifest.bc["dof_kinds"]),
        },
        "entries": entries,
    }
    atomic_write_json(os.path.join(root, "manifest.json"), doc)


def read_manifest(root):
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise DataValidationError(f"{path}: no such manifest")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"{path}: invalid JSON ({e})") from e
    for key in ("version", "problem_kind", "space", "bc", "entries"):
        _require(key in doc, f"{path}: missing key '{key}'")
    _require(doc["version"] == SNAPSHOT_FORMAT_VERSION,
             f"{path}: unsupported manifest version {doc['version']}")
    kind = doc["problem_kind"]
    _require(kind in ("linear", "nonlinear"), f"{path}: unknown problem_kind '{kind}'")
    space = ParameterSpace.from_dict(doc["space"])
    bc = doc["bc"]
    for key in ("full_dim", "eliminated", "dof_kinds"):
        _require(key in bc, f"{path}: bc is missing '{key}'")
    n_ret = bc["full_dim"] - len(bc["eliminated"])
    _require(len(bc["dof_kinds"]) == n_ret,
             f"{path}: dof_kinds has {len(bc['dof_kinds'])} labels, expected {n_ret}")
    known = set(TRANSLATION_KINDS) | set(ROTATION_KINDS)
    bad = sorted(set(bc["dof_kinds"]) - known)
    _require(not bad, f"{path}: unknown dof kinds {bad}")
    entries = doc["entries"]
    _require(len(entries) >= 1, f"{path}: manifest has no entries")
    seen = set()
    for e in entries:
        for key in ("id", "path", "params", "steps"):
            _require(key in e, f"{path}: entry is missing '{key}'")
        _require(e["id"] not in seen, f"{path}: duplicate entry id '{e['id']}'")
        seen.add(e["id"])
        _require(set(e["params"]) == set(space.names),
                 f"{path}: entry '{e['id']}' params do not match the space names")
        _require(int(e["steps"]) >= 1, f"{path}: entry '{e['id']}' has steps < 1")
        if kind == "linear":
            _require(int(e["steps"]) == 1,
                     f"{path}: linear entry '{e['id']}' must have steps == 1")
    return SnapshotManifest(
        problem_kind=kind,
        space=space,
        entries=entries,
        bc=bc,
        version=doc["version"],
        root=os.fspath(root),
    )


def write_entry(root, entry_id, params, displacements, loads, stiffness, times=None):
    """Write one snapshot entry directory; returns the manifest entry dict."""
    U = np.asarray(displacements, dtype=float)
    F = np.asarray(loads, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if F.ndim == 1:
        F = F[:, None]
    m = U.shape[1]
    _require(F.shape == U.shape, "displacements and loads must have equal shapes")
    _require(len(stiffness) == m, "one stiffness matrix per stored step required")
    d = os.path.join(root, entry_id)
    os.makedirs(d, exist_ok=True)
    atomic_write_json(os.path.join(d, "params.json"),
                      {k: float(v) for k, v in params.items()})
    write_dense(os.path.join(d, "u.mm"), U)
    write_dense(os.path.join(d, "f.mm"), F)
    for i, A in enumerate(stiffness, start=1):
        write_sparse(os.path.join(d, f"A_{i}.mtx"), A)
    if times is not None:
        times = np.asarray(times, dtype=float)
        _require(times.shape == (m + 1,), "times must have one more entry than steps")
        lines = ["time"] + [_fmt(t) for t in times]
        atomic_write_text(os.path.join(d, "times.csv"), "\n".join(lines) + "\n")
    return {"id": entry_id, "path": entry_id, "params": dict(params), "steps": m}


def load_entry(manifest, entry):
    """Load one entry of a manifest into a SnapshotBundle, validating shapes."""
    d = os.path.join(manifest.root, entry["path"])
    _require(os.path.isdir(d), f"{d}: entry directory missing")
    with open(os.path.join(d, "params.json")) as fh:
        params = json.load(fh)
    U = read_dense(os.path.join(d, "u.mm"))
    F = read_dense(os.path.join(d, "f.mm"))
    n = manifest.n_dofs
    m = int(entry["steps"])
    _require(U.shape == (n, m),
             f"{d}: displacements have shape {U.shape}, expected {(n, m)}")
    _require(F.shape == (n, m), f"{d}: loads have shape {F.shape}, expected {(n, m)}")
    mats = []
    for i in range(1, m + 1):
        p = os.path.join(d, f"A_{i}.mtx")
        _require(os.path.exists(p), f"{d}: missing stiffness file A_{i}.mtx")
        A = read_sparse(p)
        _require(A.shape == (n, n), f"{p}: shape {A.shape}, expected {(n, n)}")
        mats.append(A)
    times = None
    tpath = os.path.join(d, "times.csv")
    if manifest.problem_kind == "nonlinear":
        _require(os.path.exists(tpath), f"{d}: nonlinear entry is missing times.csv")
    if os.path.exists(tpath):
        with open(tpath) as fh:
            rows = [r.strip() for r in fh.read().splitlines() if r.strip()]
        _require(rows and rows[0] == "time", f"{tpath}: expected a 'time' header")
        try:
            times = np.array([float(r) for r in rows[1:]])
        except ValueError:
            raise DataValidationError(f"{tpath}: non-numeric time value")
        _require(times.shape == (m + 1,),
                 f"{tpath}: {times.size} times, expected {m + 1}")
        _require(np.all(np.diff(times) > 0), f"{tpath}: times must be strictly increasing")
    return SnapshotBundle(
        entry_id=entry["id"],
        params=params,
        displacements=U,
        loads=F,
        stiffness=mats,
        times=times,
    )

"""Mindlin plate bending on a regular quad mesh.

Q4 elements with 3 DOF per node (w, rx, ry). Bending uses 2x2 Gauss points,
transverse shear a single centroid point: the usual selective reduced
integration cure for shear locking, which matters here because thickness
over side length goes down to 1e-3.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses import dataclass, field

from ..errors import DataValidationError, NumericalError
from ..store import apply_dirichlet

SHEAR_CORRECTION = 5.0 / 6.0

_GP2 = 1.0 / np.sqrt(3.0)
_BEND_PTS = [(-_GP2, -_GP2), (_GP2, -_GP2), (_GP2, _GP2), (-_GP2, _GP2)]


@dataclass
class LinearSystem:
    """Assembled, constraint-reduced linear problem."""

    stiffness: sp.csr_matrix
    load: np.ndarray
    dof_map: np.ndarray          # (n_retained, 2): node id, local dof
    eliminated: np.ndarray       # sorted full-system DOF indices
    dof_kinds: list = field(default_factory=list)
    full_dim: int = 0

    @property
    def n_dofs(self):
        return self.load.shape[0]


def _q4_shape(xi, eta):
    N = 0.25 * np.array(
        [
            (1 - xi) * (1 - eta),
            (1 + xi) * (1 - eta),
            (1 + xi) * (1 + eta),
            (1 - xi) * (1 + eta),
        ]
    )
    dN = 0.25 * np.array(
        [
            [-(1 - eta), -(1 - xi)],
            [(1 - eta), -(1 + xi)],
            [(1 + eta), (1 + xi)],
            [-(1 + eta), (1 - xi)],
        ]
    )
    return N, dN


def _element_matrix(xe, Db, Ds):
    """12x12 element stiffness, selective reduced integration."""
    Ke = np.zeros((12, 12))
    for xi, eta in _BEND_PTS:
        _, dNdxi = _q4_shape(xi, eta)
        J = dNdxi.T @ xe
        detJ = np.linalg.det(J)
        if detJ <= 0:
            raise DataValidationError("element Jacobian is not positive")
        dNdx = dNdxi @ np.linalg.inv(J).T
        Bb = np.zeros((3, 12))
        for i in range(4):
            c = 3 * i
            Bb[0, c + 1] = dNdx[i, 0]
            Bb[1, c + 2] = dNdx[i, 1]
            Bb[2, c + 1] = dNdx[i, 1]
            Bb[2, c + 2] = dNdx[i, 0]
        Ke += Bb.T @ Db @ Bb * detJ
    # one-point shear quadrature (weight 4 on the parent square)
    N, dNdxi = _q4_shape(0.0, 0.0)
    J = dNdxi.T @ xe
    detJ = np.linalg.det(J)
    dNdx = dNdxi @ np.linalg.inv(J).T
    Bs = np.zeros((2, 12))
    for i in range(4):
        c = 3 * i
        Bs[0, c] = dNdx[i, 0]
        Bs[0, c + 1] = N[i]
        Bs[1, c] = dNdx[i, 1]
        Bs[1, c + 2] = N[i]
    Ke += Bs.T @ Ds @ Bs * detJ * 4.0
    return Ke


def assemble_plate(E, nu, t, grid=(11, 11), side=1.0, load=1000.0):
    """Assemble the plate problem for one parameter point.

    grid counts nodes per side. Boundary nodes are held in w only
    (rotations stay free); the load is a point force on the w DOF of the
    node nearest the plate center.
    """
    if E <= 0 or t <= 0 or not (-1.0 < nu < 0.5):
        raise DataValidationError("need E > 0, t > 0 and -1 < nu < 0.5")
    nx, ny = grid
    if nx < 2 or ny < 2:
        raise DataValidationError("grid needs at least 2 nodes per side")
    if side <= 0:
        raise DataValidationError("side length must be positive")

    n_nodes = nx * ny
    coords = np.zeros((n_nodes, 2))
    for iy in range(ny):
        for ix in range(nx):
            coords[iy * nx + ix] = (ix * side / (nx - 1), iy * side / (ny - 1))

    D0 = E * t**3 / (12.0 * (1.0 - nu**2))
    Db = D0 * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    G = E / (2.0 * (1.0 + nu))
    Ds = SHEAR_CORRECTION * G * t * np.eye(2)

    ndof = 3 * n_nodes
    rows, cols, vals = [], [], []
    for ey in range(ny - 1):
        for ex in range(nx - 1):
            n0 = ey * nx + ex
            conn = [n0, n0 + 1, n0 + nx + 1, n0 + nx]
            xe = coords[conn]
            Ke = _element_matrix(xe, Db, Ds)
            edofs = np.array([3 * n + k for n in conn for k in range(3)])
            rows.append(np.repeat(edofs, 12))
            cols.append(np.tile(edofs, 12))
            vals.append(Ke.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    ).tocsr()
    gap = abs(K - K.T).max()
    if gap > 1e-10 * abs(K).max():
        raise NumericalError("assembled stiffness lost symmetry")

    f = np.zeros(ndof)
    center = np.array([side / 2.0, side / 2.0])
    node = int(np.argmin(np.sum((coords - center) ** 2, axis=1)))
    f[3 * node] = load

    elim = []
    for iy in range(ny):
        for ix in range(nx):
            if ix in (0, nx - 1) or iy in (0, ny - 1):
                elim.append(3 * (iy * nx + ix))
    elim = np.array(sorted(elim))

    K_red, f_red, kept = apply_dirichlet(K, f, elim)
    K_red = sp.csr_matrix(0.5 * (K_red + K_red.T))
    dof_map = np.array([(g // 3, g % 3) for g in kept])
    kinds = [("w", "rx", "ry")[g % 3] for g in kept]
    return LinearSystem(
        stiffness=K_red,
        load=f_red,
        dof_map=dof_map,
        eliminated=elim,
        dof_kinds=kinds,
        full_dim=ndof,
    )


def solve_linear(system, rel_tol=1e-10):
    """Direct sparse solve with a residual check."""
    A, f = system.stiffness, system.load
    if A.shape[0] != f.shape[0]:
        raise DataValidationError("stiffness and load sizes disagree")
    try:
        lu = spla.splu(A.tocsc())
        u = lu.solve(f)
    except RuntimeError as e:
        raise NumericalError(f"factorization failed: {e}") from e
    if not np.all(np.isfinite(u)):
        raise NumericalError("solution contains non-finite values")
    fnorm = np.linalg.norm(f)
    if fnorm > 0:
        res = np.linalg.norm(A @ u - f) / fnorm
        if res > rel_tol:
            raise NumericalError(f"linear solve residual {res:.3e} exceeds {rel_tol:.1e}")
    return u

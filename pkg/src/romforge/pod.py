"""Two-stage proper orthogonal decomposition.

Stage one compresses displacement snapshots into a spatial basis V; stage
two runs the same machinery on vectorized reduced inverse matrices to get
the matrix-mode basis Phi and the coefficient table Theta.

Both stages avoid the full SVD: depending on which side is smaller we
eigendecompose either the P x P Gram matrix of the snapshot columns
(method of snapshots) or the N x N outer-product matrix.
"""

import numpy as np
from dataclasses import dataclass

from .errors import DataValidationError, NumericalError

CONDITION_LIMIT = 1e14


@dataclass
class ReducedBasis:
    modes: np.ndarray        # (N, n), orthonormal columns
    spectrum: np.ndarray     # (n,), retained eigenvalues, descending
    truncation_ratio: float  # requested lambda_1 / lambda_n bound

    @property
    def n_modes(self):
        return self.modes.shape[1]


@dataclass
class MatrixModeBasis:
    modes: np.ndarray        # (n*n, R)
    theta: np.ndarray        # (R, P)
    spectrum: np.ndarray
    truncation_ratio: float

    @property
    def n_modes(self):
        return self.modes.shape[1]


def _fix_signs(V):
    # deterministic orientation: the largest-magnitude entry of each mode
    # points up
    for j in range(V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


def pod_basis(snapshots, ratio=1000.0):
    """Orthonormal basis for the dominant span of the snapshot columns.

    Modes are kept while eigenvalue_i >= eigenvalue_1 / ratio; eigenvalues
    tied at the cut (1e-12 relative) are kept together. ratio=None keeps
    everything above numerical rank.
    """
    U = np.asarray(snapshots, dtype=float)
    if U.ndim != 2 or U.size == 0:
        raise DataValidationError("snapshots must form a non-empty 2-D array")
    if not np.all(np.isfinite(U)):
        raise DataValidationError("snapshots contain non-finite values")
    if ratio is not None and ratio < 1.0:
        raise DataValidationError("truncation ratio must be >= 1")
    N, P = U.shape
    if P <= N:
        G = U.T @ U
        lam, Q = np.linalg.eigh(G)
    else:
        C = U @ U.T
        lam, Q = np.linalg.eigh(C)
    lam = lam[::-1].copy()
    Q = Q[:, ::-1].copy()
    lam[lam < 0.0] = 0.0
    if lam[0] <= 0.0:
        raise DataValidationError("snapshot matrix is identically zero")
    floor = lam[0] * max(N, P) * np.finfo(float).eps * 100.0
    if ratio is None:
        if P > N:
            # the outer-product route hands back a full orthonormal
            # eigenbasis of R^N, so "complete" really means all N modes
            # (zero-eigenvalue directions included)
            keep = np.ones_like(lam, dtype=bool)
        else:
            keep = lam > floor
    else:
        keep = lam >= lam[0] / ratio * (1.0 - 1e-12)
        keep &= lam > floor
    n = int(np.count_nonzero(keep))
    lam_kept = lam[:n]
    if P <= N:
        V = U @ Q[:, :n] / np.sqrt(lam_kept)
        # re-orthonormalize: the Gram route loses orthogonality near the
        # numerical-rank floor
        V, R = np.linalg.qr(V)
        V = V * np.where(np.diag(R) < 0.0, -1.0, 1.0)
    else:
        V = Q[:, :n]
    V = _fix_signs(np.ascontiguousarray(V))
    return ReducedBasis(
        modes=V,
        spectrum=lam_kept,
        truncation_ratio=float("inf") if ratio is None else float(ratio),
    )


def reduce_system(A, V):
    """Galerkin reduction V^T A V, symmetrized against roundoff."""
    V = np.asarray(V)
    if A.shape[0] != V.shape[0]:
        raise DataValidationError("basis and operator dimensions disagree")
    M = V.T @ (A @ V)
    return 0.5 * (M + M.T)


def invert_and_vectorize(A_r):
    """Column-major vectorization of the inverse of a small reduced matrix."""
    A_r = np.asarray(A_r, dtype=float)
    n = A_r.shape[0]
    if A_r.shape != (n, n):
        raise DataValidationError("reduced matrix must be square")
    cond = np.linalg.cond(A_r)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericalError(f"reduced matrix condition {cond:.3e} exceeds {CONDITION_LIMIT:.1e}")
    M = np.linalg.solve(A_r, np.eye(n))
    M = 0.5 * (M + M.T)
    return M.flatten(order="F")


def unvectorize(vec, n):
    vec = np.asarray(vec, dtype=float)
    if vec.size != n * n:
        raise DataValidationError(f"vector of length {vec.size} is not {n}x{n}")
    M = vec.reshape((n, n), order="F")
    return 0.5 * (M + M.T)


def project_theta(B, Phi):
    """Least-squares coefficients of B columns in the Phi basis.

    General formula (Phi^T Phi)^-1 Phi^T B, which collapses to Phi^T B for
    orthonormal modes.
    """
    B = np.asarray(B, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    if B.shape[0] != Phi.shape[0]:
        raise DataValidationError("matrix stack and basis dimensions disagree")
    theta, *_ = np.linalg.lstsq(Phi, B, rcond=None)
    return theta


def matrix_mode_basis(B, ratio=1000.0):
    """Second-stage POD over vectorized reduced inverses."""
    basis = pod_basis(B, ratio=ratio)
    theta = project_theta(B, basis.modes)
    return MatrixModeBasis(
        modes=basis.modes,
        theta=theta,
        spectrum=basis.spectrum,
        truncation_ratio=basis.truncation_ratio,
    )


def reconstruct_inverse(theta, Phi, n):
    """Rebuild a symmetric n x n inverse from matrix-mode coefficients."""
    theta = np.asarray(theta, dtype=float)
    vec = Phi @ theta
    M = unvectorize(vec, n)
    if not np.all(np.isfinite(M)):
        raise NumericalError("reconstructed inverse has non-finite entries")
    return M

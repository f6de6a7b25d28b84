"""Geometrically nonlinear test structures and the incremental FOM driver.

The driver integrates K(u)-type problems with the averaged-tangent scheme

    0.5 * (K(u_i) + K(u_{i-1})) (u_i - u_{i-1}) = f_i - f_{i-1}

solved per step by fixed-point iteration. Every recorded step keeps the
averaged matrix actually used, so replays of the increment equation are
exact by construction.
"""

import numpy as np
from dataclasses import dataclass, field

from ..errors import DataValidationError, NumericalError

# block structure of the truss geometric stiffness
_H = np.array(
    [
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
        [-1.0, 0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
    ]
)


@dataclass
class NonlinearTrajectory:
    times: np.ndarray            # (N_t + 1,), 0 .. 1
    displacements: np.ndarray    # (N, N_t + 1), first column zero
    loads: np.ndarray            # (N, N_t + 1)
    avg_stiffness: list          # N_t dense (N, N) averaged tangents

    @property
    def n_steps(self):
        return len(self.avg_stiffness)


def time_grid(n_steps, profile="uniform", ratio=4.0):
    """Pseudo-time grid on [0, 1].

    'geometric' grows the increment by a constant factor so the last step is
    ``ratio`` times the first, mimicking adaptive steppers that open up the
    step once the response smooths out.
    """
    if n_steps < 1:
        raise DataValidationError("need at least one step")
    if profile == "uniform":
        return np.linspace(0.0, 1.0, n_steps + 1)
    if profile == "geometric":
        if ratio <= 0:
            raise DataValidationError("geometric profile needs ratio > 0")
        if n_steps == 1 or ratio == 1.0:
            return np.linspace(0.0, 1.0, n_steps + 1)
        g = ratio ** (1.0 / (n_steps - 1))
        dt1 = (g - 1.0) / (g**n_steps - 1.0)
        steps = dt1 * g ** np.arange(n_steps)
        return np.concatenate([[0.0], np.cumsum(steps)])
    raise DataValidationError(f"unknown time profile '{profile}'")


class SpringChain:
    """Serial chain of hardening springs, first node clamped.

    Per-spring law F = k * d + k3 * d**3 with elongation d, so the tangent
    stiffness of spring s is k + 3 * k3 * d_s**2 and the assembled tangent
    is tridiagonal.
    """

    def __init__(self, k, k3, n_masses=8, load=1.0):
        if k <= 0 or n_masses < 1:
            raise DataValidationError("spring chain needs k > 0 and n_masses >= 1")
        self.k = float(k)
        self.k3 = float(k3)
        self.n_masses = int(n_masses)
        self.load = float(load)
        self.full_dim = self.n_masses + 1
        self.eliminated = np.array([0])
        self.dof_map = np.array([(i, 0) for i in range(1, self.n_masses + 1)])
        self.dof_kinds = ["ux"] * self.n_masses

    @property
    def n_dofs(self):
        return self.n_masses

    def _elongations(self, u):
        return np.diff(np.concatenate([[0.0], u]))

    def tangent(self, u):
        d = self._elongations(u)
        ks = self.k + 3.0 * self.k3 * d**2
        n = self.n_masses
        K = np.zeros((n, n))
        for s in range(n):
            # spring s joins node s and node s+1; node 0 is the wall
            if s == 0:
                K[0, 0] += ks[0]
            else:
                K[s - 1, s - 1] += ks[s]
                K[s, s] += ks[s]
                K[s - 1, s] -= ks[s]
                K[s, s - 1] -= ks[s]
        return K

    def internal_force(self, u):
        d = self._elongations(u)
        F = self.k * d + self.k3 * d**3
        g = np.zeros(self.n_masses)
        g += F[:]
        g[:-1] -= F[1:]
        return g

    def load_vector(self):
        f = np.zeros(self.n_masses)
        f[-1] = self.load
        return f


class TrussArch:
    """Shallow 2-D lattice arch of total-Lagrangian truss bars.

    Two parabolic chords tied by verticals and crossed diagonals, pinned at
    both ends of the bottom chord, pulled down at the top crown node. Member
    sections scale with the plate-like parameters: chords carry E*t directly,
    web members are derated by 2(1+nu) the way a shear web tracks G.

    Green strain e = (l^2 - L0^2) / (2 L0^2) per bar with axial force
    N = E A e gives internal force (N/L0) [-c; c] on the current chord
    vector c, and the tangent (EA/L0^3) a a^T + (N/L0) H with a = [-c; c].
    """

    def __init__(
        self,
        E,
        nu,
        t,
        n_panels=12,
        span=1.0,
        depth=0.08,
        rise=-0.05,
        chord_width=0.012,
        web_width=0.008,
        load=4.0e4,
    ):
        if E <= 0 or t <= 0 or not (-1.0 < nu < 0.5):
            raise DataValidationError("need E > 0, t > 0 and -1 < nu < 0.5")
        if n_panels < 2 or n_panels % 2:
            raise DataValidationError("n_panels must be even and >= 2")
        self.E, self.nu, self.t = float(E), float(nu), float(t)
        self.span, self.depth, self.rise = float(span), float(depth), float(rise)
        self.n_panels = int(n_panels)
        self.load = float(load)

        P = self.n_panels
        x = np.linspace(0.0, self.span, P + 1)
        y_bot = self.rise * 4.0 * (x / self.span) * (1.0 - x / self.span)
        nodes = np.vstack(
            [np.column_stack([x, y_bot]), np.column_stack([x, y_bot + self.depth])]
        )
        self.nodes = nodes
        bot = np.arange(P + 1)
        top = P + 1 + bot

        area_c = chord_width * self.t
        area_w = web_width * self.t / (2.0 * (1.0 + self.nu))
        members, areas = [], []
        for j in range(P):
            members.append((bot[j], bot[j + 1])), areas.append(area_c)
            members.append((top[j], top[j + 1])), areas.append(area_c)
            members.append((bot[j], top[j + 1])), areas.append(area_w)
            members.append((top[j], bot[j + 1])), areas.append(area_w)
        for j in range(P + 1):
            members.append((bot[j], top[j])), areas.append(area_w)
        self.members = np.array(members)
        self.areas = np.array(areas)

        ref = nodes[self.members[:, 1]] - nodes[self.members[:, 0]]
        self.L0 = np.linalg.norm(ref, axis=1)
        self.EA = self.E * self.areas

        n_nodes = 2 * (P + 1)
        self.full_dim = 2 * n_nodes
        fixed_nodes = (bot[0], bot[P])
        self.eliminated = np.sort(
            np.array([2 * n + k for n in fixed_nodes for k in range(2)])
        )
        self.kept = np.setdiff1d(np.arange(self.full_dim), self.eliminated)
        self._pos = -np.ones(self.full_dim, dtype=int)
        self._pos[self.kept] = np.arange(self.kept.size)
        self.dof_map = np.array([(g // 2, g % 2) for g in self.kept])
        self.dof_kinds = [("ux", "uy")[g % 2] for g in self.kept]
        self.crown = top[P // 2]

        # member DOF gather tables in full coordinates
        m = self.members
        self._dofs = np.column_stack(
            [2 * m[:, 0], 2 * m[:, 0] + 1, 2 * m[:, 1], 2 * m[:, 1] + 1]
        )

    @property
    def n_dofs(self):
        return self.kept.size

    def _full_disp(self, u):
        uf = np.zeros(self.full_dim)
        uf[self.kept] = u
        return uf

    def _member_state(self, u):
        uf = self._full_disp(u)
        d = uf[self._dofs]                      # (m, 4)
        c = self.nodes[self.members[:, 1]] - self.nodes[self.members[:, 0]]
        c = c + d[:, 2:] - d[:, :2]             # current chord vectors
        l2 = np.einsum("ij,ij->i", c, c)
        strain = (l2 - self.L0**2) / (2.0 * self.L0**2)
        axial = self.EA * strain
        return c, axial

    def tangent(self, u):
        c, axial = self._member_state(u)
        a = np.concatenate([-c, c], axis=1)     # (m, 4)
        k_mat = (self.EA / self.L0**3)[:, None, None] * a[:, :, None] * a[:, None, :]
        k_geo = (axial / self.L0)[:, None, None] * _H[None, :, :]
        blocks = k_mat + k_geo
        K = np.zeros((self.full_dim, self.full_dim))
        rows = np.repeat(self._dofs, 4, axis=1).ravel()
        cols = np.tile(self._dofs, (1, 4)).ravel()
        np.add.at(K, (rows, cols), blocks.ravel())
        return K[np.ix_(self.kept, self.kept)]

    def internal_force(self, u):
        c, axial = self._member_state(u)
        a = np.concatenate([-c, c], axis=1)
        contrib = (axial / self.L0)[:, None] * a
        g = np.zeros(self.full_dim)
        np.add.at(g, self._dofs.ravel(), contrib.ravel())
        return g[self.kept]

    def load_vector(self):
        f = np.zeros(self.full_dim)
        f[2 * self.crown + 1] = -self.load
        return f[self.kept]


def _fixed_point(model, u_prev, K_prev, df, u_init, tol, max_iters):
    u = u_init.copy()
    A = None
    for _ in range(max_iters):
        A = 0.5 * (model.tangent(u) + K_prev)
        try:
            du = np.linalg.solve(A, df)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"averaged tangent is singular: {e}") from e
        u_new = u_prev + du
        delta = np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), 1e-300)
        u = u_new
        if delta <= tol:
            return u, A, True
    return u, A, False


def _advance(model, u_prev, f_prev, f_next, tol, max_iters, depth, max_bisect):
    K_prev = model.tangent(u_prev)
    df = f_next - f_prev
    # predictor from the previous tangent
    try:
        u_init = u_prev + np.linalg.solve(K_prev, df)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"tangent is singular at step start: {e}") from e
    u, A, ok = _fixed_point(model, u_prev, K_prev, df, u_init, tol, max_iters)
    if ok:
        return u, A
    if depth >= max_bisect:
        raise NumericalError(
            f"fixed point failed to converge after {max_bisect} bisections"
        )
    # halve the increment to manufacture a better starting point, then
    # re-solve the full step so the recorded average matches the schedule
    f_mid = 0.5 * (f_prev + f_next)
    u_mid, _ = _advance(model, u_prev, f_prev, f_mid, tol, max_iters, depth + 1, max_bisect)
    u_guess, _ = _advance(model, u_mid, f_mid, f_next, tol, max_iters, depth + 1, max_bisect)
    u, A, ok = _fixed_point(model, u_prev, K_prev, df, u_guess, tol, max_iters)
    if not ok:
        raise NumericalError("fixed point failed despite bisected initial guess")
    return u, A


def run_nonlinear_fom(model, times, fp_tol=1e-10, max_iters=50, max_bisect=5):
    """March the load ramp and record displacements plus averaged tangents.

    The load is the model's terminal load vector scaled by pseudo-time, so
    times double as the ramp profile.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise DataValidationError("times must hold at least two values")
    if abs(times[0]) > 0 or abs(times[-1] - 1.0) > 1e-12:
        raise DataValidationError("times must run from 0 to 1")
    if np.any(np.diff(times) <= 0):
        raise DataValidationError("times must be strictly increasing")
    n = model.n_dofs
    n_steps = times.size - 1
    f_end = model.load_vector()
    U = np.zeros((n, n_steps + 1))
    F = np.outer(f_end, times)
    mats = []
    for i in range(1, n_steps + 1):
        u, A = _advance(
            model, U[:, i - 1], F[:, i - 1], F[:, i], fp_tol, max_iters, 0, max_bisect
        )
        U[:, i] = u
        mats.append(A)
    return NonlinearTrajectory(
        times=times, displacements=U, loads=F, avg_stiffness=mats
    )

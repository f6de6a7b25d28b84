"""Shared fixtures: small snapshot sets that train in well under a second."""

import numpy as np
import pytest

from romforge import cli, store
from romforge.doe import ParameterSpace, chebyshev_grid
from romforge.fom import TrussArch, assemble_plate, run_nonlinear_fom, solve_linear, time_grid
from romforge.regress import ForestHyperparams
from romforge.runtime import TrainConfig, train_offline


@pytest.fixture(scope="session")
def run_cli():
    """Invoke the command line front end in process; returns the exit code."""

    def _run(*args):
        return cli.main([str(a) for a in args])

    return _run


def _plate_bc(system):
    return {
        "full_dim": system.full_dim,
        "eliminated": [int(i) for i in system.eliminated],
        "dof_kinds": system.dof_kinds,
    }


@pytest.fixture(scope="session")
def plate_space():
    return ParameterSpace(
        ("E", "nu", "t"), [150.0e9, 0.30, 0.002], [250.0e9, 0.40, 0.006]
    )


@pytest.fixture(scope="session")
def plate_manifest(tmp_path_factory, plate_space):
    """Nine plate cases on a 5x5 mesh, written and read back through disk."""
    root = tmp_path_factory.mktemp("plate_snaps")
    entries = []
    bc = None
    for i, p in enumerate(chebyshev_grid(plate_space, 2)):
        params = p.as_dict(plate_space)
        system = assemble_plate(params["E"], params["nu"], params["t"], grid=(5, 5))
        u = solve_linear(system)
        entries.append(
            store.write_entry(root, f"snap_{i:03d}", params, u, system.load,
                              [system.stiffness])
        )
        bc = _plate_bc(system)
    store.write_manifest(
        root,
        store.SnapshotManifest("linear", plate_space, entries, bc),
    )
    return store.read_manifest(root)


@pytest.fixture(scope="session")
def plate_model(plate_manifest):
    config = TrainConfig(
        regressor="pgd", pgd_degrees=2, target_scaler="none",
        ratio_phi=0.0, val_count=2,
    )
    model, report = train_offline(plate_manifest, config, seed=11)
    return model, report


@pytest.fixture(scope="session")
def truss_manifest(tmp_path_factory):
    """One stored truss trajectory: 4 panels, 12 load increments."""
    root = tmp_path_factory.mktemp("truss_snaps")
    E, nu, t = 2.0e11, 0.35, 0.004
    arch = TrussArch(E, nu, t, n_panels=4)
    traj = run_nonlinear_fom(arch, time_grid(12))
    entry = store.write_entry(
        root, "snap_000", {"E": E, "nu": nu, "t": t},
        traj.displacements[:, 1:], traj.loads[:, 1:], traj.avg_stiffness,
        times=traj.times,
    )
    space = ParameterSpace(
        ("E", "nu", "t"),
        [0.999 * E, nu - 1e-3, 0.999 * t],
        [1.001 * E, nu + 1e-3, 1.001 * t],
    )
    bc = {
        "full_dim": arch.full_dim,
        "eliminated": [int(i) for i in arch.eliminated],
        "dof_kinds": arch.dof_kinds,
    }
    store.write_manifest(root, store.SnapshotManifest("nonlinear", space, [entry], bc))
    return store.read_manifest(root)


@pytest.fixture(scope="session")
def truss_model(truss_manifest):
    config = TrainConfig(
        forest=ForestHyperparams(n_estimators=10, min_samples_leaf=2),
        ratio_v=1.0e8, ratio_phi=0.0,
    )
    model, report = train_offline(truss_manifest, config, seed=11)
    return model, report


def rel_l2(ref, pred):
    ref = np.asarray(ref, dtype=float)
    pred = np.asarray(pred, dtype=float)
    return float(np.linalg.norm(pred - ref) / np.linalg.norm(ref))

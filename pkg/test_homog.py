"""Tests for measurements, RPS/GRPS bases and decay diagnostics."""
import numpy as np
import pytest
import scipy.sparse as sp

from coeff.fields import constant_coefficient, trig_coefficient
from fem.assembly import assemble_load, assemble_mass, assemble_stiffness
from fem.norms import error_norms
from fem.solve import solve_dirichlet
from homog.basis import (
    build_basis,
    compute_global_basis,
    compute_local_basis,
    default_layers,
    galerkin_solve,
    identity_basis,
)
from homog.decay import basis_slice, central_measurement, decay_profile, fit_decay_rate
from homog.measurements import MeasurementSet, build_measurements, coarse_dof
from mesh.hierarchy import build_hierarchy


@pytest.fixture(scope="module")
def trig():
    return trig_coefficient(resolution=128)


@pytest.fixture(scope="module")
def setup(trig):
    mesh = build_hierarchy(nc=4, levels=2)
    return mesh, assemble_stiffness(mesh, trig)


def _random_interior(mesh, seed):
    z = np.random.default_rng(seed).normal(size=mesh.n_fine_nodes)
    z[mesh.boundary_mask] = 0.0
    return z


# Measurements


@pytest.mark.parametrize("nc", [2, 4, 32])
def test_measurement_counts(nc):
    mesh = build_hierarchy(nc=nc, levels=1)
    assert build_measurements(mesh, "rps").N == (nc - 1) ** 2 == coarse_dof(nc, "rps")
    assert build_measurements(mesh, "grps").N == 2 * nc**2 == coarse_dof(nc, "grps")


def test_dof_counts_at_nc_32():
    assert coarse_dof(32, "rps") == 961
    assert coarse_dof(32, "grps") == 2048


def test_grps_rows_average_constants(setup):
    mesh, _ = setup
    C = build_measurements(mesh, "grps")
    np.testing.assert_allclose(C.apply(np.ones(mesh.n_fine_nodes)), 1.0, rtol=1e-13)
    # averages of a linear function are its values at the barycenters
    x = mesh.fine_nodes[:, 0]
    np.testing.assert_allclose(C.apply(x), mesh.coarse_barycenters()[:, 0], rtol=1e-12)


def test_rps_rows_pick_nodal_values(setup):
    mesh, _ = setup
    C = build_measurements(mesh, "rps")
    z = _random_interior(mesh, 0)
    np.testing.assert_array_equal(C.apply(z), z[mesh.coarse_to_fine_node[mesh.interior_coarse_nodes]])
    np.testing.assert_array_equal(C.support_map, mesh.interior_coarse_nodes)


def test_unknown_measurement_kind(setup):
    mesh, _ = setup
    with pytest.raises(ValueError):
        build_measurements(mesh, "edges")


# Global basis


@pytest.mark.parametrize("kind", ["rps", "grps"])
def test_global_basis_satisfies_constraints(setup, kind):
    mesh, A = setup
    basis = compute_global_basis(A, build_measurements(mesh, kind))
    assert basis.N == coarse_dof(4, kind)
    assert basis.constraint_defect() <= 1e-8
    assert np.all(basis.energy_norms() > 0)
    assert not np.any(basis.matrix.toarray()[mesh.boundary_mask])


def test_global_rps_basis_matches_dense_kkt():
    mesh = build_hierarchy(nc=2, levels=1)
    A = assemble_stiffness(mesh, constant_coefficient(1.0))
    C = build_measurements(mesh, "rps")
    basis = compute_global_basis(A, C)

    free = mesh.interior_fine_nodes
    A_d = A.full[free][:, free].toarray()
    C_d = C.C[:, free].toarray()
    kkt = np.block([[A_d, C_d.T], [C_d, np.zeros((C.N, C.N))]])
    rhs = np.concatenate([np.zeros(free.size), np.eye(C.N)[:, 0]])
    phi = np.zeros(mesh.n_fine_nodes)
    phi[free] = np.linalg.solve(kkt, rhs)[: free.size]
    np.testing.assert_allclose(basis.vector(0), phi, atol=1e-12)


@pytest.mark.parametrize("kind", ["rps", "grps"])
def test_global_basis_is_energy_optimal(setup, kind):
    mesh, A = setup
    basis = compute_global_basis(A, build_measurements(mesh, kind))
    C = basis.measurements.C
    i = basis.N // 2
    phi = basis.vector(i)
    best = float(phi @ A.full @ phi)
    for seed in range(20):
        r = _random_interior(mesh, seed)
        w = phi + (r - basis.prolong(C @ r))
        np.testing.assert_allclose(C @ w, np.eye(basis.N)[i], atol=1e-10)
        assert float(w @ A.full @ w) >= best - 1e-9


def test_optimal_recovery_split(setup):
    mesh, A = setup
    basis = compute_global_basis(A, build_measurements(mesh, "grps"))
    for seed in range(100):
        z = _random_interior(mesh, seed)
        z_I = basis.interpolant(z)
        total = float(z @ A.full @ z)
        split = float(z_I @ A.full @ z_I) + float((z - z_I) @ A.full @ (z - z_I))
        assert abs(total - split) <= 1e-8 * total


def test_basis_is_orthogonal_to_measurement_kernel(setup):
    mesh, A = setup
    basis = compute_global_basis(A, build_measurements(mesh, "rps"))
    C = basis.measurements.C
    norms = basis.energy_norms()
    for seed in range(10):
        r = _random_interior(mesh, 100 + seed)
        v = r - basis.prolong(C @ r)
        v_norm = np.sqrt(float(v @ A.full @ v))
        coupling = basis.matrix.T @ (A.full @ v)
        assert np.all(np.abs(coupling) <= 1e-8 * norms * v_norm)


def test_global_basis_subset_of_columns(setup):
    mesh, A = setup
    C = build_measurements(mesh, "grps")
    full = compute_global_basis(A, C)
    part = compute_global_basis(A, C, indices=[3, 17], block=1)
    assert part.N == 2
    np.testing.assert_allclose(part.vector(1), full.vector(17), atol=1e-12)
    assert part.constraint_defect() <= 1e-8


def test_measurement_without_interior_support_is_reported(setup):
    mesh, A = setup
    corner = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, mesh.n_fine_nodes))
    boundary_only = MeasurementSet("rps-nodal", corner, np.array([0]), "rps")
    with pytest.raises(ValueError, match="Measurement 0"):
        compute_global_basis(A, boundary_only)


def _with_duplicated_row(C, row):
    stacked = sp.vstack([C.C, C.C[row]]).tocsr()
    return MeasurementSet(C.kind, stacked, np.append(C.support_map, C.support_map[row]), C.basis_kind)


def test_duplicated_measurement_is_reported(setup):
    mesh, A = setup
    C = build_measurements(mesh, "grps")
    doubled = _with_duplicated_row(C, 5)
    with pytest.raises(ValueError, match=rf"Measurement ({5}|{C.N}) .*linearly dependent"):
        compute_global_basis(A, doubled)
    with pytest.raises(ValueError, match="linearly dependent"):
        compute_local_basis(A, doubled, mesh, "grps", 1, indices=[5])


def test_grps_on_one_refinement_level_is_rejected():
    mesh = build_hierarchy(nc=2, levels=1)
    A = assemble_stiffness(mesh, constant_coefficient(1.0))
    C = build_measurements(mesh, "grps")
    with pytest.raises(ValueError):
        compute_global_basis(A, C)
    with pytest.raises(ValueError):
        compute_local_basis(A, C, mesh, "grps", 1)


# Localized basis


@pytest.mark.parametrize("kind", ["rps", "grps"])
@pytest.mark.parametrize("layers", [1, 2])
def test_local_basis_constraints_and_support(setup, kind, layers):
    mesh, A = setup
    basis = compute_local_basis(A, build_measurements(mesh, kind), mesh, kind, layers)
    assert basis.constraint_defect() <= 1e-8
    for i, patch in enumerate(basis.patches):
        support = basis.matrix[:, i].nonzero()[0]
        assert np.all(np.isin(support, patch.interior_fine_dofs))


@pytest.mark.parametrize("kind", ["rps", "grps"])
def test_covering_patches_reproduce_global_basis(setup, kind):
    mesh, A = setup
    C = build_measurements(mesh, kind)
    glob = compute_global_basis(A, C)
    local = compute_local_basis(A, C, mesh, kind, 10)
    assert all(p.covers(mesh) for p in local.patches)
    np.testing.assert_array_less(local.energy_distance(glob), 1e-8 * glob.energy_norms())


def test_truncation_error_is_monotone_in_layers(trig):
    mesh = build_hierarchy(nc=8, levels=2)
    A = assemble_stiffness(mesh, trig)
    C = build_measurements(mesh, "grps")
    glob = compute_global_basis(A, C)
    previous = np.full(C.N, np.inf)
    for layers in range(1, 6):
        dist = compute_local_basis(A, C, mesh, "grps", layers).energy_distance(glob)
        assert np.all(dist <= previous + 1e-10)
        previous = dist


def test_parallel_patch_solves_are_deterministic(setup):
    mesh, A = setup
    C = build_measurements(mesh, "grps")
    serial = compute_local_basis(A, C, mesh, "grps", 1, workers=1)
    threaded = compute_local_basis(A, C, mesh, "grps", 1, workers=4)
    assert (serial.matrix != threaded.matrix).nnz == 0


def test_local_basis_errors(setup):
    mesh, A = setup
    C = build_measurements(mesh, "rps")
    with pytest.raises(ValueError):
        compute_local_basis(A, C, mesh, "rps", 0)
    with pytest.raises(ValueError):
        compute_local_basis(A, C, mesh, "grps", 1)


def test_default_layers():
    assert default_layers(8) == 6
    assert default_layers(16) == 8
    assert default_layers(32, factor=1.0) == 5
    assert default_layers(2) == 2


def test_build_basis_dispatch(setup):
    mesh, A = setup
    C = build_measurements(mesh, "rps")
    assert build_basis(A, C, mesh).is_global
    assert build_basis(A, C, mesh, layers=2).layers == 2


# Coarse solves


def test_identity_basis_galerkin_is_fine_solve(setup):
    mesh, A = setup
    load = assemble_load(mesh, 1.0)
    np.testing.assert_allclose(galerkin_solve(identity_basis(mesh, A), A, load), solve_dirichlet(A, load), atol=1e-12)


@pytest.mark.slow
def test_localized_galerkin_converges_first_order(trig):
    errors, sizes = [], []
    for nc in (4, 8, 16):
        mesh = build_hierarchy(nc=nc, levels=int(np.log2(64 // nc)))
        A = assemble_stiffness(mesh, trig)
        laplace = assemble_stiffness(mesh, 1.0)
        Q = assemble_mass(mesh)
        load = assemble_load(mesh, 1.0, Q)
        z = solve_dirichlet(A, load)
        basis = compute_local_basis(A, build_measurements(mesh, "rps"), mesh, "rps", default_layers(nc))
        z_H = galerkin_solve(basis, A, load)
        errors.append(error_norms(z, z_H, mesh, laplace, Q)[1])
        sizes.append(mesh.H)
    rate = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert rate >= 0.8


# Decay diagnostics


def test_decay_profile_end_points(setup):
    mesh, A = setup
    C = build_measurements(mesh, "rps")
    center = central_measurement(C, mesh)
    basis = compute_global_basis(A, C, indices=[center])
    profile = decay_profile(basis, 0, mesh)
    assert profile[0, 0] == 0.0
    assert profile[0, 1] == pytest.approx(1.0)
    assert profile[-1, 0] >= mesh.domain.diameter
    assert profile[-1, 1] == 0.0
    assert np.all(np.diff(profile[:, 1]) <= 0)


def test_decay_profile_strictly_decreasing_for_constant_coefficient():
    mesh = build_hierarchy(nc=8, levels=2)
    A = assemble_stiffness(mesh, 1.0)
    C = build_measurements(mesh, "grps")
    basis = compute_global_basis(A, C, indices=[central_measurement(C, mesh)])
    fractions = decay_profile(basis, 0, mesh)[:, 1]
    positive = fractions > 0
    assert np.all(fractions[:-1][positive[:-1]] > fractions[1:][positive[:-1]])


def test_central_measurement_positions(setup):
    mesh, _ = setup
    rps = build_measurements(mesh, "rps")
    node = rps.support_map[central_measurement(rps, mesh)]
    np.testing.assert_allclose(mesh.coarse_nodes[node], [0.5, 0.5])
    grps = build_measurements(mesh, "grps")
    tri = grps.support_map[central_measurement(grps, mesh)]
    assert np.linalg.norm(mesh.coarse_barycenters()[tri] - 0.5) < mesh.H


def test_fit_decay_rate_recovers_exponential():
    r = np.linspace(0.0, 1.0, 11)
    profile = np.column_stack([r, np.exp(1.0 - 2.0 * r)])
    alpha, beta, r2 = fit_decay_rate(profile, 0.1, 0.9)
    assert alpha == pytest.approx(1.0)
    assert beta == pytest.approx(2.0)
    assert r2 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_decay_rate(profile, 2.0, 3.0)


def test_basis_slice_through_center(setup):
    mesh, A = setup
    C = build_measurements(mesh, "rps")
    basis = compute_global_basis(A, C, indices=[central_measurement(C, mesh)])
    data = basis_slice(basis, 0, mesh)
    assert data.shape == (mesh.fine_nx + 1, 3)
    assert np.all(np.diff(data[:, 0]) > 0)
    middle = np.argmin(np.abs(data[:, 0] - 0.5))
    assert data[middle, 1] == pytest.approx(1.0)
    assert data[middle, 2] == pytest.approx(0.0, abs=1e-12)
    assert np.isneginf(data[0, 2])


@pytest.mark.slow
def test_central_grps_basis_decays_exponentially(trig):
    mesh = build_hierarchy(nc=16, levels=2)
    A = assemble_stiffness(mesh, trig)
    C = build_measurements(mesh, "grps")
    center = central_measurement(C, mesh)
    glob = compute_global_basis(A, C, indices=[center])

    _, beta, r2 = fit_decay_rate(decay_profile(glob, 0, mesh), 2 * mesh.H, 8 * mesh.H)
    assert beta > 0
    assert r2 >= 0.9

    distance = {
        layers: compute_local_basis(A, C, mesh, "grps", layers, indices=[center]).energy_distance(glob)[0]
        for layers in range(1, 8)
    }
    for layers in (1, 3, 5):
        assert distance[layers] >= 2.0 * distance[layers + 2]

import numpy as np
import pytest

from fracflow import bc as bcs
from fracflow import flow as flo
from fracflow import mesh as msh
from fracflow.errors import SingularSystemError


def fracture_free(nx, ny, lx=1.0, ly=1.0):
    return msh.build_mixed_dim_mesh(msh.build_matrix_grid(nx, ny, lx, ly), [])


def steady_solve(mesh, k, kg, kappa, bc, f=0.0, f_gamma=0.0):
    n_m = mesh.n_matrix_cells
    n_f = mesh.n_fracture_cells
    phi = np.full(n_m, 0.2)
    eps = np.full(n_f, 1e-3)
    system = flo.assemble_flow(mesh, phi, phi, eps, eps, k, kg, kappa,
                               1.0, bc, f=f, f_gamma=f_gamma)
    return system, flo.solve_flow(system)


def pressure_drop_bc(p_left=1.0, p_right=0.0):
    return bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=p_left),
        right=bcs.EdgeBc(bcs.PRESSURE, p=p_right),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )


@pytest.mark.parametrize("nx,ny", [(8, 8), (64, 64)])
def test_linear_patch_fracture_free(nx, ny):
    mesh = fracture_free(nx, ny)
    k = np.full(mesh.n_matrix_cells, 2.5e-12)
    _, state = steady_solve(mesh, k, np.empty(0), np.empty(0),
                            pressure_drop_bc())
    exact = 1.0 - mesh.matrix.cell_centers[:, 0]
    assert np.max(np.abs(state.p - exact)) < 1e-12
    # the reconstructed x-flux is uniform and matches Darcy's law
    grid = mesh.matrix
    vfaces = np.flatnonzero(grid.face_axis == 0)
    v = state.flux[vfaces] / grid.face_areas[vfaces]
    assert np.allclose(v, 2.5e-12, rtol=1e-10)


def test_invisible_fracture_keeps_linear_field():
    # fracture aligned with the flow, properties matching the matrix
    nx, ny = 16, 8
    k_val = 1e-12
    grid = msh.build_matrix_grid(nx, ny, 1.0, 1.0)
    path = msh.fracture_face_path(grid, "horizontal", 0.5, 0.0, 1.0)
    mesh = msh.build_mixed_dim_mesh(grid, [path])
    n_f = mesh.n_fracture_cells
    k = np.full(mesh.n_matrix_cells, k_val)
    kg = np.full(n_f, k_val)
    kappa = np.full(n_f, k_val)
    bc = bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=1.0, frac_p=1.0),
        right=bcs.EdgeBc(bcs.PRESSURE, p=0.0, frac_p=0.0),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )
    _, state = steady_solve(mesh, k, kg, kappa, bc)
    exact = 1.0 - mesh.matrix.cell_centers[:, 0]
    exact_g = 1.0 - mesh.fractures[0].cell_centers[:, 0]
    assert np.max(np.abs(state.p - exact)) < 1e-10
    assert np.max(np.abs(state.p_gamma - exact_g)) < 1e-10
    # no exchange when matrix and fracture pressures agree
    assert np.max(np.abs(state.flux_coupling)) < 1e-22


def test_system_matrix_symmetric():
    grid = msh.build_matrix_grid(8, 8, 1.0, 1.0)
    path = msh.fracture_face_path(grid, "vertical", 0.5, 0.25, 0.75)
    mesh = msh.build_mixed_dim_mesh(grid, [path])
    k = np.linspace(1e-12, 5e-12, mesh.n_matrix_cells)
    kg = np.full(mesh.n_fracture_cells, 1e-8)
    kappa = np.full(mesh.n_fracture_cells, 1e-8)
    system, _ = steady_solve(mesh, k, kg, kappa, pressure_drop_bc())
    diff = (system.A - system.A.T).tocoo()
    assert np.max(np.abs(diff.data)) if diff.nnz else 0.0 < 1e-25


def test_vanishing_aperture_decouples_fracture():
    # flow parallel to the fracture: with a vanishing aperture the fracture
    # carries and exchanges nothing, so the matrix sees no fracture at all
    grid = msh.build_matrix_grid(16, 16, 1.0, 1.0)
    path = msh.fracture_face_path(grid, "horizontal", 0.5, 0.0, 1.0)
    mesh = msh.build_mixed_dim_mesh(grid, [path])
    nf = mesh.n_fracture_cells
    k = np.full(mesh.n_matrix_cells, 1e-12)
    bc = pressure_drop_bc()

    mesh0 = fracture_free(16, 16)
    _, ref = steady_solve(mesh0, k, np.empty(0), np.empty(0), bc)

    eps = np.full(nf, 1e-30)
    kg, kappa = 1e-8 * eps ** 2 / 1e-3, 1e-8 * eps ** 2 / 1e-3
    phi = np.full(mesh.n_matrix_cells, 0.2)
    system = flo.assemble_flow(mesh, phi, phi, eps, eps, k, kg, kappa,
                               1.0, bc)
    state = flo.solve_flow(system)
    assert np.max(np.abs(state.p - ref.p)) < 1e-8
    # fracture cells carry no flow at all
    assert np.max(np.abs(state.flux_coupling)) < 1e-30


def test_coupling_flux_examples():
    assert flo.coupling_flux(2.0, 1.0, kappa=3.0, eps=0.5) == pytest.approx(
        2 * 3.0 / 0.5 * 1.0)
    assert flo.coupling_flux(1.0, 1.0, kappa=3.0, eps=0.5) == 0.0
    assert flo.coupling_flux(2.0, 1.0, kappa=3.0, eps=0.0) == 0.0


def test_incompatible_pure_neumann_raises():
    mesh = fracture_free(4, 4)
    k = np.full(16, 1e-12)
    phi = np.full(16, 0.2)
    with pytest.raises(SingularSystemError):
        flo.assemble_flow(mesh, phi, phi, np.empty(0), np.empty(0),
                          k, np.empty(0), np.empty(0), 1.0,
                          bcs.no_flow_box(), f=1.0)


def test_compatible_pure_neumann_gauged():
    mesh = fracture_free(4, 4)
    k = np.full(16, 1e-12)
    phi = np.full(16, 0.2)
    # source and sink of equal strength: compatible, solvable up to a gauge
    f = np.zeros(16)
    f[0] = 1.0
    f[15] = -1.0
    system = flo.assemble_flow(mesh, phi, phi, np.empty(0), np.empty(0),
                               k, np.empty(0), np.empty(0), 1.0,
                               bcs.no_flow_box(), f=f)
    state = flo.solve_flow(system)
    assert state.p[0] == pytest.approx(0.0, abs=1e-6 * np.max(np.abs(state.p)))
    assert np.all(np.isfinite(state.p))


def test_global_flow_balance():
    grid = msh.build_matrix_grid(12, 6, 1.0, 0.5)
    path = msh.fracture_face_path(grid, "horizontal", 0.25, 0.0, 1.0)
    mesh = msh.build_mixed_dim_mesh(grid, [path])
    k = np.full(mesh.n_matrix_cells, 1e-12)
    kg = np.full(mesh.n_fracture_cells, 1e-8)
    kappa = np.full(mesh.n_fracture_cells, 1e-8)
    bc = bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=2.0),
        right=bcs.EdgeBc(bcs.FLUX, q=1e-12),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )
    _, state = steady_solve(mesh, k, kg, kappa, bc)
    n_m, n_f = mesh.n_matrix_cells, mesh.n_fracture_cells
    phi = np.full(n_m, 0.2)
    eps = np.full(n_f, 1e-3)
    bal = flo.flow_balance(mesh, state, phi, phi, eps, eps, 1.0)
    scale = max(bal["influx"], bal["outflux"])
    assert abs(bal["residual"]) < 1e-10 * scale


def test_clogged_cells_pinned():
    mesh = fracture_free(4, 1)
    k = np.array([1e-12, 1e-12, 0.0, 0.0])
    _, state = steady_solve(mesh, k, np.empty(0), np.empty(0),
                            pressure_drop_bc())
    assert 3 in state.pinned
    assert state.p[3] == 0.0
    # the open cells see the left pressure with no throughflow
    assert np.max(np.abs(state.flux)) < 1e-25
    assert np.allclose(state.p[:2], 1.0)


def test_fracture_tip_flux_condition():
    grid = msh.build_matrix_grid(8, 4, 1.0, 1.0)
    path = msh.fracture_face_path(grid, "horizontal", 0.5, 0.0, 1.0)
    mesh = msh.build_mixed_dim_mesh(grid, [path])
    k = np.full(mesh.n_matrix_cells, 1e-12)
    kg = np.full(mesh.n_fracture_cells, 1e-8)
    kappa = np.full(mesh.n_fracture_cells, 1e-8)
    qtip = 3e-12
    bc = bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=1.0, frac_p=1.0),
        right=bcs.EdgeBc(bcs.FLUX, q=1e-12, frac_q=qtip),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )
    _, state = steady_solve(mesh, k, kg, kappa, bc)
    fg = state.flux_gamma[0]
    assert fg[-1] == pytest.approx(qtip)

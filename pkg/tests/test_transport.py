import numpy as np
import pytest

from fracflow import bc as bcs
from fracflow import flow as flo
from fracflow import mesh as msh
from fracflow import transport as trp
from fracflow.chemistry import ChemParams


def make_params(**kw):
    kw.setdefault("k_gamma_ref", 1e-8)
    kw.setdefault("kappa_ref", 1e-8)
    kw.setdefault("eps_ref", 1e-3)
    return ChemParams(**kw)


def flow_through(nx, ny, paths=None, d=0.0, lx=1.0, ly=1.0, u_in=1.0):
    grid = msh.build_matrix_grid(nx, ny, lx, ly)
    mesh = msh.build_mixed_dim_mesh(grid, paths or [])
    params = make_params(d=d, d_gamma=1e-9, delta=1e-9)
    n_m, n_f = mesh.n_matrix_cells, mesh.n_fracture_cells
    phi = np.full(n_m, 0.2)
    eps = np.full(n_f, 1e-3)
    k = np.full(n_m, 1e-12)
    kg = np.full(n_f, 1e-8)
    kappa = np.full(n_f, 1e-8)
    bc = bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=1.0, u=u_in, frac_p=1.0, frac_u=u_in),
        right=bcs.EdgeBc(bcs.PRESSURE, p=0.0, frac_p=0.0),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )
    system = flo.assemble_flow(mesh, phi, phi, eps, eps, k, kg, kappa,
                               1.0, bc)
    fstate = flo.solve_flow(system)
    return mesh, params, phi, eps, bc, fstate


def test_upwind_value_examples():
    assert trp.upwind_value(2.0, 3.0, 7.0) == 3.0
    assert trp.upwind_value(-2.0, 3.0, 7.0) == 7.0
    assert trp.upwind_value(0.0, 3.0, 7.0) == 5.0


def test_constant_state_preserved():
    mesh, params, phi, eps, bc, fstate = flow_through(10, 4, d=1e-12)
    state = trp.TransportState(
        u=np.ones(mesh.n_matrix_cells), w=np.zeros(mesh.n_matrix_cells),
        u_gamma=np.empty(0), w_gamma=np.empty(0),
    )
    out = trp.transport_step(mesh, fstate, state, phi, eps, params, 0.5, bc)
    assert np.max(np.abs(out.u - 1.0)) < 1e-12


def test_constant_state_preserved_with_fracture():
    grid_paths = lambda g: [msh.fracture_face_path(g, "horizontal", 0.5,
                                                   0.0, 1.0)]
    grid = msh.build_matrix_grid(10, 4, 1.0, 1.0)
    mesh, params, phi, eps, bc, fstate = flow_through(
        10, 4, paths=grid_paths(grid), d=1e-12)
    n_m, n_f = mesh.n_matrix_cells, mesh.n_fracture_cells
    state = trp.TransportState(
        u=np.ones(n_m), w=np.zeros(n_m),
        u_gamma=np.ones(n_f), w_gamma=np.zeros(n_f),
    )
    out = trp.transport_step(mesh, fstate, state, phi, eps, params, 0.5, bc)
    assert np.max(np.abs(out.u - 1.0)) < 1e-12
    assert np.max(np.abs(out.u_gamma - 1.0)) < 1e-12


def test_implicit_upwind_max_principle():
    mesh, params, phi, eps, bc, fstate = flow_through(20, 8, d=0.0, u_in=2.0)
    rng_u = np.linspace(0.0, 1.0, mesh.n_matrix_cells)  # deterministic spread
    state = trp.TransportState(
        u=rng_u.copy(), w=np.zeros_like(rng_u),
        u_gamma=np.empty(0), w_gamma=np.empty(0),
    )
    hi = 2.0
    for _ in range(50):
        state = trp.transport_step(mesh, fstate, state, phi, eps, params,
                                   5e9, bc)
        assert np.all(state.u >= -1e-14)
        assert np.all(state.u <= hi + 1e-12)
    # eventually the inflow value fills the domain
    assert np.min(state.u) > 1.5


def test_solute_mass_balance_frozen_structure():
    mesh, params, phi, eps, bc, fstate = flow_through(16, 4, d=1e-12)
    n_m = mesh.n_matrix_cells
    state = trp.TransportState(
        u=np.zeros(n_m), w=np.zeros(n_m),
        u_gamma=np.empty(0), w_gamma=np.empty(0),
    )
    vol = mesh.matrix.cell_volumes
    dt = 1e9
    for _ in range(5):
        new = trp.transport_step(mesh, fstate, state, phi, eps, params,
                                 dt, bc)
        dm = np.sum(phi * (new.u - state.u) * vol)
        assert dm == pytest.approx(
            (new.solute_in - new.solute_out) * dt, rel=1e-10, abs=1e-22)
        state = new


def test_occluded_cells_frozen():
    grid = msh.build_matrix_grid(6, 1, 1.0, 1.0)
    mesh = msh.build_mixed_dim_mesh(grid, [])
    params = make_params(d=0.0)
    phi = np.full(6, 0.2)
    phi[3] = 0.0
    k = np.full(6, 1e-12)
    k[3] = 0.0
    bc = bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=1.0, u=1.0),
        right=bcs.EdgeBc(bcs.PRESSURE, p=0.0),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )
    system = flo.assemble_flow(mesh, phi, phi, np.empty(0), np.empty(0),
                               k, np.empty(0), np.empty(0), 1.0, bc)
    fstate = flo.solve_flow(system)
    u0 = np.array([0.1, 0.2, 0.3, 0.7, 0.5, 0.6])
    state = trp.TransportState(u=u0.copy(), w=np.zeros(6),
                               u_gamma=np.empty(0), w_gamma=np.empty(0))
    out = trp.transport_step(mesh, fstate, state, phi, np.empty(0), params,
                             1.0, bc)
    assert 3 in out.frozen
    assert out.u[3] == 0.7  # stored solute stays in place


def test_diffusion_operator_second_order():
    # apply the assembled diffusion operator to u = cos(pi x) on a strip and
    # compare against the exact cell averages of -(phi d u')'
    params = make_params(d=1e-9)
    errs = []
    for nx in (32, 64, 128):
        grid = msh.build_matrix_grid(nx, 1, 1.0, 1.0 / nx)
        mesh = msh.build_mixed_dim_mesh(grid, [])
        phi = np.full(nx, 0.2)
        zero_flow = flo.FlowState(
            p=np.zeros(nx), p_gamma=np.empty(0),
            flux=np.zeros(grid.n_faces), flux_gamma=[],
            flux_coupling=np.empty((0, 2)),
        )
        state = trp.TransportState(u=np.zeros(nx), w=np.zeros(nx),
                                   u_gamma=np.empty(0), w_gamma=np.empty(0))
        dt = 1.0
        system = trp.assemble_transport(mesh, zero_flow, state, phi,
                                        np.empty(0), params, dt,
                                        bcs.no_flow_box())
        xc = grid.cell_centers[:, 0]
        u_exact = np.cos(np.pi * xc)
        storage = phi * grid.cell_volumes / dt
        applied = system.A @ u_exact - storage * u_exact
        # exact cell average of -(phi d u')' = phi d pi^2 cos over the cell
        xe = grid.x_edges
        avg = (np.sin(np.pi * xe[1:]) - np.sin(np.pi * xe[:-1])) / np.pi
        target = 0.2 * params.d * np.pi ** 2 * avg * (1.0 / nx)
        errs.append(np.linalg.norm(applied - target)
                    / np.linalg.norm(target))
    order1 = np.log2(errs[0] / errs[1])
    order2 = np.log2(errs[1] / errs[2])
    assert order1 > 1.9
    assert order2 > 1.9


def test_cfl_bound_uniform_flow():
    mesh, params, phi, eps, bc, fstate = flow_through(10, 1, d=0.0)
    bound = trp.cfl_bound(mesh, fstate, phi, eps)
    # uniform velocity q: bound = phi * h / q
    grid = mesh.matrix
    q = fstate.flux[grid.vertical_face(1, 0)] / grid.face_areas[0]
    assert bound == pytest.approx(0.2 * 0.1 / q, rel=1e-12)


def test_precipitate_step_only_touches_reaction():
    params = make_params(lam=1.0, zeta=2)
    state = trp.TransportState(
        u=np.array([2.0, 0.5]), w=np.array([0.0, 1.0]),
        u_gamma=np.array([1.5]), w_gamma=np.array([0.2]),
    )
    phi = np.array([0.2, 0.2])
    eps = np.array([1e-3])
    out = trp.precipitate_step(state, phi, eps, params, 0.1)
    assert out.u[0] < 2.0 and out.w[0] > 0.0          # precipitating
    assert out.u[1] > 0.5 and out.w[1] < 1.0          # dissolving
    assert out.u_gamma[0] < 1.5
    np.testing.assert_allclose(out.u + out.w, state.u + state.w, rtol=0,
                               atol=4e-16)

import numpy as np
import pytest

from fracflow import bc as bcs
from fracflow import coupler
from fracflow import flow as flo
from fracflow import mesh as msh
from fracflow import transport as trp
from fracflow.chemistry import ChemParams


def make_mesh(nx=16, ny=8, with_fracture=True):
    grid = msh.build_matrix_grid(nx, ny, 1.0, 0.5)
    paths = []
    if with_fracture:
        paths.append(msh.fracture_face_path(grid, "horizontal", 0.25,
                                            0.0, 1.0))
    return msh.build_mixed_dim_mesh(grid, paths)


def make_params(**kw):
    kw.setdefault("k_gamma_ref", 1e-8)
    kw.setdefault("kappa_ref", 1e-8)
    kw.setdefault("eps_ref", 1e-2)
    kw.setdefault("d", 1e-13)
    kw.setdefault("d_gamma", 1e-9)
    kw.setdefault("delta", 1e-9)
    return ChemParams(**kw)


def drop_bc(u_in=2.0):
    return bcs.BcSet(
        left=bcs.EdgeBc(bcs.PRESSURE, p=1.0, u=u_in),
        right=bcs.EdgeBc(bcs.PRESSURE, p=0.0),
        bottom=bcs.EdgeBc(bcs.NOFLOW),
        top=bcs.EdgeBc(bcs.NOFLOW),
    )


def test_initial_state_shapes():
    mesh = make_mesh()
    params = make_params()
    state = coupler.initial_state(mesh, params, u0=1.0, w0=0.5)
    assert state.phi.shape == (mesh.n_matrix_cells,)
    assert state.eps.shape == (mesh.n_fracture_cells,)
    assert np.all(state.phi == params.phi_ref)
    assert np.all(state.eps == params.eps_ref)
    assert np.all(state.transport.u == 1.0)
    assert np.all(state.transport.w == 0.5)


def test_inert_advance_equals_plain_transport():
    # lam = 0, eta = 0: the coupled step is exactly flow + transport
    mesh = make_mesh()
    params = make_params(lam=0.0)
    bc = drop_bc()
    state = coupler.initial_state(mesh, params, u0=0.0)
    new = coupler.advance(mesh, state, params, bc, dt=1.0)

    system = flo.assemble_flow(
        mesh, state.phi, state.phi, state.eps, state.eps,
        state.k, state.k_gamma, state.kappa, 1.0, bc,
    )
    fstate = flo.solve_flow(system)
    tstate = trp.transport_step(mesh, fstate, state.transport, state.phi,
                                state.eps, params, 1.0, bc)
    assert np.array_equal(new.transport.u, tstate.u)
    assert np.array_equal(new.flow.p, fstate.p)
    assert np.array_equal(new.phi, state.phi)
    assert np.array_equal(new.eps, state.eps)


def test_equilibrium_is_stationary():
    mesh = make_mesh()
    params = make_params(lam=1.0, zeta=2, eta=0.1, eta_gamma=0.1)
    bc = drop_bc(u_in=1.0)
    state = coupler.initial_state(mesh, params, u0=1.0, w0=0.3)
    for _ in range(3):
        state = coupler.advance(mesh, state, params, bc, dt=1.0)
    assert np.max(np.abs(state.transport.u - 1.0)) < 1e-12
    assert np.max(np.abs(state.transport.w - 0.3)) < 1e-12
    assert np.max(np.abs(state.phi - params.phi_ref)) < 1e-14


def test_ledger_closes_each_step():
    mesh = make_mesh()
    params = make_params(lam=1.0, zeta=2, eta=0.05, eta_gamma=0.2)
    bc = drop_bc(u_in=2.0)
    state = coupler.initial_state(mesh, params, u0=1.0, w0=0.1,
                                  u_gamma0=1.0, w_gamma0=0.1)
    for _ in range(10):
        state = coupler.advance(mesh, state, params, bc, dt=1.0)
        ledger = state.diagnostics["ledger"]
        scale = max(ledger["mass_u"] + ledger["mass_w"], 1e-300)
        assert abs(ledger["residual"]) < 1e-10 * scale


def test_fixed_point_approaches_lagged_as_dt_shrinks():
    # the one-step lag of the pore-volume source is an O(dt) splitting
    # error, so the two couplings must converge to each other under
    # dt refinement
    mesh = make_mesh(nx=8, ny=4)
    params = make_params(lam=1.0, zeta=2, eta=0.05, eta_gamma=0.2)
    bc = drop_bc()

    def gap(dt, steps):
        s_lag = coupler.initial_state(mesh, params, u0=1.5, w0=0.1,
                                      u_gamma0=1.5, w_gamma0=0.1)
        s_fp = coupler.initial_state(mesh, params, u0=1.5, w0=0.1,
                                     u_gamma0=1.5, w_gamma0=0.1)
        for _ in range(steps):
            s_lag = coupler.advance(mesh, s_lag, params, bc, dt)
            s_fp = coupler.advance(mesh, s_fp, params, bc, dt,
                                   fixed_point=True)
        return np.max(np.abs(s_lag.transport.u - s_fp.transport.u))

    g1 = gap(2e-2, 5)
    g2 = gap(1e-2, 10)
    assert g2 < 0.75 * g1


def test_fixed_point_nonconvergence_raises():
    mesh = make_mesh(nx=8, ny=4)
    params = make_params(lam=1.0, zeta=2, eta=10.0, eta_gamma=10.0)
    bc = drop_bc(u_in=3.0)
    state = coupler.initial_state(mesh, params, u0=3.0, w0=0.0,
                                  u_gamma0=3.0, w_gamma0=0.0)
    with pytest.raises(coupler.FixedPointError):
        coupler.advance(mesh, state, params, bc, dt=1.0, fixed_point=True,
                        fp_tol=1e-16, fp_maxit=2)


def test_total_masses_weighting():
    mesh = make_mesh(nx=2, ny=2, with_fracture=False)
    params = make_params()
    state = coupler.initial_state(mesh, params, u0=2.0, w0=1.0)
    mu, mw = coupler.total_masses(mesh, state.transport, state.phi,
                                  state.eps)
    # 4 cells of volume 0.125, phi = 0.2
    assert mu == pytest.approx(0.2 * 2.0 * 0.5)
    assert mw == pytest.approx(0.2 * 1.0 * 0.5)


def test_run_zero_steps(tmp_path):
    from conftest import config_text
    from fracflow import config as cfg
    text = config_text(time={"t_end": 0.0, "dt": 1.0},
                       output={"directory": str(tmp_path)})
    config = cfg.parse_config(text)
    report = coupler.run(config)
    assert report["steps"] == 0
    csv = tmp_path / "run_timeseries.csv"
    assert csv.exists()
    lines = csv.read_text().strip().splitlines()
    assert len(lines) == 2  # header plus the t = 0 row


def test_run_enforce_cfl_aborts(tmp_path):
    from conftest import config_text
    from fracflow import config as cfg
    from fracflow.errors import FracflowError
    text = config_text(
        time={"t_end": 1e12, "dt": 1e12},
        flags={"enforce_cfl": "true"},
        output={"directory": str(tmp_path), "write_vtk": "false"},
        chem={"d": 1e-13},
    )
    config = cfg.parse_config(text)
    with pytest.raises(FracflowError, match="positivity bound"):
        coupler.run(config)

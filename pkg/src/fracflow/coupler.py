"""Time loop over the coupled flow / transport / chemistry system.

Each step runs flow, then the implicit transport substep, then the
pointwise reaction, then the porosity/aperture and permeability closures.
In the default (lagged) mode the pore-volume time derivatives in the flow
equation come from the previous step's chemistry; the optional fixed-point
mode re-iterates the whole sequence with the current step's update until
the pressure and solute fields stop changing.
"""

import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import chemistry as chem
from . import flow as flo
from . import transport as trp
from .errors import FracflowError


@dataclass
class TimeControls:
    t_end: float = 0.0
    dt: float = 1.0
    fixed_point: bool = False
    fp_tol: float = 1e-8
    fp_maxit: int = 50
    output_every: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")


@dataclass
class SimState:
    time: float
    step: int
    transport: trp.TransportState
    flow: flo.FlowState
    phi: np.ndarray
    eps: np.ndarray
    k: np.ndarray
    k_gamma: np.ndarray
    kappa: np.ndarray
    phi_prev: np.ndarray
    eps_prev: np.ndarray
    diagnostics: dict = field(default_factory=dict)


class FixedPointError(FracflowError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"fixed-point coupling did not converge after {iterations} "
            f"iterations, last residual {residual:.3e}"
        )


def initial_state(mesh, params, u0=0.0, w0=0.0, u_gamma0=None, w_gamma0=None):
    """SimState at t = 0 with reference pore structure and no flow yet."""
    n_m = mesh.n_matrix_cells
    n_f = mesh.n_fracture_cells
    u = np.full(n_m, float(u0))
    w = np.full(n_m, float(w0))
    ug = np.full(n_f, float(u0 if u_gamma0 is None else u_gamma0))
    wg = np.full(n_f, float(w0 if w_gamma0 is None else w_gamma0))
    phi = np.full(n_m, params.phi_ref)
    eps = np.full(n_f, params.eps_ref)
    k = chem.matrix_permeability(phi, params)
    if n_f:
        k_gamma, kappa = chem.fracture_permeability(eps, params)
    else:
        k_gamma = np.empty(0)
        kappa = np.empty(0)
    transport = trp.TransportState(u=u, w=w, u_gamma=ug, w_gamma=wg)
    return SimState(
        time=0.0, step=0, transport=transport, flow=None,
        phi=phi, eps=eps, k=np.atleast_1d(k),
        k_gamma=np.atleast_1d(k_gamma), kappa=np.atleast_1d(kappa),
        phi_prev=phi.copy(), eps_prev=eps.copy(),
    )


def _substep(mesh, state, params, bc, dt, f, f_gamma, phi_old, phi_new,
             eps_old, eps_new, diff_field=None):
    """One pass of flow -> transport -> reaction -> closures.

    The (old, new) pore-volume pairs form the backward difference entering
    the flow right-hand side: the previous step's change in lagged mode, the
    current iterate's change in fixed-point mode.
    """
    system = flo.assemble_flow(
        mesh, phi_old, phi_new, eps_old, eps_new,
        state.k, state.k_gamma, state.kappa, dt, bc, f=f, f_gamma=f_gamma,
    )
    fstate = flo.solve_flow(system)
    tstate = trp.transport_step(mesh, fstate, state.transport, state.phi,
                                state.eps, params, dt, bc,
                                diff_field=diff_field)
    reacted = trp.precipitate_step(tstate, state.phi, state.eps, params, dt)
    dw = reacted.w - tstate.w
    dwg = reacted.w_gamma - tstate.w_gamma
    phi_next = chem.porosity_update(state.phi, dw, params)
    eps_next = chem.aperture_update(state.eps, dwg, params)
    return fstate, reacted, np.atleast_1d(phi_next), np.atleast_1d(eps_next)


def advance(mesh, state, params, bc, dt, f=0.0, f_gamma=0.0,
            fixed_point=False, fp_tol=1e-8, fp_maxit=50, diff_field=None):
    """Advance the coupled state by one time step of size dt."""
    if fixed_point:
        phi_new, eps_new = state.phi, state.eps
        last = None
        residual = np.inf
        for it in range(fp_maxit):
            fstate, reacted, phi_next, eps_next = _substep(
                mesh, state, params, bc, dt, f, f_gamma,
                state.phi, phi_new, state.eps, eps_new,
                diff_field=diff_field,
            )
            if last is not None:
                du = _rel_change(reacted.u, last[1].u)
                dp = _rel_change(fstate.p, last[0].p)
                residual = max(du, dp)
                if residual < fp_tol:
                    break
            last = (fstate, reacted)
            phi_new, eps_new = phi_next, eps_next
        else:
            raise FixedPointError(residual, fp_maxit)
    else:
        fstate, reacted, phi_next, eps_next = _substep(
            mesh, state, params, bc, dt, f, f_gamma,
            state.phi_prev, state.phi, state.eps_prev, state.eps,
            diff_field=diff_field,
        )

    k = np.atleast_1d(chem.matrix_permeability(phi_next, params))
    if mesh.n_fracture_cells:
        k_gamma, kappa = chem.fracture_permeability(eps_next, params)
        k_gamma = np.atleast_1d(k_gamma)
        kappa = np.atleast_1d(kappa)
    else:
        k_gamma = np.empty(0)
        kappa = np.empty(0)

    new_state = SimState(
        time=state.time + dt,
        step=state.step + 1,
        transport=reacted,
        flow=fstate,
        phi=phi_next,
        eps=eps_next,
        k=k,
        k_gamma=k_gamma,
        kappa=kappa,
        phi_prev=state.phi.copy(),
        eps_prev=state.eps.copy(),
    )
    new_state.diagnostics = {
        "ledger": mass_ledger(mesh, state, new_state, dt),
        "min_phi": float(phi_next.min()) if len(phi_next) else 1.0,
        "min_eps": float(eps_next.min()) if len(eps_next) else 0.0,
        "pinned_flow_cells": list(map(int, fstate.pinned)),
        "frozen_transport_cells": list(map(int, reacted.frozen)),
        "flow_residual": fstate.residual,
    }
    return new_state


def _rel_change(a, b):
    scale = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / scale


def total_masses(mesh, transport, phi, eps):
    """Pore-volume weighted solute and precipitate masses."""
    vol = mesh.matrix.cell_volumes
    mass_u = float(np.sum(phi * transport.u * vol))
    mass_w = float(np.sum(phi * transport.w * vol))
    if mesh.n_fracture_cells:
        lens = np.concatenate([fr.cell_lengths for fr in mesh.fractures])
        mass_u += float(np.sum(eps * transport.u_gamma * lens))
        mass_w += float(np.sum(eps * transport.w_gamma * lens))
    return mass_u, mass_w


def mass_ledger(mesh, old_state, new_state, dt):
    """Per-step bookkeeping of the phi/eps-weighted solute+precipitate mass.

    The closure residual compares the actual mass change against boundary
    exchange plus the storage-coefficient change from the evolving pore
    structure; it should sit at solver tolerance.
    """
    mu0, mw0 = total_masses(mesh, old_state.transport, old_state.phi,
                            old_state.eps)
    mu1, mw1 = total_masses(mesh, new_state.transport, new_state.phi,
                            new_state.eps)
    t = new_state.transport
    inflow = t.solute_in * dt
    outflow = t.solute_out * dt

    vol = mesh.matrix.cell_volumes
    storage = float(np.sum((new_state.phi - old_state.phi)
                           * (t.u + t.w) * vol))
    if mesh.n_fracture_cells:
        lens = np.concatenate([fr.cell_lengths for fr in mesh.fractures])
        storage += float(np.sum((new_state.eps - old_state.eps)
                                * (t.u_gamma + t.w_gamma) * lens))

    residual = (mu1 + mw1) - (mu0 + mw0) - (inflow - outflow) - storage
    return {
        "mass_u": mu1,
        "mass_w": mw1,
        "boundary_in": inflow,
        "boundary_out": outflow,
        "storage_change": storage,
        "residual": residual,
    }


def run(config, output_dir=None, quiet=True):
    """Execute a full reduced-model run described by a Config.

    Writes VTK fields and the CSV time series at the configured cadence and
    returns a summary report dictionary.
    """
    from . import config as cfg
    from . import output as out

    mesh = cfg.build_mesh(config)
    params = config.chem
    state = initial_state(
        mesh, params,
        u0=config.initial.u, w0=config.initial.w,
        u_gamma0=config.initial.u_frac, w_gamma0=config.initial.w_frac,
    )
    controls = config.time
    directory = output_dir or config.output.directory
    writer = out.RunWriter(config, mesh, directory)

    start = _time.perf_counter()
    ledgers = [_zero_ledger(mesh, state)]
    cum_in = 0.0
    cum_out = 0.0
    writer.snapshot(state)
    writer.add_row(state, ledgers[-1]["mass_u"], ledgers[-1]["mass_w"],
                   cum_in, cum_out)

    n_steps = int(round(controls.t_end / controls.dt))
    for step in range(1, n_steps + 1):
        try:
            state = advance(
                mesh, state, params, config.bc, controls.dt,
                f=config.sources.f, f_gamma=config.sources.f_gamma,
                fixed_point=controls.fixed_point,
                fp_tol=controls.fp_tol, fp_maxit=controls.fp_maxit,
            )
        except FracflowError as exc:
            raise FracflowError(
                f"step {step} failed: {exc}"
            ) from exc
        if config.flags.enforce_cfl:
            bound = trp.cfl_bound(mesh, state.flow, state.phi, state.eps)
            if controls.dt > bound:
                raise FracflowError(
                    f"step {step}: dt = {controls.dt:g} exceeds the "
                    f"positivity bound {bound:g}"
                )
        ledger = state.diagnostics["ledger"]
        ledgers.append(ledger)
        cum_in += ledger["boundary_in"]
        cum_out += ledger["boundary_out"]
        if step % controls.output_every == 0 or step == n_steps:
            writer.snapshot(state)
            writer.add_row(state, ledger["mass_u"], ledger["mass_w"],
                           cum_in, cum_out)
        if not quiet:
            print(f"step {step:6d}  t = {state.time:.6g}  "
                  f"min_phi = {state.diagnostics['min_phi']:.4g}  "
                  f"min_eps = {state.diagnostics['min_eps']:.4g}")
    writer.close()

    wall = _time.perf_counter() - start
    clogged = [int(c) for c in np.flatnonzero(state.phi <= 0.0)]
    occluded = [int(c) for c in np.flatnonzero(state.eps <= 0.0)]
    return {
        "steps": n_steps,
        "final_time": state.time,
        "ledger": ledgers[-1],
        "min_phi": float(state.phi.min()),
        "min_eps": float(state.eps.min()) if len(state.eps) else 0.0,
        "clogged_cells": clogged,
        "occluded_fracture_cells": occluded,
        "wall_time": wall,
        "state": state,
        "mesh": mesh,
        "files": writer.files,
    }


def _zero_ledger(mesh, state):
    mu, mw = total_masses(mesh, state.transport, state.phi, state.eps)
    return {
        "mass_u": mu, "mass_w": mw, "boundary_in": 0.0, "boundary_out": 0.0,
        "storage_change": 0.0, "residual": 0.0,
    }

"""Equi-dimensional verification oracle.

The fracture is meshed as a thin resolved strip of cells inside the 2D
grid, carrying axis-aligned anisotropic permeability and diffusivity, and
the full matrix model runs on the whole grid with continuity coupling
provided automatically by the conforming mesh.  Strip openness starts at 1
and evolves with the fracture deposition coefficient; its permeabilities
follow the quadratic aperture law applied to the open fraction of the
strip width.  Reduced-model runs are compared against this oracle on the
matrix cells away from the strip and via strip averages for the fracture
variables.
"""

from dataclasses import dataclass

import numpy as np

from . import chemistry as chem
from . import flow as flo
from . import mesh as msh
from . import transport as trp
from .coupler import SimState, mass_ledger, total_masses
from .errors import FracflowError


@dataclass
class EquidimModel:
    mesh: msh.MixedDimMesh        # no fracture grids; strip is tagged cells
    strip_mask: np.ndarray        # bool per cell
    tangent_axis: int             # along-strip axis
    position: float               # strip centre line coordinate
    eps_bar: float                # strip width
    columns: list                 # per tangent index: (strip cell ids, weights)
    eta_field: np.ndarray         # deposition coefficient per cell


def build_equidim(config, eps_bar=None, cells_across=None):
    """Carve the fracture of the config into a resolved strip grid.

    The strip replaces the band of width eps_bar around the fracture line
    with cells_across equal rows; the two adjacent matrix cells shrink to
    keep every other cell of the base grid intact, which is what makes the
    reduced-vs-equidim comparison exact away from the strip.
    """
    if len(config.fractures) != 1:
        raise FracflowError("the equi-dimensional oracle needs exactly one fracture")
    spec = config.fractures[0]
    eps_bar = config.chem.eps_ref if eps_bar is None else eps_bar
    cells_across = (config.equidim.cells_across if cells_across is None
                    else cells_across)
    if cells_across < 3:
        raise msh.GeometryError("need at least 3 cells across the strip")
    if eps_bar <= 0:
        raise msh.GeometryError("strip width must be > 0")

    geo = config.geometry
    base_x = np.linspace(0.0, geo.lx, geo.nx + 1)
    base_y = np.linspace(0.0, geo.ly, geo.ny + 1)
    if spec.orientation == "horizontal":
        across_edges, along_edges = base_y, base_x
    else:
        across_edges, along_edges = base_x, base_y

    tol = 1e-8 * max(geo.lx, geo.ly)
    hit = np.flatnonzero(np.abs(across_edges - spec.position) <= tol)
    if len(hit) != 1 or hit[0] in (0, len(across_edges) - 1):
        raise msh.GeometryError(
            "strip centre line must coincide with an interior grid line"
        )
    yc = across_edges[hit[0]]
    lo, hi = yc - 0.5 * eps_bar, yc + 0.5 * eps_bar
    inside = (across_edges > lo + tol) & (across_edges < hi - tol)
    removed = np.flatnonzero(inside)
    if len(removed) > 1 and not config.equidim.auto_grade:
        raise msh.GeometryError(
            "strip width spans several base cells; set equidim.auto_grade "
            "to carve through them"
        )
    if lo <= across_edges[0] + tol or hi >= across_edges[-1] - tol:
        raise msh.GeometryError("strip does not fit inside the domain")

    kept = across_edges[~inside]
    band = np.linspace(lo, hi, cells_across + 1)
    new_across = np.unique(np.concatenate([kept, band]))

    if spec.orientation == "horizontal":
        grid = msh.tensor_grid(base_x, new_across)
    else:
        grid = msh.tensor_grid(new_across, base_y)
    mesh = msh.build_mixed_dim_mesh(grid, [])

    tangent_axis = 0 if spec.orientation == "horizontal" else 1
    across_axis = 1 - tangent_axis
    centers = grid.cell_centers
    in_band = (np.abs(centers[:, across_axis] - yc) < 0.5 * eps_bar - tol * 0)
    in_band &= (centers[:, across_axis] > lo) & (centers[:, across_axis] < hi)
    in_span = ((centers[:, tangent_axis] >= spec.start - tol)
               & (centers[:, tangent_axis] <= spec.end + tol))
    strip_mask = in_band & in_span

    # thickness-weighted average stencil per tangent column
    widths = (np.diff(grid.y_edges) if across_axis == 1
              else np.diff(grid.x_edges))
    columns = []
    n_along = grid.nx if tangent_axis == 0 else grid.ny
    for i in range(n_along):
        if tangent_axis == 0:
            ids = np.array([grid.cell_index(i, j) for j in range(grid.ny)])
        else:
            ids = np.array([grid.cell_index(j, i) for j in range(grid.nx)])
        ids = ids[strip_mask[ids]]
        if len(ids):
            if across_axis == 1:
                wts = np.array([widths[c // grid.nx] for c in ids])
            else:
                wts = np.array([widths[c % grid.nx] for c in ids])
            columns.append((ids, wts / wts.sum()))
        else:
            columns.append((ids, np.empty(0)))

    eta_field = np.where(strip_mask, config.chem.eta_gamma, config.chem.eta)
    return EquidimModel(
        mesh=mesh, strip_mask=strip_mask, tangent_axis=tangent_axis,
        position=float(yc), eps_bar=float(eps_bar), columns=columns,
        eta_field=eta_field,
    )


def _equidim_perm(phi, model, params):
    """Per-cell, per-axis permeability: Kozeny in the matrix, quadratic
    aperture law on the open strip fraction inside it."""
    k_iso = chem.matrix_permeability(phi, params)
    kxy = np.column_stack([k_iso, k_iso])
    strip = model.strip_mask
    eps_eff = phi[strip] * model.eps_bar
    scale = eps_eff ** 2 / model.eps_bar
    kxy[strip, model.tangent_axis] = params.k_gamma_ref * scale / model.eps_bar
    kxy[strip, 1 - model.tangent_axis] = params.kappa_ref * scale / model.eps_bar
    return kxy


def _equidim_diff(phi, model, params):
    dxy = np.column_stack([phi * params.d, phi * params.d])
    strip = model.strip_mask
    dxy[strip, model.tangent_axis] = phi[strip] * params.d_gamma
    dxy[strip, 1 - model.tangent_axis] = phi[strip] * params.delta
    return dxy


def initial_equidim_state(model, config):
    """Strip cells start fully open; matrix cells at the reference porosity."""
    params = config.chem
    n = model.mesh.n_matrix_cells
    phi = np.where(model.strip_mask, 1.0, params.phi_ref)
    u = np.full(n, config.initial.u)
    w = np.full(n, config.initial.w)
    u[model.strip_mask] = config.initial.u_frac
    w[model.strip_mask] = config.initial.w_frac
    transport = trp.TransportState(
        u=u, w=w, u_gamma=np.empty(0), w_gamma=np.empty(0),
    )
    kxy = _equidim_perm(phi, model, params)
    return SimState(
        time=0.0, step=0, transport=transport, flow=None,
        phi=phi, eps=np.empty(0), k=kxy,
        k_gamma=np.empty(0), kappa=np.empty(0),
        phi_prev=phi.copy(), eps_prev=np.empty(0),
    )


def advance_equidim(model, state, params, bc, dt, f=0.0):
    """One step of the full model on the strip-resolved grid."""
    mesh = model.mesh
    none = np.empty(0)
    system = flo.assemble_flow(
        mesh, state.phi_prev, state.phi, none, none,
        state.k, none, none, dt, bc, f=f,
    )
    fstate = flo.solve_flow(system)
    dxy = _equidim_diff(state.phi, model, params)
    tstate = trp.transport_step(mesh, fstate, state.transport, state.phi,
                                none, params, dt, bc, diff_field=dxy)
    reacted = trp.precipitate_step(tstate, state.phi, none, params, dt)
    dw = reacted.w - tstate.w
    phi_next = np.clip(
        chem.deposition_update(state.phi, dw, model.eta_field), 0.0, 1.0
    )
    kxy = _equidim_perm(phi_next, model, params)

    new_state = SimState(
        time=state.time + dt, step=state.step + 1,
        transport=reacted, flow=fstate,
        phi=phi_next, eps=none, k=kxy,
        k_gamma=none, kappa=none,
        phi_prev=state.phi.copy(), eps_prev=none,
    )
    new_state.diagnostics = {
        "ledger": mass_ledger(mesh, state, new_state, dt),
        "min_phi": float(phi_next.min()),
    }
    return new_state


def run_equidim(config, output_dir=None, eps_bar=None, quiet=True):
    """Full oracle run; writes the same outputs as run, tagged 'equidim'."""
    from . import output as out

    model = build_equidim(config, eps_bar=eps_bar)
    params = config.chem
    state = initial_equidim_state(model, config)
    controls = config.time
    directory = output_dir or config.output.directory
    writer = out.RunWriter(config, model.mesh, directory, tag="equidim")

    cum_in = 0.0
    cum_out = 0.0
    mu, mw = total_masses(model.mesh, state.transport, state.phi, state.eps)
    writer.snapshot(state)
    writer.add_row(state, mu, mw, cum_in, cum_out)

    n_steps = int(round(controls.t_end / controls.dt))
    ledger = None
    for step in range(1, n_steps + 1):
        state = advance_equidim(model, state, params, config.bc, controls.dt,
                                f=config.sources.f)
        ledger = state.diagnostics["ledger"]
        cum_in += ledger["boundary_in"]
        cum_out += ledger["boundary_out"]
        if step % controls.output_every == 0 or step == n_steps:
            writer.snapshot(state)
            writer.add_row(state, ledger["mass_u"], ledger["mass_w"],
                           cum_in, cum_out)
        if not quiet:
            print(f"equidim step {step:6d}  t = {state.time:.6g}")
    writer.close()
    return {
        "steps": n_steps,
        "final_time": state.time,
        "ledger": ledger,
        "state": state,
        "model": model,
        "files": writer.files,
    }


def strip_average(model, field):
    """Thickness-weighted strip average per tangent column (nan where the
    column carries no strip cells)."""
    out = np.full(len(model.columns), np.nan)
    for i, (ids, wts) in enumerate(model.columns):
        if len(ids):
            out[i] = float(np.dot(np.asarray(field)[ids], wts))
    return out


def field_error_norms(a, b):
    """Relative L2 and Linf distances between two sampled fields."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale2 = np.linalg.norm(b)
    scale_inf = np.max(np.abs(b)) if len(b) else 0.0
    diff = a - b
    l2 = float(np.linalg.norm(diff) / scale2) if scale2 > 0 else float(
        np.linalg.norm(diff))
    linf = float(np.max(np.abs(diff)) / scale_inf) if scale_inf > 0 else (
        float(np.max(np.abs(diff))) if len(diff) else 0.0)
    return l2, linf


def matching_cells(mesh_reduced, model):
    """Pairs of (reduced cell, equidim cell) whose centres coincide.

    The strip rows and the shrunk layer beside them have shifted centres and
    drop out automatically, which excludes exactly one cell layer adjacent
    to the strip from the comparison.
    """
    gr = mesh_reduced.matrix
    ge = model.mesh.matrix
    tol = 1e-9 * max(gr.lx, gr.ly)
    lookup = {}
    for c in range(ge.n_cells):
        key = (round(ge.cell_centers[c, 0] / tol), round(ge.cell_centers[c, 1] / tol))
        lookup[key] = c
    pairs = []
    for c in range(gr.n_cells):
        key = (round(gr.cell_centers[c, 0] / tol), round(gr.cell_centers[c, 1] / tol))
        if key in lookup:
            pairs.append((c, lookup[key]))
    return pairs


def compare(mesh_reduced, state_reduced, model, state_equidim):
    """Error norms of the reduced run against the equi-dimensional oracle."""
    pairs = matching_cells(mesh_reduced, model)
    if not pairs:
        raise FracflowError("no comparable matrix cells; incompatible geometries")
    ir = np.array([p[0] for p in pairs])
    ie = np.array([p[1] for p in pairs])

    norms = {}
    pr = state_reduced.flow.p if state_reduced.flow is not None else None
    pe = state_equidim.flow.p if state_equidim.flow is not None else None
    if pr is not None and pe is not None:
        norms["p_l2"], norms["p_linf"] = field_error_norms(pr[ir], pe[ie])
    norms["u_l2"], norms["u_linf"] = field_error_norms(
        state_reduced.transport.u[ir], state_equidim.transport.u[ie])

    if mesh_reduced.fractures and state_reduced.flow is not None:
        frac = mesh_reduced.fractures[0]
        tang = frac.tangent_axis
        avg_p = strip_average(model, state_equidim.flow.p)
        avg_u = strip_average(model, state_equidim.transport.u)
        ge = model.mesh.matrix
        along_edges = ge.x_edges if tang == 0 else ge.y_edges
        along_centers = 0.5 * (along_edges[:-1] + along_edges[1:])
        # match reduced fracture cells to equidim columns by coordinate
        rc = frac.cell_centers[:, tang]
        cols = np.array([int(np.argmin(np.abs(along_centers - x))) for x in rc])
        ok = ~np.isnan(avg_p[cols])
        if np.any(ok):
            norms["p_gamma_l2"], norms["p_gamma_linf"] = field_error_norms(
                state_reduced.flow.p_gamma[ok], avg_p[cols][ok])
            norms["u_gamma_l2"], norms["u_gamma_linf"] = field_error_norms(
                state_reduced.transport.u_gamma[ok], avg_u[cols][ok])
    return norms

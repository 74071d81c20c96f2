"""Solute transport step: implicit upwind advection plus TPFA diffusion on
the mixed-dimensional grid, followed by the pointwise precipitate update.

The advective part rides on the fluxes of a previously solved FlowState;
the diffusive interface exchange uses the conductance 2*delta/eps composed
in series with the matrix half cell, mirroring the flow coupling.  Reaction
terms are excluded here and handled by precipitate_step.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import bc as bcs
from . import chemistry as chem
from . import mesh as msh
from . import flow as flo
from .errors import SolverError


@dataclass
class TransportState:
    u: np.ndarray
    w: np.ndarray
    u_gamma: np.ndarray
    w_gamma: np.ndarray
    chi: np.ndarray = None            # total solute face fluxes, matrix
    chi_gamma: list = field(default_factory=list)
    solute_in: float = 0.0            # boundary solute inflow rate
    solute_out: float = 0.0
    frozen: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def upwind_value(q_n, u_upstream, u_downstream):
    """Upwind interface value; arithmetic mean on a stagnant face."""
    if q_n > 0:
        return u_upstream
    if q_n < 0:
        return u_downstream
    return 0.5 * (u_upstream + u_downstream)


def _diff_half(grid, cell, face, dxy):
    ax = int(grid.face_axis[face])
    dist = abs(grid.cell_centers[cell, ax] - grid.face_centers[face, ax])
    coef = dxy[cell, ax]
    if coef <= 0.0:
        return 0.0
    return grid.face_areas[face] * coef / dist


@dataclass
class TransportSystem:
    A: sps.csr_matrix
    rhs: np.ndarray
    mesh: object
    flow: flo.FlowState
    face_Td: np.ndarray
    cp_Td: np.ndarray
    frac_Td: list
    tip_T: list
    frozen: np.ndarray
    n_matrix: int
    bc: bcs.BcSet
    u_old: np.ndarray
    u_gamma_old: np.ndarray


def assemble_transport(mesh, flow, state, phi, eps, params, dt, bc,
                       diff_field=None):
    """Backward-Euler system for (u, u_gamma) without reaction terms.

    diff_field overrides the per-cell, per-axis matrix diffusion
    coefficient (default phi * d on both axes).
    """
    grid = mesh.matrix
    n_m = grid.n_cells
    n_f = mesh.n_fracture_cells
    n = n_m + n_f
    if dt <= 0:
        raise ValueError("dt must be > 0")

    phi = np.asarray(phi, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if diff_field is None:
        dcoef = np.column_stack([phi * params.d, phi * params.d])
    else:
        dcoef = np.asarray(diff_field, dtype=float)
        if dcoef.ndim == 1:
            dcoef = np.column_stack([dcoef, dcoef])

    offsets = mesh.fracture_offsets()
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    def advect(i, j, F):
        # flux F from dof i to dof j, upwinded, implicit
        add(i, i, max(F, 0.0))
        add(i, j, min(F, 0.0))
        add(j, j, -min(F, 0.0))
        add(j, i, -max(F, 0.0))

    face_Td = np.zeros(grid.n_faces)
    for fc in range(grid.n_faces):
        c0, c1 = grid.face_cells[fc]
        if c0 >= 0 and c1 >= 0:
            if fc in mesh.face_to_fracture:
                continue
            F = flow.flux[fc]
            advect(c0, c1, F)
            t0 = _diff_half(grid, c0, fc, dcoef)
            t1 = _diff_half(grid, c1, fc, dcoef)
            Td = 0.0 if t0 == 0.0 or t1 == 0.0 else 1.0 / (1.0 / t0 + 1.0 / t1)
            face_Td[fc] = Td
            if Td > 0.0:
                add(c0, c0, Td)
                add(c1, c1, Td)
                add(c0, c1, -Td)
                add(c1, c0, -Td)
            continue

        cell = int(c0 if c0 >= 0 else c1)
        edge = bc.for_tag(grid.face_btag[fc])
        if edge.kind == bcs.NOFLOW:
            continue
        outward = flow.flux[fc] if c0 >= 0 else -flow.flux[fc]
        if outward < 0.0:
            # inflow: prescribed concentration, advective and diffusive
            rhs[cell] += -outward * edge.u
            Td = _diff_half(grid, cell, fc, dcoef)
            face_Td[fc] = Td
            if Td > 0.0:
                add(cell, cell, Td)
                rhs[cell] += Td * edge.u
        else:
            # outflow: free advection, zero diffusive flux
            add(cell, cell, outward)

    # matrix <-> fracture exchange
    cp_Td = np.zeros((sum(len(e) for e in mesh.couplings), 2))
    idx = 0
    for fid, entries in enumerate(mesh.couplings):
        off = n_m + offsets[fid]
        frac = mesh.fractures[fid]
        for e in entries:
            dof = off + e.frac_cell
            g = offsets[fid] + e.frac_cell
            face = int(frac.host_faces[e.frac_cell])
            for s, cell in enumerate((e.cell_minus, e.cell_plus)):
                Q = flow.flux_coupling[idx, s]
                advect(cell, dof, Q)
                td = _diff_half(grid, cell, face, dcoef)
                if td == 0.0 or eps[g] == 0.0 or params.delta == 0.0:
                    Td = 0.0
                else:
                    r_int = eps[g] / (2.0 * params.delta) / e.interface_length
                    Td = 1.0 / (1.0 / td + r_int)
                cp_Td[idx, s] = Td
                if Td > 0.0:
                    add(cell, cell, Td)
                    add(dof, dof, Td)
                    add(cell, dof, -Td)
                    add(dof, cell, -Td)
            idx += 1

    # tangential fracture transport and tips
    frac_Td = []
    tip_T = []
    for fid, frac in enumerate(mesh.fractures):
        off = n_m + offsets[fid]
        g0 = offsets[fid]
        nc = frac.n_cells
        h = frac.cell_lengths
        cond = eps[g0:g0 + nc] * params.d_gamma
        fg = flow.flux_gamma[fid]
        Td_int = np.zeros(max(nc - 1, 0))
        for i in range(nc - 1):
            advect(off + i, off + i + 1, fg[i + 1])
            if cond[i] > 0.0 and cond[i + 1] > 0.0:
                Td_int[i] = 1.0 / (0.5 * h[i] / cond[i]
                                   + 0.5 * h[i + 1] / cond[i + 1])
                add(off + i, off + i, Td_int[i])
                add(off + i + 1, off + i + 1, Td_int[i])
                add(off + i, off + i + 1, -Td_int[i])
                add(off + i + 1, off + i, -Td_int[i])
        frac_Td.append(Td_int)

        tips = []
        for end, local, outward in ((0, 0, -fg[0]), (1, nc - 1, fg[nc])):
            tag = int(frac.tip_btags[end])
            dof = off + local
            if tag == msh.INTERIOR:
                tips.append(0.0)
                continue
            edge = bc.for_tag(tag)
            if edge.kind == bcs.NOFLOW:
                tips.append(0.0)
                continue
            if outward < 0.0:
                rhs[dof] += -outward * edge.frac_u
                Td = 0.0 if cond[local] == 0.0 else cond[local] / (0.5 * h[local])
                if edge.kind == bcs.PRESSURE and Td > 0.0:
                    add(dof, dof, Td)
                    rhs[dof] += Td * edge.frac_u
                    tips.append(Td)
                else:
                    tips.append(0.0)
            else:
                add(dof, dof, outward)
                tips.append(0.0)
        tip_T.append(tips)

    # storage
    u_old = np.asarray(state.u, dtype=float)
    ug_old = np.asarray(state.u_gamma, dtype=float)
    store_m = phi * grid.cell_volumes / dt
    for c in range(n_m):
        add(c, c, store_m[c])
        rhs[c] += store_m[c] * u_old[c]
    if n_f:
        lens = np.concatenate([fr.cell_lengths for fr in mesh.fractures])
        store_f = eps * lens / dt
        for g in range(n_f):
            add(n_m + g, n_m + g, store_f[g])
            rhs[n_m + g] += store_f[g] * ug_old[g]

    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()

    # degenerate cells (clogged, zero storage and conductance) stay frozen
    frozen = np.flatnonzero(np.abs(A.diagonal()) == 0.0)
    if len(frozen):
        old = np.concatenate([u_old, ug_old]) if n_f else u_old
        lil = A.tolil()
        for i in frozen:
            lil[i, i] = 1.0
            rhs[i] = old[i]
        A = lil.tocsr()

    return TransportSystem(
        A=A, rhs=rhs, mesh=mesh, flow=flow, face_Td=face_Td, cp_Td=cp_Td,
        frac_Td=frac_Td, tip_T=tip_T, frozen=frozen, n_matrix=n_m, bc=bc,
        u_old=u_old, u_gamma_old=ug_old,
    )


def transport_step(mesh, flow, state, phi, eps, params, dt, bc,
                   diff_field=None):
    """Advance the advection-diffusion part of the solute over one step."""
    system = assemble_transport(mesh, flow, state, phi, eps, params, dt, bc,
                                diff_field=diff_field)
    sol = spla.spsolve(system.A.tocsc(), system.rhs)
    scale = max(np.linalg.norm(system.rhs), 1e-300)
    residual = float(np.linalg.norm(system.A @ sol - system.rhs) / scale)
    if not np.isfinite(residual) or residual > 1e-8:
        raise SolverError(residual)

    grid = mesh.matrix
    n_m = system.n_matrix
    u = sol[:n_m]
    u_gamma = sol[n_m:]

    chi = np.zeros(grid.n_faces)
    solute_in = 0.0
    solute_out = 0.0
    for fc in range(grid.n_faces):
        c0, c1 = grid.face_cells[fc]
        F = flow.flux[fc]
        if c0 >= 0 and c1 >= 0:
            if fc in mesh.face_to_fracture:
                continue
            chi[fc] = (F * upwind_value(F, u[c0], u[c1])
                       + system.face_Td[fc] * (u[c0] - u[c1]))
            continue
        cell = int(c0 if c0 >= 0 else c1)
        edge = bc.for_tag(grid.face_btag[fc])
        if edge.kind == bcs.NOFLOW:
            continue
        outward = F if c0 >= 0 else -F
        if outward < 0.0:
            rate = -outward * edge.u + system.face_Td[fc] * (edge.u - u[cell])
            solute_in += rate
            chi[fc] = -rate if c0 >= 0 else rate
        else:
            rate = outward * u[cell]
            solute_out += rate
            chi[fc] = rate if c0 >= 0 else -rate

    offsets = mesh.fracture_offsets()
    chi_gamma = []
    for fid, frac in enumerate(mesh.fractures):
        off = n_m + offsets[fid]
        nc = frac.n_cells
        fg = flow.flux_gamma[fid]
        cg = np.zeros(nc + 1)
        for i in range(nc - 1):
            cg[i + 1] = (fg[i + 1] * upwind_value(fg[i + 1], sol[off + i],
                                                  sol[off + i + 1])
                         + system.frac_Td[fid][i] * (sol[off + i] - sol[off + i + 1]))
        for end, local, sgn in ((0, 0, -1.0), (1, nc - 1, 1.0)):
            tag = int(frac.tip_btags[end])
            pos = 0 if end == 0 else nc
            if tag == msh.INTERIOR:
                continue
            edge = bc.for_tag(tag)
            if edge.kind == bcs.NOFLOW:
                continue
            outward = sgn * fg[pos]
            if outward < 0.0:
                rate = (-outward * edge.frac_u
                        + system.tip_T[fid][end] * (edge.frac_u - sol[off + local]))
                solute_in += rate
                cg[pos] = -sgn * rate
            else:
                rate = outward * sol[off + local]
                solute_out += rate
                cg[pos] = sgn * rate
        chi_gamma.append(cg)

    return TransportState(
        u=u, w=state.w.copy(), u_gamma=u_gamma, w_gamma=state.w_gamma.copy(),
        chi=chi, chi_gamma=chi_gamma,
        solute_in=solute_in, solute_out=solute_out, frozen=system.frozen,
    )


def precipitate_step(state, phi, eps, params, dt):
    """Pointwise reaction update of (u, w) in matrix and fracture cells."""
    if params.lam == 0.0:
        return state
    u, w = chem.reaction_substep(state.u, state.w, dt, params)
    if len(state.u_gamma):
        ug, wg = chem.reaction_substep(state.u_gamma, state.w_gamma, dt, params)
    else:
        ug, wg = state.u_gamma, state.w_gamma
    return TransportState(
        u=u, w=w, u_gamma=ug, w_gamma=wg,
        chi=state.chi, chi_gamma=state.chi_gamma,
        solute_in=state.solute_in, solute_out=state.solute_out,
        frozen=state.frozen,
    )


def cfl_bound(mesh, flow, phi, eps):
    """Largest dt keeping the explicit-advection positivity bound.

    The implicit scheme is monotone anyway; this bound feeds the optional
    enforce-CFL mode used by the maximum-principle checks.
    """
    grid = mesh.matrix
    n_m = grid.n_cells
    out = np.zeros(n_m + mesh.n_fracture_cells)
    for fc in range(grid.n_faces):
        c0, c1 = grid.face_cells[fc]
        F = flow.flux[fc]
        if fc in mesh.face_to_fracture:
            continue
        if c0 >= 0 and F > 0:
            out[c0] += F
        if c1 >= 0 and F < 0:
            out[c1] += -F
    offsets = mesh.fracture_offsets()
    idx = 0
    for fid, entries in enumerate(mesh.couplings):
        for e in entries:
            g = n_m + offsets[fid] + e.frac_cell
            for s, cell in enumerate((e.cell_minus, e.cell_plus)):
                Q = flow.flux_coupling[idx, s]
                if Q > 0:
                    out[cell] += Q
                else:
                    out[g] += -Q
            idx += 1
    for fid, frac in enumerate(mesh.fractures):
        off = n_m + offsets[fid]
        fg = flow.flux_gamma[fid]
        for i in range(frac.n_cells):
            if fg[i] < 0:
                out[off + i] += -fg[i]
            if fg[i + 1] > 0:
                out[off + i] += fg[i + 1]

    caps = np.concatenate([
        np.asarray(phi) * grid.cell_volumes,
        (np.asarray(eps) * np.concatenate([fr.cell_lengths
                                           for fr in mesh.fractures])
         if mesh.n_fracture_cells else np.empty(0)),
    ])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(out > 0, caps / np.maximum(out, 1e-300), np.inf)
    return float(np.min(ratios)) if len(ratios) else np.inf

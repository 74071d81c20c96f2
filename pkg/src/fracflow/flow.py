"""Mixed-dimensional Darcy solver.

Two-point flux approximation in the matrix, tangential Darcy on the
fracture cells, and a Robin-type exchange between the two: the interface
conductance 2*kappa/eps is composed in series with the matrix half-cell
transmissibility on each side of the fracture.  Pore-volume and aperture
changes enter the right-hand side as backward differences, so each step
solves a linear, symmetric positive (semi-)definite problem.

Sign conventions: matrix face fluxes are stored along the +x/+y face
normal; coupling fluxes are positive from matrix into fracture; fracture
tangential fluxes run along the +tangent, with one extra slot per tip.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import bc as bcs
from . import mesh as msh
from .errors import SingularSystemError, SolverError

# face roles used for flux reconstruction
FK_INTERIOR = 0
FK_HOSTED = 1
FK_DIRICHLET = 2
FK_FLUX = 3
FK_NOFLOW = 4

SOLVE_TOL = 1e-10
DIAG_FLOOR = 1e-30


@dataclass
class FlowState:
    p: np.ndarray
    p_gamma: np.ndarray
    flux: np.ndarray                  # signed matrix face fluxes [m^2/s]
    flux_gamma: list                  # per fracture, n_cells+1 interface fluxes
    flux_coupling: np.ndarray         # (n_couplings, 2): minus/plus side, into fracture
    pinned: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    residual: float = 0.0


@dataclass
class FlowSystem:
    A: sps.csr_matrix
    rhs: np.ndarray
    mesh: msh.MixedDimMesh
    face_kind: np.ndarray
    face_T: np.ndarray
    face_bval: np.ndarray
    cp_cells: np.ndarray              # (n_couplings, 2) minus/plus matrix cells
    cp_dof: np.ndarray                # fracture dof per coupling
    cp_T: np.ndarray                  # (n_couplings, 2) side transmissibilities
    frac_internal_T: list
    frac_tips: list                   # per fracture: two (kind, T, value) tuples
    pinned: np.ndarray
    n_matrix: int


def coupling_flux(p_plus, p_gamma, kappa, eps):
    """Normal exchange flux across one fracture side, interface term only."""
    if eps == 0.0:
        return 0.0
    return 2.0 * kappa / eps * (p_plus - p_gamma)


def _as_axis_field(k_field, n):
    k = np.asarray(k_field, dtype=float)
    if k.ndim == 1:
        return np.column_stack([k, k])
    if k.shape != (n, 2):
        raise ValueError(f"permeability field must be ({n},) or ({n}, 2)")
    return k


def _half_trans(grid, cell, face, kxy):
    ax = int(grid.face_axis[face])
    d = abs(grid.cell_centers[cell, ax] - grid.face_centers[face, ax])
    k = kxy[cell, ax]
    if k <= 0.0:
        return 0.0
    return grid.face_areas[face] * k / d


def assemble_flow(mesh, phi_old, phi_new, eps_old, eps_new, k_field,
                  k_gamma_field, kappa_field, dt, bc, f=0.0, f_gamma=0.0):
    """Build the coupled pressure system for one time step.

    Steady problems pass identical old/new pore fields.  Raises
    SingularSystemError when no pressure condition exists anywhere and the
    net source is incompatible; a compatible pure-Neumann system is gauged
    by anchoring the first unknown at zero.
    """
    grid = mesh.matrix
    n_m = grid.n_cells
    n_f = mesh.n_fracture_cells
    n = n_m + n_f
    if dt <= 0:
        raise ValueError("dt must be > 0")

    kxy = _as_axis_field(k_field, n_m)
    k_gamma = np.asarray(k_gamma_field, dtype=float)
    kappa = np.asarray(kappa_field, dtype=float)
    eps = np.asarray(eps_new, dtype=float)
    offsets = mesh.fracture_offsets()

    rows, cols, vals = [], [], []
    rhs = np.zeros(n)

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    face_kind = np.zeros(grid.n_faces, dtype=np.int64)
    face_T = np.zeros(grid.n_faces)
    face_bval = np.zeros(grid.n_faces)
    dirichlet_T = 0.0

    for fc in range(grid.n_faces):
        c0, c1 = grid.face_cells[fc]
        if c0 >= 0 and c1 >= 0:
            if fc in mesh.face_to_fracture:
                face_kind[fc] = FK_HOSTED
                continue
            t0 = _half_trans(grid, c0, fc, kxy)
            t1 = _half_trans(grid, c1, fc, kxy)
            T = 0.0 if t0 == 0.0 or t1 == 0.0 else 1.0 / (1.0 / t0 + 1.0 / t1)
            face_T[fc] = T
            if T > 0.0:
                add(c0, c0, T)
                add(c1, c1, T)
                add(c0, c1, -T)
                add(c1, c0, -T)
            continue

        cell = int(c0 if c0 >= 0 else c1)
        edge = bc.for_tag(grid.face_btag[fc])
        if edge.kind == bcs.PRESSURE:
            T = _half_trans(grid, cell, fc, kxy)
            face_kind[fc] = FK_DIRICHLET
            face_T[fc] = T
            face_bval[fc] = edge.p
            dirichlet_T += T
            if T > 0.0:
                add(cell, cell, T)
                rhs[cell] += T * edge.p
        elif edge.kind == bcs.FLUX:
            face_kind[fc] = FK_FLUX
            face_bval[fc] = edge.q * grid.face_areas[fc]
            rhs[cell] -= edge.q * grid.face_areas[fc]
        else:
            face_kind[fc] = FK_NOFLOW

    # matrix <-> fracture exchange, one entry per fracture cell
    cp_cells, cp_dof, cp_T = [], [], []
    for fid, entries in enumerate(mesh.couplings):
        off = n_m + offsets[fid]
        frac = mesh.fractures[fid]
        for e in entries:
            dof = off + e.frac_cell
            g = offsets[fid] + e.frac_cell
            face = int(frac.host_faces[e.frac_cell])
            side_T = []
            for cell in (e.cell_minus, e.cell_plus):
                th = _half_trans(grid, cell, face, kxy)
                if th == 0.0 or eps[g] == 0.0 or kappa[g] == 0.0:
                    side_T.append(0.0)
                else:
                    r_int = eps[g] / (2.0 * kappa[g]) / e.interface_length
                    side_T.append(1.0 / (1.0 / th + r_int))
            for cell, T in zip((e.cell_minus, e.cell_plus), side_T):
                if T > 0.0:
                    add(cell, cell, T)
                    add(dof, dof, T)
                    add(cell, dof, -T)
                    add(dof, cell, -T)
            cp_cells.append((e.cell_minus, e.cell_plus))
            cp_dof.append(dof)
            cp_T.append(side_T)

    # tangential fracture flow and tips
    frac_internal_T = []
    frac_tips = []
    for fid, frac in enumerate(mesh.fractures):
        off = n_m + offsets[fid]
        g0 = offsets[fid]
        nc = frac.n_cells
        cond = eps[g0:g0 + nc] * k_gamma[g0:g0 + nc]
        h = frac.cell_lengths
        T_int = np.zeros(max(nc - 1, 0))
        for i in range(nc - 1):
            if cond[i] > 0.0 and cond[i + 1] > 0.0:
                T_int[i] = 1.0 / (0.5 * h[i] / cond[i] + 0.5 * h[i + 1] / cond[i + 1])
                add(off + i, off + i, T_int[i])
                add(off + i + 1, off + i + 1, T_int[i])
                add(off + i, off + i + 1, -T_int[i])
                add(off + i + 1, off + i, -T_int[i])
        frac_internal_T.append(T_int)

        tips = []
        for end, local in ((0, 0), (1, nc - 1)):
            tag = int(frac.tip_btags[end])
            if tag == msh.INTERIOR:
                tips.append((bcs.NOFLOW, 0.0, 0.0))
                continue
            edge = bc.for_tag(tag)
            dof = off + local
            if edge.kind == bcs.PRESSURE:
                T = 0.0 if cond[local] == 0.0 else cond[local] / (0.5 * h[local])
                dirichlet_T += T
                if T > 0.0:
                    add(dof, dof, T)
                    rhs[dof] += T * edge.frac_p
                tips.append((bcs.PRESSURE, T, edge.frac_p))
            elif edge.kind == bcs.FLUX:
                rhs[dof] -= edge.frac_q
                tips.append((bcs.FLUX, 0.0, edge.frac_q))
            else:
                tips.append((bcs.NOFLOW, 0.0, 0.0))
        frac_tips.append(tips)

    # storage and source terms
    f_arr = np.broadcast_to(np.asarray(f, dtype=float), (n_m,))
    rhs[:n_m] += (-(np.asarray(phi_new) - np.asarray(phi_old)) / dt
                  + f_arr) * grid.cell_volumes
    if n_f:
        fg_arr = np.broadcast_to(np.asarray(f_gamma, dtype=float), (n_f,))
        lens = np.concatenate([fr.cell_lengths for fr in mesh.fractures])
        rhs[n_m:] += (-(np.asarray(eps_new) - np.asarray(eps_old)) / dt
                      + eps * fg_arr) * lens

    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()

    pinned = np.flatnonzero(np.abs(A.diagonal()) == 0.0)
    if dirichlet_T == 0.0:
        scale = max(1.0, np.abs(rhs).sum())
        residual = float(rhs.sum())
        if abs(residual) > 1e-12 * scale:
            raise SingularSystemError(residual)
        # compatible pure-Neumann problem: anchor the gauge at dof 0
        diag_scale = A.diagonal().max() if n > 0 else 1.0
        A = A + sps.coo_matrix(([max(diag_scale, 1.0)], ([0], [0])), shape=(n, n))
        A = A.tocsr()

    if len(pinned):
        lil = A.tolil()
        for i in pinned:
            lil[i, i] = DIAG_FLOOR
            rhs[i] = 0.0
        A = lil.tocsr()

    return FlowSystem(
        A=A, rhs=rhs, mesh=mesh,
        face_kind=face_kind, face_T=face_T, face_bval=face_bval,
        cp_cells=np.array(cp_cells, dtype=np.int64).reshape(-1, 2),
        cp_dof=np.array(cp_dof, dtype=np.int64),
        cp_T=np.array(cp_T, dtype=float).reshape(-1, 2),
        frac_internal_T=frac_internal_T,
        frac_tips=frac_tips,
        pinned=pinned,
        n_matrix=n_m,
    )


def solve_flow(system):
    """Direct sparse solve plus flux reconstruction from the stored
    transmissibilities, so the discrete balance holds by construction."""
    A, rhs = system.A, system.rhs
    sol = spla.spsolve(A.tocsc(), rhs)
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        scale = max(np.linalg.norm(sol) * np.abs(A.diagonal()).max(), 1.0)
    residual = float(np.linalg.norm(A @ sol - rhs) / scale)
    if not np.isfinite(residual) or residual > SOLVE_TOL:
        raise SolverError(residual)

    mesh = system.mesh
    grid = mesh.matrix
    n_m = system.n_matrix
    p = sol[:n_m]
    p_gamma = sol[n_m:]

    flux = np.zeros(grid.n_faces)
    for fc in range(grid.n_faces):
        kind = system.face_kind[fc]
        T = system.face_T[fc]
        c0, c1 = grid.face_cells[fc]
        if kind == FK_INTERIOR and c0 >= 0 and c1 >= 0:
            flux[fc] = T * (p[c0] - p[c1])
        elif kind == FK_DIRICHLET:
            if c0 < 0:
                flux[fc] = T * (system.face_bval[fc] - p[c1])
            else:
                flux[fc] = T * (p[c0] - system.face_bval[fc])
        elif kind == FK_FLUX:
            # stored datum is the outward flux times area
            flux[fc] = system.face_bval[fc] if c0 >= 0 else -system.face_bval[fc]

    flux_coupling = np.zeros((len(system.cp_dof), 2))
    for i, dof in enumerate(system.cp_dof):
        cm, cp_ = system.cp_cells[i]
        flux_coupling[i, 0] = system.cp_T[i, 0] * (p[cm] - sol[dof])
        flux_coupling[i, 1] = system.cp_T[i, 1] * (p[cp_] - sol[dof])

    offsets = mesh.fracture_offsets()
    flux_gamma = []
    for fid, frac in enumerate(mesh.fractures):
        off = n_m + offsets[fid]
        nc = frac.n_cells
        fg = np.zeros(nc + 1)
        T_int = system.frac_internal_T[fid]
        for i in range(nc - 1):
            fg[i + 1] = T_int[i] * (sol[off + i] - sol[off + i + 1])
        (k0, T0, v0), (k1, T1, v1) = system.frac_tips[fid]
        if k0 == bcs.PRESSURE:
            fg[0] = T0 * (v0 - sol[off])
        elif k0 == bcs.FLUX:
            fg[0] = -v0  # outward at the low tip points against the tangent
        if k1 == bcs.PRESSURE:
            fg[nc] = T1 * (sol[off + nc - 1] - v1)
        elif k1 == bcs.FLUX:
            fg[nc] = v1
        flux_gamma.append(fg)

    return FlowState(
        p=p, p_gamma=p_gamma, flux=flux, flux_gamma=flux_gamma,
        flux_coupling=flux_coupling, pinned=system.pinned, residual=residual,
    )


def boundary_fluxes(mesh, state):
    """Total outward volumetric flow, split into inflow and outflow parts."""
    grid = mesh.matrix
    total_in = 0.0
    total_out = 0.0
    for fc in range(grid.n_faces):
        c0, c1 = grid.face_cells[fc]
        if c0 >= 0 and c1 >= 0:
            continue
        outward = state.flux[fc] if c0 >= 0 else -state.flux[fc]
        if outward >= 0:
            total_out += outward
        else:
            total_in -= outward
    for fg in state.flux_gamma:
        for outward in (-fg[0], fg[-1]):
            if outward >= 0:
                total_out += outward
            else:
                total_in -= outward
    return total_in, total_out


def flow_balance(mesh, state, phi_old, phi_new, eps_old, eps_new, dt,
                 f=0.0, f_gamma=0.0):
    """Global conservation residual: influx + sources - outflux - storage."""
    grid = mesh.matrix
    total_in, total_out = boundary_fluxes(mesh, state)
    storage = float(np.sum((np.asarray(phi_new) - np.asarray(phi_old))
                           / dt * grid.cell_volumes))
    source = float(np.sum(np.broadcast_to(np.asarray(f, dtype=float),
                                          (grid.n_cells,)) * grid.cell_volumes))
    if mesh.n_fracture_cells:
        lens = np.concatenate([fr.cell_lengths for fr in mesh.fractures])
        eps_new = np.asarray(eps_new, dtype=float)
        storage += float(np.sum((eps_new - np.asarray(eps_old)) / dt * lens))
        source += float(np.sum(np.broadcast_to(
            np.asarray(f_gamma, dtype=float), (mesh.n_fracture_cells,))
            * eps_new * lens))
    residual = total_in + source - total_out - storage
    return {
        "influx": total_in,
        "outflux": total_out,
        "storage": storage,
        "source": source,
        "residual": residual,
    }

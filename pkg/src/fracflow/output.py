"""Field and time-series export.

Matrix fields go to legacy ASCII VTK (structured points on uniform grids,
rectilinear otherwise), fracture fields to a polyline VTK file, and the
run history to an RFC-4180 style CSV.  All floats print with 17 significant
digits so written values re-parse bit-identically.
"""

import os

import numpy as np

FMT = "%.17g"

MATRIX_FIELDS = ("p", "u", "w", "phi", "k")
FRACTURE_FIELDS = ("p_gamma", "u_gamma", "w_gamma", "eps", "k_gamma")


def _fmt(x):
    return FMT % float(x)


def _is_uniform(edges):
    d = np.diff(edges)
    return np.allclose(d, d[0], rtol=1e-12, atol=0.0)


def write_matrix_vtk(grid, fields, path, title="fracflow matrix fields"):
    """Legacy ASCII VTK with one cell-data scalar block per field."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII"]
    if _is_uniform(grid.x_edges) and _is_uniform(grid.y_edges):
        dx = grid.x_edges[1] - grid.x_edges[0]
        dy = grid.y_edges[1] - grid.y_edges[0]
        lines += [
            "DATASET STRUCTURED_POINTS",
            f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
            f"ORIGIN {_fmt(grid.x_edges[0])} {_fmt(grid.y_edges[0])} 0",
            f"SPACING {_fmt(dx)} {_fmt(dy)} 1",
        ]
    else:
        lines += [
            "DATASET RECTILINEAR_GRID",
            f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
            f"X_COORDINATES {grid.nx + 1} double",
            " ".join(_fmt(v) for v in grid.x_edges),
            f"Y_COORDINATES {grid.ny + 1} double",
            " ".join(_fmt(v) for v in grid.y_edges),
            "Z_COORDINATES 1 double",
            "0",
        ]
    lines.append(f"CELL_DATA {grid.n_cells}")
    for name, values in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in np.asarray(values).ravel())
    _write_text(path, lines)


def write_fracture_vtk(mesh, fields, path, title="fracflow fracture fields"):
    """Polyline VTK for the 1D fracture cells; no file when no fractures."""
    if not mesh.fractures:
        return False
    points = []
    cells = []
    for frac in mesh.fractures:
        tang = frac.tangent_axis
        for c in range(frac.n_cells):
            center = frac.cell_centers[c]
            half = 0.5 * frac.cell_lengths[c]
            a = center.copy()
            b = center.copy()
            a[tang] -= half
            b[tang] += half
            cells.append((len(points), len(points) + 1))
            points.append(a)
            points.append(b)

    lines = [
        "# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA",
        f"POINTS {len(points)} double",
    ]
    lines.extend(f"{_fmt(p[0])} {_fmt(p[1])} 0" for p in points)
    lines.append(f"LINES {len(cells)} {3 * len(cells)}")
    lines.extend(f"2 {a} {b}" for a, b in cells)
    lines.append(f"CELL_DATA {len(cells)}")
    for name, values in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in np.asarray(values).ravel())
    _write_text(path, lines)
    return True


def _write_text(path, lines):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_vtk_cell_fields(path):
    """Parse the CELL_DATA scalar blocks of a file written by this module."""
    fields = {}
    meta = {}
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    i = 0
    current = None
    values = []
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("DIMENSIONS"):
            meta["dimensions"] = tuple(int(v) for v in line.split()[1:])
        elif line.startswith("CELL_DATA"):
            meta["n_cells"] = int(line.split()[1])
        elif line.startswith("SCALARS"):
            if current is not None:
                fields[current] = np.array(values)
            current = line.split()[1]
            values = []
            i += 1  # skip LOOKUP_TABLE
        elif current is not None and line:
            values.extend(float(v) for v in line.split())
        i += 1
    if current is not None:
        fields[current] = np.array(values)
    return meta, fields


def write_timeseries(rows, header, path):
    """CSV with '.' decimals and LF endings; rows are value sequences."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            v if isinstance(v, str) else _fmt(v) for v in row
        ))
    _write_text(path, lines)


class RunWriter:
    """Collects per-step rows and snapshot files for one run directory."""

    def __init__(self, config, mesh, directory, tag=None):
        self.config = config
        self.mesh = mesh
        self.directory = directory
        prefix = config.output.prefix
        self.prefix = f"{prefix}_{tag}" if tag else prefix
        self.rows = []
        self.files = []
        os.makedirs(directory, exist_ok=True)

    def _path(self, name):
        return os.path.join(self.directory, name)

    def header(self):
        cols = ["time", "total_u_mass", "total_w_mass", "boundary_in",
                "boundary_out", "min_phi", "min_eps"]
        cols += [f"probe_{i}_{j}" for i, j in self.config.output.probes]
        return cols

    def snapshot(self, state):
        if not self.config.output.write_vtk:
            return
        grid = self.mesh.matrix
        t = state.transport
        p = state.flow.p if state.flow is not None else np.zeros(grid.n_cells)
        name = f"{self.prefix}_matrix_{state.step:06d}.vtk"
        write_matrix_vtk(grid, {
            "p": p, "u": t.u, "w": t.w, "phi": state.phi, "k": state.k,
        }, self._path(name))
        self.files.append(name)
        if self.mesh.fractures:
            pg = (state.flow.p_gamma if state.flow is not None
                  else np.zeros(self.mesh.n_fracture_cells))
            fname = f"{self.prefix}_fracture_{state.step:06d}.vtk"
            write_fracture_vtk(self.mesh, {
                "p_gamma": pg, "u_gamma": t.u_gamma, "w_gamma": t.w_gamma,
                "eps": state.eps, "k_gamma": state.k_gamma,
            }, self._path(fname))
            self.files.append(fname)

    def add_row(self, state, mass_u, mass_w, cum_in, cum_out):
        grid = self.mesh.matrix
        row = [
            state.time, mass_u, mass_w, cum_in, cum_out,
            float(np.min(state.phi)),
            float(np.min(state.eps)) if len(state.eps) else 0.0,
        ]
        for i, j in self.config.output.probes:
            row.append(float(state.transport.u[grid.cell_index(i, j)]))
        self.rows.append(row)

    def close(self):
        if self.config.output.write_csv:
            name = f"{self.prefix}_timeseries.csv"
            write_timeseries(self.rows, self.header(), self._path(name))
            self.files.append(name)
        if self.config.output.figures:
            from . import report
            report.render_run_figures(self.directory, self.prefix)

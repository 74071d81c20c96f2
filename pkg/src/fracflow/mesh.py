"""Mixed-dimensional grid: 2D Cartesian matrix cells plus 1D fracture
cells living on interior matrix faces.

Cell indexing is row-major with x running fastest (cell (i, j) has index
j*nx + i).  Faces are listed vertical-first (normal +-x), then horizontal
(normal +-y).  For every face the two adjacent cells are stored as
(minus side, plus side) along the face normal axis; -1 marks a missing
neighbour on boundary faces.
"""

from dataclasses import dataclass, field

import numpy as np

# boundary tags
INTERIOR = 0
LEFT = 1
RIGHT = 2
BOTTOM = 3
TOP = 4

EDGE_NAMES = {LEFT: "left", RIGHT: "right", BOTTOM: "bottom", TOP: "top"}


class GeometryError(ValueError):
    """Invalid grid geometry (zero cell count, negative length, ...)."""


class TopologyError(ValueError):
    """Invalid fracture path (reused face, non-contiguous run, ...)."""


@dataclass
class MatrixGrid:
    nx: int
    ny: int
    lx: float
    ly: float
    x_edges: np.ndarray
    y_edges: np.ndarray
    cell_centers: np.ndarray = field(init=False)  # (n_cells, 2)
    cell_volumes: np.ndarray = field(init=False)  # unit depth areas
    face_cells: np.ndarray = field(init=False)    # (n_faces, 2) minus/plus
    face_axis: np.ndarray = field(init=False)     # 0 = x-normal, 1 = y-normal
    face_areas: np.ndarray = field(init=False)
    face_centers: np.ndarray = field(init=False)
    face_btag: np.ndarray = field(init=False)

    def __post_init__(self):
        nx, ny = self.nx, self.ny
        xe, ye = self.x_edges, self.y_edges
        dx = np.diff(xe)
        dy = np.diff(ye)
        xc = 0.5 * (xe[:-1] + xe[1:])
        yc = 0.5 * (ye[:-1] + ye[1:])
        self.cell_centers = np.column_stack(
            [np.tile(xc, ny), np.repeat(yc, nx)]
        )
        self.cell_volumes = np.outer(dy, dx).ravel()

        n_vf = (nx + 1) * ny
        n_hf = nx * (ny + 1)
        n_faces = n_vf + n_hf
        cells = np.full((n_faces, 2), -1, dtype=np.int64)
        axis = np.empty(n_faces, dtype=np.int64)
        areas = np.empty(n_faces)
        centers = np.empty((n_faces, 2))
        btag = np.zeros(n_faces, dtype=np.int64)

        f = 0
        for j in range(ny):
            for iv in range(nx + 1):
                if iv > 0:
                    cells[f, 0] = j * nx + (iv - 1)
                if iv < nx:
                    cells[f, 1] = j * nx + iv
                axis[f] = 0
                areas[f] = dy[j]
                centers[f] = (xe[iv], yc[j])
                if iv == 0:
                    btag[f] = LEFT
                elif iv == nx:
                    btag[f] = RIGHT
                f += 1
        for jh in range(ny + 1):
            for i in range(nx):
                if jh > 0:
                    cells[f, 0] = (jh - 1) * nx + i
                if jh < ny:
                    cells[f, 1] = jh * nx + i
                axis[f] = 1
                areas[f] = dx[i]
                centers[f] = (xc[i], ye[jh])
                if jh == 0:
                    btag[f] = BOTTOM
                elif jh == ny:
                    btag[f] = TOP
                f += 1

        self.face_cells = cells
        self.face_axis = axis
        self.face_areas = areas
        self.face_centers = centers
        self.face_btag = btag

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def n_faces(self):
        return len(self.face_areas)

    def vertical_face(self, iv, j):
        """Index of the x-normal face at edge iv in cell row j."""
        return j * (self.nx + 1) + iv

    def horizontal_face(self, i, jh):
        """Index of the y-normal face at edge jh in cell column i."""
        return (self.nx + 1) * self.ny + jh * self.nx + i

    def cell_index(self, i, j):
        return j * self.nx + i


@dataclass
class FractureGrid:
    host_faces: np.ndarray        # matrix face index per fracture cell
    normal_axis: int              # axis of the host face normals
    cell_centers: np.ndarray      # (n_cells, 2)
    cell_lengths: np.ndarray
    tip_btags: np.ndarray         # (2,) boundary tag at low/high end, 0 interior

    @property
    def tangent_axis(self):
        return 1 - self.normal_axis

    @property
    def n_cells(self):
        return len(self.host_faces)

    @property
    def length(self):
        return float(self.cell_lengths.sum())


@dataclass
class CouplingEntry:
    frac_cell: int       # local index within the fracture
    cell_minus: int      # matrix cell on the - side of the host face
    cell_plus: int       # matrix cell on the + side
    interface_length: float
    normal_axis: int     # normal points - -> + along this axis


@dataclass
class MixedDimMesh:
    matrix: MatrixGrid
    fractures: list
    couplings: list      # list of lists of CouplingEntry, one per fracture
    face_to_fracture: dict  # matrix face index -> (frac id, local cell)

    @property
    def n_matrix_cells(self):
        return self.matrix.n_cells

    @property
    def n_fracture_cells(self):
        return sum(fg.n_cells for fg in self.fractures)

    def fracture_offsets(self):
        """Start offset of each fracture in the concatenated fracture vector."""
        offs = []
        o = 0
        for fg in self.fractures:
            offs.append(o)
            o += fg.n_cells
        return offs


def build_matrix_grid(nx, ny, lx, ly):
    """Uniform Cartesian cell-centered grid on [0, lx] x [0, ly]."""
    if nx < 1 or ny < 1:
        raise GeometryError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    if lx <= 0 or ly <= 0:
        raise GeometryError(f"domain lengths must be > 0, got lx={lx}, ly={ly}")
    x_edges = np.linspace(0.0, lx, nx + 1)
    y_edges = np.linspace(0.0, ly, ny + 1)
    return MatrixGrid(nx, ny, lx, ly, x_edges, y_edges)


def tensor_grid(x_edges, y_edges):
    """Cartesian grid from explicit, strictly increasing edge coordinates."""
    x_edges = np.asarray(x_edges, dtype=float)
    y_edges = np.asarray(y_edges, dtype=float)
    if len(x_edges) < 2 or len(y_edges) < 2:
        raise GeometryError("need at least two edge coordinates per axis")
    if np.any(np.diff(x_edges) <= 0) or np.any(np.diff(y_edges) <= 0):
        raise GeometryError("edge coordinates must be strictly increasing")
    return MatrixGrid(
        len(x_edges) - 1,
        len(y_edges) - 1,
        float(x_edges[-1] - x_edges[0]),
        float(y_edges[-1] - y_edges[0]),
        x_edges,
        y_edges,
    )


def fracture_face_path(grid, orientation, position, start, end):
    """Face indices of an axis-aligned fracture polyline.

    A horizontal fracture lies on y-normal faces at y = position and spans
    x in [start, end]; a vertical one lies on x-normal faces at x = position.
    The position and both extents must coincide with grid edge coordinates.
    """
    if orientation == "horizontal":
        line_edges, span_edges = grid.y_edges, grid.x_edges
    elif orientation == "vertical":
        line_edges, span_edges = grid.x_edges, grid.y_edges
    else:
        raise GeometryError(f"unknown fracture orientation {orientation!r}")

    tol = 1e-8 * max(grid.lx, grid.ly)
    jline = _match_edge(line_edges, position, tol)
    if jline is None:
        raise GeometryError(
            f"fracture position {position} does not lie on a grid line"
        )
    if jline == 0 or jline == len(line_edges) - 1:
        raise TopologyError("fracture lies on the domain boundary")
    i0 = _match_edge(span_edges, start, tol)
    i1 = _match_edge(span_edges, end, tol)
    if i0 is None or i1 is None:
        raise GeometryError(
            f"fracture extent [{start}, {end}] does not align with grid edges"
        )
    if i1 <= i0:
        raise GeometryError("fracture extent is empty")

    if orientation == "horizontal":
        return [grid.horizontal_face(i, jline) for i in range(i0, i1)]
    return [grid.vertical_face(jline, j) for j in range(i0, i1)]


def _match_edge(edges, value, tol):
    k = int(np.argmin(np.abs(edges - value)))
    if abs(edges[k] - value) <= tol:
        return k
    return None


def embed_fracture(grid, path):
    """Turn a contiguous run of interior faces into a fracture grid.

    Returns the FractureGrid and its CouplingEntry list; the +/- side
    labelling follows the host face normals and is constant along the run.
    """
    path = list(path)
    if not path:
        raise TopologyError("empty fracture path")
    if len(set(path)) != len(path):
        raise TopologyError("fracture path touches a face twice")

    axes = {int(grid.face_axis[f]) for f in path}
    if len(axes) != 1:
        raise TopologyError("fracture path mixes face orientations")
    normal_axis = axes.pop()
    for f in path:
        if grid.face_btag[f] != INTERIOR:
            raise TopologyError(f"face {f} is a boundary face")

    tangent = 1 - normal_axis
    order = np.argsort([grid.face_centers[f][tangent] for f in path])
    faces = np.array([path[k] for k in order], dtype=np.int64)

    # contiguity: successive host faces must share a grid edge
    centers = np.array([grid.face_centers[f] for f in faces])
    lengths = np.array([grid.face_areas[f] for f in faces])
    gaps = np.diff(centers[:, tangent]) - 0.5 * (lengths[:-1] + lengths[1:])
    if np.any(np.abs(centers[:, normal_axis] - centers[0, normal_axis]) > 0):
        raise TopologyError("fracture path is not a straight face run")
    if np.any(np.abs(gaps) > 1e-12 * max(grid.lx, grid.ly)):
        raise TopologyError("fracture path is not contiguous")

    entries = [
        CouplingEntry(
            frac_cell=c,
            cell_minus=int(grid.face_cells[f, 0]),
            cell_plus=int(grid.face_cells[f, 1]),
            interface_length=float(grid.face_areas[f]),
            normal_axis=normal_axis,
        )
        for c, f in enumerate(faces)
    ]

    span = 1 - normal_axis
    edges = grid.x_edges if span == 0 else grid.y_edges
    lo = centers[0, span] - 0.5 * lengths[0]
    hi = centers[-1, span] + 0.5 * lengths[-1]
    tol = 1e-12 * max(grid.lx, grid.ly)
    low_tag = (LEFT if span == 0 else BOTTOM) if abs(lo - edges[0]) <= tol else INTERIOR
    high_tag = (RIGHT if span == 0 else TOP) if abs(hi - edges[-1]) <= tol else INTERIOR

    frac = FractureGrid(
        host_faces=faces,
        normal_axis=normal_axis,
        cell_centers=centers,
        cell_lengths=lengths,
        tip_btags=np.array([low_tag, high_tag], dtype=np.int64),
    )
    return frac, entries


def build_mixed_dim_mesh(grid, paths):
    """Assemble the mixed-dimensional mesh from face-index fracture paths."""
    fractures = []
    couplings = []
    face_map = {}
    for fid, path in enumerate(paths):
        for f in path:
            if f in face_map:
                raise TopologyError(f"face {f} already hosts a fracture")
        frac, entries = embed_fracture(grid, path)
        for c, f in enumerate(frac.host_faces):
            face_map[int(f)] = (fid, c)
        fractures.append(frac)
        couplings.append(entries)
    return MixedDimMesh(grid, fractures, couplings, face_map)


def face_geometry(mesh, face):
    """Face area and the center-to-face distances of the adjacent cells.

    Boundary faces have one distance; the missing side is None.
    """
    grid = mesh.matrix if isinstance(mesh, MixedDimMesh) else mesh
    ax = int(grid.face_axis[face])
    fc = grid.face_centers[face][ax]
    dists = []
    for c in grid.face_cells[face]:
        if c < 0:
            dists.append(None)
        else:
            dists.append(abs(float(grid.cell_centers[c, ax] - fc)))
    return float(grid.face_areas[face]), tuple(dists)

"""Finite-volume simulator for flow and reactive transport in fractured
porous media, with fractures reduced to lower-dimensional interfaces and
pore structure evolving through precipitation and dissolution."""

__version__ = "0.1.0"

from .errors import (
    FracflowError, ConfigError, SingularSystemError, SolverError,
)
from .mesh import (
    build_matrix_grid, tensor_grid, embed_fracture, build_mixed_dim_mesh,
    fracture_face_path, face_geometry, MixedDimMesh,
)
from .chemistry import (
    ChemParams, reaction_rate, reaction_substep, porosity_update,
    aperture_update, matrix_permeability, fracture_permeability,
)
from .bc import EdgeBc, BcSet, no_flow_box, PRESSURE, FLUX, NOFLOW
from .flow import assemble_flow, solve_flow, coupling_flux, FlowState
from .transport import (
    assemble_transport, transport_step, precipitate_step, upwind_value,
    TransportState,
)
from .coupler import (
    TimeControls, SimState, initial_state, advance, run, mass_ledger,
    total_masses,
)
from .equidim import build_equidim, run_equidim, compare
from .config import parse_config, load_config, serialize_config, Config
from .output import write_matrix_vtk, write_fracture_vtk, write_timeseries

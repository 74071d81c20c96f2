"""Boundary conditions on the four domain edges.

Each edge carries one flow condition (prescribed pressure, prescribed
outward flux, or no-flow) together with the solute datum used when flow
enters through it.  Fracture tips that end on a domain edge inherit that
edge's condition with the fracture-specific data.
"""

import warnings
from dataclasses import dataclass

from . import mesh as msh

PRESSURE = "pressure"
FLUX = "flux"
NOFLOW = "noflow"

KINDS = (PRESSURE, FLUX, NOFLOW)


@dataclass
class EdgeBc:
    kind: str
    p: float = 0.0        # pressure datum [Pa]
    u: float = 0.0        # inflow solute concentration
    q: float = 0.0        # outward flux datum [m/s]
    frac_p: float = None  # fracture-tip pressure, defaults to p
    frac_u: float = None  # fracture-tip inflow concentration, defaults to u
    frac_q: float = 0.0   # fracture-tip outward flux [m^2/s]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.frac_p is None:
            self.frac_p = self.p
        if self.frac_u is None:
            self.frac_u = self.u
        if self.kind == FLUX and self.q <= 0:
            warnings.warn(
                "outflux boundary with q <= 0; the datum is expected to be an "
                "outward flow",
                stacklevel=2,
            )


@dataclass
class BcSet:
    left: EdgeBc
    right: EdgeBc
    bottom: EdgeBc
    top: EdgeBc

    def for_tag(self, btag):
        return {
            msh.LEFT: self.left,
            msh.RIGHT: self.right,
            msh.BOTTOM: self.bottom,
            msh.TOP: self.top,
        }[int(btag)]


def no_flow_box():
    """All-edges no-flow boundary set."""
    return BcSet(
        left=EdgeBc(NOFLOW),
        right=EdgeBc(NOFLOW),
        bottom=EdgeBc(NOFLOW),
        top=EdgeBc(NOFLOW),
    )

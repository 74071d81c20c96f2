"""Plain-text run configuration: INI sections with key = value pairs.

Unknown sections or keys are hard errors and every validation problem is
reported at once, each named by its key path (e.g. chem.phi_ref).  See
docs/config.md for the annotated reference file.
"""

import configparser
from dataclasses import dataclass, field

from . import bc as bcs
from . import mesh as msh
from .chemistry import ChemParams
from .coupler import TimeControls
from .errors import ConfigError


@dataclass
class Geometry:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0


@dataclass
class FractureSpec:
    orientation: str
    position: float
    start: float
    end: float


@dataclass
class InitialData:
    u: float = 0.0
    w: float = 0.0
    u_frac: float = None
    w_frac: float = None

    def __post_init__(self):
        if self.u_frac is None:
            self.u_frac = self.u
        if self.w_frac is None:
            self.w_frac = self.w


@dataclass
class Sources:
    f: float = 0.0
    f_gamma: float = 0.0


@dataclass
class OutputControls:
    directory: str = "."
    prefix: str = "run"
    write_vtk: bool = True
    write_csv: bool = True
    figures: bool = False
    probes: list = field(default_factory=list)  # [(i, j), ...] matrix cells


@dataclass
class Flags:
    enforce_cfl: bool = False


@dataclass
class EquidimControls:
    cells_across: int = 4
    auto_grade: bool = False


@dataclass
class Config:
    geometry: Geometry
    fractures: list
    chem: ChemParams
    bc: bcs.BcSet
    initial: InitialData
    sources: Sources
    time: TimeControls
    output: OutputControls
    flags: Flags
    equidim: EquidimControls


_EDGES = ("left", "right", "bottom", "top")

_SECTION_KEYS = {
    "geometry": {"nx", "ny", "lx", "ly"},
    "fracture": {"orientation", "position", "start", "end"},
    "chem": {
        "lambda", "zeta", "eta", "eta_gamma", "phi_ref", "k_ref", "alpha",
        "k_gamma_ref", "kappa_ref", "eps_ref", "d", "d_gamma", "delta",
        "eps_max", "eps_clog",
    },
    "bc": {"kind", "p", "u", "q", "frac_p", "frac_u", "frac_q"},
    "initial": {"u", "w", "u_frac", "w_frac"},
    "source": {"f", "f_gamma"},
    "time": {"t_end", "dt", "fixed_point", "fp_tol", "fp_maxit",
             "output_every"},
    "output": {"directory", "prefix", "write_vtk", "write_csv", "figures",
               "probes"},
    "flags": {"paper_literal_reaction_sign", "enforce_cfl"},
    "equidim": {"cells_across", "auto_grade"},
}


class _Reader:
    """Typed accessors over one parsed section, accumulating problems."""

    def __init__(self, name, items, problems):
        self.name = name
        self.items = dict(items)
        self.problems = problems

    def _raw(self, key, default, required):
        if key in self.items:
            return self.items.pop(key)
        if required:
            self.problems.append(f"{self.name}.{key}: missing required key")
        return default

    def get_float(self, key, default=None, required=False, check=None):
        raw = self._raw(key, default, required)
        if raw is None or isinstance(raw, float):
            val = raw
        else:
            try:
                val = float(raw)
            except ValueError:
                self.problems.append(f"{self.name}.{key}: not a number ({raw!r})")
                return default
        if val is not None and check is not None:
            msg = check(val)
            if msg:
                self.problems.append(f"{self.name}.{key}: {msg}")
        return val

    def get_int(self, key, default=None, required=False, check=None):
        raw = self._raw(key, default, required)
        if raw is None or isinstance(raw, int):
            val = raw
        else:
            try:
                val = int(raw)
            except ValueError:
                self.problems.append(f"{self.name}.{key}: not an integer ({raw!r})")
                return default
        if val is not None and check is not None:
            msg = check(val)
            if msg:
                self.problems.append(f"{self.name}.{key}: {msg}")
        return val

    def get_bool(self, key, default=False):
        raw = self._raw(key, default, False)
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        self.problems.append(f"{self.name}.{key}: not a boolean ({raw!r})")
        return default

    def get_str(self, key, default=None, required=False, choices=None):
        raw = self._raw(key, default, required)
        if raw is None:
            return default
        val = str(raw).strip()
        if choices and val not in choices:
            self.problems.append(
                f"{self.name}.{key}: must be one of {', '.join(choices)}"
            )
            return default
        return val

    def reject_leftovers(self, allowed):
        for key in self.items:
            if key not in allowed:
                self.problems.append(f"{self.name}.{key}: unknown key")


def parse_config(text):
    """Parse and validate a configuration; raises ConfigError listing every
    problem found, not just the first."""
    cp = configparser.ConfigParser(strict=True, interpolation=None)
    try:
        cp.read_string(text)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]") from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(
            f"duplicate key {exc.option!r} in section [{exc.section}]"
        ) from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    problems = []
    sections = {}
    fracture_sections = []
    for name in cp.sections():
        if name.startswith("fracture"):
            fracture_sections.append(name)
        elif name.startswith("bc."):
            edge = name[3:]
            if edge not in _EDGES:
                problems.append(f"{name}: unknown boundary edge")
        elif name not in _SECTION_KEYS:
            problems.append(f"[{name}]: unknown section")
        sections[name] = dict(cp.items(name))

    def reader(name):
        return _Reader(name, sections.get(name, {}), problems)

    # geometry
    g = reader("geometry")
    if "geometry" not in sections:
        problems.append("geometry: missing required section")
    nx = g.get_int("nx", required="geometry" in sections,
                   check=lambda v: None if v >= 1 else "must be >= 1")
    ny = g.get_int("ny", required="geometry" in sections,
                   check=lambda v: None if v >= 1 else "must be >= 1")
    lx = g.get_float("lx", 1.0, check=_positive)
    ly = g.get_float("ly", 1.0, check=_positive)
    g.reject_leftovers(_SECTION_KEYS["geometry"])
    geometry = Geometry(nx or 1, ny or 1, lx or 1.0, ly or 1.0)

    # fractures
    fractures = []
    for name in sorted(fracture_sections):
        r = reader(name)
        orientation = r.get_str("orientation", required=True,
                                choices=("horizontal", "vertical"))
        position = r.get_float("position", required=True)
        span = geometry.lx if orientation == "horizontal" else geometry.ly
        start = r.get_float("start", 0.0)
        end = r.get_float("end", span)
        r.reject_leftovers(_SECTION_KEYS["fracture"])
        if orientation and position is not None:
            fractures.append(FractureSpec(orientation, position, start, end))

    # chemistry
    c = reader("chem")
    fl = reader("flags")
    literal_sign = fl.get_bool("paper_literal_reaction_sign", False)
    enforce_cfl = fl.get_bool("enforce_cfl", False)
    fl.reject_leftovers(_SECTION_KEYS["flags"])
    eps_ref = c.get_float("eps_ref", 1e-3, check=_nonnegative)
    chem_kwargs = dict(
        lam=c.get_float("lambda", 0.0, check=_nonnegative),
        zeta=c.get_int("zeta", 1,
                       check=lambda v: None if v >= 1 else "must be >= 1"),
        eta=c.get_float("eta", 0.0, check=_nonnegative),
        eta_gamma=c.get_float("eta_gamma", 0.0, check=_nonnegative),
        phi_ref=c.get_float(
            "phi_ref", 0.2,
            check=lambda v: None if 0 < v <= 1 else "must lie in (0, 1]"),
        k_ref=c.get_float("k_ref", 1e-12, check=_positive),
        alpha=c.get_float("alpha", 2.0, check=_positive),
        k_gamma_ref=c.get_float("k_gamma_ref", 1e-12, check=_positive),
        kappa_ref=c.get_float("kappa_ref", 1e-12, check=_positive),
        eps_ref=eps_ref,
        d=c.get_float("d", 0.0, check=_nonnegative),
        d_gamma=c.get_float("d_gamma", 0.0, check=_nonnegative),
        delta=c.get_float("delta", 0.0, check=_nonnegative),
        eps_max=c.get_float("eps_max", None, check=_positive),
        eps_clog=c.get_float("eps_clog", 0.0, check=_nonnegative),
        literal_reaction_sign=literal_sign,
    )
    c.reject_leftovers(_SECTION_KEYS["chem"])

    # boundary conditions
    edges = {}
    for edge in _EDGES:
        name = f"bc.{edge}"
        if name not in sections:
            problems.append(f"{name}: missing required section")
            edges[edge] = bcs.EdgeBc(bcs.NOFLOW)
            continue
        r = reader(name)
        kind = r.get_str("kind", required=True, choices=bcs.KINDS)
        p = r.get_float("p", 0.0)
        u = r.get_float("u", 0.0, check=_nonnegative)
        q = r.get_float("q", 0.0)
        frac_p = r.get_float("frac_p", None)
        frac_u = r.get_float("frac_u", None, check=_nonnegative)
        frac_q = r.get_float("frac_q", 0.0)
        r.reject_leftovers(_SECTION_KEYS["bc"])
        if kind is None:
            kind = bcs.NOFLOW
        # a non-positive outflux datum only warns (EdgeBc emits it)
        edges[edge] = bcs.EdgeBc(kind, p=p, u=u, q=q, frac_p=frac_p,
                                 frac_u=frac_u, frac_q=frac_q)
    bcset = bcs.BcSet(**edges)

    # initial data
    i = reader("initial")
    initial = InitialData(
        u=i.get_float("u", 0.0, check=_nonnegative),
        w=i.get_float("w", 0.0, check=_nonnegative),
        u_frac=i.get_float("u_frac", None, check=_nonnegative),
        w_frac=i.get_float("w_frac", None, check=_nonnegative),
    )
    i.reject_leftovers(_SECTION_KEYS["initial"])

    s = reader("source")
    sources = Sources(f=s.get_float("f", 0.0), f_gamma=s.get_float("f_gamma", 0.0))
    s.reject_leftovers(_SECTION_KEYS["source"])

    t = reader("time")
    time_kwargs = dict(
        t_end=t.get_float("t_end", 0.0, check=_nonnegative),
        dt=t.get_float("dt", 1.0, check=_positive),
        fixed_point=t.get_bool("fixed_point", False),
        fp_tol=t.get_float("fp_tol", 1e-8, check=_positive),
        fp_maxit=t.get_int("fp_maxit", 50,
                           check=lambda v: None if v >= 2 else "must be >= 2"),
        output_every=t.get_int(
            "output_every", 1,
            check=lambda v: None if v >= 1 else "must be >= 1"),
    )
    t.reject_leftovers(_SECTION_KEYS["time"])

    o = reader("output")
    probes_raw = o.get_str("probes", "")
    probes = []
    if probes_raw:
        for item in probes_raw.split(";"):
            item = item.strip()
            if not item:
                continue
            try:
                iy, jy = (int(v) for v in item.split(","))
                probes.append((iy, jy))
            except ValueError:
                problems.append(f"output.probes: bad probe {item!r}, "
                                "expected 'i,j' pairs separated by ';'")
    output = OutputControls(
        directory=o.get_str("directory", "."),
        prefix=o.get_str("prefix", "run"),
        write_vtk=o.get_bool("write_vtk", True),
        write_csv=o.get_bool("write_csv", True),
        figures=o.get_bool("figures", False),
        probes=probes,
    )
    o.reject_leftovers(_SECTION_KEYS["output"])

    e = reader("equidim")
    equidim = EquidimControls(
        cells_across=e.get_int(
            "cells_across", 4,
            check=lambda v: None if v >= 3 else "must be >= 3"),
        auto_grade=e.get_bool("auto_grade", False),
    )
    e.reject_leftovers(_SECTION_KEYS["equidim"])

    for spec in fractures:
        _check_fracture(spec, geometry, problems)
    for (iy, jy) in probes:
        if not (0 <= iy < geometry.nx and 0 <= jy < geometry.ny):
            problems.append(f"output.probes: probe ({iy},{jy}) outside grid")

    if problems:
        raise ConfigError(problems)

    try:
        chem_params = ChemParams(**chem_kwargs)
    except ValueError as exc:
        raise ConfigError(f"chem: {exc}") from exc
    time_controls = TimeControls(**time_kwargs)

    return Config(
        geometry=geometry, fractures=fractures, chem=chem_params, bc=bcset,
        initial=initial, sources=sources, time=time_controls, output=output,
        flags=Flags(enforce_cfl=enforce_cfl), equidim=equidim,
    )


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonnegative(v):
    return None if v >= 0 else "must be >= 0"


def _check_fracture(spec, geometry, problems):
    if spec.orientation == "horizontal":
        if not (0 < spec.position < geometry.ly):
            problems.append("fracture.position: must lie strictly inside the domain")
        hi = geometry.lx
    else:
        if not (0 < spec.position < geometry.lx):
            problems.append("fracture.position: must lie strictly inside the domain")
        hi = geometry.ly
    if not (0 <= spec.start < spec.end <= hi):
        problems.append("fracture extent: need 0 <= start < end <= domain length")


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_mesh(config):
    """Mixed-dimensional mesh from the geometry and fracture sections."""
    grid = msh.build_matrix_grid(config.geometry.nx, config.geometry.ny,
                                 config.geometry.lx, config.geometry.ly)
    paths = [
        msh.fracture_face_path(grid, fs.orientation, fs.position,
                               fs.start, fs.end)
        for fs in config.fractures
    ]
    return msh.build_mixed_dim_mesh(grid, paths)


def serialize_config(config):
    """Canonical text form; parsing it again reproduces the Config."""
    lines = []

    def section(name, pairs):
        lines.append(f"[{name}]")
        for k, v in pairs:
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")

    geo = config.geometry
    section("geometry", [("nx", geo.nx), ("ny", geo.ny),
                         ("lx", geo.lx), ("ly", geo.ly)])
    for n, fs in enumerate(config.fractures):
        section(f"fracture.{n}", [
            ("orientation", fs.orientation), ("position", fs.position),
            ("start", fs.start), ("end", fs.end),
        ])
    ch = config.chem
    section("chem", [
        ("lambda", ch.lam), ("zeta", ch.zeta), ("eta", ch.eta),
        ("eta_gamma", ch.eta_gamma), ("phi_ref", ch.phi_ref),
        ("k_ref", ch.k_ref), ("alpha", ch.alpha),
        ("k_gamma_ref", ch.k_gamma_ref), ("kappa_ref", ch.kappa_ref),
        ("eps_ref", ch.eps_ref), ("d", ch.d), ("d_gamma", ch.d_gamma),
        ("delta", ch.delta), ("eps_max", ch.eps_max),
        ("eps_clog", ch.eps_clog),
    ])
    for edge in _EDGES:
        eb = getattr(config.bc, edge)
        section(f"bc.{edge}", [
            ("kind", eb.kind), ("p", eb.p), ("u", eb.u), ("q", eb.q),
            ("frac_p", eb.frac_p), ("frac_u", eb.frac_u),
            ("frac_q", eb.frac_q),
        ])
    init = config.initial
    section("initial", [("u", init.u), ("w", init.w),
                        ("u_frac", init.u_frac), ("w_frac", init.w_frac)])
    section("source", [("f", config.sources.f),
                       ("f_gamma", config.sources.f_gamma)])
    tc = config.time
    section("time", [
        ("t_end", tc.t_end), ("dt", tc.dt), ("fixed_point", tc.fixed_point),
        ("fp_tol", tc.fp_tol), ("fp_maxit", tc.fp_maxit),
        ("output_every", tc.output_every),
    ])
    oc = config.output
    probes = "; ".join(f"{i},{j}" for i, j in oc.probes)
    section("output", [
        ("directory", oc.directory), ("prefix", oc.prefix),
        ("write_vtk", oc.write_vtk), ("write_csv", oc.write_csv),
        ("figures", oc.figures), ("probes", probes),
    ])
    section("flags", [
        ("paper_literal_reaction_sign", ch.literal_reaction_sign),
        ("enforce_cfl", config.flags.enforce_cfl),
    ])
    section("equidim", [
        ("cells_across", config.equidim.cells_across),
        ("auto_grade", config.equidim.auto_grade),
    ])
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)

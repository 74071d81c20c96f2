"""Pointwise closures: reaction rate law, the (u, w) reaction ODE substep,
porosity/aperture evolution and the permeability laws.

All functions accept scalars or numpy arrays and never mutate their inputs.
The reaction substep integrates

    du/dt = -rate(u, w),   dw/dt = +rate(u, w)

with the pore-structure fields frozen, so u + w is invariant; the integrator
tracks u only and recovers w from the invariant, which makes the conservation
exact.  Dissolution is stopped at the w = 0 crossing by bisection.
"""

from dataclasses import dataclass

import numpy as np

W_EVENT_TOL = 1e-12


@dataclass
class ChemParams:
    lam: float = 0.0          # reaction constant [1/s]
    zeta: int = 1             # exponent of the equilibrium term u**zeta
    eta: float = 0.0          # matrix deposition coefficient
    eta_gamma: float = 0.0    # fracture deposition coefficient
    phi_ref: float = 0.2      # reference porosity
    k_ref: float = 1e-12      # reference matrix permeability [m^2]
    alpha: float = 2.0        # Kozeny exponent
    k_gamma_ref: float = 1e-12
    kappa_ref: float = 1e-12
    eps_ref: float = 1e-3     # initial fracture aperture [m]
    d: float = 0.0            # matrix diffusivity [m^2/s]
    d_gamma: float = 0.0      # tangential fracture diffusivity
    delta: float = 0.0        # normal fracture diffusivity
    eps_max: float = None     # aperture growth clamp, defaults to 10 eps_ref
    eps_clog: float = 0.0     # snap-to-zero threshold for the aperture
    literal_reaction_sign: bool = False

    def __post_init__(self):
        if self.eps_max is None:
            self.eps_max = 10.0 * self.eps_ref
        self.validate()

    def validate(self):
        problems = []
        if self.lam < 0:
            problems.append("lambda must be >= 0")
        if int(self.zeta) != self.zeta or self.zeta < 1:
            problems.append("zeta must be a positive integer")
        if self.eta < 0 or self.eta_gamma < 0:
            problems.append("deposition coefficients must be >= 0")
        if not (0 < self.phi_ref <= 1):
            problems.append("phi_ref must lie in (0, 1]")
        if self.k_ref <= 0:
            problems.append("k_ref must be > 0")
        if self.alpha <= 0:
            problems.append("alpha must be > 0")
        if self.k_gamma_ref <= 0 or self.kappa_ref <= 0:
            problems.append("fracture reference permeabilities must be > 0")
        if self.eps_ref < 0:
            problems.append("eps_ref must be >= 0")
        if self.d < 0 or self.d_gamma < 0 or self.delta < 0:
            problems.append("diffusivities must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))


def reaction_rate(u, w, p):
    """Net precipitation rate.

    Positive above equilibrium (precipitation), negative below while
    precipitate remains (dissolution), zero once it is exhausted.  With
    p.literal_reaction_sign the dissolution branch flips sign, reproducing
    the uncorrected piecewise law for comparison.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(u < 0):
        raise ValueError("solute concentration must be >= 0")
    excess = u ** p.zeta - 1.0
    rate = p.lam * excess
    dissolving = excess < 0
    if p.literal_reaction_sign:
        rate = np.where(dissolving & (w > 0), -rate, rate)
    rate = np.where(dissolving & (w <= 0), 0.0, rate)
    if rate.ndim == 0:
        return float(rate)
    return rate


def reaction_substep(u, w, dt, p):
    """Advance the pointwise reaction ODE over dt with frozen pore structure.

    Works elementwise on arrays.  Returns (u', w') with u' + w' = u + w
    exactly and w' = 0 located by bisection when dissolution exhausts the
    precipitate within the step.
    """
    scalar = np.ndim(u) == 0 and np.ndim(w) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float)).copy()
    w = np.atleast_1d(np.asarray(w, dtype=float)).copy()
    if np.any(u < 0) or np.any(w < 0):
        raise ValueError("u and w must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if p.lam == 0.0:
        return (float(u[0]), float(w[0])) if scalar else (u, w)

    total = u + w
    if p.literal_reaction_sign:
        u = _integrate_literal(u, w, dt, p)
    else:
        u = _integrate_u(u, total, dt, p)
    w = total - u
    # snap round-off so exhausted cells end at exactly zero
    w[np.abs(w) <= W_EVENT_TOL] = 0.0
    np.clip(w, 0.0, None, out=w)
    u = total - w
    if scalar:
        return float(u[0]), float(w[0])
    return u, w


def _smooth_rate(u, p):
    # valid while w > 0: both active branches share lam*(u**zeta - 1)
    return p.lam * (u ** p.zeta - 1.0)


def _n_substeps(u_max, dt, p):
    stiff = p.lam * p.zeta * max(1.0, u_max) ** (p.zeta - 1)
    return max(1, int(np.ceil(stiff * dt / 0.01)))


def _rk4(u, h, p):
    k1 = -_smooth_rate(u, p)
    k2 = -_smooth_rate(u + 0.5 * h * k1, p)
    k3 = -_smooth_rate(u + 0.5 * h * k2, p)
    k4 = -_smooth_rate(u + h * k3, p)
    return u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_u(u, total, dt, p):
    """RK4 sub-stepping of du/dt = -lam*(u**zeta - 1) with w = total - u.

    Cells already in the stopped branch (w = 0, u below equilibrium) are
    frozen; cells whose dissolution would push w negative get the substep
    bisected to the crossing and freeze thereafter.
    """
    n = _n_substeps(float(np.max(total, initial=0.0)), dt, p)
    h = dt / n
    frozen = (total - u <= 0.0) & (u ** p.zeta < 1.0)
    for _ in range(n):
        active = ~frozen
        if not np.any(active):
            break
        u_new = u.copy()
        u_new[active] = _rk4(u[active], h, p)
        # dissolution exhausts the precipitate inside this substep: the rate
        # is zero past the crossing, so the end state is exactly (total, 0)
        crossed = active & (u_new > total)
        if np.any(crossed):
            u_new[crossed] = total[crossed]
            frozen = frozen | crossed
        u = u_new
        # equilibrium overshoot from above cannot occur for smooth RK4 with
        # the chosen substep, but freezing exact hits costs nothing
        frozen = frozen | ((total - u <= W_EVENT_TOL) & (u ** p.zeta < 1.0))
    return u


def _integrate_literal(u, w, dt, p):
    """Forward integration of the uncorrected sign variant (diagnostic only)."""
    n = _n_substeps(float(np.max(u + w, initial=0.0)), dt, p)
    h = dt / n
    for _ in range(n):
        rate = reaction_rate(np.clip(u, 0.0, None), w, p)
        u = u - h * rate
        w = w + h * rate
    return np.clip(u, 0.0, None)


def deposition_update(value, dw, coef):
    """Exact integrator of d(value)/dt = -coef * value * dw/dt over a step.

    Works for both porosity (coef = eta) and aperture (coef = eta_gamma);
    zero states stay zero since the deposition function vanishes there.
    """
    value = np.asarray(value, dtype=float)
    dw = np.asarray(dw, dtype=float)
    out = value * np.exp(-np.asarray(coef, dtype=float) * dw)
    out = np.where(value == 0.0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def porosity_update(phi, dw, p):
    """Porosity after the precipitate changed by dw, clamped to [0, 1]."""
    out = np.clip(deposition_update(phi, dw, p.eta), 0.0, 1.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def aperture_update(eps, dw_gamma, p):
    """Aperture after the fracture precipitate changed by dw_gamma.

    Clamped to [0, eps_max]; apertures below eps_clog snap to zero so a
    clogging run reaches the degenerate limit in finite time.
    """
    out = np.clip(deposition_update(eps, dw_gamma, p.eta_gamma), 0.0, p.eps_max)
    if p.eps_clog > 0.0:
        out = np.where(np.asarray(out) < p.eps_clog, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def matrix_permeability(phi, p):
    """Kozeny power law, k_ref at the reference porosity, zero when clogged."""
    out = p.k_ref * (np.asarray(phi, dtype=float) / p.phi_ref) ** p.alpha
    if np.ndim(out) == 0:
        return float(out)
    return out


def fracture_permeability(eps, p):
    """Tangential and normal fracture permeabilities, quadratic in aperture."""
    eps = np.asarray(eps, dtype=float)
    scale = eps ** 2 / p.eps_ref
    k_gamma = p.k_gamma_ref * scale
    kappa = p.kappa_ref * scale
    if np.ndim(scale) == 0:
        return float(k_gamma), float(kappa)
    return k_gamma, kappa

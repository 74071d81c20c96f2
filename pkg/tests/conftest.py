import numpy as np
import pytest

from fracflow.chemistry import ChemParams


@pytest.fixture
def base_params():
    return ChemParams(
        lam=1.0, zeta=2, eta=0.05, eta_gamma=0.5,
        phi_ref=0.2, k_ref=1e-12, alpha=2.0,
        k_gamma_ref=1e-8, kappa_ref=1e-8, eps_ref=1e-2,
        d=1e-13, d_gamma=1e-9, delta=1e-9,
    )


def config_text(**overrides):
    """Minimal valid config text; sections given as dicts override/extend."""
    base = {
        "geometry": {"nx": 8, "ny": 4, "lx": 1.0, "ly": 0.5},
        "chem": {},
        "bc.left": {"kind": "pressure", "p": 1.0, "u": 1.0},
        "bc.right": {"kind": "pressure", "p": 0.0},
        "bc.bottom": {"kind": "noflow"},
        "bc.top": {"kind": "noflow"},
        "time": {"t_end": 0.0, "dt": 1.0},
        "output": {},
    }
    for name, pairs in overrides.items():
        name = name.replace("__", ".")
        if pairs is None:
            base.pop(name, None)
        else:
            base.setdefault(name, {}).update(pairs)
    chunks = []
    for name, pairs in base.items():
        chunks.append(f"[{name}]")
        for k, v in pairs.items():
            chunks.append(f"{k} = {v}")
        chunks.append("")
    return "\n".join(chunks)


def l2_cell_norm(values, volumes):
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.sum(values ** 2 * volumes)))

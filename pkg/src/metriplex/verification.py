"""Identity checks for registered systems, collected into JSON-ready reports."""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np

from . import chm
from .errors import ConfigError
from .poisson import (
    HamiltonianSystem,
    RankAmbiguityWarning,
    antisymmetry_violation,
    casimir_residual,
    divergence_residual,
    jacobi_residual,
    operator_rank,
)
from .systems import get_system

TOLERANCES = {
    "antisymmetry": 1e-14,
    "jacobi": 1e-8,
    "casimir": 1e-12,
    "liouville": 1e-12,
    "rhs_agreement": 1e-12,
}

# default grids for the bracket axiom suite
_BRACKET_GRIDS = {2: (8.0, 64), 3: (4.0, 16)}


def _check(value: float, threshold: Optional[float]) -> dict:
    out = {"value": float(value)}
    if threshold is not None:
        out["threshold"] = threshold
        out["pass"] = bool(value <= threshold)
    return out


def random_states(sys: HamiltonianSystem, count: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((count, sys.n))


def generic_checks(sys: HamiltonianSystem, states: np.ndarray) -> dict:
    """Antisymmetry, Jacobi (analytic partials), Casimir and measure checks at each state."""
    checks = {
        "antisymmetry": _check(antisymmetry_violation(sys, states), TOLERANCES["antisymmetry"]),
        "jacobi": _check(jacobi_residual(sys, states), TOLERANCES["jacobi"]),
        "liouville": _check(float(np.max(np.abs(divergence_residual(sys, states)))), TOLERANCES["liouville"]),
    }
    for k, c in enumerate(sys.casimirs):
        res = float(np.max(np.abs(casimir_residual(sys, k, states))))
        checks[f"casimir_{c.name}"] = _check(res, TOLERANCES["casimir"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankAmbiguityWarning)
        ranks = sorted({operator_rank(sys, x) for x in states[: min(len(states), 20)]})
    checks["rank"] = {"values": ranks}
    return checks


def chm_checks(K: int, c: float, count: int, rng: np.random.Generator) -> dict:
    """Spectral identities at random unit-norm states; Jacobi on interior triads only."""
    anti = jac = bjac = cas = rhs = div = trace = 0.0
    sysc = chm.chm_system(K, c)
    for _ in range(count):
        st = chm.random_state(K, rng, c)
        anti = max(anti, chm.antisymmetry_violation(K, st.coeffs, c))
        jac = max(jac, chm.interior_jacobi_residual(K, st.coeffs, c))
        bjac = max(bjac, chm.boundary_jacobi_residual(K, st.coeffs, c))
        if c == 0.0:
            cas = max(cas, chm.casimir_residual(st))
        a, b = chm.rhs_deterministic(st), chm.rhs_operator(st)
        rhs = max(rhs, float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)))
        y = st.to_real()
        div = max(div, float(np.max(np.abs(divergence_residual(sysc, y)))))
    st = chm.random_state(K, rng, c)
    trace = abs(chm.liouville_trace(st))
    checks = {
        "antisymmetry": _check(anti, TOLERANCES["antisymmetry"]),
        "jacobi_interior": _check(jac, TOLERANCES["jacobi"]),
        "jacobi_boundary": _check(bjac, None),
        "liouville": _check(div, TOLERANCES["liouville"]),
        "liouville_fd_trace": _check(trace, None),
        "rhs_agreement": _check(rhs, TOLERANCES["rhs_agreement"]),
    }
    if c == 0.0:
        checks["casimir"] = _check(cas, TOLERANCES["casimir"])
    return checks


def bracket_report(sys: HamiltonianSystem, seed: int = 0, cells: Optional[int] = None,
                   corrupt: bool = False) -> dict:
    """Grid bracket axiom suite on a default box, or a skip note for n > 3."""
    from .brackets import run_axiom_suite
    from .fokker_planck import GridModel
    from .grid import PhaseGrid

    if sys.n not in _BRACKET_GRIDS:
        return {"skipped": f"grid brackets need dimension 2 or 3, system has {sys.n}"}
    half, default_cells = _BRACKET_GRIDS[sys.n]
    grid = PhaseGrid.uniform(sys.n, half, cells or default_cells)
    model = GridModel(sys, grid, D=1.0)
    return run_axiom_suite(model, seed=seed, corrupt=corrupt).to_dict()


def verify_system(name: str, params: Optional[dict] = None, states: int = 100, seed: int = 0,
                  brackets: bool = True, cells: Optional[int] = None) -> dict:
    """Full identity report for a registered system; ``ok`` is false on any violation."""
    params = dict(params or {})
    if states < 1:
        raise ConfigError("need at least one state")
    sys = get_system(name, **params)
    rng = np.random.default_rng(seed)
    if name == "chm":
        checks = chm_checks(int(params.get("K", 2)), float(params.get("c", 0.0)), states, rng)
    else:
        checks = generic_checks(sys, random_states(sys, states, rng))
    report = {
        "system": name,
        "params": sys.params or params,
        "states": states,
        "seed": seed,
        "checks": checks,
    }
    ok = all(v.get("pass", True) for v in checks.values())
    if brackets:
        br = bracket_report(sys, seed=seed, cells=cells)
        report["brackets"] = br
        ok = ok and br.get("ok", True)
    report["ok"] = bool(ok)
    return report

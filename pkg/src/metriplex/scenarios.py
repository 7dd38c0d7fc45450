"""Scenario drivers: turn a validated config into artifacts in an output directory."""

from __future__ import annotations

import time
from typing import Callable, Dict

import numpy as np

from . import chm
from . import fokker_planck as fp
from . import stochastic as sd
from .config import RunConfig
from .errors import ConfigError, MetriplexError, NumericalError
from .grid import PhaseGrid
from .io import OutputDir
from .poisson import HamiltonianSystem
from .systems import get_system, polynomial_system


def build_system(cfg: RunConfig) -> HamiltonianSystem:
    sec = cfg.section("system")
    if sec["polynomial"] is not None:
        return polynomial_system(sec["polynomial"])
    if sec["name"] is None:
        raise ConfigError("key 'system.name' is required")
    return get_system(sec["name"], **sec["params"])


def _friction(text: str, D: float, update_every: int) -> sd.FrictionModel:
    text = text.strip()
    if text.startswith("fixed:"):
        try:
            beta = float(text[6:])
        except ValueError:
            raise ConfigError(f"cannot parse friction {text!r}") from None
        return sd.FrictionModel("fixed", beta, D, update_every)
    if text == "adaptive" or text.startswith("adaptive:"):
        beta0 = float(text[9:]) if ":" in text else 1.0
        return sd.FrictionModel("adaptive", beta0, D, update_every)
    raise ConfigError(f"friction must be 'fixed:<beta>' or 'adaptive[:<beta0>]', got {text!r}")


def run_sde(cfg: RunConfig, out: OutputDir) -> dict:
    sys = build_system(cfg)
    p = cfg.section("sde")
    x0 = np.asarray(p["x0"], dtype=float)
    if x0.shape != (sys.n,):
        raise ConfigError(f"sde.x0 has {x0.size} entries, system dimension is {sys.n}")
    if p["N"] < 1:
        raise ConfigError("sde.N must be positive")
    rng = np.random.default_rng([cfg.seed, 1])
    particles = x0 + p["spread"] * rng.standard_normal((p["N"], sys.n))
    friction = _friction(p["friction"], p["D"], p["update_every"])
    ens = sd.Ensemble(particles, sd.NoiseModel(p["D"], cfg.seed), friction)
    c0 = [c(ens.particles) for c in sys.casimirs]
    res = sd.evolve(ens, sys, p["dt"], p["steps"], p["record_every"], p["density_cells"], cfg.threads, p["scheme"])
    header, rows = sd.diagnostics_table(res.records, len(sys.casimirs))
    out.write_csv("diagnostics.csv", header, rows)
    final = res.ensemble.particles
    out.write_array("final_particles", final, {"columns": sys.coordinate_names(), "time": res.ensemble.time})
    H = sys.hamiltonian(final)
    summary = {
        "system": sys.name,
        "time": res.ensemble.time,
        "mean_H": float(np.mean(H)),
        "stderr_H": float(np.std(H, ddof=1) / np.sqrt(len(H))) if len(H) > 1 else float("nan"),
        "beta_final": res.records[-1].beta_estimate,
        "friction": p["friction"],
    }
    if friction.mode == "fixed" and sys.n == 2 and friction.beta > 0:
        summary["equipartition_target"] = 1.0 / friction.beta
    for k, c in enumerate(sys.casimirs):
        drift = np.abs(c(final) - c0[k]) / np.maximum(np.abs(c0[k]), 1e-300)
        summary[f"max_relative_drift_{c.name}"] = float(np.max(drift))
    out.write_json("summary.json", summary)
    return summary


def run_fpe(cfg: RunConfig, out: OutputDir) -> dict:
    sys = build_system(cfg)
    g = cfg.section("grid")
    p = cfg.section("fpe")
    grid = PhaseGrid(g["min"], g["max"], g["cells"])
    model = fp.GridModel(sys, grid, p["D"], p["weights"], p["advection"], p["tail_upwind"], p["steep_upwind"])
    centre = p["centre"] if p["centre"] is not None else [0.0] * sys.n
    variance = p["variance"] if p["variance"] is not None else [1.0] * sys.n
    f0 = fp.gaussian_initial(model, centre, variance)
    res = fp.relax_to_equilibrium(f0, model, p["dt"], p["t_end"], p["beta"], p["record_every"])
    names = [c.name for c in sys.casimirs]
    header = ["t", "N", "E", "S", "Sigma", "beta", "dSdt", "L1_eq"] + names
    rows = [[r.t, r.N, r.E, r.S, r.Sigma, r.beta, r.dSdt, r.L1_eq, *r.casimirs] for r in res.records]
    out.write_csv("diagnostics.csv", header, rows)
    out.write_array("final_density", res.final.values, {"grid": grid.to_dict(), "time": res.final.time})
    summary = {
        "system": sys.name,
        "weights": model.weights,
        "max_energy_drift": res.max_energy_drift,
        "min_entropy_increment": res.min_entropy_increment,
        "final_L1_to_equilibrium": res.records[-1].L1_eq,
        "final_beta": res.records[-1].beta,
        "boundary_mass": res.boundary_mass,
        "stable_dt": model.stable_dt(res.records[-1].beta),
    }
    out.write_json("summary.json", summary)
    return summary


def run_chm_integrate(cfg: RunConfig, out: OutputDir) -> dict:
    p = cfg.section("chm")
    rng = np.random.default_rng([cfg.seed, 2])
    state = chm.random_state(p["K"], rng, p["c"], p["amplitude"])
    res = chm.integrate_deterministic(state, p["dt"], p["steps"], p["record_every"])
    out.write_csv("diagnostics.csv", ["t", "H", "C"], zip(res.times, res.energy, res.casimir))
    out.write_array("final_state", res.state.to_real(), {"chart": chm._chart_names(p["K"]), "K": p["K"], "c": p["c"]})
    summary = {
        "K": p["K"],
        "c": p["c"],
        "energy_drift": res.energy_drift,
        "casimir_drift": res.casimir_drift,
        "max_reality_violation": res.max_reality_violation,
    }
    out.write_json("summary.json", summary)
    return summary


def run_chm_thermalize(cfg: RunConfig, out: OutputDir) -> dict:
    p = cfg.section("chm")
    res = chm.thermalize(
        p["K"], p["beta"], p["mu"], p["N"], p["D"], p["dt"], p["steps"], seed=cfg.seed,
        average_from=p["average_from"] or None, record_every=p["record_every"], scheme=p["scheme"],
        threads=cfg.threads,
    )
    alpha = chm.alpha_coefficients(p["K"], p["beta"], p["mu"])[-len(res.modes):]
    rows = [
        [int(n), int(m), a, me, pr, me / pr - 1.0, bool(fz)]
        for (n, m), a, pr, me, fz in zip(res.modes, alpha, res.predicted, res.measured, res.frozen)
    ]
    header = ["n", "m", "alpha_nm", "mean_sq_amp", "predicted", "relative_error", "frozen"]
    out.write_csv("spectrum.csv", header, rows)
    labels = [f"ms_{n}_{m}" for n, m in res.modes]
    out.write_csv("history.csv", ["t"] + labels, [[t, *h] for t, h in zip(res.times, res.history)])
    summary = {
        "K": p["K"],
        "beta": p["beta"],
        "mu": p["mu"],
        "max_relative_error": res.max_error(),
        "max_relative_error_including_frozen": res.max_error(include_frozen=True),
        "casimir_drift": res.casimir_drift,
        "partition_function": chm.partition_function(p["K"], p["beta"], p["mu"]),
    }
    out.write_json("summary.json", summary)
    return summary


SCENARIOS: Dict[str, Callable[[RunConfig, OutputDir], dict]] = {
    "sde": run_sde,
    "fpe": run_fpe,
    "chm-integrate": run_chm_integrate,
    "chm-thermalize": run_chm_thermalize,
}


def execute(cfg: RunConfig, out_dir=None) -> dict:
    """Run the configured scenario and always leave a manifest behind.

    Numerical failures are recorded in the manifest and re-raised.
    """
    out = OutputDir(out_dir or cfg.out, cfg.to_dict())
    out.write_json("config.json", cfg.to_dict())
    t0 = time.perf_counter()
    try:
        summary = SCENARIOS[cfg.scenario](cfg, out)
    except NumericalError as exc:
        out.manifest.timings["wall_seconds"] = time.perf_counter() - t0
        msg = str(exc)
        if exc.last_good_time is not None:
            msg += f" (last good time {exc.last_good_time:.6g})"
        out.finish("numerical-failure", msg)
        raise
    except MetriplexError as exc:
        out.manifest.timings["wall_seconds"] = time.perf_counter() - t0
        out.finish("error", str(exc))
        raise
    out.manifest.timings["wall_seconds"] = time.perf_counter() - t0
    out.finish("ok")
    return summary

"""Finite-volume Fokker-Planck solver on rectangular phase-space grids.

The right-hand side is the divergence of face fluxes

    F = f J grad H  -  (D/2) f g grad(log f + beta H),     g = J J^T,

with exactly zero flux through the outer boundary.  The advective part is
assembled from vertex quantities, ``f`` averaged to vertices times
``J grad H`` with the vertex gradient of the sampled Hamiltonian, which makes
it the transpose of an antisymmetric grid bracket.  The diffusive part uses
face-normal differences of ``u = log f + beta H`` with one of two weightings:

* ``logmean``: face weight is the logarithmic mean of the two cells times
  ``g^{kk}``; then ``W d(log f) = df`` exactly, which keeps the update
  positivity-preserving.  Only valid for a constant diagonal metric.
* ``vertex``: face weight is the average of ``f g^{kk}`` over the vertices
  of the face, plus an off-diagonal vertex correction.  This form is positive
  semidefinite for any metric and annihilates quadratic Casimirs of linear
  operators exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import grid as st
from .errors import ConfigError, DegenerateError, NumericalError, StabilityError
from .grid import PhaseGrid
from .poisson import HamiltonianSystem

LOG_FLOOR = 1e-300
TAIL_UPWIND = 1e-10
STEEP_UPWIND = 4.0
MASS_TOL = 1e-12


@dataclass(frozen=True)
class BetaMode:
    """``fixed`` with a value, or ``adaptive`` (recomputed every RK stage)."""

    kind: str
    value: Optional[float] = None

    @classmethod
    def parse(cls, text) -> "BetaMode":
        if isinstance(text, BetaMode):
            return text
        if isinstance(text, (int, float)):
            return cls("fixed", float(text))
        s = str(text).strip()
        if s == "adaptive":
            return cls("adaptive")
        if s.startswith("fixed:"):
            try:
                return cls("fixed", float(s.split(":", 1)[1]))
            except ValueError:
                pass
        raise ConfigError(f"beta_mode must be 'adaptive' or 'fixed:<value>', got {text!r}")

    def __str__(self):
        return "adaptive" if self.kind == "adaptive" else f"fixed:{self.value:g}"


@dataclass
class GridDistribution:
    values: np.ndarray
    grid: PhaseGrid
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.grid.cells):
            raise ConfigError(f"values shape {self.values.shape} does not match grid {self.grid.cells}")

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def check(self, mass_tol: float = MASS_TOL):
        if np.any(self.values < 0):
            raise NumericalError("distribution has negative cells", last_good_time=self.time)
        if abs(self.mass - 1.0) > mass_tol:
            raise NumericalError(f"distribution mass {self.mass!r} is not 1", last_good_time=self.time)


@dataclass(frozen=True)
class FluxField:
    """Face fluxes per axis, including the two boundary layers of faces."""

    faces: tuple

    def divergence(self, grid: PhaseGrid) -> np.ndarray:
        return sum(-np.diff(F, axis=k) / grid.h[k] for k, F in enumerate(self.faces))

    def boundary_flux_max(self) -> float:
        out = 0.0
        for k, F in enumerate(self.faces):
            lo = np.take(F, 0, axis=k)
            hi = np.take(F, -1, axis=k)
            out = max(out, float(np.max(np.abs(lo))), float(np.max(np.abs(hi))))
        return out


@dataclass(frozen=True)
class EquilibriumParams:
    beta: float
    mu: tuple
    Z: float

    @property
    def alpha(self) -> float:
        return math.log(self.Z) - 1.0


@dataclass
class GridModel:
    """A Hamiltonian system sampled on a grid, with noise amplitude ``D``.

    ``tail_upwind`` and ``steep_upwind`` control the positivity safeguards:
    faces next to cells below ``tail_upwind * max f`` use donor-cell and
    two-cell forms, and faces where the centered stencil leans on cells much
    heavier than the two it separates are limited.  Zero disables either one.
    """

    system: HamiltonianSystem
    grid: PhaseGrid
    D: float
    weights: str = "auto"
    advection: str = "centered"
    tail_upwind: float = TAIL_UPWIND
    steep_upwind: float = STEEP_UPWIND

    def __post_init__(self):
        if self.system.n != self.grid.ndim:
            raise ConfigError(
                f"system '{self.system.name}' has dimension {self.system.n}, grid has {self.grid.ndim}"
            )
        if not (self.D >= 0 and math.isfinite(self.D)):
            raise ConfigError("D must be finite and nonnegative")
        if not (0.0 <= self.tail_upwind < 1.0):
            raise ConfigError("tail_upwind must lie in [0, 1)")
        if not (self.steep_upwind == 0.0 or 1.0 <= self.steep_upwind < math.inf):
            raise ConfigError("steep_upwind must be 0 or a finite factor >= 1")
        if self.advection not in ("centered", "upwind"):
            raise ConfigError("advection must be 'centered' or 'upwind'")
        if self.weights == "auto":
            self.weights = "logmean" if self.metric_is_constant_diagonal else "vertex"
        if self.weights not in ("logmean", "vertex"):
            raise ConfigError("weights must be 'auto', 'logmean' or 'vertex'")
        if self.weights == "logmean" and not self.metric_is_constant_diagonal:
            raise ConfigError("logmean weights need a constant diagonal metric")

    # cached samples of the system on the grid
    @cached_property
    def H(self) -> np.ndarray:
        return self.system.hamiltonian(self.grid.centres)

    @cached_property
    def casimir_fields(self) -> List[np.ndarray]:
        return [c(self.grid.centres) for c in self.system.casimirs]

    @cached_property
    def J_vertex(self) -> np.ndarray:
        return self.system.operator(self.grid.vertices)

    @cached_property
    def g_vertex(self) -> np.ndarray:
        J = self.J_vertex
        return np.einsum("...ik,...jk->...ij", J, J)

    @cached_property
    def metric_is_constant_diagonal(self) -> bool:
        g = self.g_vertex
        n = g.shape[-1]
        g0 = g.reshape(-1, n, n)[0]
        off = g0 - np.diag(np.diag(g0))
        return bool(np.allclose(g, g0, rtol=0, atol=1e-14) and np.max(np.abs(off)) == 0.0)

    @cached_property
    def face_metric(self) -> List[np.ndarray]:
        """``g^{kk}`` for constant diagonal metrics (scalar per axis)."""
        g0 = self.g_vertex.reshape(-1, self.grid.ndim, self.grid.ndim)[0]
        return [float(g0[k, k]) for k in range(self.grid.ndim)]

    @cached_property
    def g_face_diag(self) -> List[np.ndarray]:
        """``g^{kk}`` evaluated at the centres of faces normal to ``k``."""
        out = []
        for k in range(self.grid.ndim):
            J = self.system.operator(self.grid.face_points(k))
            out.append(np.einsum("...k,...k->...", J[..., k, :], J[..., k, :]))
        return out

    @cached_property
    def g_face_vertex_mean(self) -> List[np.ndarray]:
        """``g^{kk}`` averaged from the vertices of each face normal to ``k``."""
        g = self.g_vertex
        return [st.vertex_to_face(g[..., k, k], k) for k in range(self.grid.ndim)]

    @cached_property
    def dH_vertex(self) -> np.ndarray:
        return st.vertex_gradient(self.H, self.grid.h)

    @cached_property
    def velocity_vertex(self) -> np.ndarray:
        """``J grad H`` at vertices, shape ``(n,) + V``."""
        return np.einsum("...ij,j...->i...", self.J_vertex, self.dH_vertex)

    @cached_property
    def dH_face(self) -> List[np.ndarray]:
        return [st.face_difference(self.H, k, self.grid.h[k]) for k in range(self.grid.ndim)]

    @cached_property
    def velocity_face(self) -> List[np.ndarray]:
        v = self.velocity_vertex
        return [st.vertex_to_face(v[k], k) for k in range(self.grid.ndim)]

    # ----------------------------------------------------------- time step bound
    def stable_dt(self, beta: float) -> float:
        """Explicit bound combining diffusive, drift and advective rates."""
        h = self.grid.h
        n = self.grid.ndim
        g = self.g_vertex
        rate = 0.0
        half_d = 0.5 * self.D
        for k in range(n):
            rate += half_d * 2.0 * float(np.max(np.abs(g[..., k, k]))) / h[k] ** 2
            for l in range(n):
                if l != k:
                    rate += half_d * float(np.max(np.abs(g[..., k, l]))) / (h[k] * h[l])
            rate += float(np.max(np.abs(self.velocity_vertex[k]))) / h[k]
            gdh = np.einsum("...j,j...->...", g[..., k, :], self.dH_vertex)
            rate += half_d * abs(beta) * float(np.max(np.abs(gdh))) / h[k]
        return 1.0 / rate if rate > 0 else math.inf

    def boundary_mass(self, f: np.ndarray) -> float:
        """Mass held by the outermost layer of cells."""
        mask = np.zeros(f.shape, dtype=bool)
        for k in range(f.ndim):
            idx = [slice(None)] * f.ndim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return float(np.sum(f[mask]) * self.grid.cell_volume)


def _log(f):
    return np.log(np.maximum(f, LOG_FLOOR))


# -------------------------------------------------------------------- fluxes


def advective_fluxes(f: np.ndarray, model: GridModel) -> List[np.ndarray]:
    """Interior face fluxes of ``f J grad H``.

    The centered form averages vertex fluxes onto faces.  A face switches to
    the donor-cell value when it touches a cell below ``tail_upwind`` times
    the maximum, or when the centered flux exceeds ``steep_upwind`` times
    ``|v| f`` of the cell it drains.  Both keep under-resolved tails
    nonnegative; neither fires on smooth, resolved densities.
    """
    fv = st.vertex_average(f)
    v = model.velocity_vertex
    out = []
    switch = model.advection == "upwind" or model.tail_upwind > 0 or model.steep_upwind > 0
    cut = model.tail_upwind * float(np.max(f))
    for k in range(f.ndim):
        F = st.vertex_to_face(fv * v[k], k)
        if switch:
            lo, hi = st.face_cell_pair(f, k)
            vf = model.velocity_face[k]
            donor = np.where(vf > 0, lo, hi) * vf
            if model.advection == "upwind":
                F = donor
            else:
                use = np.minimum(lo, hi) < cut
                if model.steep_upwind > 0:
                    drained = np.where(F > 0, lo, hi)
                    use |= np.abs(F) > model.steep_upwind * np.abs(vf) * drained
                if np.any(use):
                    F = np.where(use, donor, F)
        out.append(F)
    return out


def diffusive_parts(f: np.ndarray, model: GridModel) -> List[tuple]:
    """Face fluxes of ``-f g grad log f`` and ``-f g grad H`` without the ``-`` or ``D/2``.

    The diffusive flux is ``-(D/2) (F0 + beta F1)``; the face switches depend
    on ``f`` alone, so the flux stays exactly affine in ``beta``.
    """
    n = f.ndim
    h = model.grid.h
    out = []
    if model.weights == "logmean":
        for k in range(n):
            lo, hi = st.face_cell_pair(f, k)
            gkk = model.face_metric[k]
            out.append((gkk * (hi - lo) / h[k], gkk * st.log_mean(lo, hi) * model.dH_face[k]))
        return out
    logf = _log(f)
    rho = st.vertex_average(f)
    g = model.g_vertex
    Dl = st.vertex_gradient(logf, h)
    DH = st.vertex_gradient(model.H, h)
    cut = model.tail_upwind * float(np.max(f))
    for k in range(n):
        W = st.vertex_to_face(rho * g[..., k, k], k)
        cl = np.zeros_like(rho)
        cH = np.zeros_like(rho)
        for l in range(n):
            if l != k:
                cl = cl + g[..., k, l] * Dl[l]
                cH = cH + g[..., k, l] * DH[l]
        F0 = W * st.face_difference(logf, k, h[k]) + st.vertex_to_face(rho * cl, k)
        F1 = W * model.dH_face[k] + st.vertex_to_face(rho * cH, k)
        if cut > 0 or model.steep_upwind > 0:
            lo, hi = st.face_cell_pair(f, k)
            L = st.log_mean(lo, hi)
            if model.steep_upwind > 0:
                # cap the vertex weight at a multiple of the two-cell log mean;
                # scaling the whole flux keeps discrete equilibria stationary
                cap = model.steep_upwind * L * model.g_face_vertex_mean[k]
                s = np.where(W > cap, cap / np.where(W > 0, W, 1.0), 1.0)
                F0 = s * F0
                F1 = s * F1
            use = np.minimum(lo, hi) < cut
            if np.any(use):
                # the two-cell log-mean form keeps near-empty cells nonnegative
                gd = model.g_face_diag[k]
                F0 = np.where(use, gd * (hi - lo) / h[k], F0)
                F1 = np.where(use, gd * L * model.dH_face[k], F1)
        out.append((F0, F1))
    return out


def diffusive_fluxes(f: np.ndarray, model: GridModel, beta: float) -> List[np.ndarray]:
    """Interior face fluxes of ``-(D/2) f g grad(log f + beta H)``."""
    if model.D == 0.0:
        return [np.zeros_like(st.face_difference(f, k, 1.0)) for k in range(f.ndim)]
    half_d = 0.5 * model.D
    return [-half_d * (F0 + beta * F1) for F0, F1 in diffusive_parts(f, model)]


def flux_field(f, model: GridModel, beta: float) -> FluxField:
    f = _values(f)
    adv = advective_fluxes(f, model)
    dif = diffusive_fluxes(f, model, beta)
    faces = []
    for k in range(f.ndim):
        pad = [(0, 0)] * f.ndim
        pad[k] = (1, 1)
        faces.append(np.pad(adv[k] + dif[k], pad))
    return FluxField(tuple(faces))


def fpe_rhs(f, model: GridModel, beta: float) -> np.ndarray:
    """Cell-wise time derivative of ``f`` at fixed ``beta``."""
    f = _values(f)
    if not math.isfinite(beta):
        raise ConfigError("beta must be finite")
    adv = advective_fluxes(f, model)
    dif = diffusive_fluxes(f, model, beta)
    h = model.grid.h
    return sum(st.face_divergence(adv[k] + dif[k], k, h[k]) for k in range(f.ndim))


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, GridDistribution) else np.asarray(f, dtype=float)


# ------------------------------------------------------------- functionals


def dissipative_form(a: np.ndarray, b: np.ndarray, f: np.ndarray, model: GridModel) -> float:
    """``sum f grad a . g grad b dV`` with the solver's own weights (no ``D/2``)."""
    n = f.ndim
    h = model.grid.h
    total = 0.0
    if model.weights == "logmean":
        for k in range(n):
            lo, hi = st.face_cell_pair(f, k)
            W = st.log_mean(lo, hi) * model.face_metric[k]
            total += float(np.sum(W * st.face_difference(a, k, h[k]) * st.face_difference(b, k, h[k])))
        return total * model.grid.cell_volume
    rho = st.vertex_average(f)
    g = model.g_vertex
    Da = st.vertex_gradient(a, h)
    Db = st.vertex_gradient(b, h)
    for k in range(n):
        W = st.vertex_to_face(rho * g[..., k, k], k)
        total += float(np.sum(W * st.face_difference(a, k, h[k]) * st.face_difference(b, k, h[k])))
        for l in range(n):
            if l != k:
                total += float(np.sum(rho * g[..., k, l] * Da[k] * Db[l]))
    return total * model.grid.cell_volume


def compute_beta(f, model: GridModel) -> float:
    """Inverse temperature that makes the discrete energy stationary.

    Ratio ``-<grad H, g grad f> / <grad H, f g grad H>`` taken over the
    solver's own diffusive face fluxes, so the diffusive energy rate of
    ``fpe_rhs`` vanishes exactly at the returned value.
    """
    f = _values(f)
    dV = model.grid.cell_volume
    num = den = 0.0
    for k, (F0, F1) in enumerate(diffusive_parts(f, model)):
        num += float(np.sum(F0 * model.dH_face[k]))
        den += float(np.sum(F1 * model.dH_face[k]))
    if not den * dV > 1e-14:
        raise DegenerateError(f"energy dissipation denominator {den * dV:.3e} is degenerate")
    return -num / den


def entropy(f, grid: PhaseGrid) -> float:
    """``-sum f log f dV`` over cells with ``f`` above the floor."""
    f = _values(f)
    pos = f > LOG_FLOOR
    return float(-np.sum(f[pos] * np.log(f[pos])) * grid.cell_volume)


def energy(f, model: GridModel) -> float:
    return model.grid.integrate(_values(f) * model.H)


def casimir_totals(f, model: GridModel) -> List[float]:
    return [model.grid.integrate(_values(f) * c) for c in model.casimir_fields]


def entropy_production(f, model: GridModel, beta: float) -> float:
    """``(D/2) sum f |J grad(log f + beta H)|^2 dV`` in the solver's quadrature.

    Faces touching a cell at the log floor are skipped.
    """
    f = _values(f)
    if model.D == 0.0:
        return 0.0
    h = model.grid.h
    u = _log(f) + beta * model.H
    total = 0.0
    for k, (F0, F1) in enumerate(diffusive_parts(f, model)):
        lo, hi = st.face_cell_pair(f, k)
        ok = (lo > LOG_FLOOR) & (hi > LOG_FLOOR)
        du = st.face_difference(u, k, h[k])
        total += float(np.sum(np.where(ok, (F0 + beta * F1) * du, 0.0)))
    return 0.5 * model.D * total * model.grid.cell_volume


# ------------------------------------------------------------- equilibrium


def equilibrium(model: GridModel, beta: float, mu: Sequence[float] = ()) -> tuple:
    """Normalised ``exp(-beta H - mu_k C_k)`` sampled at cell centres."""
    mu = tuple(float(m) for m in mu)
    if len(mu) > len(model.casimir_fields):
        raise ConfigError(f"{len(mu)} multipliers for {len(model.casimir_fields)} Casimirs")
    expo = -beta * model.H
    for m, c in zip(mu, model.casimir_fields):
        expo = expo - m * c
    if not np.all(np.isfinite(expo)):
        raise NumericalError("equilibrium exponent is not finite")
    shift = float(np.max(expo))
    w = np.exp(expo - shift)
    total = model.grid.integrate(w)
    Z = total * math.exp(shift) if shift < 700 else math.inf
    dist = GridDistribution(w / total, model.grid)
    return dist, EquilibriumParams(float(beta), mu, Z)


def matched_equilibrium(f, model: GridModel, beta: Optional[float] = None):
    """Equilibrium with the same energy (unless ``beta`` is given) and Casimir totals as ``f``.

    Minimises the convex dual ``log Z(beta, mu) + beta E + mu . C``.
    """
    f = _values(f)
    targets = []
    fields = []
    if beta is None:
        targets.append(energy(f, model))
        fields.append(model.H)
    targets += casimir_totals(f, model)
    fields += model.casimir_fields
    if not fields:
        return equilibrium(model, beta)
    F = np.stack([x.ravel() for x in fields])
    t = np.asarray(targets)
    base = np.zeros(f.size) if beta is None else -beta * model.H.ravel()
    dv = model.grid.cell_volume

    def dual(lam):
        expo = base - lam @ F
        s = np.max(expo)
        w = np.exp(expo - s)
        Zs = np.sum(w) * dv
        p = w / np.sum(w)
        val = math.log(Zs) + s + float(lam @ t)
        grad = t - F @ p
        return val, grad

    x0 = np.zeros(len(t))
    if beta is None:
        x0[0] = 1.0 / max(abs(t[0]), 1e-12)
    res = minimize(dual, x0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
    lam = res.x
    if beta is None:
        b, mu = float(lam[0]), tuple(float(v) for v in lam[1:])
    else:
        b, mu = float(beta), tuple(float(v) for v in lam)
    return equilibrium(model, b, mu)


def l1_distance(f, g, grid: PhaseGrid) -> float:
    return grid.integrate(np.abs(_values(f) - _values(g)))


# ----------------------------------------------------------------- stepping


def _stage_beta(f, model, mode: BetaMode) -> float:
    return compute_beta(f, model) if mode.kind == "adaptive" else float(mode.value)


def step(dist: GridDistribution, model: GridModel, dt: float, beta_mode) -> GridDistribution:
    """One SSP-RK2 step; ``beta`` is frozen within each stage."""
    mode = BetaMode.parse(beta_mode)
    f = dist.values
    b0 = _stage_beta(f, model, mode)
    bound = model.stable_dt(b0)
    if dt > bound:
        raise StabilityError(
            f"dt={dt:g} exceeds the explicit stability bound {bound:.4g}; try dt={0.9 * bound:.3g}",
            suggested_dt=0.9 * bound,
        )
    f1 = f + dt * fpe_rhs(f, model, b0)
    b1 = _stage_beta(f1, model, mode)
    f2 = 0.5 * f + 0.5 * (f1 + dt * fpe_rhs(f1, model, b1))
    if not np.all(np.isfinite(f2)):
        raise NumericalError("non-finite values after step", last_good_time=dist.time)
    if np.any(f2 < 0):
        raise NumericalError(
            f"nonnegativity lost at t={dist.time + dt:.6g} (min {f2.min():.3e}); reduce dt",
            last_good_time=dist.time,
        )
    return GridDistribution(f2, model.grid, dist.time + dt)


def gaussian_initial(model: GridModel, centre, variance) -> GridDistribution:
    """Normalised Gaussian sampled at cell centres."""
    x = model.grid.centres
    c = np.asarray(centre, dtype=float)
    var = np.broadcast_to(np.asarray(variance, dtype=float), c.shape)
    expo = -0.5 * np.sum((x - c) ** 2 / var, axis=-1)
    w = np.exp(expo - expo.max())
    return GridDistribution(w / model.grid.integrate(w), model.grid)


@dataclass
class RelaxationRecord:
    t: float
    N: float
    E: float
    S: float
    Sigma: float
    beta: float
    casimirs: tuple
    dSdt: float
    L1_eq: float


@dataclass
class RelaxationResult:
    records: List[RelaxationRecord]
    final: GridDistribution
    entropy_increments: np.ndarray
    energies: np.ndarray
    boundary_mass: float = field(default=0.0)

    @property
    def min_entropy_increment(self) -> float:
        return float(np.min(self.entropy_increments)) if len(self.entropy_increments) else 0.0

    @property
    def max_energy_drift(self) -> float:
        E0 = self.energies[0]
        return float(np.max(np.abs(self.energies - E0)) / abs(E0))


def _record(dist, model, mode: BetaMode) -> RelaxationRecord:
    f = dist.values
    beta = compute_beta(f, model) if mode.kind == "adaptive" else float(mode.value)
    eq, params = matched_equilibrium(f, model, None if mode.kind == "adaptive" else beta)
    S = entropy(f, model.grid)
    E = energy(f, model)
    cas = tuple(casimir_totals(f, model))
    N = dist.mass
    Sigma = S - params.alpha * N - params.beta * E - sum(m * c for m, c in zip(params.mu, cas))
    return RelaxationRecord(
        t=dist.time,
        N=N,
        E=E,
        S=S,
        Sigma=Sigma,
        beta=beta,
        casimirs=cas,
        dSdt=entropy_production(f, model, beta),
        L1_eq=l1_distance(f, eq, model.grid),
    )


def relax_to_equilibrium(f0: GridDistribution, model: GridModel, dt: float, t_end: float,
                         beta_mode, record_every: int = 100) -> RelaxationResult:
    """Integrate to ``t_end`` and collect thermodynamic diagnostics."""
    mode = BetaMode.parse(beta_mode)
    if not (dt > 0 and t_end > 0):
        raise ConfigError("dt and t_end must be positive")
    if record_every < 1:
        raise ConfigError("record_every must be at least 1")
    steps = int(round(t_end / dt))
    if steps < 1:
        raise ConfigError("t_end shorter than one step")
    dist = GridDistribution(f0.values.copy(), f0.grid, f0.time)
    records = [_record(dist, model, mode)]
    S_prev = entropy(dist.values, model.grid)
    dS = np.empty(steps)
    Es = np.empty(steps + 1)
    Es[0] = energy(dist.values, model)
    for s in range(1, steps + 1):
        dist = step(dist, model, dt, mode)
        dist.time = s * dt
        S = entropy(dist.values, model.grid)
        dS[s - 1] = S - S_prev
        S_prev = S
        Es[s] = energy(dist.values, model)
        if s % record_every == 0 or s == steps:
            records.append(_record(dist, model, mode))
    return RelaxationResult(records, dist, dS, Es, model.boundary_mass(dist.values))

"""Perturbed microscopic dynamics for particle ensembles.

Each particle obeys the Stratonovich SDE

    dX = (J grad H - gamma g grad H) dt + sqrt(D) J dW,     g = J J^T,

integrated with the stochastic Heun predictor-corrector.  Random increments
come from independent per-block generators spawned from the master seed, so
the result does not depend on how blocks are scheduled across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateError, InsufficientSamplesError, NumericalError
from .poisson import HamiltonianSystem, metric_tensor

BLOWUP = 1e12
BLOCK = 256
MIN_CELL_COUNT = 10
MIDPOINT_TOL = 1e-12
MIDPOINT_MAX_ITER = 50


@dataclass(frozen=True)
class NoiseModel:
    D: float
    seed: int = 0

    def __post_init__(self):
        if not (self.D >= 0 and math.isfinite(self.D)):
            raise ConfigError("diffusion amplitude D must be finite and nonnegative")


@dataclass(frozen=True)
class FrictionModel:
    """Scalar friction; in fixed mode ``gamma = beta D / 2`` by construction."""

    mode: str
    beta: float
    D: float
    update_every: int = 10

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigError(f"friction mode must be 'fixed' or 'adaptive', got {self.mode!r}")
        if self.update_every < 1:
            raise ConfigError("update_every must be at least 1")

    @property
    def gamma(self) -> float:
        return 0.5 * self.beta * self.D

    @classmethod
    def fixed(cls, beta: float, D: float) -> "FrictionModel":
        return cls("fixed", float(beta), float(D))

    @classmethod
    def from_gamma(cls, gamma: float, D: float) -> "FrictionModel":
        if D <= 0:
            raise ConfigError("gamma alone fixes beta only when D > 0")
        return cls("fixed", 2.0 * gamma / D, D)


@dataclass(frozen=True)
class DensityGrid:
    """Histogram binning used by the ensemble estimators."""

    mins: Sequence[float]
    maxs: Sequence[float]
    cells: Sequence[int]

    @classmethod
    def around(cls, samples: np.ndarray, cells, pad: float = 1e-9) -> "DensityGrid":
        lo = samples.min(axis=0)
        hi = samples.max(axis=0)
        span = hi - lo
        # a collapsed ensemble still gets a cell of finite width
        floor = 1e-6 * (1.0 + np.abs(hi))
        widen = np.where(span < floor, 0.5 * (floor - span), 0.0)
        lo, hi = lo - widen, hi + widen
        span = hi - lo
        n = samples.shape[1]
        cells = [int(cells)] * n if np.isscalar(cells) else [int(c) for c in cells]
        return cls(tuple(lo - pad * span), tuple(hi + pad * span), tuple(cells))

    @property
    def widths(self) -> np.ndarray:
        return (np.asarray(self.maxs, float) - np.asarray(self.mins, float)) / np.asarray(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))


class _Streams:
    """Independent generators, one per block of consecutive particles."""

    def __init__(self, seed: int, n_particles: int):
        nblocks = (n_particles + BLOCK - 1) // BLOCK
        seqs = np.random.SeedSequence(int(seed)).spawn(nblocks)
        self.gens = [np.random.Generator(np.random.PCG64(s)) for s in seqs]
        self.slices = [slice(b * BLOCK, min((b + 1) * BLOCK, n_particles)) for b in range(nblocks)]

    def normals(self, b: int, n: int) -> np.ndarray:
        sl = self.slices[b]
        return self.gens[b].standard_normal((sl.stop - sl.start, n))


@dataclass
class Ensemble:
    particles: np.ndarray
    noise: NoiseModel
    friction: FrictionModel
    time: float = 0.0
    _streams: Optional[_Streams] = field(default=None, repr=False)

    def __post_init__(self):
        self.particles = np.array(self.particles, dtype=float, ndmin=2)
        if self.particles.shape[0] < 1:
            raise ConfigError("ensemble needs at least one particle")
        if not np.all(np.isfinite(self.particles)):
            raise NumericalError("ensemble contains non-finite coordinates", last_good_time=self.time)
        if self._streams is None:
            self._streams = _Streams(self.noise.seed, self.particles.shape[0])

    @property
    def size(self) -> int:
        return self.particles.shape[0]


@dataclass(frozen=True)
class EnsembleDiagnostics:
    t: float
    E_mean: float
    casimir_means: tuple
    entropy_estimate: float
    beta_estimate: float
    entropy_estimator: str = "plug-in histogram (biased low by about cells/(2N))"


def drift(sys: HamiltonianSystem, x, friction: FrictionModel) -> np.ndarray:
    """Deterministic velocity ``J grad H - gamma g grad H``."""
    x = np.asarray(x, dtype=float)
    J = sys.operator(x)
    gH = sys.hamiltonian.grad(x)
    v = np.einsum("...ij,...j->...i", J, gH)
    if friction.gamma == 0.0:
        return v
    return v - friction.gamma * np.einsum("...ij,...j->...i", metric_tensor(sys, x), gH)


def _mv(J, v):
    return np.matmul(J, v[..., None])[..., 0]


def _mtv(J, v):
    return np.matmul(v[..., None, :], J)[..., 0, :]


def _heun_block(sys, x, dW, dt, gamma, sqrtD):
    def parts(y):
        J = sys.operator(y)
        gH = sys.hamiltonian.grad(y)
        v = _mv(J, gH)
        if gamma != 0.0:
            v = v - gamma * _mv(J, _mtv(J, gH))
        return v, sqrtD * _mv(J, dW)

    a0, b0 = parts(x)
    xp = x + a0 * dt + b0
    a1, b1 = parts(xp)
    return x + 0.5 * (a0 + a1) * dt + 0.5 * (b0 + b1)


def _midpoint_block(sys, x, dW, dt, gamma, sqrtD, max_iter=MIDPOINT_MAX_ITER):
    """Implicit stochastic midpoint rule solved by fixed-point iteration.

    Every increment is ``J(xm)`` applied to something, so quadratic Casimirs
    of a linear operator are conserved to the solver tolerance.
    """
    x1 = _heun_block(sys, x, dW, dt, gamma, sqrtD)
    noise = sqrtD * dW
    tol = MIDPOINT_TOL * (1.0 + np.max(np.abs(x)))
    for _ in range(max_iter):
        xm = 0.5 * (x + x1)
        J = sys.operator(xm)
        gH = sys.hamiltonian.grad(xm)
        push = gH * dt + noise
        if gamma != 0.0:
            push = push - gamma * dt * _mtv(J, gH)
        new = x + _mv(J, push)
        change = float(np.max(np.abs(new - x1)))
        x1 = new
        if change <= tol:
            return x1
    raise NumericalError(
        f"implicit midpoint iteration did not converge (last change {change:.3e}); reduce dt"
    )


SCHEMES = {"heun": _heun_block, "midpoint": _midpoint_block}


def step_stratonovich(ens: Ensemble, sys: HamiltonianSystem, dt: float, threads: int = 1,
                      scheme: str = "heun") -> Ensemble:
    """One Stratonovich step with a shared increment per particle.

    ``heun`` is the predictor-corrector; ``midpoint`` is the implicit
    midpoint rule, which keeps quadratic Casimirs of linear operators on
    their leaves.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError("dt must be positive")
    try:
        block = SCHEMES[scheme]
    except KeyError:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}") from None
    n = sys.n
    if ens.particles.shape[1] != n:
        raise ConfigError(f"ensemble dimension {ens.particles.shape[1]} != system dimension {n}")
    streams = ens._streams
    sqrtD = math.sqrt(ens.noise.D)
    sdt = math.sqrt(dt)
    gamma = ens.friction.gamma
    out = np.empty_like(ens.particles)

    def work(b):
        sl = streams.slices[b]
        dW = streams.normals(b, n) * sdt
        out[sl] = block(sys, ens.particles[sl], dW, dt, gamma, sqrtD)

    # blocks are fixed by the seed layout, so results do not depend on threads
    if threads > 1 and len(streams.slices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(streams.slices))))
    else:
        for b in range(len(streams.slices)):
            work(b)

    bad = ~np.isfinite(out) | (np.abs(out) > BLOWUP)
    if np.any(bad):
        idx = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise NumericalError(
            f"particle {idx} left the finite range (|x| > {BLOWUP:g}) at t={ens.time + dt:.6g}",
            last_good_time=ens.time,
        )
    return Ensemble(out, ens.noise, ens.friction, ens.time + dt, streams)


# -------------------------------------------------------------- estimators


def _histogram(samples: np.ndarray, grid: DensityGrid):
    h = grid.widths
    idx = np.floor((samples - np.asarray(grid.mins)) / h).astype(np.int64)
    cells = np.asarray(grid.cells)
    inside = np.all((idx >= 0) & (idx < cells), axis=1)
    counts = np.zeros(tuple(cells), dtype=np.int64)
    np.add.at(counts, tuple(idx[inside].T), 1)
    return counts, idx, inside


def entropy_estimate(samples: np.ndarray, grid: DensityGrid) -> float:
    """Plug-in histogram entropy ``-sum p log(p / dV)``."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise InsufficientSamplesError("entropy estimate needs a nonempty sample")
    if samples.shape[0] < 2:
        raise InsufficientSamplesError("entropy estimate needs at least two samples")
    counts, _, inside = _histogram(samples, grid)
    total = inside.sum()
    if total == 0:
        raise InsufficientSamplesError("no samples fall inside the density grid")
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p / grid.cell_volume)))


def estimate_beta_samples(sys: HamiltonianSystem, samples: np.ndarray, grid: DensityGrid, min_count: int = MIN_CELL_COUNT) -> float:
    """Inverse temperature from ``-<v . J grad log f> / <|v|^2>`` with ``v = J grad H``.

    ``grad log f`` comes from centered differences of the log histogram.
    Particles whose cell, or a neighbour needed by the stencil, holds fewer
    than ``min_count`` samples are left out of both averages.
    """
    samples = np.asarray(samples, dtype=float)
    N, n = samples.shape
    if N < min_count:
        raise InsufficientSamplesError(f"{N} samples cannot fill a cell with {min_count}")
    counts, idx, inside = _histogram(samples, grid)
    h = grid.widths
    good = counts >= min_count
    with np.errstate(divide="ignore"):
        logc = np.where(good, np.log(np.maximum(counts, 1)), 0.0)
    cells = np.asarray(grid.cells)
    usable = inside.copy()
    grad = np.zeros((N, n))
    ii = np.where(inside[:, None], idx, 0)
    usable &= good[tuple(ii.T)]
    for k in range(n):
        up = ii.copy()
        dn = ii.copy()
        up[:, k] += 1
        dn[:, k] -= 1
        ok = (up[:, k] < cells[k]) & (dn[:, k] >= 0)
        up[:, k] = np.minimum(up[:, k], cells[k] - 1)
        dn[:, k] = np.maximum(dn[:, k], 0)
        ok &= good[tuple(up.T)] & good[tuple(dn.T)]
        usable &= ok
        grad[:, k] = (logc[tuple(up.T)] - logc[tuple(dn.T)]) / (2.0 * h[k])
    if usable.sum() < max(min_count, N // 2):
        raise InsufficientSamplesError(
            f"only {int(usable.sum())} of {N} samples sit in cells with >= {min_count} samples; "
            "use more samples or a coarser grid"
        )
    x = samples[usable]
    J = sys.operator(x)
    v = np.einsum("...ij,...j->...i", J, sys.hamiltonian.grad(x))
    Jg = np.einsum("...ij,...j->...i", J, grad[usable])
    den = float(np.sum(v * v))
    if den <= 1e-300:
        raise DegenerateError("all usable samples sit at critical points of H")
    return float(-np.sum(v * Jg) / den)


def estimate_beta_ensemble(ens: Ensemble, sys: HamiltonianSystem, grid: DensityGrid) -> float:
    return estimate_beta_samples(sys, ens.particles, grid)


def diagnostics(ens: Ensemble, sys: HamiltonianSystem, cells: int = 32) -> EnsembleDiagnostics:
    x = ens.particles
    E = float(np.mean(sys.hamiltonian(x)))
    cas = tuple(float(np.mean(c(x))) for c in sys.casimirs)
    S = float("nan")
    beta = float("nan")
    if sys.n <= 3 and ens.size >= 2:
        grid = DensityGrid.around(x, cells)
        S = entropy_estimate(x, grid)
        try:
            beta = estimate_beta_samples(sys, x, grid)
        except (InsufficientSamplesError, DegenerateError):
            beta = float("nan")
    return EnsembleDiagnostics(ens.time, E, cas, S, beta)


@dataclass
class EvolveResult:
    ensemble: Ensemble
    records: List[EnsembleDiagnostics]
    betas_used: List[float]


def evolve(ens: Ensemble, sys: HamiltonianSystem, dt: float, steps: int, record_every: int = 1,
           density_cells: int = 32, threads: int = 1, scheme: str = "heun") -> EvolveResult:
    """Advance ``steps`` Heun steps, recording diagnostics every ``record_every`` steps.

    In adaptive mode the friction is reset every ``friction.update_every``
    steps from the ensemble estimate of the inverse temperature.
    """
    if steps < 1:
        raise ConfigError("steps must be at least 1")
    if record_every < 1:
        raise ConfigError("record_every must be at least 1")
    fr = ens.friction
    if fr.mode == "adaptive" and sys.n > 3:
        raise ConfigError("adaptive friction needs a histogram density, available only for n <= 3")
    records = [diagnostics(ens, sys, density_cells)]
    betas = [fr.beta]
    for s in range(1, steps + 1):
        if fr.mode == "adaptive" and (s - 1) % fr.update_every == 0:
            grid = DensityGrid.around(ens.particles, density_cells)
            b = estimate_beta_samples(sys, ens.particles, grid)
            fr = replace(fr, beta=b)
            ens = Ensemble(ens.particles, ens.noise, fr, ens.time, ens._streams)
            betas.append(b)
        ens = step_stratonovich(ens, sys, dt, threads, scheme)
        if s % record_every == 0 or s == steps:
            records.append(diagnostics(ens, sys, density_cells))
    return EvolveResult(ens, records, betas)


def diagnostics_table(records: Sequence[EnsembleDiagnostics], n_casimirs: int):
    header = ["t", "E", "S", "beta"] + [f"C{k + 1}" for k in range(n_casimirs)]
    rows = [[r.t, r.E_mean, r.entropy_estimate, r.beta_estimate, *r.casimir_means] for r in records]
    return header, rows

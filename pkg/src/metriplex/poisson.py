"""Finite-dimensional noncanonical Hamiltonian systems and their identity checks.

A system is a state-dependent antisymmetric matrix field ``J(x)``, a
Hamiltonian ``H`` and an optional list of Casimir invariants.  All maps are
vectorised: they accept points of shape ``(..., n)`` and return arrays with
the matching leading shape.  Partial derivatives are stored with the
differentiation index last, ``dJ[..., i, j, m] = d J^{ij} / d x^m``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, VerificationError

ANTISYMMETRY_TOL = 1e-12
FD_REL_STEP = 1e-5
RANK_CUTOFF = 1e-10


class RankAmbiguityWarning(UserWarning):
    """A singular value lies within a factor of ten of the rank cutoff."""


def fd_steps(x):
    """Per-coordinate centered-difference steps, scaled with the coordinate."""
    return FD_REL_STEP * (1.0 + np.abs(x))


def _fd_jacobian(func, x):
    """Centered differences of ``func`` along the last axis of ``x``.

    Returns an array with the derivative index appended as the last axis.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = fd_steps(x)
    cols = []
    for m in range(n):
        e = np.zeros(n)
        e[m] = 1.0
        step = h[..., m : m + 1]
        fp = np.asarray(func(x + step * e))
        fm = np.asarray(func(x - step * e))
        hm = h[..., m].reshape(h.shape[:-1] + (1,) * (fp.ndim - h.ndim + 1))
        cols.append((fp - fm) / (2.0 * hm))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ScalarField:
    """A scalar function on phase space with an optional analytic gradient."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return _fd_jacobian(self.value, x)

    def fd_grad(self, x):
        return _fd_jacobian(self.value, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PoissonOperator:
    """Antisymmetric matrix field ``J(x)`` with optional analytic partials."""

    n: int
    matrix: Callable[[np.ndarray], np.ndarray]
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return np.asarray(self.matrix(np.asarray(x, dtype=float)), dtype=float)

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        if self.partials is not None:
            return np.asarray(self.partials(x), dtype=float)
        return _fd_jacobian(self.matrix, x)


@dataclass(frozen=True)
class MeasureDensity:
    """Positive weight of the invariant measure ``J(x) dV``."""

    density: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return np.asarray(self.density(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return _fd_jacobian(self.density, x)


def unit_measure(n: int) -> MeasureDensity:
    return MeasureDensity(
        density=lambda x: np.ones(np.shape(x)[:-1]),
        gradient=lambda x: np.zeros(np.shape(x)),
    )


@dataclass(frozen=True)
class HamiltonianSystem:
    """A Poisson operator together with its Hamiltonian and Casimirs."""

    name: str
    operator: PoissonOperator
    hamiltonian: ScalarField
    casimirs: Sequence[ScalarField] = ()
    measure: Optional[MeasureDensity] = None
    coords: Sequence[str] = ()
    description: str = ""
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.operator.n

    @property
    def measure_density(self) -> MeasureDensity:
        return self.measure if self.measure is not None else unit_measure(self.n)

    def coordinate_names(self):
        if self.coords:
            return list(self.coords)
        return [f"x{i + 1}" for i in range(self.n)]


def _check_point(sys: HamiltonianSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (sys.n,):
        raise ConfigError(
            f"point has trailing dimension {x.shape[-1:]} but system "
            f"'{sys.name}' has dimension {sys.n}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("phase point contains non-finite entries")
    return x


def antisymmetry_violation(sys: HamiltonianSystem, x) -> float:
    """Largest ``|J^{ij} + J^{ji}|`` at the given point(s)."""
    J = sys.operator(_check_point(sys, x))
    return float(np.max(np.abs(J + np.swapaxes(J, -1, -2)), initial=0.0))


def eval_poisson(sys: HamiltonianSystem, x) -> np.ndarray:
    """Evaluate ``J(x)``; raises if the result is not antisymmetric."""
    x = _check_point(sys, x)
    J = sys.operator(x)
    if not np.all(np.isfinite(J)):
        raise ValueError("Poisson operator produced non-finite entries")
    viol = float(np.max(np.abs(J + np.swapaxes(J, -1, -2)), initial=0.0))
    if viol > ANTISYMMETRY_TOL:
        raise VerificationError(f"operator not antisymmetric: violation {viol:.3e}")
    return J


def jacobi_tensor(sys: HamiltonianSystem, x) -> np.ndarray:
    """Cyclic sum ``J^{im} d_m J^{jk} + J^{jm} d_m J^{ki} + J^{km} d_m J^{ij}``."""
    x = _check_point(sys, x)
    J = sys.operator(x)
    dJ = sys.operator.derivatives(x)
    t = np.einsum("...im,...jkm->...ijk", J, dJ)
    return t + np.einsum("...ijk->...jki", t) + np.einsum("...ijk->...kij", t)


def jacobi_residual(sys: HamiltonianSystem, x) -> float:
    """Max absolute entry of the Jacobi cyclic sum at ``x``."""
    return float(np.max(np.abs(jacobi_tensor(sys, x)), initial=0.0))


def casimir_residual(sys: HamiltonianSystem, k: int, x) -> np.ndarray:
    """The vector ``J grad C_k``; zero for a genuine Casimir."""
    if not 0 <= k < len(sys.casimirs):
        raise IndexError(f"system '{sys.name}' has {len(sys.casimirs)} Casimirs, no index {k}")
    x = _check_point(sys, x)
    return np.einsum("...ij,...j->...i", sys.operator(x), sys.casimirs[k].grad(x))


def divergence_residual(sys: HamiltonianSystem, x) -> np.ndarray:
    """The vector ``d_i (rho J^{ij})`` for the system's measure density ``rho``."""
    x = _check_point(sys, x)
    rho = sys.measure_density
    J = sys.operator(x)
    dJ = sys.operator.derivatives(x)
    r = rho(x)[..., None]
    grad_r = rho.grad(x)
    return r * np.einsum("...iji->...j", dJ) + np.einsum("...i,...ij->...j", grad_r, J)


def micro_poisson_bracket(a: ScalarField, b: ScalarField, sys: HamiltonianSystem, x):
    """``grad a . J grad b`` at ``x``."""
    x = _check_point(sys, x)
    return np.einsum("...i,...ij,...j->...", a.grad(x), sys.operator(x), b.grad(x))


def metric_tensor(sys: HamiltonianSystem, x) -> np.ndarray:
    """Induced symmetric metric ``g = J J^T``."""
    J = sys.operator(_check_point(sys, x))
    return np.einsum("...ik,...jk->...ij", J, J)


def micro_dissipative_bracket(a: ScalarField, b: ScalarField, sys: HamiltonianSystem, x):
    """``grad a . g grad b`` with ``g = J J^T``."""
    x = _check_point(sys, x)
    return np.einsum("...i,...ij,...j->...", a.grad(x), metric_tensor(sys, x), b.grad(x))


@dataclass(frozen=True)
class RankReport:
    rank: int
    singular_values: np.ndarray
    cutoff: float
    ambiguous: bool


def rank_report(sys: HamiltonianSystem, x) -> RankReport:
    """Numerical rank of ``J(x)`` with a relative singular-value cutoff."""
    x = _check_point(sys, x)
    if x.ndim != 1:
        raise ValueError("rank is evaluated at a single point")
    s = np.linalg.svd(sys.operator(x), compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    if smax == 0.0:
        return RankReport(0, s, 0.0, False)
    cutoff = RANK_CUTOFF * smax
    rank = int(np.sum(s > cutoff))
    ambiguous = bool(np.any((s > cutoff / 10.0) & (s < cutoff * 10.0)))
    return RankReport(rank, s, cutoff, ambiguous)


def operator_rank(sys: HamiltonianSystem, x) -> int:
    """Numerical rank; warns when a singular value sits near the cutoff."""
    rep = rank_report(sys, x)
    if rep.ambiguous:
        warnings.warn(
            f"rank of '{sys.name}' is ambiguous: singular values {rep.singular_values} "
            f"near cutoff {rep.cutoff:.3e}",
            RankAmbiguityWarning,
            stacklevel=2,
        )
    return rep.rank


def hamiltonian_vector_field(sys: HamiltonianSystem, x) -> np.ndarray:
    return np.einsum("...ij,...j->...i", sys.operator(x), sys.hamiltonian.grad(x))


def integrate_rk4(sys: HamiltonianSystem, x0, dt: float, steps: int) -> np.ndarray:
    """Classical RK4 for the unperturbed flow; returns the trajectory."""
    x = np.array(x0, dtype=float)
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    f = lambda y: hamiltonian_vector_field(sys, y)  # noqa: E731
    for s in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[s + 1] = x
    return out

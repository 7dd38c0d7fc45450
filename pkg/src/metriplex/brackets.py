"""Grid brackets on functionals of a phase-space density.

A functional is a value map plus an explicit derivative field.  The Poisson
bracket is the vertex quadrature

    {F, G} = sum_v (A f)_v  (grad a)_v . J_v (grad b)_v  dV,

with ``a, b`` the derivative fields, ``A`` the cell-to-vertex average and
``grad`` the vertex gradient.  The dissipative bracket uses the face/vertex
weighting of the grid solver.  Both are assembled from sparse Kronecker
products of one-dimensional difference and averaging matrices, so the
right-hand side obtained by transposing them is an independent route to the
solver's flux divergence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import grid as st
from .errors import ConfigError
from .fokker_planck import LOG_FLOOR, GridDistribution, GridModel, _values


# ---------------------------------------------------------------- functionals


@dataclass(frozen=True)
class Functional:
    """``F[f]`` with its derivative ``dF/df`` as a cell field.

    The derivative is normalised so that the first variation is
    ``sum(derivative(f) * eta) * dV``.
    """

    name: str
    value: Callable[[np.ndarray], float]
    derivative: Callable[[np.ndarray], np.ndarray]

    def __call__(self, f) -> float:
        return float(self.value(_values(f)))

    def grad(self, f) -> np.ndarray:
        return np.asarray(self.derivative(_values(f)), dtype=float)

    def __mul__(self, other: "Functional") -> "Functional":
        """Pointwise product functional with the product-rule derivative."""
        return Functional(
            f"({self.name})*({other.name})",
            lambda f: self.value(f) * other.value(f),
            lambda f: self.value(f) * other.derivative(f) + other.value(f) * self.derivative(f),
        )

    def combine(self, a: float, other: "Functional", b: float) -> "Functional":
        """Linear combination ``a*self + b*other``."""
        return Functional(
            f"{a}*({self.name})+{b}*({other.name})",
            lambda f: a * self.value(f) + b * other.value(f),
            lambda f: a * self.derivative(f) + b * other.derivative(f),
        )


def linear_functional(weight: np.ndarray, dV: float, name: str = "F") -> Functional:
    """``F[f] = sum(weight * f) dV``; its derivative is ``weight`` for every ``f``."""
    weight = np.asarray(weight, dtype=float)
    return Functional(name, lambda f: float(np.sum(weight * f) * dV), lambda f: weight)


def variation_check(F: Functional, f: np.ndarray, eta: np.ndarray, dV: float, eps: float = 1e-4):
    """Relative mismatch between a centred difference of ``F`` and its derivative field."""
    f = _values(f)
    fd = (F.value(f + eps * eta) - F.value(f - eps * eta)) / (2 * eps)
    d = F.derivative(f) * eta
    an = float(np.sum(d) * dV)
    # scale by the absolute variation so cancelling integrals stay meaningful
    return abs(fd - an) / max(float(np.sum(np.abs(d)) * dV), 1e-300)


@dataclass
class ObservableSet:
    """Mass, energy, Casimir totals, entropy and the generator ``Sigma``.

    ``Sigma = S - alpha N - beta E - mu_k C_k``.
    """

    N: Functional
    E: Functional
    casimirs: List[Functional]
    S: Functional
    Sigma: Functional
    alpha: float
    beta: float
    mu: tuple

    def as_dict(self) -> Dict[str, Functional]:
        out = {"N": self.N, "E": self.E, "S": self.S, "Sigma": self.Sigma}
        for k, c in enumerate(self.casimirs):
            out[f"C{k + 1}"] = c
        return out


def _entropy_value(f, dV):
    pos = f > LOG_FLOOR
    return float(-np.sum(f[pos] * np.log(f[pos])) * dV)


def observables(model: GridModel, beta: float, mu: Sequence[float] = (), alpha: float = 0.0) -> ObservableSet:
    dV = model.grid.cell_volume
    H = model.H
    cas = model.casimir_fields
    mu = tuple(float(m) for m in mu)
    if len(mu) > len(cas):
        raise ConfigError(f"{len(mu)} multipliers for {len(cas)} Casimirs")
    mu = mu + (0.0,) * (len(cas) - len(mu))
    N = linear_functional(np.ones(model.grid.shape), dV, "N")
    E = linear_functional(H, dV, "E")
    C = [linear_functional(c, dV, s.name) for c, s in zip(cas, model.system.casimirs)]

    def dS(f):
        return -(np.log(np.maximum(f, LOG_FLOOR)) + 1.0)

    S = Functional("S", lambda f: _entropy_value(f, dV), dS)
    shift = alpha + beta * H
    for m, c in zip(mu, cas):
        shift = shift + m * c

    def sigma_value(f):
        return _entropy_value(f, dV) - float(np.sum(shift * f) * dV)

    Sigma = Functional("Sigma", sigma_value, lambda f: dS(f) - shift)
    return ObservableSet(N, E, C, S, Sigma, float(alpha), float(beta), mu)


# ---------------------------------------------------------- sparse operators


def _diff_1d(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def _mid_1d(n: int) -> sp.csr_matrix:
    return sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def _kron(mats) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


class BracketOperators:
    """Sparse matrices acting on row-major flattened grid fields."""

    def __init__(self, model: GridModel, operator_override: Optional[np.ndarray] = None):
        self.model = model
        g = model.grid
        self.n = g.ndim
        self.dV = g.cell_volume
        N = g.cells
        eye = [sp.identity(c, format="csr") for c in N]
        eye_v = [sp.identity(c - 1, format="csr") for c in N]
        D1 = [_diff_1d(c, hk) for c, hk in zip(N, g.h)]
        M1 = [_mid_1d(c) for c in N]
        # face difference: cells -> faces normal to k
        self.face_diff = [_kron([D1[j] if j == k else eye[j] for j in range(self.n)]) for k in range(self.n)]
        # face average onto vertices: faces normal to k -> vertices
        self.face_to_vertex = [
            _kron([eye_v[j] if j == k else M1[j] for j in range(self.n)]) for k in range(self.n)
        ]
        self.grad = [(self.face_to_vertex[k] @ self.face_diff[k]).tocsr() for k in range(self.n)]
        self.average = _kron(M1)
        J = model.J_vertex if operator_override is None else operator_override
        self.J = J.reshape(-1, self.n, self.n)
        self.g = np.einsum("vik,vjk->vij", self.J, self.J)
        self.face_pairs = []
        for k in range(self.n):
            lo = _kron([sp.eye(c - 1, c, 0, format="csr") if j == k else eye[j] for j, c in enumerate(N)])
            hi = _kron([sp.eye(c - 1, c, 1, format="csr") if j == k else eye[j] for j, c in enumerate(N)])
            self.face_pairs.append((lo, hi))

    # ---- weights shared by the dissipative bracket and its adjoint
    def face_weights(self, f: np.ndarray) -> List[np.ndarray]:
        """Face weights ``W_k`` multiplying normal differences."""
        fl = f.ravel()
        out = []
        if self.model.weights == "logmean":
            for k in range(self.n):
                lo, hi = self.face_pairs[k]
                out.append(st.log_mean(lo @ fl, hi @ fl) * self.model.face_metric[k])
            return out
        rho = self.average @ fl
        for k in range(self.n):
            out.append(self.face_to_vertex[k].T @ (rho * self.g[:, k, k]))
        return out

    def cross_weights(self, f: np.ndarray) -> Optional[np.ndarray]:
        """Vertex weights ``rho g^{kl}`` (k != l) for the off-diagonal part."""
        if self.model.weights == "logmean":
            return None
        rho = self.average @ f.ravel()
        w = rho[:, None, None] * self.g
        for k in range(self.n):
            w[:, k, k] = 0.0
        return w

    # ---- bracket quadratures
    def poisson(self, a: np.ndarray, b: np.ndarray, f: np.ndarray) -> float:
        rho = self.average @ f.ravel()
        Ga = np.stack([G @ a.ravel() for G in self.grad], axis=1)
        Gb = np.stack([G @ b.ravel() for G in self.grad], axis=1)
        return float(np.einsum("v,vi,vij,vj->", rho, Ga, self.J, Gb) * self.dV)

    def dissipative(self, a: np.ndarray, b: np.ndarray, f: np.ndarray, D: float) -> float:
        if D == 0.0:
            return 0.0
        total = 0.0
        for k, W in enumerate(self.face_weights(f)):
            Dk = self.face_diff[k]
            total += float(np.sum(W * (Dk @ a.ravel()) * (Dk @ b.ravel())))
        cw = self.cross_weights(f)
        if cw is not None:
            Ga = np.stack([G @ a.ravel() for G in self.grad], axis=1)
            Gb = np.stack([G @ b.ravel() for G in self.grad], axis=1)
            total += float(np.einsum("vij,vi,vj->", cw, Ga, Gb))
        return 0.5 * D * total * self.dV

    # ---- adjoints: derivative of the bracket with respect to the first slot
    def poisson_adjoint(self, b: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Cell field ``r`` with ``{phi, G} = sum(r * phi) dV`` for every ``phi``."""
        rho = self.average @ f.ravel()
        Gb = np.stack([G @ b.ravel() for G in self.grad], axis=1)
        v = np.einsum("vij,vj->vi", self.J, Gb) * rho[:, None]
        r = sum(self.grad[i].T @ v[:, i] for i in range(self.n))
        return np.asarray(r).reshape(f.shape)

    def dissipative_adjoint(self, b: np.ndarray, f: np.ndarray, D: float) -> np.ndarray:
        if D == 0.0:
            return np.zeros(f.shape)
        r = np.zeros(f.size)
        for k, W in enumerate(self.face_weights(f)):
            Dk = self.face_diff[k]
            r += Dk.T @ (W * (Dk @ b.ravel()))
        cw = self.cross_weights(f)
        if cw is not None:
            Gb = np.stack([G @ b.ravel() for G in self.grad], axis=1)
            v = np.einsum("vij,vj->vi", cw, Gb)
            r += sum(self.grad[i].T @ v[:, i] for i in range(self.n))
        return (0.5 * D * r).reshape(f.shape)

    def poisson_value_derivative(self, b: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Derivative in ``f`` of ``{G, K}`` for ``f``-independent fields ``b, c``."""
        Gb = np.stack([G @ b.ravel() for G in self.grad], axis=1)
        Gc = np.stack([G @ c.ravel() for G in self.grad], axis=1)
        w = np.einsum("vi,vij,vj->v", Gb, self.J, Gc)
        return np.asarray(self.average.T @ w).reshape(self.model.grid.shape)


_OPS_CACHE: Dict[int, BracketOperators] = {}


def operators(model: GridModel) -> BracketOperators:
    key = id(model)
    ops = _OPS_CACHE.get(key)
    if ops is None or ops.model is not model:
        ops = BracketOperators(model)
        _OPS_CACHE.clear()
        _OPS_CACHE[key] = ops
    return ops


# --------------------------------------------------------------- public API


def poisson_bracket_macro(F: Functional, G: Functional, f, model: GridModel) -> float:
    f = _values(f)
    return operators(model).poisson(F.grad(f), G.grad(f), f)


def dissipative_bracket_macro(F: Functional, G: Functional, f, model: GridModel, D: Optional[float] = None) -> float:
    f = _values(f)
    D = model.D if D is None else float(D)
    if D < 0:
        raise ConfigError("D must be nonnegative")
    return operators(model).dissipative(F.grad(f), G.grad(f), f, D)


def metriplectic_bracket(F: Functional, E: Functional, Sigma: Functional, f, model: GridModel) -> float:
    """``{F, E} + [F, Sigma]``."""
    return poisson_bracket_macro(F, E, f, model) + dissipative_bracket_macro(F, Sigma, f, model)


def metriplectic_rhs(f, model: GridModel, obs: ObservableSet) -> np.ndarray:
    """``df/dt`` as the adjoint of ``F -> {F, E} + [F, Sigma]``.

    Equal to the solver's flux divergence at ``beta = obs.beta`` wherever the
    solver's positivity safeguards leave the centered stencils untouched.
    """
    f = _values(f)
    ops = operators(model)
    return ops.poisson_adjoint(obs.E.grad(f), f) + ops.dissipative_adjoint(obs.Sigma.grad(f), f, model.D)


def single_generator_rhs(f, model: GridModel, obs: ObservableSet) -> np.ndarray:
    """``df/dt`` from ``Sigma`` alone: adjoint of ``-{F, Sigma}/beta + [F, Sigma]``.

    The grid Poisson bracket keeps ``N`` and the Casimir totals as exact
    Casimirs but not ``S``, so this agrees with :func:`metriplectic_rhs` up
    to the quadrature error of ``{F, S}`` (second order in the spacing).
    """
    if obs.beta == 0.0:
        raise ConfigError("the single-generator form needs beta != 0")
    f = _values(f)
    ops = operators(model)
    s = obs.Sigma.grad(f)
    return -ops.poisson_adjoint(s, f) / obs.beta + ops.dissipative_adjoint(s, f, model.D)


def advective_mass_rate(f, model: GridModel) -> float:
    """``sum df/dt dV`` of the pure advection term; zero by the no-flux boundary."""
    f = _values(f)
    r = operators(model).poisson_adjoint(model.H, f)
    return float(np.sum(r) * model.grid.cell_volume)


# ---------------------------------------------------------------- axioms


POISSON_AXIOMS = ("P1_bilinearity", "P2_alternativity", "P3_antisymmetry", "P4_leibniz", "P5_jacobi")
DISSIPATIVE_AXIOMS = ("D1_bilinearity", "D2_nonnegativity", "D3_symmetry", "D4_leibniz")
DEFAULT_THRESHOLD = 1e-10


@dataclass
class AxiomReport:
    system: str
    cells: tuple
    violations: Dict[str, float]
    thresholds: Dict[str, float]
    samples: Dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> Dict[str, bool]:
        return {k: bool(v <= self.thresholds[k]) for k, v in self.violations.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "cells": list(self.cells),
            "ok": self.ok,
            "axioms": {
                k: {"max_violation": self.violations[k], "threshold": self.thresholds[k], "pass": self.passed[k]}
                for k in self.violations
            },
            "samples": dict(self.samples),
        }


def _rel(x: float, *scale: float) -> float:
    return abs(x) / max([1.0] + [abs(s) for s in scale])


def symmetrized(J: np.ndarray) -> np.ndarray:
    """Copy of ``J`` whose lower triangle mirrors the upper one (fault injection)."""
    out = J.copy()
    n = J.shape[-1]
    for i in range(n):
        for j in range(i):
            out[..., i, j] = J[..., j, i]
    return out


def axiom_suite(
    model: GridModel,
    f_samples: Sequence[np.ndarray],
    weights: Sequence[np.ndarray],
    rng: Optional[np.random.Generator] = None,
    D: Optional[float] = None,
    threshold: float = DEFAULT_THRESHOLD,
    ops: Optional[BracketOperators] = None,
) -> AxiomReport:
    """Maximum violation of each bracket axiom over the supplied samples.

    ``weights`` are the derivative fields of linear functionals
    ``F[f] = sum(w f) dV``.  Jacobi uses the exact grid derivative of the
    inner bracket, which is again ``f``-independent.
    """
    if len(f_samples) < 3:
        raise ConfigError("axiom suite needs at least 3 sample distributions")
    if len(weights) < 4:
        raise ConfigError("axiom suite needs at least 4 sample functionals")
    rng = np.random.default_rng(0) if rng is None else rng
    ops = operators(model) if ops is None else ops
    D = model.D if D is None else float(D)
    if D <= 0:
        D = 1.0
    dV = ops.dV
    fs = [_values(f) for f in f_samples]
    ws = [np.asarray(w, dtype=float) for w in weights]
    P = ops.poisson

    def Q(a, b, f):
        return ops.dissipative(a, b, f, D)

    def val(w, f):
        return float(np.sum(w * f) * dV)

    v = {k: 0.0 for k in POISSON_AXIOMS + DISSIPATIVE_AXIOMS}
    for f in fs:
        for (ia, a), (ib, b) in itertools.product(enumerate(ws), repeat=2):
            pab, qab = P(a, b, f), Q(a, b, f)
            if ia == ib:
                v["P2_alternativity"] = max(v["P2_alternativity"], _rel(pab))
                v["D2_nonnegativity"] = max(v["D2_nonnegativity"], max(0.0, -qab))
            if ia < ib:
                pba, qba = P(b, a, f), Q(b, a, f)
                v["P3_antisymmetry"] = max(v["P3_antisymmetry"], _rel(pab + pba, pab))
                v["D3_symmetry"] = max(v["D3_symmetry"], _rel(qab - qba, qab))
            for c in ws:
                x, y = rng.normal(size=2)
                lin = x * a + y * b
                p1 = P(lin, c, f) - x * P(a, c, f) - y * P(b, c, f)
                p1b = P(c, lin, f) - x * P(c, a, f) - y * P(c, b, f)
                v["P1_bilinearity"] = max(v["P1_bilinearity"], _rel(p1, P(lin, c, f)), _rel(p1b))
                d1 = Q(lin, c, f) - x * Q(a, c, f) - y * Q(b, c, f)
                d1b = Q(c, lin, f) - x * Q(c, a, f) - y * Q(c, b, f)
                v["D1_bilinearity"] = max(v["D1_bilinearity"], _rel(d1, Q(lin, c, f)), _rel(d1b))
                # product functional: derivative F[f] b + G[f] a
                Fa, Gb = val(a, f), val(b, f)
                prod = Fa * b + Gb * a
                p4 = P(prod, c, f) - Fa * P(b, c, f) - Gb * P(a, c, f)
                d4 = Q(prod, c, f) - Fa * Q(b, c, f) - Gb * Q(a, c, f)
                v["P4_leibniz"] = max(v["P4_leibniz"], _rel(p4, P(prod, c, f)))
                v["D4_leibniz"] = max(v["D4_leibniz"], _rel(d4, Q(prod, c, f)))
        for a, b, c in itertools.combinations(ws, 3):
            bc = ops.poisson_value_derivative(b, c)
            ca = ops.poisson_value_derivative(c, a)
            ab = ops.poisson_value_derivative(a, b)
            terms = (P(a, bc, f), P(b, ca, f), P(c, ab, f))
            v["P5_jacobi"] = max(v["P5_jacobi"], _rel(sum(terms), *terms))
    thresholds = {k: threshold for k in v}
    thresholds["D2_nonnegativity"] = 1e-14
    return AxiomReport(
        system=model.system.name,
        cells=tuple(model.grid.cells),
        violations=v,
        thresholds=thresholds,
        samples={"distributions": len(fs), "functionals": len(ws)},
    )


def default_axiom_samples(model: GridModel, rng: np.random.Generator, n_f: int = 3, n_w: int = 4):
    """Random positive distributions and low-degree polynomial weights.

    Weights are affine in the coordinates plus, for constant operators, a
    quadratic part, so vertex gradients of every inner bracket are exact.
    """
    g = model.grid
    x = g.centres
    n = g.ndim
    scale = np.array([max(abs(a), abs(b)) for a, b in zip(g.mins, g.maxs)])
    # the no-flux boundary breaks Jacobi at the outer cells, so the samples
    # decay towards the edge as admissible densities do
    envelope = np.exp(-0.5 * np.sum((6.0 * x / scale) ** 2, axis=-1))
    fs = []
    for _ in range(n_f):
        f = rng.uniform(0.5, 1.5, size=g.shape) * envelope
        fs.append(f / g.integrate(f))
    ws = []
    for _ in range(n_w):
        w = rng.normal() + np.einsum("...i,i->...", x / scale, rng.normal(size=n))
        if model.metric_is_constant_diagonal:
            Q = rng.normal(size=(n, n))
            w = w + 0.5 * np.einsum("...i,ij,...j->...", x / scale, Q + Q.T, x / scale)
        ws.append(w)
    return fs, ws


def run_axiom_suite(model: GridModel, seed: int = 0, corrupt: bool = False, threshold: float = DEFAULT_THRESHOLD) -> AxiomReport:
    """Draw default samples and run the suite; ``corrupt`` symmetrizes the operator."""
    rng = np.random.default_rng(seed)
    fs, ws = default_axiom_samples(model, rng)
    ops = BracketOperators(model, symmetrized(model.J_vertex)) if corrupt else None
    rep = axiom_suite(model, fs, ws, rng=rng, threshold=threshold, ops=ops)
    if corrupt:
        rep.system = rep.system + " (symmetrized operator)"
    return rep

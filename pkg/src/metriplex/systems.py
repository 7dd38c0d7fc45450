"""Built-in Hamiltonian systems, sparse polynomial systems and the name registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Sequence

import numpy as np

from .errors import ConfigError
from .poisson import HamiltonianSystem, PoissonOperator, ScalarField

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_j, _i, _k] = -1.0


def _lead(x):
    return np.shape(x)[:-1]


def canonical_2d(omega: float = 1.0) -> HamiltonianSystem:
    """Harmonic oscillator in canonical coordinates ``(p, q)``, ``J^{pq} = -1``."""
    Jc = np.array([[0.0, -1.0], [1.0, 0.0]])
    op = PoissonOperator(
        n=2,
        matrix=lambda x: np.broadcast_to(Jc, _lead(x) + (2, 2)).copy(),
        partials=lambda x: np.zeros(_lead(x) + (2, 2, 2)),
    )
    H = ScalarField(
        "H",
        value=lambda x: 0.5 * omega * np.sum(x * x, axis=-1),
        gradient=lambda x: omega * np.asarray(x, dtype=float),
    )
    return HamiltonianSystem(
        name="canonical2d",
        operator=op,
        hamiltonian=H,
        casimirs=(),
        coords=("p", "q"),
        description="canonical 2D oscillator H=(p^2+q^2)/2",
        params={"omega": omega},
    )


def _rigid_matrix(x):
    return np.einsum("ijk,...k->...ij", LEVI_CIVITA, x)


def rigid_body(inertia: Sequence[float] = (1.0, 2.0, 3.0)) -> HamiltonianSystem:
    """Free rigid body on so(3)*: ``J^{ij} = eps^{ijk} x_k``, Casimir ``|x|^2/2``."""
    inv = 1.0 / np.asarray(inertia, dtype=float)
    op = PoissonOperator(
        n=3,
        matrix=_rigid_matrix,
        partials=lambda x: np.broadcast_to(LEVI_CIVITA, _lead(x) + (3, 3, 3)).copy(),
    )
    H = ScalarField(
        "H",
        value=lambda x: 0.5 * np.sum(inv * x * x, axis=-1),
        gradient=lambda x: inv * np.asarray(x, dtype=float),
    )
    C = ScalarField(
        "C1",
        value=lambda x: 0.5 * np.sum(x * x, axis=-1),
        gradient=lambda x: np.asarray(x, dtype=float),
    )
    return HamiltonianSystem(
        name="rigid-body",
        operator=op,
        hamiltonian=H,
        casimirs=(C,),
        coords=("x1", "x2", "x3"),
        description="free rigid body, Lie-Poisson on so(3)*",
        params={"inertia": [float(v) for v in inertia]},
    )


def corrupted_demo() -> HamiltonianSystem:
    """Rigid body with ``J^{12}`` replaced by ``x1 x2``; violates Jacobi."""
    base = rigid_body()

    def matrix(x):
        J = _rigid_matrix(x)
        J[..., 0, 1] = x[..., 0] * x[..., 1]
        J[..., 1, 0] = -x[..., 0] * x[..., 1]
        return J

    def partials(x):
        d = np.broadcast_to(LEVI_CIVITA, _lead(x) + (3, 3, 3)).copy()
        d[..., 0, 1, :] = 0.0
        d[..., 1, 0, :] = 0.0
        d[..., 0, 1, 0] = x[..., 1]
        d[..., 0, 1, 1] = x[..., 0]
        d[..., 1, 0, 0] = -x[..., 1]
        d[..., 1, 0, 1] = -x[..., 0]
        return d

    return HamiltonianSystem(
        name="corrupted-demo",
        operator=PoissonOperator(3, matrix, partials),
        hamiltonian=base.hamiltonian,
        casimirs=base.casimirs,
        coords=base.coords,
        description="fault-injection fixture: rigid body with J^12 = x1 x2",
    )


@dataclass(frozen=True)
class Polynomial:
    """Sparse polynomial ``sum_t c_t prod_i x_i^{e_ti}``."""

    coeffs: np.ndarray
    exponents: np.ndarray

    @classmethod
    def from_terms(cls, terms, n: int) -> "Polynomial":
        coeffs, exps = [], []
        for term in terms:
            if len(term) != 2:
                raise ConfigError(f"polynomial term must be [coefficient, exponents], got {term!r}")
            c, e = term
            e = [int(v) for v in e]
            if len(e) != n or min(e, default=0) < 0:
                raise ConfigError(f"exponent list {e} must have {n} nonnegative entries")
            coeffs.append(float(c))
            exps.append(e)
        return cls(np.array(coeffs, dtype=float), np.array(exps, dtype=int).reshape(-1, n))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, e in zip(self.coeffs, self.exponents):
            out = out + c * np.prod(x ** e, axis=-1)
        return out

    def derivative(self, m: int) -> "Polynomial":
        keep = self.exponents[:, m] > 0
        coeffs = self.coeffs[keep] * self.exponents[keep, m]
        exps = self.exponents[keep].copy()
        exps[:, m] -= 1
        return Polynomial(coeffs, exps)

    def gradient(self, x):
        n = self.exponents.shape[1]
        return np.stack([self.derivative(m)(x) for m in range(n)], axis=-1)


def polynomial_system(spec: dict) -> HamiltonianSystem:
    """Build a system from a parsed config table.

    Expected layout (indices are 1-based)::

        name = "lv3"
        dimension = 3
        [[operator]]
        i = 1
        j = 2
        terms = [[1.0, [0, 0, 1]]]
        [hamiltonian]
        terms = [[0.5, [2, 0, 0]]]
        [[casimirs]]
        terms = [[0.5, [2, 0, 0]]]

    Only entries with ``i < j`` are given; the lower triangle follows by
    antisymmetry.
    """
    allowed = {"name", "dimension", "coords", "operator", "hamiltonian", "casimirs", "description"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in polynomial system: {', '.join(sorted(unknown))}")
    try:
        n = int(spec["dimension"])
        name = str(spec.get("name", "polynomial"))
        entries = spec.get("operator", [])
        ham = spec["hamiltonian"]
    except KeyError as exc:
        raise ConfigError(f"polynomial system is missing key {exc.args[0]!r}") from None
    if n < 1:
        raise ConfigError("dimension must be positive")
    table = {}
    for ent in entries:
        i, j = int(ent["i"]) - 1, int(ent["j"]) - 1
        if not (0 <= i < j < n):
            raise ConfigError(f"operator entry ({i + 1},{j + 1}) must satisfy 1 <= i < j <= {n}")
        table[(i, j)] = Polynomial.from_terms(ent["terms"], n)
    dtable = {(i, j): [p.derivative(m) for m in range(n)] for (i, j), p in table.items()}

    def matrix(x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (n, n))
        for (i, j), p in table.items():
            v = p(x)
            J[..., i, j] = v
            J[..., j, i] = -v
        return J

    def partials(x):
        x = np.asarray(x, dtype=float)
        d = np.zeros(x.shape[:-1] + (n, n, n))
        for (i, j), ps in dtable.items():
            for m, p in enumerate(ps):
                v = p(x)
                d[..., i, j, m] = v
                d[..., j, i, m] = -v
        return d

    hpoly = Polynomial.from_terms(ham["terms"], n)
    H = ScalarField("H", hpoly, hpoly.gradient)
    cas = []
    for k, c in enumerate(spec.get("casimirs", [])):
        cp = Polynomial.from_terms(c["terms"], n)
        cas.append(ScalarField(str(c.get("name", f"C{k + 1}")), cp, cp.gradient))
    coords = tuple(spec.get("coords", ()))
    if coords and len(coords) != n:
        raise ConfigError(f"coords lists {len(coords)} names for dimension {n}")
    return HamiltonianSystem(
        name=name,
        operator=PoissonOperator(n, matrix, partials),
        hamiltonian=H,
        casimirs=tuple(cas),
        coords=coords,
        description=str(spec.get("description", "user polynomial system")),
    )


def _chm_factory(K: int = 2, c: float = 0.0) -> HamiltonianSystem:
    from .chm import chm_system

    return chm_system(int(K), float(c))


_REGISTRY: Dict[str, Callable[..., HamiltonianSystem]] = {
    "canonical2d": canonical_2d,
    "rigid-body": rigid_body,
    "corrupted-demo": corrupted_demo,
    "chm": _chm_factory,
}


def list_systems():
    return sorted(_REGISTRY)


def get_system(name: str, **params) -> HamiltonianSystem:
    """Look up a registered system by name and instantiate it."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown system '{name}'; registered: {', '.join(list_systems())}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for system '{name}': {exc}") from None


def register_system(name: str, factory: Callable[..., HamiltonianSystem]) -> None:
    _REGISTRY[name] = factory

"""Truncated Fourier representation of the Charney-Hasegawa-Mima equation.

Modes ``(n, m)`` with ``|n|, |m| <= K`` are stored row-major (``n`` outer,
``m`` inner), so the conjugate partner of flat index ``a`` is ``M - 1 - a``
and the zero mode sits in the middle.  Complex coefficients satisfy the
reality constraint ``phi[-n,-m] = conj(phi[n,m])``.

For use with the generic machinery the state is also written in a real chart
``y = (phi00, Re phi_r1, Im phi_r1, Re phi_r2, ...)`` where ``r1, r2, ...`` are
the modes after the zero mode in row-major order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import ConfigError, NumericalError
from .poisson import HamiltonianSystem, PoissonOperator, ScalarField

FOUR_PI2 = 4.0 * math.pi**2
TWO_PI2 = 2.0 * math.pi**2
BLOWUP = 1e12
REALITY_TOL = 1e-13


class CasimirWarning(UserWarning):
    """The enstrophy-type invariant is only exact for ``c = 0``."""


def mode_list(K: int) -> np.ndarray:
    """All modes of the box as an ``(M, 2)`` integer array, row-major."""
    if K < 1:
        raise ConfigError("truncation K must be at least 1")
    r = np.arange(-K, K + 1)
    n, m = np.meshgrid(r, r, indexing="ij")
    return np.stack([n.ravel(), m.ravel()], axis=1)


def mode_index(K: int, n: int, m: int) -> int:
    if abs(n) > K or abs(m) > K:
        raise IndexError(f"mode ({n},{m}) outside box K={K}")
    return (n + K) * (2 * K + 1) + (m + K)


def coefficients(i, j, c: float):
    """The linear and quadratic coupling constants for the mode pair ``(i, j)``.

    Returns ``(B, C)`` with ``B`` complex (nonzero only for ``j = -i``) and
    ``C`` real.
    """
    i1, i2 = int(i[0]), int(i[1])
    j1, j2 = int(j[0]), int(j[1])
    den = FOUR_PI2 * (1 + i1 * i1 + i2 * i2) * (1 + j1 * j1 + j2 * j2)
    lin = 1j * c * i1 / den if (i1 == -j1 and i2 == -j2) else 0j
    quad = (i1 * j2 - i2 * j1) * (1 + (i1 + j1) ** 2 + (i2 + j2) ** 2) / den
    return lin, float(quad)


@dataclass(frozen=True)
class _Tables:
    K: int
    modes: np.ndarray
    weight: np.ndarray  # 1 + n^2 + m^2 per mode
    quad: np.ndarray  # C^{ij}
    lin_unit: np.ndarray  # B^{ij} / c
    sum_index: np.ndarray  # flat index of i + j or -1 outside the box
    to_complex: np.ndarray  # phi = P y
    grad_map: np.ndarray  # complex gradient = T grad_y
    out_map: np.ndarray  # y_dot = Re(R phi_dot)


@lru_cache(maxsize=16)
def _tables(K: int) -> _Tables:
    modes = mode_list(K)
    M = len(modes)
    w = 1.0 + modes[:, 0] ** 2 + modes[:, 1] ** 2
    a1, a2 = modes[:, 0][:, None], modes[:, 1][:, None]
    b1, b2 = modes[:, 0][None, :], modes[:, 1][None, :]
    den = FOUR_PI2 * w[:, None] * w[None, :]
    quad = (a1 * b2 - a2 * b1) * (1 + (a1 + b1) ** 2 + (a2 + b2) ** 2) / den
    opposite = (a1 == -b1) & (a2 == -b2)
    lin_unit = np.where(opposite, 1j * a1 / den, 0j)
    s1, s2 = a1 + b1, a2 + b2
    inside = (np.abs(s1) <= K) & (np.abs(s2) <= K)
    sum_index = np.where(inside, (s1 + K) * (2 * K + 1) + (s2 + K), -1)

    zero = (M - 1) // 2
    P = np.zeros((M, M), dtype=complex)
    T = np.zeros((M, M), dtype=complex)
    R = np.zeros((M, M), dtype=complex)
    P[zero, 0] = 1.0
    T[zero, 0] = 1.0
    R[0, zero] = 1.0
    for k, r in enumerate(range(zero + 1, M)):
        ia, ib = 1 + 2 * k, 2 + 2 * k
        rc = M - 1 - r
        P[r, ia], P[r, ib] = 1.0, 1j
        P[rc, ia], P[rc, ib] = 1.0, -1j
        T[r, ia], T[r, ib] = 0.5, -0.5j
        T[rc, ia], T[rc, ib] = 0.5, 0.5j
        R[ia, r] = 1.0
        R[ib, r] = -1j
    return _Tables(K, modes, w, quad, lin_unit, sum_index, P, T, R)


def _shifted(phi: np.ndarray, sum_index: np.ndarray) -> np.ndarray:
    """``phi[i + j]`` laid out as a matrix, zero when ``i + j`` leaves the box."""
    ext = np.concatenate([phi, np.zeros(phi.shape[:-1] + (1,), dtype=phi.dtype)], axis=-1)
    return ext[..., sum_index]


@dataclass
class SpectralState:
    """Complex coefficients on the mode box plus the linear coupling ``c``."""

    K: int
    coeffs: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        M = (2 * self.K + 1) ** 2
        self.coeffs = np.asarray(self.coeffs, dtype=complex).reshape(M)
        viol = reality_violation(self.coeffs)
        if viol > REALITY_TOL * max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0))):
            raise ValueError(f"coefficients violate the reality constraint by {viol:.3e}")
        self.coeffs = enforce_reality(self.coeffs)

    def grid(self) -> np.ndarray:
        """Coefficients reshaped as ``[n + K, m + K]``."""
        side = 2 * self.K + 1
        return self.coeffs.reshape(side, side)

    def to_real(self) -> np.ndarray:
        return complex_to_real(self.coeffs)

    @classmethod
    def from_real(cls, K: int, y, c: float = 0.0) -> "SpectralState":
        return cls(K, real_to_complex(K, y), c)


def reality_violation(phi) -> float:
    phi = np.asarray(phi)
    return float(np.max(np.abs(phi[..., ::-1] - np.conj(phi)), initial=0.0))


def enforce_reality(phi) -> np.ndarray:
    """Project onto the real subspace; exact for already-real states."""
    phi = np.asarray(phi, dtype=complex)
    out = 0.5 * (phi + np.conj(phi[..., ::-1]))
    return out


def real_to_complex(K: int, y) -> np.ndarray:
    return np.asarray(y, dtype=float) @ _tables(K).to_complex.T


def complex_to_real(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    M = phi.shape[-1]
    K = (int(round(math.sqrt(M))) - 1) // 2
    return np.real(phi @ _tables(K).out_map.T)


def random_state(K: int, rng: np.random.Generator, c: float = 0.0, norm: float = 1.0) -> SpectralState:
    """Random real state scaled to unit Euclidean norm of the real chart."""
    y = rng.standard_normal((2 * K + 1) ** 2)
    y *= norm / np.linalg.norm(y)
    return SpectralState.from_real(K, y, c)


def poisson_matrix(K: int, phi, c: float = 0.0) -> np.ndarray:
    """Complex operator ``B^{ij} + C^{ij} phi^{i+j}`` with Galerkin cutoff."""
    t = _tables(K)
    phi = np.asarray(phi, dtype=complex)
    return c * t.lin_unit + t.quad * _shifted(phi, t.sum_index)


def hamiltonian(state: SpectralState) -> float:
    t = _tables(state.K)
    return float(TWO_PI2 * np.sum(t.weight * np.abs(state.coeffs) ** 2))


def hamiltonian_gradient(state: SpectralState) -> np.ndarray:
    """Derivative with respect to each coefficient, treating ``phi^i`` and ``phi^{-i}`` as independent."""
    t = _tables(state.K)
    return FOUR_PI2 * t.weight * np.conj(state.coeffs)


def casimir(state: SpectralState) -> float:
    if state.c != 0.0:
        warnings.warn("the quadratic invariant is exact only for c = 0", CasimirWarning, stacklevel=2)
    t = _tables(state.K)
    return float(TWO_PI2 * np.sum(t.weight**2 * np.abs(state.coeffs) ** 2))


def casimir_gradient(state: SpectralState) -> np.ndarray:
    t = _tables(state.K)
    return FOUR_PI2 * t.weight**2 * np.conj(state.coeffs)


def enstrophy(state: SpectralState) -> float:
    """``C - H``, the nonnegative gradient-plus-Laplacian quadratic."""
    t = _tables(state.K)
    return float(TWO_PI2 * np.sum(t.weight * (t.weight - 1.0) * np.abs(state.coeffs) ** 2))


def rhs_deterministic(state: SpectralState) -> np.ndarray:
    """Time derivative of every coefficient by direct triad convolution."""
    K = state.K
    side = 2 * K + 1
    phi = state.grid()
    r = np.arange(-K, K + 1)
    n = r[:, None]
    m = r[None, :]
    acc = np.zeros((side, side), dtype=complex)
    for p in range(-K, K + 1):
        for q in range(-K, K + 1):
            coef = phi[p + K, q + K]
            if coef == 0:
                continue
            # phi^{n-p, m-q} on the output grid, zero outside the box
            shifted = np.zeros((side, side), dtype=complex)
            n_lo, n_hi = max(-K, -K + p), min(K, K + p)
            m_lo, m_hi = max(-K, -K + q), min(K, K + q)
            if n_lo > n_hi or m_lo > m_hi:
                continue
            shifted[n_lo + K : n_hi + K + 1, m_lo + K : m_hi + K + 1] = phi[
                n_lo - p + K : n_hi - p + K + 1, m_lo - q + K : m_hi - q + K + 1
            ]
            kern = (m * p - n * q) * (1 + (n - p) ** 2 + (m - q) ** 2)
            acc += kern * shifted * coef
    w = 1.0 + n**2 + m**2
    acc += 1j * state.c * n * phi
    return (acc / w).ravel()


def rhs_operator(state: SpectralState) -> np.ndarray:
    """Same time derivative as the product of the operator and the energy gradient."""
    J = poisson_matrix(state.K, state.coeffs, state.c)
    return J @ hamiltonian_gradient(state)


# ---------------------------------------------------------------- real chart


def real_operator_tables(K: int, c: float):
    """Constant part and per-coordinate slopes of the real-chart operator."""
    return _real_tables(K, float(c))


@lru_cache(maxsize=16)
def _real_tables(K: int, c: float):
    t = _tables(K)
    M = len(t.modes)
    base = np.real(t.out_map @ (c * t.lin_unit) @ t.grad_map)
    slopes = np.empty((M, M, M))
    for k in range(M):
        phi_k = t.to_complex[:, k]
        Jk = t.quad * _shifted(phi_k, t.sum_index)
        slopes[k] = np.real(t.out_map @ Jk @ t.grad_map)
    return base, slopes


def chm_system(K: int, c: float = 0.0) -> HamiltonianSystem:
    """The truncated system in the real chart as a generic Hamiltonian system."""
    base, slopes = real_operator_tables(K, c)
    M = base.shape[0]
    partials_const = np.transpose(slopes, (1, 2, 0)).copy()
    t = _tables(K)
    zero = (M - 1) // 2
    wy = np.empty(M)
    wy[0] = t.weight[zero]
    wy[1::2] = 2.0 * t.weight[zero + 1 :]
    wy[2::2] = 2.0 * t.weight[zero + 1 :]

    # the triad structure leaves only a few percent of the slopes nonzero
    slopes_t = sparse.csr_matrix(slopes.reshape(M, M * M).T)
    has_base = bool(np.any(base))

    def matrix(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, M)
        J = np.asarray(slopes_t @ flat.T).T.reshape(flat.shape[:1] + (M, M))
        if has_base:
            J = J + base
        return J.reshape(y.shape[:-1] + (M, M))

    def partials(y):
        return np.broadcast_to(partials_const, np.shape(y)[:-1] + partials_const.shape).copy()

    H = ScalarField(
        "H",
        value=lambda y: TWO_PI2 * np.sum(wy * y * y, axis=-1),
        gradient=lambda y: FOUR_PI2 * wy * np.asarray(y, dtype=float),
    )
    C = ScalarField(
        "C1",
        value=lambda y: TWO_PI2 * np.sum(wy * _casimir_weight(K) * y * y, axis=-1),
        gradient=lambda y: FOUR_PI2 * wy * _casimir_weight(K) * np.asarray(y, dtype=float),
    )
    return HamiltonianSystem(
        name="chm",
        operator=PoissonOperator(M, matrix, partials),
        hamiltonian=H,
        casimirs=(C,) if c == 0.0 else (),
        coords=tuple(_chart_names(K)),
        description=f"CHM Fourier truncation K={K}, c={c}",
        params={"K": K, "c": c},
    )


@lru_cache(maxsize=16)
def _casimir_weight(K: int) -> np.ndarray:
    t = _tables(K)
    M = len(t.modes)
    zero = (M - 1) // 2
    out = np.empty(M)
    out[0] = t.weight[zero]
    out[1::2] = t.weight[zero + 1 :]
    out[2::2] = t.weight[zero + 1 :]
    return out


def _chart_names(K: int):
    t = _tables(K)
    M = len(t.modes)
    zero = (M - 1) // 2
    names = ["phi_0_0"]
    for r in range(zero + 1, M):
        n, m = t.modes[r]
        names += [f"re_{n}_{m}", f"im_{n}_{m}"]
    return names


# ------------------------------------------------------------ identity checks


def antisymmetry_violation(K: int, phi, c: float = 0.0) -> float:
    J = poisson_matrix(K, phi, c)
    return float(np.max(np.abs(J + J.T)))


def interior_triads(K: int) -> np.ndarray:
    """Mode triples whose pairwise sums and total all lie inside the box."""
    modes = mode_list(K)
    M = len(modes)
    s = modes[:, None, :] + modes[None, :, :]
    pair_in = np.all(np.abs(s) <= K, axis=-1)
    i, j, k = np.nonzero(pair_in[:, :, None] & pair_in[:, None, :] & pair_in[None, :, :])
    tot = modes[i] + modes[j] + modes[k]
    keep = np.all(np.abs(tot) <= K, axis=-1)
    return np.stack([i[keep], j[keep], k[keep]], axis=1)


def jacobi_cyclic_sums(K: int, phi, c: float = 0.0, triads: Optional[np.ndarray] = None) -> np.ndarray:
    """Cyclic Jacobi sums in the complex coordinates for the given triads.

    The operator depends on ``phi`` only through ``phi^{j+k}`` with slope
    ``C^{jk}``, so each term reduces to ``J^{i, j+k} C^{jk}``.
    """
    t = _tables(K)
    J = poisson_matrix(K, phi, c)
    if triads is None:
        M = len(t.modes)
        g = np.indices((M, M, M)).reshape(3, -1).T
        triads = g
    i, j, k = triads[:, 0], triads[:, 1], triads[:, 2]

    def term(a, b, d):
        s = t.sum_index[b, d]
        ok = s >= 0
        out = np.zeros(len(a), dtype=complex)
        out[ok] = J[a[ok], s[ok]] * t.quad[b[ok], d[ok]]
        return out

    return term(i, j, k) + term(j, k, i) + term(k, i, j)


def interior_jacobi_residual(K: int, phi, c: float = 0.0) -> float:
    sums = jacobi_cyclic_sums(K, phi, c, interior_triads(K))
    return float(np.max(np.abs(sums), initial=0.0))


def boundary_jacobi_residual(K: int, phi, c: float = 0.0) -> float:
    """Largest cyclic sum over triads touching the truncation edge (reported only)."""
    M = (2 * K + 1) ** 2
    all_t = np.indices((M, M, M)).reshape(3, -1).T
    inner = interior_triads(K)
    mask = np.ones(len(all_t), dtype=bool)
    mask[(inner[:, 0] * M + inner[:, 1]) * M + inner[:, 2]] = False
    sums = jacobi_cyclic_sums(K, phi, c, all_t[mask])
    return float(np.max(np.abs(sums), initial=0.0))


def casimir_residual(state: SpectralState) -> float:
    J = poisson_matrix(state.K, state.coeffs, state.c)
    return float(np.max(np.abs(J @ casimir_gradient(state))))


def liouville_trace(state: SpectralState, rel_step: float = 1e-6) -> float:
    """Finite-difference trace of the flow Jacobian in the real chart."""
    y = state.to_real()
    tr = 0.0
    for a in range(len(y)):
        h = rel_step * (1.0 + abs(y[a]))
        yp, ym = y.copy(), y.copy()
        yp[a] += h
        ym[a] -= h
        fp = complex_to_real(rhs_deterministic(SpectralState.from_real(state.K, yp, state.c)))
        fm = complex_to_real(rhs_deterministic(SpectralState.from_real(state.K, ym, state.c)))
        tr += (fp[a] - fm[a]) / (2 * h)
    return float(tr)


# ---------------------------------------------------------------- integration


@dataclass
class IntegrationResult:
    state: SpectralState
    times: np.ndarray
    energy: np.ndarray
    casimir: np.ndarray
    max_reality_violation: float

    @property
    def energy_drift(self) -> float:
        return float(abs(self.energy[-1] - self.energy[0]) / abs(self.energy[0]))

    @property
    def casimir_drift(self) -> float:
        return float(abs(self.casimir[-1] - self.casimir[0]) / abs(self.casimir[0]))


def integrate_deterministic(state: SpectralState, dt: float, steps: int, record_every: int = 1) -> IntegrationResult:
    """Classical RK4 on the coefficients, projecting onto real states each step."""
    if not (np.isfinite(dt) and dt > 0):
        raise ConfigError("dt must be a positive finite number")
    if steps < 1:
        raise ConfigError("steps must be at least 1")
    K, c = state.K, state.c
    phi = state.coeffs.copy()

    def f(p):
        return rhs_deterministic(SpectralState(K, enforce_reality(p), c))

    times, Hs, Cs = [0.0], [hamiltonian(state)], [_casimir_quiet(state)]
    worst = 0.0
    for s in range(1, steps + 1):
        k1 = f(phi)
        k2 = f(phi + 0.5 * dt * k1)
        k3 = f(phi + 0.5 * dt * k2)
        k4 = f(phi + dt * k3)
        phi = phi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = max(worst, reality_violation(phi))
        phi = enforce_reality(phi)
        if not np.all(np.isfinite(phi)) or np.max(np.abs(phi)) > BLOWUP:
            raise NumericalError("spectral state blew up", last_good_time=(s - 1) * dt)
        if s % record_every == 0 or s == steps:
            cur = SpectralState(K, phi, c)
            times.append(s * dt)
            Hs.append(hamiltonian(cur))
            Cs.append(_casimir_quiet(cur))
    return IntegrationResult(SpectralState(K, phi, c), np.array(times), np.array(Hs), np.array(Cs), worst)


def _casimir_quiet(state):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CasimirWarning)
        return casimir(state)


# ------------------------------------------------------------ thermal physics


def alpha_coefficients(K: int, beta: float, mu: float) -> np.ndarray:
    """``2 pi^2 w (beta + mu w)`` per mode, ``w = 1 + n^2 + m^2``."""
    w = _tables(K).weight
    return TWO_PI2 * w * (beta + mu * w)


def _check_thermal(beta: float, mu: float):
    if beta < 0 or mu < 0:
        raise ConfigError("equilibrium requires beta >= 0 and mu >= 0")
    if beta == 0 and mu == 0:
        raise ConfigError("beta and mu both zero: the partition integral diverges")


def predicted_mean_square(K: int, beta: float, mu: float) -> np.ndarray:
    """Equilibrium ``<|phi^{nm}|^2> = 1 / (2 alpha_nm)`` for every mode."""
    _check_thermal(beta, mu)
    return 1.0 / (2.0 * alpha_coefficients(K, beta, mu))


def partition_function(K: int, beta: float, mu: float) -> float:
    """Gaussian integral over the zero mode and one coefficient per conjugate pair."""
    _check_thermal(beta, mu)
    a = alpha_coefficients(K, beta, mu)
    M = len(a)
    zero = (M - 1) // 2
    logz = 0.5 * math.log(math.pi / a[zero]) + float(np.sum(np.log(math.pi / (2.0 * a[zero + 1 :]))))
    return math.exp(logz)


def literal_partition_product(K: int, beta: float, mu: float) -> complex:
    """Product of ``sqrt(pi i / alpha)`` over every mode of the box, taken literally.

    Kept for comparison with the real Gaussian value; the factors of ``i``
    make it complex in general.
    """
    _check_thermal(beta, mu)
    a = alpha_coefficients(K, beta, mu)
    return complex(np.prod(np.sqrt(np.pi * 1j / a.astype(complex))))


def sample_equilibrium(K: int, beta: float, mu: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the Gaussian equilibrium in the real chart."""
    a = alpha_coefficients(K, beta, mu)
    M = len(a)
    zero = (M - 1) // 2
    sd = np.empty(M)
    sd[0] = math.sqrt(1.0 / (2.0 * a[zero]))
    sd[1::2] = np.sqrt(1.0 / (4.0 * a[zero + 1 :]))
    sd[2::2] = np.sqrt(1.0 / (4.0 * a[zero + 1 :]))
    return rng.standard_normal((size, M)) * sd


def monte_carlo_partition(K: int, beta: float, mu: float, samples: int, rng: np.random.Generator, scale: float = 1.5):
    """Importance-sampled estimate of the partition integral.

    Draws from a Gaussian proposal ``scale`` times wider than the target and
    averages the weight ratio.  Returns ``(estimate, standard_error)``.
    """
    _check_thermal(beta, mu)
    a = alpha_coefficients(K, beta, mu)
    M = len(a)
    zero = (M - 1) // 2
    prec = np.empty(M)
    prec[0] = 2.0 * a[zero]
    prec[1::2] = 4.0 * a[zero + 1 :]
    prec[2::2] = 4.0 * a[zero + 1 :]
    sd = scale / np.sqrt(prec)
    y = rng.standard_normal((samples, M)) * sd
    # energy functional in the chart: sum_all alpha |phi|^2
    expo = 0.5 * np.sum(prec * y * y, axis=1)
    log_q = -0.5 * np.sum((y / sd) ** 2, axis=1) - np.sum(np.log(np.sqrt(2 * np.pi) * sd))
    w = np.exp(-expo - log_q)
    est = float(np.mean(w))
    err = float(np.std(w, ddof=1) / math.sqrt(samples))
    return est, err


# ------------------------------------------------------- stochastic thermalization


def chart_mean_squares(y: np.ndarray) -> np.ndarray:
    """Ensemble ``<|phi|^2>`` for the zero mode and each conjugate pair, from chart samples."""
    y = np.asarray(y, dtype=float)
    out = [np.mean(y[:, 0] ** 2)]
    out += list(np.mean(y[:, 1::2] ** 2 + y[:, 2::2] ** 2, axis=0))
    return np.array(out)


def leaf_start(K: int, beta: float, mu: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Off-equilibrium ensemble sharing the equilibrium's Casimir leaves.

    The stochastic dynamics conserves the zero mode and the quadratic
    invariant of every particle, so the multiplier ``mu`` can only enter
    through the initial leaf distribution.  Each particle keeps the zero
    mode and invariant of an exact equilibrium draw, but its remaining
    coefficients point in an isotropic random direction, which has the
    wrong spectrum.
    """
    sysc = chm_system(K)
    C = sysc.casimirs[0]
    y = sample_equilibrium(K, beta, mu, size, rng)
    target = C(y)
    base = np.zeros_like(y)
    base[:, 0] = y[:, 0]
    z = rng.standard_normal(y.shape)
    z[:, 0] = 0.0
    return base + z * np.sqrt((target - C(base)) / C(z))[:, None]


@dataclass
class ThermalizationResult:
    K: int
    beta: float
    mu: float
    modes: np.ndarray  # (n, m) for the zero mode and one member of each pair
    predicted: np.ndarray
    measured: np.ndarray
    frozen: np.ndarray  # modes the dynamics cannot move
    casimir_drift: float
    times: np.ndarray
    history: np.ndarray  # snapshot mean squares, one row per time

    @property
    def relative_error(self) -> np.ndarray:
        return self.measured / self.predicted - 1.0

    def max_error(self, include_frozen: bool = False) -> float:
        err = np.abs(self.relative_error)
        return float(np.max(err if include_frozen else err[~self.frozen]))


def thermalize(K: int, beta: float, mu: float, size: int, D: float, dt: float, steps: int,
               seed: int = 0, average_from: Optional[int] = None, record_every: int = 10,
               scheme: str = "midpoint", threads: int = 1) -> ThermalizationResult:
    """Run the perturbed dynamics from :func:`leaf_start` and measure the spectrum.

    Friction is fixed at ``gamma = beta D / 2``.  Mean squares are averaged
    over all steps from ``average_from`` (default: second half).
    """
    from .stochastic import Ensemble, FrictionModel, NoiseModel, step_stratonovich

    _check_thermal(beta, mu)
    if average_from is None:
        average_from = steps // 2
    if not 1 <= average_from <= steps:
        raise ConfigError("average_from must lie in 1..steps")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)).spawn(2)[0])
    sysc = chm_system(K)
    C = sysc.casimirs[0]
    y0 = leaf_start(K, beta, mu, size, rng)
    c0 = C(y0)
    ens = Ensemble(y0, NoiseModel(float(D), int(seed)), FrictionModel.fixed(beta, D))
    t = _tables(K)
    zero = (len(t.modes) - 1) // 2
    acc = np.zeros(zero + 1)
    count = 0
    times, hist = [0.0], [chart_mean_squares(y0)]
    for s in range(1, steps + 1):
        ens = step_stratonovich(ens, sysc, dt, threads, scheme)
        if s >= average_from:
            acc += chart_mean_squares(ens.particles)
            count += 1
        if s % record_every == 0 or s == steps:
            times.append(s * dt)
            hist.append(chart_mean_squares(ens.particles))
    drift = float(np.max(np.abs(C(ens.particles) - c0) / c0))
    frozen = np.zeros(zero + 1, dtype=bool)
    frozen[0] = True  # the operator's zero-mode row vanishes
    return ThermalizationResult(
        K, float(beta), float(mu), t.modes[zero:], predicted_mean_square(K, beta, mu)[zero:],
        acc / count, frozen, drift, np.array(times), np.array(hist),
    )

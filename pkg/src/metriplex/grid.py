"""Rectangular phase-space grids and the staggered stencils used on them.

Cell fields live at cell centres.  Interior vertices (shared by ``2^n`` cells)
carry gradients and averaged weights; faces between neighbouring cells carry
fluxes.  Every operator here has an exact transpose partner so that the
grid brackets and the flux-form right-hand side agree to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PhaseGrid:
    mins: Sequence[float]
    maxs: Sequence[float]
    cells: Sequence[int]

    def __post_init__(self):
        mins = tuple(float(v) for v in self.mins)
        maxs = tuple(float(v) for v in self.maxs)
        cells = tuple(int(v) for v in self.cells)
        if not (len(mins) == len(maxs) == len(cells)):
            raise ConfigError("grid.min, grid.max and grid.cells must have equal length")
        if not 1 <= len(cells) <= 3:
            raise ConfigError("grids are supported in 1 to 3 dimensions")
        for lo, hi, c in zip(mins, maxs, cells):
            if not lo < hi:
                raise ConfigError(f"grid min {lo} must be below max {hi}")
            if c < 8:
                raise ConfigError(f"grid needs at least 8 cells per axis, got {c}")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def uniform(cls, n: int, half_width: float, cells: int) -> "PhaseGrid":
        return cls((-half_width,) * n, (half_width,) * n, (cells,) * n)

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @cached_property
    def h(self) -> np.ndarray:
        return np.array([(b - a) / c for a, b, c in zip(self.mins, self.maxs, self.cells)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_centres(self, k: int) -> np.ndarray:
        return self.mins[k] + self.h[k] * (np.arange(self.cells[k]) + 0.5)

    def axis_nodes(self, k: int) -> np.ndarray:
        """Interior node coordinates along axis ``k`` (between neighbouring cells)."""
        return self.mins[k] + self.h[k] * np.arange(1, self.cells[k])

    @cached_property
    def centres(self) -> np.ndarray:
        """Cell-centre coordinates, shape ``cells + (n,)``."""
        axes = [self.axis_centres(k) for k in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @cached_property
    def vertices(self) -> np.ndarray:
        """Interior vertex coordinates, shape ``(cells - 1) + (n,)``."""
        axes = [self.axis_nodes(k) for k in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def face_points(self, k: int) -> np.ndarray:
        """Centres of interior faces normal to axis ``k``."""
        axes = [self.axis_nodes(j) if j == k else self.axis_centres(j) for j in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)

    def to_dict(self) -> dict:
        return {"min": list(self.mins), "max": list(self.maxs), "cells": list(self.cells)}


# ------------------------------------------------------------------ stencils
#
# Shapes: cells N = (N_0, ..., N_{n-1}); vertices V = (N_k - 1)_k;
# interior faces normal to k: F_k = N with N_k replaced by N_k - 1.


def _mid(a: np.ndarray, axis: int) -> np.ndarray:
    """Average of neighbours along ``axis`` (length shrinks by one)."""
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def _mid_t(a: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of ``_mid`` (length grows by one)."""
    shape = list(a.shape)
    shape[axis] += 1
    out = np.zeros(shape, dtype=a.dtype)
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    out[tuple(lo)] += 0.5 * a
    out[tuple(hi)] += 0.5 * a
    return out


def face_difference(phi: np.ndarray, k: int, h: float) -> np.ndarray:
    """``(phi[a + e_k] - phi[a]) / h`` on interior faces normal to ``k``."""
    return np.diff(phi, axis=k) / h


def face_to_vertex(face: np.ndarray, k: int) -> np.ndarray:
    """Average a face field (normal ``k``) onto the interior vertices of that face."""
    out = face
    for j in range(face.ndim):
        if j != k:
            out = _mid(out, j)
    return out


def vertex_to_face(vert: np.ndarray, k: int) -> np.ndarray:
    """Transpose of :func:`face_to_vertex`.

    Each face receives ``2^{1-n}`` times the sum of its existing interior
    vertices.
    """
    out = vert
    for j in range(vert.ndim):
        if j != k:
            out = _mid_t(out, j)
    return out


def vertex_gradient(phi: np.ndarray, h: Sequence[float]) -> np.ndarray:
    """Gradient at interior vertices, shape ``(n,) + V``."""
    return np.stack([face_to_vertex(face_difference(phi, k, h[k]), k) for k in range(phi.ndim)])


def face_divergence(flux: np.ndarray, k: int, h: float) -> np.ndarray:
    """Cell contribution ``-(F_{a+1/2} - F_{a-1/2}) / h`` of interior face fluxes.

    Boundary faces carry zero flux, so padding with zeros is exact.
    """
    pad = [(0, 0)] * flux.ndim
    pad[k] = (1, 1)
    full = np.pad(flux, pad)
    return -np.diff(full, axis=k) / h


def vertex_gradient_adjoint(w: np.ndarray, h: Sequence[float]) -> np.ndarray:
    """Cell field ``G^T w`` such that ``sum(w * vertex_gradient(phi)) = sum(phi * G^T w)``."""
    # sum_faces (dphi / h) F = sum_cells phi * face_divergence(F)
    return sum(face_divergence(vertex_to_face(w[k], k), k, h[k]) for k in range(w.shape[0]))


def vertex_average(phi: np.ndarray) -> np.ndarray:
    """Mean of the ``2^n`` cells around each interior vertex."""
    out = phi
    for j in range(phi.ndim):
        out = _mid(out, j)
    return out


def vertex_average_adjoint(w: np.ndarray) -> np.ndarray:
    out = w
    for j in range(w.ndim):
        out = _mid_t(out, j)
    return out


def face_cell_pair(phi: np.ndarray, k: int):
    """Values of the two cells adjoining each interior face normal to ``k``."""
    lo = [slice(None)] * phi.ndim
    hi = [slice(None)] * phi.ndim
    lo[k] = slice(None, -1)
    hi[k] = slice(1, None)
    return phi[tuple(lo)], phi[tuple(hi)]


def log_mean(a: np.ndarray, b: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    """Logarithmic mean ``(b - a) / (log b - log a)`` with a series near ``a = b``.

    The mean tends to zero as either argument does, so it is exactly zero
    when either value is at or below ``floor``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    empty = np.minimum(a, b) <= floor
    a = np.maximum(a, floor)
    b = np.maximum(b, floor)
    la, lb = np.log(a), np.log(b)
    d = lb - la
    small = np.abs(d) < 1e-3
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = (b - a) / np.where(small, 1.0, d)
    series = np.sqrt(a * b) * (1.0 + d * d / 24.0)
    return np.where(empty, 0.0, np.where(small, series, exact))

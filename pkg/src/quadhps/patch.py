"""Patch geometry, boundary-trace ordering and coarse/fine interpolation.

Every boundary trace on a patch with ``s`` cells per side is stored as a flat
vector of length ``4*s`` in side-major order W, E, S, N.  W and E run in
increasing y, S and N run in increasing x.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

SIDES = ("W", "E", "S", "N")
_SIDE_INDEX = {name: k for k, name in enumerate(SIDES)}


def side_slice(side: str | int, s: int) -> slice:
    k = _SIDE_INDEX[side] if isinstance(side, str) else int(side)
    return slice(k * s, (k + 1) * s)


def flat_index(side: str | int, j: int, s: int) -> int:
    """Flat position of point ``j`` (0-based) on ``side``."""
    k = _SIDE_INDEX[side] if isinstance(side, str) else int(side)
    if not 0 <= j < s:
        raise IndexError(f"point {j} outside side of length {s}")
    return k * s + j


def split_index(idx: int, s: int) -> tuple[str, int]:
    """Inverse of :func:`flat_index`."""
    if not 0 <= idx < 4 * s:
        raise IndexError(f"index {idx} outside boundary of length {4 * s}")
    k, j = divmod(idx, s)
    return SIDES[k], j


@dataclass(frozen=True)
class PatchGrid:
    """Uniform ``s x s`` cell-centred grid on a square patch."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("patch needs at least one cell per side")
        wx, wy = self.x_hi - self.x_lo, self.y_hi - self.y_lo
        if wx <= 0 or abs(wx - wy) > 1e-12 * max(abs(wx), abs(wy)):
            raise ValueError(f"patch must be square, got {wx} x {wy}")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.s

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    def centers_1d(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.arange(self.s) + 0.5
        return self.x_lo + t * self.h, self.y_lo + t * self.h

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as ``(s, s)`` arrays indexed ``[ix, iy]``."""
        xc, yc = self.centers_1d()
        return np.meshgrid(xc, yc, indexing="ij")

    def boundary_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Face midpoints on the patch boundary in canonical W, E, S, N order."""
        xc, yc = self.centers_1d()
        s = self.s
        x = np.concatenate([np.full(s, self.x_lo), np.full(s, self.x_hi), xc, xc])
        y = np.concatenate([yc, yc, np.full(s, self.y_lo), np.full(s, self.y_hi)])
        return x, y

    def sample_boundary(self, func) -> np.ndarray:
        return np.asarray(func(*self.boundary_points()), dtype=float)

    def sample_centers(self, func) -> np.ndarray:
        X, Y = self.cell_centers()
        return np.broadcast_to(np.asarray(func(X, Y), dtype=float), X.shape).copy()


# -- interpolation between resolutions -------------------------------------------


@lru_cache(maxsize=None)
def averaging_matrix(s_fine: int) -> sp.csr_matrix:
    """``L21``: one side of ``s_fine`` points to ``s_fine/2`` pairwise averages."""
    if s_fine % 2:
        raise ValueError(f"cannot restrict an odd side length {s_fine}")
    n = s_fine // 2
    rows = np.repeat(np.arange(n), 2)
    cols = np.arange(s_fine)
    return sp.csr_matrix((np.full(s_fine, 0.5), (rows, cols)), shape=(n, s_fine))


@lru_cache(maxsize=None)
def prolongation_matrix(s_coarse: int) -> sp.csr_matrix:
    """``L12``: piecewise-linear reconstruction of ``2*s_coarse`` fine midpoints.

    A fine point lies a quarter coarse cell from its parent midpoint, so it is
    ``3/4`` parent + ``1/4`` nearest other coarse neighbour.  The two end
    points extrapolate with ``5/4, -1/4``.
    """
    n = s_coarse
    if n < 2:
        raise ValueError("prolongation needs at least two coarse points per side")
    rows, cols, vals = [], [], []
    for j in range(n):
        left, right = 2 * j, 2 * j + 1
        if j > 0:
            rows += [left, left]
            cols += [j, j - 1]
            vals += [0.75, 0.25]
        else:
            rows += [left, left]
            cols += [0, 1]
            vals += [1.25, -0.25]
        if j < n - 1:
            rows += [right, right]
            cols += [j, j + 1]
            vals += [0.75, 0.25]
        else:
            rows += [right, right]
            cols += [n - 1, n - 2]
            vals += [1.25, -0.25]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, n))


@lru_cache(maxsize=None)
def averaging_matrix_block(s_fine: int) -> sp.csr_matrix:
    return sp.block_diag([averaging_matrix(s_fine)] * 4, format="csr")


@lru_cache(maxsize=None)
def prolongation_matrix_block(s_coarse: int) -> sp.csr_matrix:
    return sp.block_diag([prolongation_matrix(s_coarse)] * 4, format="csr")


def _side_count(n: int) -> int:
    if n % 4:
        raise ValueError(f"boundary vector length {n} is not a multiple of 4")
    return n // 4


def restrict_boundary(v: np.ndarray) -> np.ndarray:
    """Average neighbouring pairs on every side: ``4s -> 4(s/2)``."""
    v = np.asarray(v, dtype=float)
    s = _side_count(v.shape[0])
    if s % 2:
        raise ValueError(f"cannot restrict odd side length {s}")
    return v.reshape(4, s // 2, 2, *v.shape[1:]).mean(axis=2).reshape(2 * s, *v.shape[1:])


def prolong_boundary(v: np.ndarray) -> np.ndarray:
    """Linear reconstruction on every side: ``4s -> 4(2s)``."""
    v = np.asarray(v, dtype=float)
    s = _side_count(v.shape[0])
    return prolongation_matrix_block(s) @ v


def coarsen_flux(h: np.ndarray) -> np.ndarray:
    return restrict_boundary(h)


def coarsen_dtn(T: np.ndarray) -> np.ndarray:
    """``L21B @ T @ L12B`` for a side-major DtN matrix."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    if T.ndim != 2 or T.shape[1] != n:
        raise ValueError(f"DtN matrix must be square, got {T.shape}")
    s = _side_count(n)
    if s % 2:
        raise ValueError(f"cannot coarsen odd side length {s}")
    left = restrict_boundary(T)
    return np.ascontiguousarray((prolongation_matrix_block(s // 2).T @ left.T).T)

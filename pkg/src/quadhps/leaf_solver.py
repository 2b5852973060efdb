"""Cell-centred 5-point patch solver and leaf Dirichlet-to-Neumann operators.

Dirichlet data ``g`` lives on face midpoints of the patch boundary.  A ghost
value ``u_out = 2 g - u_in`` eliminates each boundary face, so every
boundary-adjacent cell picks up ``-1/h^2`` on its diagonal and ``-2 g/h^2`` on
its right-hand side per boundary face.

The 1D ghost-eliminated operator ``tridiag(1, -2, 1)/h^2`` with ``-3/h^2`` at
both ends is diagonalised by ``sin((i - 1/2) k pi / s)``, ``k = 1..s``, with
eigenvalues ``-(4/h^2) sin^2(k pi / (2s))``.  Patch solves are two transforms
and a pointwise division.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ResonanceError
from .patch import PatchGrid

LOGGER = logging.getLogger(__name__)

RESONANCE_TOL = 1e-12


def sine_basis(s: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal eigenvectors (columns) and eigenvalues of the unit-``h`` 1D operator."""
    i = np.arange(s)[:, None] + 0.5
    k = np.arange(1, s + 1)[None, :]
    Q = np.sin(i * k * np.pi / s)
    Q /= np.linalg.norm(Q, axis=0)
    if not np.allclose(Q.T @ Q, np.eye(s), atol=1e-12):
        raise RuntimeError(f"sine basis failed orthogonality check at s={s}")
    mu = -4.0 * np.sin(np.arange(1, s + 1) * np.pi / (2 * s)) ** 2
    return Q, mu


def boundary_ring(u: np.ndarray) -> np.ndarray:
    """``G``: cells adjacent to the W, E, S, N faces (leading axes ``(s, s)``)."""
    return np.concatenate([u[0], u[-1], u[:, 0], u[:, -1]], axis=0)


def spread_boundary(g: np.ndarray, s: int) -> np.ndarray:
    """``G^T g``: scatter a side-major trace onto the boundary-adjacent cells."""
    g = np.asarray(g, dtype=float)
    out = np.zeros((s, s) + g.shape[1:])
    out[0] += g[0:s]
    out[-1] += g[s : 2 * s]
    out[:, 0] += g[2 * s : 3 * s]
    out[:, -1] += g[3 * s : 4 * s]
    return out


@dataclass
class LeafDiscretization:
    """Constant-coefficient ``lap(u) + lam u = f`` on one square patch."""

    grid: PatchGrid
    lam: float = 0.0
    solve_count: int = field(default=0, init=False)

    def __post_init__(self):
        if self.lam < 0:
            LOGGER.warning("negative lambda %g is outside the supported range", self.lam)
        s, h = self.grid.s, self.grid.h
        Q, mu = sine_basis(s)
        self._Q = Q
        denom = (mu[:, None] + mu[None, :]) / h**2 + self.lam
        if np.min(np.abs(denom)) < RESONANCE_TOL / h**2:
            raise ResonanceError(
                f"resonant patch: lambda={self.lam} hits a discrete eigenvalue (s={s}, h={h})"
            )
        self._denom = denom

    @property
    def s(self) -> int:
        return self.grid.s

    @property
    def h(self) -> float:
        return self.grid.h

    def _apply_inverse(self, rhs: np.ndarray) -> np.ndarray:
        # rhs: (s, s, ...) -> A^{-1} rhs
        Q = self._Q
        extra = rhs.ndim - 2
        r = np.moveaxis(rhs, (0, 1), (-2, -1)) if extra else rhs
        coef = Q.T @ r @ Q
        coef = coef / self._denom
        u = Q @ coef @ Q.T
        return np.moveaxis(u, (-2, -1), (0, 1)) if extra else u

    def solve(self, g: np.ndarray | None, f: np.ndarray | None) -> np.ndarray:
        """Grid solution for Dirichlet trace ``g`` (``4s``) and RHS ``f`` (``s x s``).

        Extra trailing axes on ``g``/``f`` are treated as independent right-hand
        sides.
        """
        s, h = self.s, self.h
        if g is None and f is None:
            raise ValueError("need boundary data or a right-hand side")
        rhs = 0.0
        if f is not None:
            f = np.asarray(f, dtype=float)
            if f.shape[:2] != (s, s):
                raise ValueError(f"rhs must be {s}x{s}, got {f.shape}")
            rhs = f
        if g is not None:
            g = np.asarray(g, dtype=float)
            if g.shape[0] != 4 * s:
                raise ValueError(f"boundary data must have {4 * s} entries, got {g.shape[0]}")
            rhs = rhs - (2.0 / h**2) * spread_boundary(g, s)
        rhs = np.asarray(rhs, dtype=float)
        self.solve_count += int(np.prod(rhs.shape[2:], dtype=int))
        return self._apply_inverse(rhs)

    def flux(self, g: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Outward normal derivative ``(2/h)(g - G u)`` on every boundary face."""
        return (2.0 / self.h) * (np.asarray(g, dtype=float) - boundary_ring(u))


def solve_leaf(d: LeafDiscretization, g, f) -> np.ndarray:
    return d.solve(g, f)


def build_dtn_leaf(d: LeafDiscretization) -> np.ndarray:
    """Column-by-column DtN: ``T e_j = (2/h)(e_j - G L_h e_j)``; 4s patch solves."""
    n = 4 * d.s
    eye = np.eye(n)
    u = d.solve(eye, None)
    return (2.0 / d.h) * (eye - boundary_ring(u))


def _reflect_x(s: int) -> np.ndarray:
    j = np.arange(s)
    rev = s - 1 - j
    return np.concatenate([s + j, j, 2 * s + rev, 3 * s + rev])


def _transpose_xy(s: int) -> np.ndarray:
    j = np.arange(s)
    return np.concatenate([2 * s + j, 3 * s + j, j, s + j])


def quarter_turn(s: int) -> np.ndarray:
    """Boundary permutation of the map ``(x, y) -> (-y, x)`` about the centre.

    ``perm[i]`` is where boundary point ``i`` lands.
    """
    j = np.arange(s)
    rev = s - 1 - j
    # W(y) -> S(-y), E(y) -> N(-y), S(x) -> E(x), N(x) -> W(x)
    return np.concatenate([2 * s + rev, 3 * s + rev, s + j, j])


def reflection_x(s: int) -> np.ndarray:
    """Boundary permutation of ``x -> -x`` about the patch centre."""
    return _reflect_x(s)


def build_dtn_leaf_fast(d: LeafDiscretization, tol: float = 1e-10) -> np.ndarray:
    """DtN from the ``s`` W-side columns plus the symmetries of the square.

    For a symmetry ``pi`` of the boundary, ``T[pi(i), pi(j)] = T[i, j]``.  E, S
    and N columns are images of W columns under the x-reflection, the diagonal
    transpose and their composition.  The result is checked against ``T = T^T``
    (which relates filled entries to directly computed ones); on failure the
    full build is used instead.
    """
    s, h = d.s, d.h
    n = 4 * s
    gW = np.zeros((n, s))
    gW[np.arange(s), np.arange(s)] = 1.0
    u = d.solve(gW, None)
    colsW = (2.0 / h) * (gW - boundary_ring(u))

    rx = _reflect_x(s)
    tr = _transpose_xy(s)
    T = np.empty((n, n))
    T[:, 0:s] = colsW
    # image of W column j under pi is column pi(j); rows move the same way
    for perm, target in ((rx, slice(s, 2 * s)), (tr, slice(2 * s, 3 * s)), (tr[rx], slice(3 * s, 4 * s))):
        block = np.empty((n, s))
        block[perm] = colsW
        T[:, target] = block
    scale = np.max(np.abs(T))
    if np.max(np.abs(T - T.T)) > tol * scale:
        LOGGER.warning("symmetry fill failed validation at s=%d; using full build", s)
        return build_dtn_leaf(d)
    return T


def build_h_leaf(d: LeafDiscretization, f: np.ndarray) -> np.ndarray:
    """Inhomogeneous flux ``-(2/h) G L_inh f``."""
    u = d.solve(None, f)
    return -(2.0 / d.h) * boundary_ring(u)


class LeafCache:
    """Per-``(s, h, lam)`` leaf discretisations and DtN matrices.

    Populate from one thread, then read freely.
    """

    def __init__(self, fast: bool = True):
        self.fast = fast
        self._disc: dict = {}
        self._dtn: dict = {}
        self._lock = threading.RLock()
        self.dtn_builds = 0

    @staticmethod
    def key(grid: PatchGrid, lam: float) -> tuple:
        # widths of same-level patches differ in the last bits
        return (grid.s, float(f"{grid.h:.12e}"), float(lam))

    def discretization(self, grid: PatchGrid, lam: float) -> LeafDiscretization:
        key = self.key(grid, lam)
        d = self._disc.get(key)
        if d is None:
            with self._lock:
                d = self._disc.get(key)
                if d is None:
                    d = LeafDiscretization(grid, lam)
                    self._disc[key] = d
        return d

    def dtn(self, grid: PatchGrid, lam: float) -> np.ndarray:
        key = self.key(grid, lam)
        T = self._dtn.get(key)
        if T is None:
            with self._lock:
                T = self._dtn.get(key)
                if T is None:
                    d = self.discretization(grid, lam)
                    T = build_dtn_leaf_fast(d) if self.fast else build_dtn_leaf(d)
                    T.setflags(write=False)
                    self._dtn[key] = T
                    self.dtn_builds += 1
        return T

"""Brute-force reference solvers on uniform grids.

These assemble the same ghost-eliminated 5-point system as the patch solver
but factor it directly (sparse LU or dense LU), with no use of the sine basis
or of any merge.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import HpsError, ResonanceError
from .patch import PatchGrid

MAX_UNKNOWNS = 100_000
MAX_DTN_SIDE = 64


def _ghost_laplacian_1d(N: int, h: float) -> sp.csr_matrix:
    main = np.full(N, -2.0)
    main[0] = main[-1] = -3.0
    off = np.ones(N - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def assemble(grid: PatchGrid, lam: float) -> sp.csc_matrix:
    """Global ``N^2 x N^2`` matrix, unknowns ordered ``ix * N + iy``."""
    N, h = grid.s, grid.h
    D = _ghost_laplacian_1d(N, h)
    eye = sp.identity(N, format="csr")
    A = sp.kron(D, eye) + sp.kron(eye, D) + lam * sp.identity(N * N)
    return A.tocsc()


def boundary_rhs(grid: PatchGrid, g: np.ndarray) -> np.ndarray:
    """Contribution ``-(2/h^2) g`` of each boundary face to its adjacent cell."""
    N, h = grid.s, grid.h
    g = np.asarray(g, dtype=float)
    r = np.zeros((N, N) + g.shape[1:])
    c = -2.0 / h**2
    r[0, :] += c * g[0:N]
    r[-1, :] += c * g[N : 2 * N]
    r[:, 0] += c * g[2 * N : 3 * N]
    r[:, -1] += c * g[3 * N : 4 * N]
    return r


def _as_trace(grid: PatchGrid, g) -> np.ndarray:
    if callable(g):
        return grid.sample_boundary(g)
    return np.asarray(g, dtype=float)


def _as_field(grid: PatchGrid, f) -> np.ndarray:
    if f is None:
        return np.zeros((grid.s, grid.s))
    if callable(f):
        return grid.sample_centers(f)
    return np.asarray(f, dtype=float)


class _Factored:
    def __init__(self, grid: PatchGrid, lam: float):
        self.grid = grid
        self.A = assemble(grid, lam)
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise ResonanceError(f"global system is singular: {exc}") from None

    def solve(self, g: np.ndarray, f: np.ndarray) -> np.ndarray:
        N = self.grid.s
        rhs = boundary_rhs(self.grid, g)
        if f.ndim == rhs.ndim:
            rhs = rhs + f
        else:
            rhs = rhs + f[..., None]
        flat = rhs.reshape(N * N, -1)
        u = self.lu.solve(flat)
        return u.reshape(rhs.shape)


def solve_global_uniform(domain, N: int, lam: float, f, g) -> np.ndarray:
    """Direct sparse solve on one uniform ``N x N`` cell-centred grid.

    ``f`` and ``g`` may be callables of ``(x, y)`` or pre-sampled arrays
    (``N x N`` cell values, ``4N`` side-major face values).
    """
    if N * N > MAX_UNKNOWNS:
        raise HpsError(f"oracle size guard: {N}^2 unknowns exceeds {MAX_UNKNOWNS}")
    x_lo, x_hi, y_lo, y_hi = domain
    grid = PatchGrid(x_lo, x_hi, y_lo, y_hi, N)
    fac = _Factored(grid, lam)
    return fac.solve(_as_trace(grid, g), _as_field(grid, f))


def brute_dtn_union(domain, s_total: int, lam: float) -> np.ndarray:
    """DtN matrix of the whole patch from ``4 s_total`` unit Dirichlet solves."""
    if s_total > MAX_DTN_SIDE:
        raise HpsError(f"oracle size guard: side {s_total} exceeds {MAX_DTN_SIDE}")
    x_lo, x_hi, y_lo, y_hi = domain
    grid = PatchGrid(x_lo, x_hi, y_lo, y_hi, s_total)
    fac = _Factored(grid, lam)
    n = 4 * s_total
    T = np.empty((n, n))
    zero = np.zeros((s_total, s_total))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        u = fac.solve(e, zero)
        ring = np.concatenate([u[0], u[-1], u[:, 0], u[:, -1]])
        T[:, j] = (2.0 / grid.h) * (e - ring)
    return T


def dense_leaf_solve(grid: PatchGrid, lam: float, g, f) -> np.ndarray:
    """Dense LU of the assembled ``s^2 x s^2`` patch system."""
    s = grid.s
    A = assemble(grid, lam).toarray()
    rhs = boundary_rhs(grid, _as_trace(grid, g)) + _as_field(grid, f)
    return sla.solve(A, rhs.reshape(-1)).reshape(s, s)


def dense_flux(grid: PatchGrid, lam: float, g, f) -> np.ndarray:
    """Outward face fluxes ``(2/h)(g - u_in)`` of the dense solution."""
    g = _as_trace(grid, g)
    u = dense_leaf_solve(grid, lam, g, f)
    ring = np.concatenate([u[0], u[-1], u[:, 0], u[:, -1]])
    return (2.0 / grid.h) * (g - ring)

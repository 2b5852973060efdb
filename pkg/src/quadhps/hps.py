"""4-to-1 merge, 1-to-4 split and the build / upwards / solve stages.

Children of a node are ``alpha`` (SW), ``beta`` (SE), ``gamma`` (NW) and
``omega`` (NE).  With ``s`` points on every child side the four interfaces
are numbered

* 0: alpha.N = gamma.S   (increasing x)
* 1: beta.N  = omega.S   (increasing x)
* 2: alpha.E = beta.W    (increasing y)
* 3: gamma.E = omega.W   (increasing y)

Merged operators are stored in the parent's own side-major W, E, S, N order,
so no merge has to remember how its children ordered their data.

Sign conventions: all fluxes are outward normal derivatives, so the interface
condition is that the two outward fluxes sum to zero.  With
``v_ext = A g_ext + B g_int + h_ext`` and ``C g_ext + D g_int + dh = 0``::

    S = -D^{-1} C,   T = A + B S,   w = -D^{-1} dh,   h = h_ext + B w

which makes ``v = T g + h`` hold on the parent.
"""
from __future__ import annotations

import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import HpsError, SingularInterfaceError, UnbalancedFamilyError
from .leaf_solver import LeafCache, build_h_leaf
from .patch import coarsen_dtn, prolong_boundary, restrict_boundary
from .quadtree import Quadtree, QuadtreeNode

LOGGER = logging.getLogger(__name__)

ALPHA, BETA, GAMMA, OMEGA = 0, 1, 2, 3


@dataclass
class HpsPayload:
    T: np.ndarray | None = None
    S: np.ndarray | None = None
    w: np.ndarray | None = None
    h: np.ndarray | None = None
    X: np.ndarray | None = None
    B: np.ndarray | None = None
    g: np.ndarray | None = None  # Dirichlet data during the solve stage
    f: np.ndarray | None = None  # leaf right-hand side at cell centres
    u: np.ndarray | None = None  # leaf solution
    child_steps: tuple[int, ...] = ()  # coarsening applied to each child


@dataclass(frozen=True)
class MergeIndexMaps:
    """Where each child's boundary entries go in a 4-to-1 merge.

    For child ``i``: ``ext_local[i]`` are its entries on the parent boundary,
    landing at ``ext_parent[i]`` in parent canonical order;
    ``int_local[i]`` are its interface entries, landing at ``int_iface[i]``
    in the ``4s`` interface vector ``[g0; g1; g2; g3]``.
    ``merged_to_canonical[k]`` maps position ``k`` of the concatenated
    exterior ``[alpha; beta; gamma; omega]`` (each in its own W, E, S, N
    order) to the parent canonical index.
    """

    s: int
    ext_local: tuple[np.ndarray, ...]
    ext_parent: tuple[np.ndarray, ...]
    int_local: tuple[np.ndarray, ...]
    int_iface: tuple[np.ndarray, ...]
    merged_to_canonical: np.ndarray


@lru_cache(maxsize=None)
def merge_index_maps(s: int) -> MergeIndexMaps:
    j = np.arange(s)
    W, E, S, N = (k * s + j for k in range(4))  # child-local sides
    # parent sides have 2s points; lower/left half first
    pW, pE, pS, pN = (2 * k * s + np.arange(2 * s) for k in range(4))
    lo, hi = slice(0, s), slice(s, 2 * s)
    g0, g1, g2, g3 = (k * s + j for k in range(4))

    ext_local = (
        np.concatenate([W, S]),
        np.concatenate([E, S]),
        np.concatenate([W, N]),
        np.concatenate([E, N]),
    )
    ext_parent = (
        np.concatenate([pW[lo], pS[lo]]),
        np.concatenate([pE[lo], pS[hi]]),
        np.concatenate([pW[hi], pN[lo]]),
        np.concatenate([pE[hi], pN[hi]]),
    )
    int_local = (
        np.concatenate([N, E]),
        np.concatenate([N, W]),
        np.concatenate([S, E]),
        np.concatenate([S, W]),
    )
    int_iface = (
        np.concatenate([g0, g2]),
        np.concatenate([g1, g2]),
        np.concatenate([g0, g3]),
        np.concatenate([g1, g3]),
    )
    merged = np.concatenate(ext_parent)
    for arrs in (ext_local, ext_parent, int_local, int_iface):
        for a in arrs:
            a.setflags(write=False)
    return MergeIndexMaps(s, ext_local, ext_parent, int_local, int_iface, merged)


@dataclass
class MergeOperators:
    T: np.ndarray
    S: np.ndarray
    B: np.ndarray
    lu: tuple
    X: np.ndarray | None = None


def _interface_blocks(Ts, s: int):
    maps = merge_index_maps(s)
    n_ext, n_int = 8 * s, 4 * s
    A = np.zeros((n_ext, n_ext))
    B = np.zeros((n_ext, n_int))
    C = np.zeros((n_int, n_ext))
    D = np.zeros((n_int, n_int))
    for i, Ti in enumerate(Ts):
        Ti = np.asarray(Ti)
        if Ti.shape != (4 * s, 4 * s):
            raise HpsError(f"child {i} DtN has shape {Ti.shape}, expected {(4 * s, 4 * s)}")
        el, ep = maps.ext_local[i], maps.ext_parent[i]
        il, iq = maps.int_local[i], maps.int_iface[i]
        A[np.ix_(ep, ep)] = Ti[np.ix_(el, el)]
        B[np.ix_(ep, iq)] = Ti[np.ix_(el, il)]
        C[np.ix_(iq, ep)] += Ti[np.ix_(il, el)]
        D[np.ix_(iq, iq)] += Ti[np.ix_(il, il)]
    return A, B, C, D


def _factor(D: np.ndarray) -> tuple:
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(D, check_finite=False)
        except (sla.LinAlgWarning, np.linalg.LinAlgError) as exc:
            raise SingularInterfaceError(f"interface system singular: {exc}") from None
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-14 * diag.max():
        raise SingularInterfaceError("interface system singular (zero pivot)")
    return lu


def merge_4to1(T_alpha, T_beta, T_gamma, T_omega, multi_rhs: bool = False) -> MergeOperators:
    """Eliminate the four sibling interfaces; all inputs share one side length."""
    n = np.shape(T_alpha)[0]
    if n % 4:
        raise HpsError(f"DtN size {n} is not a multiple of 4")
    s = n // 4
    A, B, C, D = _interface_blocks((T_alpha, T_beta, T_gamma, T_omega), s)
    lu = _factor(D)
    S = sla.lu_solve(lu, -C, check_finite=False)
    T = A + B @ S
    X = -sla.lu_solve(lu, np.eye(4 * s), check_finite=False) if multi_rhs else None
    return MergeOperators(T=T, S=S, B=B, lu=lu, X=X)


def merge_inhomogeneous(ops: MergeOperators, hs) -> tuple[np.ndarray, np.ndarray]:
    """Interface offset ``w`` and merged flux ``h`` from the children's ``h``."""
    s = ops.S.shape[0] // 4
    maps = merge_index_maps(s)
    dh = np.zeros(4 * s)
    h_ext = np.zeros(8 * s)
    for i, hi in enumerate(hs):
        hi = np.asarray(hi, dtype=float)
        if hi.shape != (4 * s,):
            raise HpsError(f"child {i} flux has shape {hi.shape}, expected {(4 * s,)}")
        dh[maps.int_iface[i]] += hi[maps.int_local[i]]
        h_ext[maps.ext_parent[i]] = hi[maps.ext_local[i]]
    if ops.X is not None:
        w = ops.X @ dh
    else:
        w = -sla.lu_solve(ops.lu, dh, check_finite=False)
    return w, h_ext + ops.B @ w


def coarsening_steps(sizes) -> tuple[int, tuple[int, ...]]:
    """Common side length and per-child number of halvings to reach it."""
    s_min = min(sizes)
    steps = []
    for s in sizes:
        ratio, rem = divmod(s, s_min)
        k = ratio.bit_length() - 1
        if rem or ratio != 1 << k:
            raise UnbalancedFamilyError(f"sibling resolutions {sizes} are not powers of two apart")
        steps.append(k)
    return s_min, tuple(steps)


def _coarsen_T(T: np.ndarray, k: int) -> np.ndarray:
    for _ in range(k):
        T = coarsen_dtn(T)
    return T


def _coarsen_h(h: np.ndarray, k: int) -> np.ndarray:
    for _ in range(k):
        h = restrict_boundary(h)
    return h


def adapt_children(Ts, hs=None, max_ratio: int | None = None):
    """Bring four sibling operators to a common resolution.

    Returns ``(s, Ts, hs, steps)`` where ``steps[i]`` is how many times child
    ``i`` was halved.  ``max_ratio`` bounds the allowed resolution ratio
    (``2`` enforces single-step coarsening).
    """
    sizes = [np.shape(T)[0] // 4 for T in Ts]
    s, steps = coarsening_steps(sizes)
    if max_ratio is not None and max(sizes) > max_ratio * s:
        raise UnbalancedFamilyError(f"unbalanced family: sibling resolutions {sizes}")
    Ts = [_coarsen_T(T, k) for T, k in zip(Ts, steps)]
    if hs is not None:
        hs = [_coarsen_h(h, k) for h, k in zip(hs, steps)]
    return s, Ts, hs, steps


def split_1to4(S: np.ndarray, w: np.ndarray | None, g_parent: np.ndarray, steps=(0, 0, 0, 0)):
    """Child Dirichlet traces from the parent trace: ``g_int = S g_ext + w``."""
    s = S.shape[0] // 4
    g_parent = np.asarray(g_parent, dtype=float)
    if g_parent.shape != (8 * s,) or S.shape != (4 * s, 8 * s):
        raise HpsError(f"split dimension mismatch: S {S.shape}, g {g_parent.shape}")
    g_int = S @ g_parent
    if w is not None:
        g_int = g_int + w
    maps = merge_index_maps(s)
    out = []
    for i in range(4):
        gi = np.empty(4 * s)
        gi[maps.ext_local[i]] = g_parent[maps.ext_parent[i]]
        gi[maps.int_local[i]] = g_int[maps.int_iface[i]]
        for _ in range(steps[i]):
            gi = prolong_boundary(gi)
        out.append(gi)
    return out


def _sample(func_or_array, grid, where: str) -> np.ndarray | None:
    if func_or_array is None:
        return None
    if callable(func_or_array):
        return grid.sample_centers(func_or_array) if where == "cells" else grid.sample_boundary(func_or_array)
    return np.asarray(func_or_array, dtype=float)


@dataclass
class HPSSolver:
    """Direct solver for ``lap(u) + lam u = f`` on a balanced quadtree.

    ``cache=True`` reuses leaf DtN matrices and merged operators wherever the
    subtree below a node has the same shape (one factorisation per level on a
    uniform mesh).  ``retain_T`` keeps every node's ``T`` and ``h`` instead of
    releasing the children's after their parent merge.
    """

    tree: Quadtree
    lam: float = 0.0
    cache: bool = True
    retain_T: bool = False
    fast_dtn: bool = True
    stats: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.leaf_cache = LeafCache(fast=self.fast_dtn)
        self.multi_rhs = False
        self._built = False
        self._have_rhs = False
        self._sig_ids: dict = {}
        self._merge_cache: dict = {}
        self._sig: dict[str, int] = {}

    # -- helpers -------------------------------------------------------------

    def _intern(self, key) -> int:
        return self._sig_ids.setdefault(key, len(self._sig_ids))

    def _leaf_disc(self, node: QuadtreeNode):
        return self.leaf_cache.discretization(node.grid, self.lam)

    def _leaf_dtn(self, node: QuadtreeNode) -> np.ndarray:
        if self.cache:
            return self.leaf_cache.dtn(node.grid, self.lam)
        fresh = LeafCache(fast=self.fast_dtn)
        self.stats["uncached_leaf_dtn"] += 1
        return fresh.dtn(node.grid, self.lam)

    def _leaf_rhs(self, node: QuadtreeNode, f) -> None:
        p = node.payload
        p.f = _sample(f, node.grid, "cells") if f is not None else None
        if p.f is None or not np.any(p.f):
            p.h = np.zeros(4 * node.grid.s)
        else:
            p.h = build_h_leaf(self._leaf_disc(node), p.f)

    def _family_rhs(self, node: QuadtreeNode, kids, ops: MergeOperators) -> None:
        steps = node.payload.child_steps
        hs = [_coarsen_h(c.payload.h, k) for c, k in zip(kids, steps)]
        node.payload.w, node.payload.h = merge_inhomogeneous(ops, hs)
        if not self.retain_T:
            for c in kids:
                c.payload.h = None

    @property
    def leaf_dtn_builds(self) -> int:
        return self.leaf_cache.dtn_builds + self.stats["uncached_leaf_dtn"]

    # -- stages --------------------------------------------------------------

    def build_stage(self, f=None, multi_rhs: bool = False) -> HPSSolver:
        """Merge operators from the leaves to the root.

        Single-pass mode (default) also consumes the right-hand side ``f``
        (callable of ``(x, y)``; ``None`` means zero).  ``multi_rhs`` only
        factorises and keeps ``X`` and ``B`` for later :meth:`upwards_stage`
        calls.
        """
        self.multi_rhs = multi_rhs
        self._merge_cache.clear()
        self._sig.clear()

        def leaf(node: QuadtreeNode) -> None:
            node.payload = HpsPayload(T=self._leaf_dtn(node))
            node.coarsen_steps = 0
            self._sig[node.path] = self._intern(("L",) + LeafCache.key(node.grid, self.lam))
            if not multi_rhs:
                self._leaf_rhs(node, f)

        def family(node: QuadtreeNode, kids: list[QuadtreeNode]) -> None:
            sizes = [c.grid.s for c in kids]
            s, steps = coarsening_steps(sizes)
            if node.grid.s != 2 * s:
                raise HpsError(f"node {node.path} grid {node.grid.s} != 2 x {s}")
            key = ("M",) + tuple(zip((self._sig[c.path] for c in kids), steps))
            sig = self._intern(key)
            ops = self._merge_cache.get(sig) if self.cache else None
            if ops is None:
                Ts = [_coarsen_T(c.payload.T, k) for c, k in zip(kids, steps)]
                ops = merge_4to1(*Ts, multi_rhs=multi_rhs)
                self.stats["merges"] += 1
                if self.cache:
                    self._merge_cache[sig] = ops
            else:
                self.stats["merge_cache_hits"] += 1
            self._sig[node.path] = sig
            for c, k in zip(kids, steps):
                c.coarsen_steps = k
            node.payload = HpsPayload(T=ops.T, S=ops.S, child_steps=steps)
            if multi_rhs:
                node.payload.X, node.payload.B = ops.X, ops.B
            else:
                self._family_rhs(node, kids, ops)
            if not self.retain_T:
                for c in kids:
                    c.payload.T = None

        self.tree.merge_traversal(leaf, family)
        if not multi_rhs:
            self._merge_cache.clear()
        self._built = True
        self._have_rhs = not multi_rhs
        return self

    def upwards_stage(self, f) -> HPSSolver:
        """Propagate a new right-hand side using the stored ``X`` and ``B``."""
        if not (self._built and self.multi_rhs):
            raise HpsError("upwards_stage needs a build_stage(multi_rhs=True) first")

        def leaf(node: QuadtreeNode) -> None:
            self._leaf_rhs(node, f)

        def family(node: QuadtreeNode, kids: list[QuadtreeNode]) -> None:
            p = node.payload
            ops = MergeOperators(T=p.T, S=p.S, B=p.B, lu=None, X=p.X)
            self._family_rhs(node, kids, ops)

        self.tree.merge_traversal(leaf, family)
        self._have_rhs = True
        return self

    def solve_stage(self, g) -> HPSSolver:
        """Push Dirichlet data ``g`` (callable on the boundary, or root trace) down."""
        if not self._built:
            raise HpsError("solve_stage needs build_stage first")
        if not self._have_rhs:
            raise HpsError("multi-RHS mode: run upwards_stage before solve_stage")
        root = self.tree.root
        root.payload.g = _sample(g, root.grid, "boundary")
        if root.payload.g.shape != (4 * root.grid.s,):
            raise HpsError(f"root trace must have {4 * root.grid.s} entries")

        def family(node: QuadtreeNode, kids: list[QuadtreeNode]) -> None:
            p = node.payload
            for c, gc in zip(kids, split_1to4(p.S, p.w, p.g, p.child_steps)):
                c.payload.g = gc

        def leaf(node: QuadtreeNode) -> None:
            p = node.payload
            p.u = self._leaf_disc(node).solve(p.g, p.f)

        self.tree.split_traversal(family, leaf)
        return self

    def solve(self, f, g) -> HPSSolver:
        """Single-pass build followed by the solve stage."""
        return self.build_stage(f).solve_stage(g)


def solve_problem(tree: Quadtree, problem, **kwargs) -> HPSSolver:
    return HPSSolver(tree, problem.lam, **kwargs).solve(problem.f, problem.u_exact)


def leaf_fields(tree: Quadtree) -> dict[str, np.ndarray]:
    return {leaf.path: leaf.payload.u for leaf in tree.leaves()}


def uniform_field(tree: Quadtree) -> np.ndarray:
    """Stitch the leaf fields of a uniform tree into one global ``u[ix, iy]`` array."""
    from .quadtree import key_to_coords

    leaves = list(tree.leaves())
    levels = {leaf.level for leaf in leaves}
    if len(levels) != 1:
        raise HpsError("uniform_field needs a uniformly refined tree")
    n = 2 ** levels.pop()
    s = tree.M
    out = np.empty((n * s, n * s))
    for leaf in leaves:
        _, ix, iy = key_to_coords(leaf.path)
        out[ix * s : (ix + 1) * s, iy * s : (iy + 1) * s] = leaf.payload.u
    return out


def _uncoarsened_to_ancestor(tree: Quadtree, leaf: QuadtreeNode, ancestor: str) -> bool:
    key = leaf.path
    while key != ancestor:
        if tree.nodes[key].coarsen_steps:
            return False
        key = key[:-1]
    return True


def interface_flux_mismatch(tree: Quadtree, lam: float = 0.0) -> tuple[float, float]:
    """Largest sum of outward fluxes over same-level leaf edges, and the flux scale.

    Both fluxes use each leaf's own Dirichlet trace: ``(2/h)(g - u_in)``.  Only
    edges eliminated at full resolution are compared; where either side was
    coarsened before its merge, continuity holds for averages only.
    """
    from .patch import side_slice
    from .leaf_solver import boundary_ring

    worst = 0.0
    scale = 0.0
    opposite = {"E": "W", "N": "S"}
    for a, b, side in tree.leaf_neighbour_pairs():
        if a.level != b.level or side not in opposite:
            continue
        common = a.path
        while not b.path.startswith(common):
            common = common[:-1]
        if not (_uncoarsened_to_ancestor(tree, a, common) and _uncoarsened_to_ancestor(tree, b, common)):
            continue
        s, h = a.grid.s, a.grid.h
        va = (2.0 / h) * (a.payload.g - boundary_ring(a.payload.u))
        vb = (2.0 / h) * (b.payload.g - boundary_ring(b.payload.u))
        fa = va[side_slice(side, s)]
        fb = vb[side_slice(opposite[side], s)]
        worst = max(worst, float(np.max(np.abs(fa + fb))))
        scale = max(scale, float(np.max(np.abs(fa))), float(np.max(np.abs(fb))))
    return worst, scale

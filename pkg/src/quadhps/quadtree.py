"""Path-indexed quadtree holding every node (leaves and interior).

A node's key is a string: ``"0"`` for the root, then one digit per level giving
the child index.  Children are numbered in z-order::

    2 (NW) | 3 (NE)
    -------+-------
    0 (SW) | 1 (SE)

so bit 0 of a digit is the x half and bit 1 the y half.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .errors import TreeError
from .patch import PatchGrid

LOGGER = logging.getLogger(__name__)

ROOT = "0"
SW, SE, NW, NE = 0, 1, 2, 3

_SIDE_STEPS = {"W": (-1, 0), "E": (1, 0), "S": (0, -1), "N": (0, 1)}
# children of a neighbour that touch the shared face, keyed by our side
_FACING = {"W": (SE, NE), "E": (SW, NW), "S": (NW, NE), "N": (SW, SE)}


def parent_key(key: str) -> str:
    if len(key) <= 1:
        raise TreeError("the root has no parent")
    return key[:-1]


def child_keys(key: str) -> list[str]:
    return [key + str(i) for i in range(4)]


def key_to_coords(key: str) -> tuple[int, int, int]:
    """Return ``(level, ix, iy)`` with ``0 <= ix, iy < 2**level``."""
    if not key or key[0] != ROOT:
        raise TreeError(f"invalid path key {key!r}")
    ix = iy = 0
    for ch in key[1:]:
        d = ord(ch) - 48
        if not 0 <= d <= 3:
            raise TreeError(f"invalid path key {key!r}")
        ix = 2 * ix + (d & 1)
        iy = 2 * iy + (d >> 1)
    return len(key) - 1, ix, iy


def coords_to_key(level: int, ix: int, iy: int) -> str:
    digits = []
    for _ in range(level):
        digits.append(str((ix & 1) | ((iy & 1) << 1)))
        ix >>= 1
        iy >>= 1
    return ROOT + "".join(reversed(digits))


@dataclass(eq=False)
class QuadtreeNode:
    path: str
    bounds: tuple[float, float, float, float]  # x_lo, y_lo, x_hi, y_hi
    is_leaf: bool = True
    grid: PatchGrid | None = None
    payload: Any = None
    coarsen_steps: int = 0

    @property
    def level(self) -> int:
        return len(self.path) - 1

    @property
    def child_index(self) -> int | None:
        return None if self.level == 0 else int(self.path[-1])

    @property
    def coarsened_for_merge(self) -> bool:
        return self.coarsen_steps > 0


@dataclass
class Quadtree:
    """All nodes of an adaptive quadtree over a square domain.

    ``M`` is the number of cells per side on every leaf patch.  Interior nodes
    get a virtual :class:`PatchGrid` at the resolution their merged operator
    lives on (twice the coarsest child resolution).
    """

    domain: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi
    M: int
    nodes: dict[str, QuadtreeNode] = field(default_factory=dict)

    def __post_init__(self):
        x_lo, x_hi, y_lo, y_hi = self.domain
        if not x_hi > x_lo or abs((x_hi - x_lo) - (y_hi - y_lo)) > 1e-12 * (x_hi - x_lo):
            raise TreeError(f"domain must be a non-empty square, got {self.domain}")
        if self.M < 2 or self.M % 2:
            raise TreeError(f"patch size M must be even and >= 2, got {self.M}")
        if not self.nodes:
            self.nodes[ROOT] = QuadtreeNode(ROOT, (x_lo, y_lo, x_hi, y_hi))
            self.assign_grids()

    # -- structure ---------------------------------------------------------

    @property
    def root(self) -> QuadtreeNode:
        return self.nodes[ROOT]

    def bounds_of(self, key: str) -> tuple[float, float, float, float]:
        level, ix, iy = key_to_coords(key)
        x_lo, x_hi, y_lo, y_hi = self.domain
        w = (x_hi - x_lo) / 2**level
        return (x_lo + ix * w, y_lo + iy * w, x_lo + (ix + 1) * w, y_lo + (iy + 1) * w)

    def children(self, node: QuadtreeNode) -> list[QuadtreeNode]:
        try:
            return [self.nodes[k] for k in child_keys(node.path)]
        except KeyError as exc:
            raise TreeError(f"node {node.path} is missing child {exc.args[0]}") from None

    def refine(self, key: str) -> None:
        node = self.nodes[key]
        if not node.is_leaf:
            return
        node.is_leaf = False
        for k in child_keys(key):
            self.nodes[k] = QuadtreeNode(k, self.bounds_of(k))

    def leaves(self) -> Iterator[QuadtreeNode]:
        for key in sorted(self.nodes):
            node = self.nodes[key]
            if node.is_leaf:
                yield node

    @property
    def max_level(self) -> int:
        return max(n.level for n in self.nodes.values())

    def num_dofs(self) -> int:
        return sum(1 for _ in self.leaves()) * self.M**2

    def leaf_width(self, level: int) -> float:
        return (self.domain[1] - self.domain[0]) / 2**level

    def cell_width(self, level: int, s: int) -> float:
        return self.leaf_width(level) / s

    def assign_grids(self) -> None:
        """Attach patch grids: ``M`` on leaves, merged resolution on interior nodes."""

        def visit(node: QuadtreeNode) -> int:
            if node.is_leaf:
                s = self.M
            else:
                s = 2 * min(visit(c) for c in self.children(node))
            x_lo, y_lo, x_hi, y_hi = node.bounds
            node.grid = PatchGrid(x_lo, x_hi, y_lo, y_hi, s)
            return s

        visit(self.root)

    # -- neighbour queries (used by balancing and invariant checks) --------

    def leaf_neighbour_pairs(self) -> Iterator[tuple[QuadtreeNode, QuadtreeNode, str]]:
        """Yield ``(a, b, side)`` once for every pair of edge-adjacent leaves.

        ``b`` lies across ``side`` of ``a``.  Equal-level pairs are reported
        from the W/S member, mixed-level pairs from the coarser member.
        """
        for a in self.leaves():
            level, ix, iy = key_to_coords(a.path)
            n = 2**level
            for side, (dx, dy) in _SIDE_STEPS.items():
                jx, jy = ix + dx, iy + dy
                if not (0 <= jx < n and 0 <= jy < n):
                    continue
                key = coords_to_key(level, jx, jy)
                if key not in self.nodes:
                    continue  # coarser neighbour; reported from its side
                nb = self.nodes[key]
                if nb.is_leaf:
                    if side in ("E", "N"):
                        yield (a, nb, side)
                    continue
                facing = _FACING[side]
                stack = [nb]
                while stack:
                    cur = stack.pop()
                    if cur.is_leaf:
                        yield (a, cur, side)
                    else:
                        stack.extend(self.nodes[cur.path + str(i)] for i in facing)

    def balance_violations(self) -> list[tuple[str, str]]:
        return [
            (a.path, b.path)
            for a, b, _ in self.leaf_neighbour_pairs()
            if abs(a.level - b.level) > 1
        ]

    # -- traversal -----------------------------------------------------------

    def merge_traversal(
        self,
        leaf_callback: Callable[[QuadtreeNode], None],
        family_callback: Callable[[QuadtreeNode, list[QuadtreeNode]], None],
    ) -> None:
        """Post-order: every family callback runs after its four subtrees."""

        def visit(node: QuadtreeNode) -> None:
            if node.is_leaf:
                leaf_callback(node)
                return
            kids = self.children(node)
            for c in kids:
                visit(c)
            family_callback(node, kids)

        visit(self.root)

    def split_traversal(
        self,
        family_callback: Callable[[QuadtreeNode, list[QuadtreeNode]], None],
        leaf_callback: Callable[[QuadtreeNode], None],
    ) -> None:
        """Pre-order family callbacks, then every leaf callback in a second pass."""
        leaves: list[QuadtreeNode] = []

        def visit(node: QuadtreeNode) -> None:
            if node.is_leaf:
                leaves.append(node)
                return
            kids = self.children(node)
            family_callback(node, kids)
            for c in kids:
                visit(c)

        visit(self.root)
        for leaf in leaves:
            leaf_callback(leaf)

    # -- io ----------------------------------------------------------------

    def dump(self) -> str:
        lines = []
        for key in sorted(self.nodes):
            n = self.nodes[key]
            x_lo, y_lo, x_hi, y_hi = n.bounds
            lines.append(
                f"{key} {n.level} {x_lo:.17g} {y_lo:.17g} {x_hi:.17g} {y_hi:.17g} {int(n.is_leaf)}"
            )
        return "\n".join(lines) + "\n"


def balance_2to1(tree: Quadtree) -> Quadtree:
    """Refine leaves until edge-adjacent leaves differ by at most one level."""
    changed = True
    rounds = 0
    while changed:
        changed = False
        rounds += 1
        for a, b in tree.balance_violations():
            coarse = a if tree.nodes[a].level < tree.nodes[b].level else b
            if tree.nodes[coarse].is_leaf:
                tree.refine(coarse)
                changed = True
    LOGGER.debug("2:1 balance converged after %d sweeps", rounds)
    tree.assign_grids()
    return tree


def build_from_criterion(
    domain: tuple[float, float, float, float],
    M: int,
    max_level: int,
    refine: Callable[[PatchGrid], bool] | None = None,
) -> Quadtree:
    """Refine from the root while ``refine(grid)`` holds, up to ``max_level``.

    ``refine=None`` refines uniformly.  The result is 2:1 balanced.
    """
    if max_level < 0:
        raise TreeError(f"max_level must be >= 0, got {max_level}")
    tree = Quadtree(tuple(float(v) for v in domain), M)
    frontier = [ROOT]
    while frontier:
        nxt = []
        for key in frontier:
            node = tree.nodes[key]
            if node.level >= max_level:
                continue
            x_lo, y_lo, x_hi, y_hi = node.bounds
            if refine is None or refine(PatchGrid(x_lo, x_hi, y_lo, y_hi, M)):
                tree.refine(key)
                nxt.extend(child_keys(key))
        frontier = nxt
    return balance_2to1(tree)


def uniform_tree(domain, M: int, level: int) -> Quadtree:
    return build_from_criterion(domain, M, level, None)

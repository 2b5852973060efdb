"""Invariant checks run by ``quadhps verify``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .hps import HPSSolver, interface_flux_mismatch, uniform_field
from .leaf_solver import (
    LeafDiscretization,
    build_dtn_leaf,
    build_dtn_leaf_fast,
    quarter_turn,
    reflection_x,
)
from .oracle import solve_global_uniform
from .patch import PatchGrid, prolong_boundary, restrict_boundary
from .problems import get_problem
from .quadtree import build_from_criterion, uniform_tree


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}, {self.seconds:.2f}s)"


def _adaptive_tree(M: int = 8, max_level: int = 4):
    # a corner-weighted criterion gives a tree with three levels of leaves
    def refine(grid: PatchGrid) -> bool:
        return grid.x_lo < 0.3 and grid.y_lo < 0.3

    return build_from_criterion((0.0, 1.0, 0.0, 1.0), M, max_level, refine)


def check_row_sums() -> float:
    tree = _adaptive_tree()
    HPSSolver(tree, 0.0, retain_T=True).build_stage(None)
    worst = 0.0
    for node in tree.nodes.values():
        T = node.payload.T
        worst = max(worst, float(np.max(np.abs(T.sum(axis=1))) / np.max(np.abs(T))))
    return worst


def check_equivariance(sizes=(4, 8, 16), lams=(0.0, 0.01)) -> float:
    worst = 0.0
    for s in sizes:
        for lam in lams:
            T = build_dtn_leaf(LeafDiscretization(PatchGrid(0.0, 1.0, 0.0, 1.0, s), lam))
            scale = np.max(np.abs(T))
            for perm in (quarter_turn(s), reflection_x(s)):
                P = np.zeros_like(T)
                P[perm, np.arange(4 * s)] = 1.0
                worst = max(worst, float(np.max(np.abs(P @ T @ P.T - T)) / scale))
    return worst


def check_affine_pipeline() -> float:
    tree = _adaptive_tree()
    solver = HPSSolver(tree, 0.0)
    solver.solve(None, lambda x, y: 1.0 + x + 2.0 * y)
    worst = 0.0
    for leaf in tree.leaves():
        X, Y = leaf.grid.cell_centers()
        worst = max(worst, float(np.max(np.abs(leaf.payload.u - (1.0 + X + 2.0 * Y)))))
    return worst


def check_interpolation(rng: np.random.Generator, sizes=(2, 4, 8, 16)) -> float:
    worst = 0.0
    for s in sizes:
        coarse = PatchGrid(0.0, 1.0, 0.0, 1.0, s)
        fine = PatchGrid(0.0, 1.0, 0.0, 1.0, 2 * s)
        a, b, c = rng.normal(size=3)
        func = lambda x, y: a + b * x + c * y  # noqa: E731
        gc, gf = coarse.sample_boundary(func), fine.sample_boundary(func)
        worst = max(worst, float(np.max(np.abs(prolong_boundary(gc) - gf))))
        worst = max(worst, float(np.max(np.abs(restrict_boundary(gf) - gc))))
    return worst


def check_fast_dtn(sizes=(4, 8, 16, 32), lams=(0.0, 0.01, 3.0)) -> float:
    worst = 0.0
    for s in sizes:
        for lam in lams:
            d = LeafDiscretization(PatchGrid(-0.5, 0.5, -0.5, 0.5, s), lam)
            full = build_dtn_leaf(d)
            worst = max(worst, float(np.max(np.abs(build_dtn_leaf_fast(d) - full)) / np.max(np.abs(full))))
    return worst


def check_flux_continuity() -> float:
    problem = get_problem("helmholtz")
    tree = build_from_criterion(problem.domain, 8, 4, problem.refine_predicate())
    HPSSolver(tree, problem.lam).solve(problem.f, problem.u_exact)
    worst, scale = interface_flux_mismatch(tree)
    return worst / max(scale, 1.0)


def check_oracle_equivalence(M: int = 8, level: int = 2) -> float:
    """Relative max difference between the tree solve and one global sparse solve."""
    worst = 0.0
    for name in ("poisson1", "polar_star", "helmholtz"):
        problem = get_problem(name)
        tree = uniform_tree(problem.domain, M, level)
        HPSSolver(tree, problem.lam).solve(problem.f, problem.u_exact)
        ref = solve_global_uniform(problem.domain, M * 2**level, problem.lam, problem.f, problem.u_exact)
        worst = max(worst, float(np.max(np.abs(uniform_field(tree) - ref)) / np.max(np.abs(ref))))
    return worst


def run_verify(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    checks = [
        ("tree solve equals global sparse solve (M=8, L=2)", check_oracle_equivalence, 1e-10),
        ("zero row sums of every T at lambda = 0", check_row_sums, 1e-10),
        ("rotation and reflection equivariance of leaf T", check_equivariance, 1e-12),
        ("affine data reproduced through the adaptive pipeline", check_affine_pipeline, 1e-10),
        ("affine exactness of boundary interpolation", lambda: check_interpolation(rng), 1e-12),
        ("symmetry-filled leaf T matches full build", check_fast_dtn, 1e-10),
        ("same-level interface flux continuity", check_flux_continuity, 1e-9),
    ]
    results = []
    for name, fn, tol in checks:
        t0 = time.perf_counter()
        value = fn()
        results.append(CheckResult(name, value, tol, time.perf_counter() - t0))
    return results

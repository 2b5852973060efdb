"""Manufactured benchmark problems for ``lap(u) + lam*u = f`` with Dirichlet data.

Each problem carries its exact solution, which doubles as the boundary data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .patch import PatchGrid

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi
    lam: float
    f: Field
    u_exact: Field
    threshold: float
    params: dict = field(default_factory=dict)

    def g(self, x, y):
        return self.u_exact(x, y)

    def refine_predicate(self, threshold: float | None = None) -> Callable[[PatchGrid], bool]:
        """Refine a candidate patch when ``|f|`` exceeds the threshold at any cell centre."""
        theta = self.threshold if threshold is None else threshold

        def refine(grid: PatchGrid) -> bool:
            return bool(np.any(np.abs(grid.sample_centers(self.f)) > theta))

        return refine


def poisson1() -> ProblemSpec:
    def u(x, y):
        return np.sin(x) + np.sin(y)

    def f(x, y):
        return -(np.sin(x) + np.sin(y))

    return ProblemSpec("poisson1", (-10.0, 10.0, -10.0, 10.0), 0.0, f, u, 1.2)


POLAR_STARS = (
    (-0.5, -0.5, 0.2, 0.3, 3),
    (0.5, -0.5, 0.3, 0.4, 4),
    (0.0, 0.5, 0.4, 0.5, 5),
)


def _polar(x, y, x0, y0):
    dx = np.asarray(x, dtype=float) - x0
    dy = np.asarray(y, dtype=float) - y0
    r = np.hypot(dx, dy)
    return np.maximum(r, np.finfo(float).tiny ** 0.25), np.arctan2(dy, dx)


def polar_star(
    params=POLAR_STARS,
    epsilon: float = 0.05,
    domain=(-1.0, 1.0, -1.0, 1.0),
    threshold: float = 10.0,
) -> ProblemSpec:
    """Sum of smoothed star-shaped indicators ``(1 - tanh(phi)) / 2``.

    ``phi = (r - r0 (r1 cos(n theta) + 1)) / epsilon`` in polar coordinates
    about each star centre.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    stars = tuple(tuple(p) for p in params)
    eps = float(epsilon)

    def u(x, y):
        total = 0.0
        for x0, y0, r0, r1, n in stars:
            r, th = _polar(x, y, x0, y0)
            phi = (r - r0 * (r1 * np.cos(n * th) + 1.0)) / eps
            total = total + 0.5 * (1.0 - np.tanh(phi))
        return total

    def f(x, y):
        # lap(u_i) = -(1/2) lap(tanh phi)
        #          = t sech^2 |grad phi|^2 - (1/2) sech^2 lap(phi)
        # with |grad phi|^2 = (1 + p^2/r^2)/eps^2, lap(phi) = 1/(r eps) + n^2 r0 r1 cos/(eps r^2)
        total = 0.0
        for x0, y0, r0, r1, n in stars:
            r, th = _polar(x, y, x0, y0)
            c, s = np.cos(n * th), np.sin(n * th)
            phi = (r - r0 * (r1 * c + 1.0)) / eps
            t = np.tanh(phi)
            sech2 = 1.0 - t * t
            p = n * r0 * r1 * s
            s1 = p * p * t * sech2 / eps**2
            s2 = -(n * n) * r0 * r1 * c * sech2 / (2.0 * eps)
            s3 = t * sech2 / eps**2
            s4 = sech2 / (2.0 * r * eps)
            total = total + (s1 + s2) / r**2 + s3 - s4
        return total

    return ProblemSpec(
        "polar_star",
        tuple(float(v) for v in domain),
        0.0,
        f,
        u,
        float(threshold),
        params={"epsilon": eps, "stars": stars},
    )


HELMHOLTZ_CENTERS = ((0.1, 0.1), (0.0, 0.0), (-0.15, 0.1))


def helmholtz(lam: float = 0.01, alpha: float = 50.0) -> ProblemSpec:
    centers = HELMHOLTZ_CENTERS

    def u(x, y):
        return sum(np.exp(-alpha * ((x - cx) ** 2 + (y - cy) ** 2)) for cx, cy in centers)

    def f(x, y):
        total = 0.0
        for cx, cy in centers:
            r2 = (x - cx) ** 2 + (y - cy) ** 2
            total = total + np.exp(-alpha * r2) * (4 * alpha**2 * r2 - 4 * alpha + lam)
        return total

    return ProblemSpec(
        "helmholtz",
        (-0.5, 0.5, -0.5, 0.5),
        float(lam),
        f,
        u,
        60.0,
        params={"alpha": alpha},
    )


PROBLEMS = {"poisson1": poisson1, "polar_star": polar_star, "helmholtz": helmholtz}


def get_problem(name: str, **overrides) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**overrides)


def fd_residual(problem: ProblemSpec, x, y, delta: float = 1e-4) -> np.ndarray:
    """Centred finite-difference ``lap(u) + lam*u - f`` at the given points."""
    u = problem.u_exact
    lap = (
        u(x + delta, y) + u(x - delta, y) + u(x, y + delta) + u(x, y - delta) - 4 * u(x, y)
    ) / delta**2
    return lap + problem.lam * u(x, y) - problem.f(x, y)


def fd_residual_tolerance(problem: ProblemSpec, x, y, delta: float = 1e-4) -> np.ndarray:
    """Allowed size of :func:`fd_residual`.

    The truncation error is ``delta^2/12 (u_xxxx + u_yyyy)``; the fourth
    derivatives are estimated locally with a coarser five-point stencil.  A
    round-off allowance covers the ``1/delta^2`` cancellation.
    """
    u = problem.u_exact
    d = 10 * delta
    w = np.array([1.0, -4.0, 6.0, -4.0, 1.0])
    k = np.arange(-2, 3)
    uxxxx = sum(c * u(x + j * d, y) for c, j in zip(w, k)) / d**4
    uyyyy = sum(c * u(x, y + j * d) for c, j in zip(w, k)) / d**4
    scale = np.abs(uxxxx) + np.abs(uyyyy)
    roundoff = 64 * np.finfo(float).eps * (1.0 + np.abs(u(x, y))) / delta**2
    return 10 * delta**2 * scale + roundoff


def error_norms(tree, u_exact: Field) -> tuple[float, float]:
    """Max and area-weighted mean absolute error over every leaf cell."""
    linf = 0.0
    l1 = 0.0
    x_lo, x_hi, y_lo, y_hi = tree.domain
    area = (x_hi - x_lo) * (y_hi - y_lo)
    for leaf in tree.leaves():
        err = np.abs(leaf.payload.u - leaf.grid.sample_centers(u_exact))
        linf = max(linf, float(err.max()))
        l1 += float(err.sum()) * leaf.grid.h**2
    return linf, l1 / area


def convergence_order(e_coarse: float, e_fine: float) -> float:
    if e_coarse <= 0 or e_fine <= 0:
        return float("nan")
    return float(np.log2(e_coarse / e_fine))

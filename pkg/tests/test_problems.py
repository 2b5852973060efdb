import numpy as np
import pytest

from quadhps.patch import PatchGrid
from quadhps.problems import (
    PROBLEMS,
    convergence_order,
    error_norms,
    fd_residual,
    fd_residual_tolerance,
    get_problem,
    helmholtz,
    poisson1,
    polar_star,
)
from quadhps.hps import HPSSolver
from quadhps.quadtree import uniform_tree


def random_points(problem, n, seed=0, margin=0.02):
    rng = np.random.default_rng(seed)
    x_lo, x_hi, y_lo, y_hi = problem.domain
    w = x_hi - x_lo
    x = rng.uniform(x_lo + margin * w, x_hi - margin * w, n)
    y = rng.uniform(y_lo + margin * w, y_hi - margin * w, n)
    return x, y


def test_poisson1_values():
    p = poisson1()
    assert p.u_exact(0.0, 0.0) == 0.0
    assert p.f(np.pi / 2, np.pi / 2) == pytest.approx(-2.0)
    assert p.domain == (-10.0, 10.0, -10.0, 10.0) and p.lam == 0.0 and p.threshold == 1.2


def test_boundary_data_is_exact_solution():
    p = helmholtz()
    assert p.g(0.3, -0.2) == p.u_exact(0.3, -0.2)


@pytest.mark.parametrize("name, n", [("poisson1", 100), ("polar_star", 1000), ("helmholtz", 1000)])
def test_fd_residual_oracle(name, n):
    p = get_problem(name)
    x, y = random_points(p, n, seed=sum(map(ord, name)))
    res = np.abs(fd_residual(p, x, y))
    tol = fd_residual_tolerance(p, x, y)
    assert np.all(res <= tol)


def test_fd_oracle_catches_sign_error():
    p = polar_star()
    wrong = type(p)(p.name, p.domain, p.lam, lambda x, y: -p.f(x, y), p.u_exact, p.threshold)
    x, y = random_points(p, 200)
    assert np.any(np.abs(fd_residual(wrong, x, y)) > fd_residual_tolerance(wrong, x, y))


def test_polar_star_saturates_far_away():
    p = polar_star(domain=(-6, 6, -6, 6))
    assert abs(p.f(5.0, 5.0)) < 1e-10
    assert abs(p.u_exact(5.0, 5.0)) < 1e-10


def test_polar_star_centre_is_finite():
    p = polar_star()
    assert np.isfinite(p.u_exact(-0.5, -0.5)) and np.isfinite(p.f(-0.5, -0.5))


def test_polar_star_parameters():
    p = polar_star()
    assert p.params["stars"][1] == (0.5, -0.5, 0.3, 0.4, 4)
    assert p.domain == (-1.0, 1.0, -1.0, 1.0) and p.threshold == 10.0 and p.params["epsilon"] == 0.05
    with pytest.raises(ValueError):
        polar_star(epsilon=0.0)


def test_helmholtz_centre_value():
    alpha, lam = 50.0, 0.01
    p = helmholtz(lam, alpha)
    # isolate the x2 = (0, 0) term by subtracting the other two
    others = sum(
        np.exp(-alpha * ((0 - cx) ** 2 + (0 - cy) ** 2)) * (4 * alpha**2 * ((0 - cx) ** 2 + (0 - cy) ** 2) - 4 * alpha + lam)
        for cx, cy in [(0.1, 0.1), (-0.15, 0.1)]
    )
    assert p.f(0.0, 0.0) - others == pytest.approx(-199.99)
    assert p.domain == (-0.5, 0.5, -0.5, 0.5) and p.threshold == 60.0


def test_unknown_problem():
    with pytest.raises(ValueError):
        get_problem("nope")
    assert set(PROBLEMS) == {"poisson1", "polar_star", "helmholtz"}


@pytest.mark.parametrize("name", ["poisson1", "polar_star", "helmholtz"])
def test_refine_predicate_monotone(name):
    # a sub-patch containing the triggering cell centre also triggers
    p = get_problem(name)
    refine = p.refine_predicate()
    x_lo, x_hi, y_lo, y_hi = p.domain
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(200):
        w = (x_hi - x_lo) / 2 ** rng.integers(1, 4)
        x0 = x_lo + w * rng.integers(0, (x_hi - x_lo) / w)
        y0 = y_lo + w * rng.integers(0, (y_hi - y_lo) / w)
        grid = PatchGrid(x0, x0 + w, y0, y0 + w, 8)
        if not refine(grid):
            continue
        X, Y = grid.cell_centers()
        i, j = np.unravel_index(np.argmax(np.abs(grid.sample_centers(p.f))), X.shape)
        cx, cy = X[i, j], Y[i, j]
        # shrink around the trigger point, keeping it a cell centre of the sub-patch
        for k in (1, 2):
            hs = grid.h / 2**k
            sub = PatchGrid(cx - 3.5 * hs, cx + 4.5 * hs, cy - 3.5 * hs, cy + 4.5 * hs, 8)
            assert refine(sub)
        checked += 1
    assert checked > 0


def test_refine_threshold_override():
    p = poisson1()
    grid = PatchGrid(-0.5, 0.5, -0.5, 0.5, 4)  # |f| <= 2 sin(3/8) ~ 0.73
    assert not p.refine_predicate()(grid)
    assert p.refine_predicate(0.5)(grid)


def test_error_norms_exact_field_zero():
    p = helmholtz()
    tree = uniform_tree(p.domain, 4, 1)
    for leaf in tree.leaves():
        leaf.payload = type("P", (), {"u": leaf.grid.sample_centers(p.u_exact)})()
    assert error_norms(tree, p.u_exact) == (0.0, 0.0)


def test_l1_is_area_weighted_mean():
    # calibrated against the uniform Poisson-1 table row: L1 3.59e-4 at L = 4
    p = poisson1()
    tree = uniform_tree(p.domain, 16, 4)
    HPSSolver(tree, 0.0).solve(p.f, p.u_exact)
    linf, l1 = error_norms(tree, p.u_exact)
    assert l1 == pytest.approx(3.59e-4, rel=0.01)
    errs = np.concatenate([np.abs(leaf.payload.u - leaf.grid.sample_centers(p.u_exact)).ravel() for leaf in tree.leaves()])
    assert l1 == pytest.approx(errs.mean(), rel=1e-12)


def test_convergence_order():
    assert convergence_order(4e-3, 1e-3) == pytest.approx(2.0)
    assert np.isnan(convergence_order(0.0, 1.0))

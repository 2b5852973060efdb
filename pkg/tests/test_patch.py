import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadhps.leaf_solver import LeafDiscretization, build_dtn_leaf
from quadhps.patch import (
    SIDES,
    PatchGrid,
    averaging_matrix,
    averaging_matrix_block,
    coarsen_dtn,
    coarsen_flux,
    flat_index,
    prolong_boundary,
    prolongation_matrix,
    prolongation_matrix_block,
    restrict_boundary,
    side_slice,
    split_index,
)

UNIT = PatchGrid(0.0, 1.0, 0.0, 1.0, 8)


def test_grid_geometry():
    g = PatchGrid(-1.0, 1.0, 2.0, 4.0, 4)
    assert g.h == 0.5
    xc, yc = g.centers_1d()
    np.testing.assert_allclose(xc, [-0.75, -0.25, 0.25, 0.75])
    np.testing.assert_allclose(yc, [2.25, 2.75, 3.25, 3.75])
    X, Y = g.cell_centers()
    assert X[3, 0] == 0.75 and Y[0, 3] == 3.75


def test_non_square_rejected():
    with pytest.raises(ValueError):
        PatchGrid(0.0, 1.0, 0.0, 2.0, 4)


def test_boundary_points_order():
    x, y = PatchGrid(0.0, 1.0, 0.0, 1.0, 2).boundary_points()
    np.testing.assert_allclose(x, [0, 0, 1, 1, 0.25, 0.75, 0.25, 0.75])
    np.testing.assert_allclose(y, [0.25, 0.75, 0.25, 0.75, 0, 0, 1, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 64), st.data())
def test_index_round_trip(s, data):
    k = data.draw(st.integers(0, 3))
    j = data.draw(st.integers(0, s - 1))
    idx = flat_index(k, j, s)
    assert split_index(idx, s) == (SIDES[k], j)
    assert idx in range(4 * s)[side_slice(k, s)]
    assert sorted(flat_index(kk, jj, s) for kk in range(4) for jj in range(s)) == list(range(4 * s))


def test_restrict_constant():
    np.testing.assert_allclose(restrict_boundary(np.full(32, 2.5)), np.full(16, 2.5))


def test_restrict_linear_exact():
    fine = PatchGrid(0, 1, 0, 1, 8).sample_boundary(lambda x, y: y)
    coarse = PatchGrid(0, 1, 0, 1, 4).sample_boundary(lambda x, y: y)
    np.testing.assert_allclose(restrict_boundary(fine)[:4], coarse[:4], atol=1e-14)


@pytest.mark.parametrize("op", [restrict_boundary, coarsen_flux])
def test_restrict_quadratic_offset(op):
    s = 16
    fine = PatchGrid(0, 1, 0, 1, s).sample_boundary(lambda x, y: x**2)
    coarse = PatchGrid(0, 1, 0, 1, s // 2).sample_boundary(lambda x, y: x**2)
    h = 1.0 / s
    S = side_slice("S", s // 2)
    np.testing.assert_allclose(op(fine)[S] - coarse[S], h**2 / 4, atol=1e-14)


def test_restrict_odd_raises():
    with pytest.raises(ValueError):
        restrict_boundary(np.zeros(12))


def test_prolong_constant_and_linear():
    np.testing.assert_allclose(prolong_boundary(np.full(16, -1.0)), np.full(32, -1.0))
    coarse = PatchGrid(0, 1, 0, 1, 4).sample_boundary(lambda x, y: x)
    fine = PatchGrid(0, 1, 0, 1, 8).sample_boundary(lambda x, y: x)
    np.testing.assert_allclose(prolong_boundary(coarse), fine, atol=1e-14)


def test_prolong_too_small():
    with pytest.raises(ValueError):
        prolong_boundary(np.zeros(4))


def test_restrict_after_prolong_is_not_identity():
    # the product L21 L12 is a smoothing matrix, recorded rather than asserted equal to I
    P = (averaging_matrix(8) @ prolongation_matrix(4)).toarray()
    assert np.allclose(P.sum(axis=1), 1.0)
    assert not np.allclose(P, np.eye(4))
    rng = np.random.default_rng(0)
    v = rng.normal(size=16)
    assert np.linalg.norm(restrict_boundary(prolong_boundary(v)) - v) > 1e-3


def test_interpolation_structure():
    L21 = averaging_matrix(8).toarray()
    assert all(sorted(row[row != 0]) == [0.5, 0.5] for row in L21)
    for j, row in enumerate(L21):
        assert list(np.nonzero(row)[0]) == [2 * j, 2 * j + 1]
    L12 = prolongation_matrix(4).toarray()
    assert np.allclose(L12.sum(axis=1), 1.0)
    for blk, one in ((averaging_matrix_block(8), L21), (prolongation_matrix_block(4), L12)):
        B = blk.toarray()
        r, c = one.shape
        for k in range(4):
            np.testing.assert_array_equal(B[k * r : (k + 1) * r, k * c : (k + 1) * c], one)
        mask = np.ones_like(B, dtype=bool)
        for k in range(4):
            mask[k * r : (k + 1) * r, k * c : (k + 1) * c] = False
        assert not B[mask].any()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 4, 8, 16]), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_affine_traces_exact(s, a, b, c):
    func = lambda x, y: a + b * x + c * y  # noqa: E731
    coarse = PatchGrid(0, 1, 0, 1, s).sample_boundary(func)
    fine = PatchGrid(0, 1, 0, 1, 2 * s).sample_boundary(func)
    np.testing.assert_allclose(prolong_boundary(coarse), fine, atol=1e-13)
    np.testing.assert_allclose(restrict_boundary(fine), coarse, atol=1e-13)
    np.testing.assert_allclose(restrict_boundary(prolong_boundary(coarse)), coarse, atol=1e-13)


def test_restrict_trailing_axes():
    rng = np.random.default_rng(1)
    V = rng.normal(size=(32, 3))
    expected = np.column_stack([restrict_boundary(V[:, k]) for k in range(3)])
    np.testing.assert_allclose(restrict_boundary(V), expected)
    np.testing.assert_allclose(restrict_boundary(V), averaging_matrix_block(8) @ V)


def test_coarsen_dtn_matches_matrix_product_and_shape():
    T = build_dtn_leaf(LeafDiscretization(PatchGrid(0, 1, 0, 1, 16), 0.0))
    Tc = coarsen_dtn(T)
    assert Tc.shape == (32, 32)
    ref = averaging_matrix_block(16) @ T @ prolongation_matrix_block(8)
    np.testing.assert_allclose(Tc, ref, atol=1e-12 * np.abs(T).max())
    assert np.abs(Tc.sum(axis=1)).max() <= 1e-10 * np.abs(Tc).max()


def test_coarsen_dtn_rejects_bad_shapes():
    with pytest.raises(ValueError):
        coarsen_dtn(np.zeros((16, 12)))
    with pytest.raises(ValueError):
        coarsen_dtn(np.zeros((12, 12)))


def test_coarsened_dtn_close_to_direct_on_smooth_data():
    # action on a harmonic trace, coarsened s -> s/2 vs direct s/2
    u = lambda x, y: np.exp(x) * np.cos(y)  # noqa: E731
    mean, interior, ends = [], [], []
    for s in (16, 32, 64):
        fine = build_dtn_leaf(LeafDiscretization(PatchGrid(0, 1, 0, 1, s), 0.0))
        direct = build_dtn_leaf(LeafDiscretization(PatchGrid(0, 1, 0, 1, s // 2), 0.0))
        g = PatchGrid(0, 1, 0, 1, s // 2).sample_boundary(u)
        d = np.abs(coarsen_dtn(fine) @ g - direct @ g).reshape(4, -1)
        mean.append(d.mean())
        interior.append(d[:, 1:-1].max())
        ends.append(d[:, [0, -1]].max())
    # regression values at s = 16: 1.82e-2 mean, 2.04e-3 away from corners, 1.25e-1 at side ends
    np.testing.assert_allclose([mean[0], interior[0], ends[0]], [1.817e-2, 2.035e-3, 1.250e-1], rtol=1e-2)
    assert all(3.5 < a / b < 4.5 for a, b in zip(mean, mean[1:]))
    assert all(3.0 < a / b < 4.5 for a, b in zip(interior, interior[1:]))
    # the one-sided extrapolation at side ends is first order
    assert all(1.8 < a / b < 2.2 for a, b in zip(ends, ends[1:]))

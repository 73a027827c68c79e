import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvb.grid import periodic_grid
from pvb.lattice import vn_basis
from pvb.reduced import (
    ActiveSet,
    EmptyBasisError,
    GramCholesky,
    ReducedState,
    _pack,
    _unpack,
    full_coefficients,
    reduce_from_grid,
    synthesize_grid,
)


@pytest.fixture(scope="module")
def basis12():
    return vn_basis(periodic_grid(8.0, 12))


@pytest.fixture(scope="module")
def pair12(basis12):
    return (basis12, basis12)


@given(
    st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=4),
    st.integers(min_value=0, max_value=10**6),
)
def test_pack_unpack_roundtrip(radix_list, seed):
    shape = np.asarray([r + 2 for r in radix_list], dtype=np.int64)
    r = np.random.default_rng(seed)
    coords = np.stack([r.integers(0, s, size=17) for s in shape], axis=-1)
    codes = _pack(coords, shape)
    np.testing.assert_array_equal(_unpack(codes, shape), coords)
    assert codes.max() < np.prod(shape)


def test_active_set_preserves_insertion_order(basis12):
    a = ActiveSet((basis12,), np.array([7, 2, 9]))
    np.testing.assert_array_equal(a.flat, [7, 2, 9])
    b = a.with_added([4, 2, 11])
    np.testing.assert_array_equal(b.flat, [7, 2, 9, 4, 11])
    np.testing.assert_array_equal(b.positions_of(np.array([2, 4, 3])), [1, 3, -1])


def test_active_set_rejects_bad_input(basis12):
    with pytest.raises(ValueError):
        ActiveSet((basis12,), np.array([1, 1, 2]))
    with pytest.raises(ValueError):
        ActiveSet((basis12,), np.array([0, 12]))
    with pytest.raises(ValueError):
        ActiveSet((basis12,), np.array([-1]))


def test_with_removed_returns_survivor_positions(basis12):
    a = ActiveSet((basis12,), np.array([7, 2, 9, 4]))
    b, kept = a.with_removed(np.array([1, 3]))
    np.testing.assert_array_equal(b.flat, [7, 9])
    np.testing.assert_array_equal(kept, [0, 2])


def test_contains_on_empty_set(basis12):
    a = ActiveSet((basis12,), np.array([], dtype=np.int64))
    assert not a.contains(np.array([0, 3])).any()
    assert a.expansion_candidates(1, (False,)).size == 0


def test_dim_cells_recovers_per_dimension_indices(pair12):
    lat = pair12[0].lattice
    n = lat.n_x * lat.n_p
    k0, k1 = 5, 11
    code = k0 * n + k1
    a = ActiveSet(pair12, np.array([code]))
    assert a.dim_cells(0)[0] == k0
    assert a.dim_cells(1)[0] == k1


def test_expansion_candidates_chebyshev_neighborhood(basis12):
    lat = basis12.lattice   # 3 x 4 for N=12
    assert (lat.n_x, lat.n_p) == (3, 4)
    center = lat.flat_index(1, 1)
    a = ActiveSet((basis12,), np.array([center]))
    cand = a.expansion_candidates(1, (False,))
    expect = sorted(
        lat.flat_index(n, l)
        for n in (0, 1, 2)
        for l in (0, 1, 2)
        if (n, l) != (1, 1)
    )
    np.testing.assert_array_equal(cand, expect)


def test_expansion_wraps_x_but_never_p(basis12):
    lat = basis12.lattice
    corner = lat.flat_index(0, 0)
    a = ActiveSet((basis12,), np.array([corner]))
    clipped = a.expansion_candidates(1, (False,))
    wrapped = a.expansion_candidates(1, (True,))
    # without wrap: (n, l) in {0,1} x {0,1} minus the corner itself
    assert clipped.size == 3
    # with wrap the x-neighbor n = -1 folds to n = 2; momentum row -1 stays out
    assert wrapped.size == 5
    assert set(wrapped) - set(clipped) == {lat.flat_index(2, 0), lat.flat_index(2, 1)}


def test_boundary_and_edge_masks(basis12):
    lat = basis12.lattice
    # full row of x at momentum row 1: no x-boundary when wrapped, but its
    # p-neighbors are missing, so every cell is a boundary cell
    row = np.array([lat.flat_index(n, 1) for n in range(lat.n_x)])
    a = ActiveSet((basis12,), row)
    assert a.boundary_mask((True,)).all()
    assert not a.edge_mask((True,)).any()
    # momentum rows 0 and n_p-1 are hard edges
    edges = np.array([lat.flat_index(1, 0), lat.flat_index(1, lat.n_p - 1)])
    b = ActiveSet((basis12,), edges)
    assert b.edge_mask((True,)).all()
    # x column 0 is an edge only when x does not wrap
    c = ActiveSet((basis12,), np.array([lat.flat_index(0, 1)]))
    assert not c.edge_mask((True,)).any()
    assert c.edge_mask((False,)).all()


def test_fully_active_lattice_has_no_boundary(basis12):
    a = ActiveSet((basis12,), np.arange(12))
    assert not a.boundary_mask((True,)).any()
    assert a.expansion_candidates(1, (True,)).size == 0


def test_reduced_state_validates_length(basis12):
    a = ActiveSet((basis12,), np.array([0, 5]))
    with pytest.raises(ValueError):
        ReducedState(a, np.ones(3), W=1e-3)


def test_full_coefficients_match_direct_overlaps_2d(pair12):
    b = pair12[0]
    n = b.grid.npts
    r = np.random.default_rng(3)
    psi = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    c = full_coefficients(pair12, psi)
    # spot-check one entry against the explicit tensor-product overlap
    g5 = b.G[:, 5]
    g7 = b.G[:, 7]
    direct = np.einsum("i,j,ij->", g5.conj(), g7.conj(), psi)
    assert c[5, 7] == pytest.approx(direct, abs=1e-12)


def test_reduce_synthesize_roundtrip_1d(basis12):
    r = np.random.default_rng(4)
    psi = r.normal(size=12) + 1j * r.normal(size=12)
    s = reduce_from_grid((basis12,), psi, W=0.0)
    assert s.size == 12
    np.testing.assert_allclose(synthesize_grid(s), psi, atol=1e-10)


def test_reduce_thresholds_small_coefficients(basis12):
    # one lattice Gaussian: its own coefficient is ~1, distant ones tiny
    psi = basis12.G[:, 5].copy()
    s = reduce_from_grid((basis12,), psi, W=0.5)
    assert s.size < 12
    assert basis12.lattice.flat_index(*basis12.lattice.cell_coords(5)) in s.active.flat
    c_all = np.abs(full_coefficients((basis12,), psi))
    assert (np.abs(s.coeffs) > 0.5).all()
    assert (np.sort(c_all)[: 12 - s.size] <= 0.5).all()


def test_reduce_raises_on_empty(pair12):
    psi = np.zeros((12, 12))
    with pytest.raises(EmptyBasisError):
        reduce_from_grid(pair12, psi, W=1e-3)


def test_reduce_synthesize_roundtrip_2d(pair12):
    r = np.random.default_rng(5)
    psi = r.normal(size=(12, 12)) + 1j * r.normal(size=(12, 12))
    s = reduce_from_grid(pair12, psi, W=0.0)
    np.testing.assert_allclose(synthesize_grid(s), psi, atol=1e-9)


def test_gram_cholesky_append_matches_fresh_factorization(basis12):
    S = basis12.S
    chol = GramCholesky(S[:7, :7])
    chol.append(S[:7, 7:], S[7:, 7:])
    fresh = GramCholesky(S)
    np.testing.assert_allclose(chol.L, fresh.L, atol=1e-11)
    r = np.random.default_rng(6)
    b = r.normal(size=12) + 1j * r.normal(size=12)
    np.testing.assert_allclose(chol.solve(b), np.linalg.solve(S, b), atol=1e-9)


def test_gram_cholesky_norm_is_grid_norm(basis12):
    # c^dag S c with S = B^dag B is exactly the grid-space norm of B c
    chol = GramCholesky(basis12.S)
    r = np.random.default_rng(7)
    c = r.normal(size=12) + 1j * r.normal(size=12)
    assert chol.norm(c) == pytest.approx(np.linalg.norm(basis12.B @ c), rel=1e-12)


def test_gram_cholesky_append_shape_check(basis12):
    chol = GramCholesky(basis12.S[:5, :5])
    with pytest.raises(ValueError):
        chol.append(basis12.S[:4, 5:7], basis12.S[5:7, 5:7])

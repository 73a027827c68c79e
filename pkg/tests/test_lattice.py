import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvb.grid import periodic_grid
from pvb.lattice import (
    GOLDEN_OFFSET,
    IllConditionedLattice,
    biorthogonality_residuals,
    gaussian_columns,
    lattice_shape,
    vn_basis,
    vn_lattice,
)


def test_lattice_shape_picks_divisor_nearest_sqrt_n():
    assert lattice_shape(100) == (10, 10)
    assert lattice_shape(255) == (15, 17)   # sqrt(255) ~ 15.97, divisors 15 / 17
    assert lattice_shape(1000) == (25, 40)  # sqrt(1000) ~ 31.6, divisors 25 / 40
    assert lattice_shape(48) == (6, 8)
    assert lattice_shape(32) == (4, 8)      # tie between 4 (|4-5.66|) and 8 -> smaller
    assert lattice_shape(7) == (2, 3) or lattice_shape(7) == (1, 7)


def test_lattice_shape_aspect_ratio():
    # alpha rescales the target: alpha=4 doubles the x-count target
    n_x, n_p = lattice_shape(64, alpha=4.0)
    assert (n_x, n_p) == (16, 4)
    with pytest.raises(ValueError):
        lattice_shape(64, alpha=0)


def test_cell_area_is_planck_h():
    for n in (32, 48, 100, 255):
        lat = vn_lattice(periodic_grid(17.0, n))
        assert lat.cell_area == pytest.approx(2.0 * np.pi, rel=1e-12)
        assert lat.n_x * lat.n_p == n


def test_default_width_balances_cell_coverage():
    lat = vn_lattice(periodic_grid(20.0, 48))
    assert lat.sigma_x**2 == pytest.approx(lat.dx_lat / (2.0 * lat.dp_lat))


def test_centers_sit_inside_the_covered_rectangle():
    g = periodic_grid(20.0, 48)
    lat = vn_lattice(g)
    assert np.all(lat.x_centers >= g.x_min)
    assert np.all(lat.x_centers < g.x_min + g.length)
    assert np.all(np.abs(lat.p_centers) < g.k_max)
    # uniform spacings
    np.testing.assert_allclose(np.diff(lat.x_centers), lat.dx_lat)
    np.testing.assert_allclose(np.diff(lat.p_centers), lat.dp_lat)
    # golden registration: first center offset by GOLDEN_OFFSET cells
    assert lat.x_centers[0] == pytest.approx(g.x_min + GOLDEN_OFFSET * lat.dx_lat)


def test_flat_index_roundtrip():
    lat = vn_lattice(periodic_grid(10.0, 24))
    k = np.arange(24)
    n, l = lat.cell_coords(k)
    np.testing.assert_array_equal(lat.flat_index(n, l), k)


def test_gaussian_columns_have_equal_unit_norm():
    lat = vn_lattice(periodic_grid(20.0, 48))
    G = gaussian_columns(lat)
    norms = np.linalg.norm(G, axis=0)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_biorthogonality_at_roundoff():
    for n in (32, 48, 100):
        b = vn_basis(periodic_grid(20.0, n))
        r1, r2 = biorthogonality_residuals(b)
        assert r1 <= 1e-12, f"N={n}: analysis residual {r1:.2e}"
        assert r2 <= 1e-12, f"N={n}: synthesis residual {r2:.2e}"


def test_condition_number_stays_moderate_with_golden_offsets():
    for n in (32, 48, 100, 144):
        b = vn_basis(periodic_grid(20.0, n))
        assert b.cond_1norm < 200.0


def test_half_cell_offsets_hit_the_zak_zero():
    # the critical (symmetric) registration samples the Zak-transform zero
    # exactly and the frame matrix drops rank
    with pytest.raises(IllConditionedLattice):
        vn_basis(periodic_grid(20.0, 64), x_offset=0.5, p_offset=0.5)


def test_gram_matrix_is_hermitian_positive(basis48):
    S = basis48.S
    np.testing.assert_allclose(S, S.conj().T, atol=1e-14)
    w = np.linalg.eigvalsh(S)
    assert w.min() > 0


@settings(max_examples=10)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_analysis_synthesis_roundtrip(basis48, seed):
    r = np.random.default_rng(seed)
    n = basis48.grid.npts
    psi = r.normal(size=n) + 1j * r.normal(size=n)
    c = basis48.to_coeffs(psi)
    np.testing.assert_allclose(basis48.synthesize(c), psi, atol=1e-10)


def test_coefficients_are_plain_gaussian_overlaps(basis48):
    r = np.random.default_rng(7)
    psi = r.normal(size=basis48.grid.npts) + 0j
    c = basis48.to_coeffs(psi)
    # column k of G is the Gaussian of cell k sampled on the grid
    np.testing.assert_allclose(c[5], np.vdot(basis48.G[:, 5], psi), atol=1e-13)


def test_gaussian_localization_sets_coefficient_decay(basis48):
    # a Gaussian parked on one lattice site has overlaps that die off with
    # phase-space distance from that site
    lat = basis48.lattice
    x0 = lat.x_centers[lat.n_x // 2]
    p0 = lat.p_centers[lat.n_p // 2]
    g = basis48.grid
    psi = np.exp(-((g.x - x0) ** 2) / (4 * lat.sigma_x**2) + 1j * p0 * (g.x - x0))
    psi /= np.linalg.norm(psi)
    c = np.abs(basis48.to_coeffs(psi))
    k_hit = int(np.argmax(c))
    assert k_hit == lat.flat_index(lat.n_x // 2, lat.n_p // 2)
    xs, ps = lat.cell_centers(np.arange(g.npts))
    far = (np.abs(xs - x0) > 3 * lat.dx_lat) & (np.abs(ps - p0) > 3 * lat.dp_lat)
    assert c[far].max() < 1e-3 * c[k_hit]


def test_custom_width_and_offsets_accepted():
    b = vn_basis(periodic_grid(20.0, 36), sigma_x=0.9, x_offset=0.1, p_offset=0.23)
    assert b.lattice.sigma_x == 0.9
    r1, _ = biorthogonality_residuals(b)
    assert r1 < 1e-11

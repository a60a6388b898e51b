import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isozaki_kit.geometry import (
    GridSpec,
    boundary_mesh,
    build_grid,
    inner_gamma,
    inner_omega,
    norm_gamma,
    norm_omega,
)


@pytest.mark.parametrize(
    "d, L, n, h, count",
    [(2, 1.0, 3, 0.25, 9), (3, 1.0, 3, 0.25, 27), (2, 2.0, 7, 0.25, 49)],
)
def test_grid_spacing_and_count(d, L, n, h, count):
    grid = build_grid(GridSpec(d=d, L=L, n=n))
    assert grid.h == pytest.approx(h, abs=0)
    assert grid.size == count
    assert grid.points.shape == (count, d)


def test_lexicographic_order():
    grid = build_grid(GridSpec(2, 1.0, 3))
    assert np.allclose(grid.points[:4], [[0.25, 0.25], [0.25, 0.5], [0.25, 0.75], [0.5, 0.25]])


@pytest.mark.parametrize("d, n", [(1, 5), (4, 5), (2, 2), (3, 0)])
def test_rejects_bad_spec(d, n):
    with pytest.raises(ValueError):
        GridSpec(d=d, L=1.0, n=n)


def test_rejects_nonpositive_length():
    with pytest.raises(ValueError):
        GridSpec(d=2, L=0.0, n=5)


@pytest.mark.parametrize("d, count", [(2, 12), (3, 54)])
def test_boundary_node_count(d, count):
    mesh = boundary_mesh(build_grid(GridSpec(d, 1.0, 3)))
    assert mesh.size == count
    assert np.all(mesh.weights == 0.25 ** (d - 1))


def test_boundary_area_defect():
    mesh = boundary_mesh(build_grid(GridSpec(2, 1.0, 3)))
    assert mesh.area == pytest.approx(3.0)


@pytest.mark.parametrize("d", [2, 3])
def test_boundary_geometry(d):
    grid = build_grid(GridSpec(d, 1.0, 5))
    mesh = boundary_mesh(grid)
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)
    # every node sits on exactly one face
    on_face = (np.isclose(mesh.points, 0.0) | np.isclose(mesh.points, 1.0)).sum(axis=1)
    assert np.all(on_face == 1)
    # the first interior neighbour is one step h inward along the normal
    inward = grid.points[mesh.first] - mesh.points
    assert np.allclose(inward, -grid.h * mesh.normals)
    second = grid.points[mesh.second] - mesh.points
    assert np.allclose(second, -2 * grid.h * mesh.normals)


def test_inner_products_examples():
    grid = build_grid(GridSpec(2, 1.0, 3))
    mesh = boundary_mesh(grid)
    one = np.ones(grid.size)
    assert inner_omega(one, one, grid) == pytest.approx(0.5625)
    assert norm_gamma(np.ones(mesh.size), mesh, 2) == pytest.approx(np.sqrt(3))


@pytest.mark.parametrize("d", [2, 3])
def test_norm_gamma_exponent_four(d):
    mesh = boundary_mesh(build_grid(GridSpec(d, 1.0, 4)))
    assert norm_gamma(np.ones(mesh.size), mesh, 4) == pytest.approx(mesh.area ** 0.25)


def test_size_mismatch_rejected():
    grid = build_grid(GridSpec(2, 1.0, 3))
    mesh = boundary_mesh(grid)
    with pytest.raises(ValueError):
        inner_omega(np.ones(8), np.ones(9), grid)
    with pytest.raises(ValueError):
        norm_gamma(np.ones(5), mesh)
    with pytest.raises(ValueError):
        norm_gamma(np.ones(mesh.size), mesh, 0.5)


def test_inner_omega_conjugates_second_argument():
    grid = build_grid(GridSpec(2, 1.0, 3))
    u = np.full(grid.size, 1j)
    assert inner_omega(u, np.ones(grid.size), grid) == pytest.approx(0.5625j)
    assert inner_omega(np.ones(grid.size), u, grid) == pytest.approx(-0.5625j)


def test_volume_quadrature_converges_first_order():
    errs = []
    for n in (15, 31, 63):
        grid = build_grid(GridSpec(2, 1.0, n))
        errs.append(abs(norm_omega(np.ones(grid.size), grid) ** 2 - 1.0))
    slope = np.polyfit(np.log([1 / 16, 1 / 32, 1 / 64]), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


@settings(max_examples=30, deadline=None)
@given(
    d=st.sampled_from([2, 3]),
    n=st.integers(3, 9),
    eta=st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3),
)
def test_constant_field_flux_vanishes(d, n, eta):
    mesh = boundary_mesh(build_grid(GridSpec(d, 1.0, n)))
    flux = mesh.normals @ np.asarray(eta[:d])
    assert abs(np.sum(mesh.weights * flux)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 8), seed=st.integers(0, 2**32 - 1))
def test_inner_gamma_hermitian(n, seed):
    mesh = boundary_mesh(build_grid(GridSpec(2, 1.0, n)))
    r = np.random.default_rng(seed)
    f = r.standard_normal(mesh.size) + 1j * r.standard_normal(mesh.size)
    g = r.standard_normal(mesh.size) + 1j * r.standard_normal(mesh.size)
    assert inner_gamma(f, g, mesh) == pytest.approx(np.conj(inner_gamma(g, f, mesh)))
    assert inner_gamma(f, f, mesh).real == pytest.approx(norm_gamma(f, mesh) ** 2)

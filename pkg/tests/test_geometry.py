import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import sphere_labels
from permahom.errors import (DisconnectedFluid, GeometryError, InvalidShape, NonIntegerTiling,
                             ObstacleTouchesBoundary)
from permahom.geometry import (CellMask, ObstacleShape, ThinDomainSpec, build_thin_domain,
                               check_cell_labels, fluid_is_connected, porosity, voxel_centers,
                               voxelize_cell)


def test_sphere_n4_has_eight_solid_voxels(sphere):
    m = voxelize_cell(sphere, 4)
    assert int(m.solid.sum()) == 8
    assert np.allclose(voxel_centers(4), [-0.375, -0.125, 0.125, 0.375])
    assert porosity(m) == pytest.approx(56 / 64, abs=0)
    # the eight solid voxels are the ones at (±1/8, ±1/8, ±1/8)
    assert m.solid[1:3, 1:3, 1:3].all()


def test_sphere_n32_volume_fraction(sphere):
    m = voxelize_cell(sphere, 32)
    exact = 4.0 / 3.0 * np.pi * 0.25 ** 3
    assert abs(m.solid.mean() - exact) <= 0.02 * exact


def test_matches_enumerated_centres(sphere):
    assert np.array_equal(voxelize_cell(sphere, 10).labels, sphere_labels(10))


def test_oversized_sphere_rejected():
    with pytest.raises(ObstacleTouchesBoundary):
        voxelize_cell(ObstacleShape("sphere", radius=0.6), 16)


def test_invalid_shapes():
    with pytest.raises(InvalidShape):
        ObstacleShape("torus", radius=0.2)
    with pytest.raises(InvalidShape):
        ObstacleShape("sphere", radius=-0.1)
    with pytest.raises(InvalidShape):
        ObstacleShape("axis-box", half_extents=(0.1, 0.1))
    with pytest.raises(InvalidShape):
        ObstacleShape("superellipsoid", half_extents=(0.1, 0.2, 0.1), exponent=0)


def test_small_resolution_and_unresolved_obstacle():
    with pytest.raises(GeometryError):
        voxelize_cell(ObstacleShape("sphere", radius=0.25), 3)
    with pytest.raises(GeometryError):
        voxelize_cell(ObstacleShape("sphere", radius=0.01), 4)


def test_all_fluid_cell():
    m = voxelize_cell(None, 6)
    assert m.labels.all() and porosity(m) == 1.0


def test_box_and_superellipsoid_voxelize():
    box = voxelize_cell(ObstacleShape("axis-box", half_extents=(0.2, 0.1, 0.12)), 10)
    assert box.solid.sum() == 4 * 2 * 2
    se = voxelize_cell(ObstacleShape("superellipsoid", half_extents=(0.3, 0.2, 0.2),
                                     exponent=4), 16)
    assert 0 < se.solid.sum() < box.labels.size


def test_check_cell_labels_errors():
    lab = np.ones((6, 6, 6), dtype=bool)
    lab[0, 3, 3] = False
    with pytest.raises(ObstacleTouchesBoundary):
        check_cell_labels(lab)
    lab = np.ones((6, 6, 6), dtype=bool)
    lab[1:5, 1:5, 1:5] = False
    lab[2:4, 2:4, 2:4] = True  # sealed cavity
    with pytest.raises(DisconnectedFluid):
        check_cell_labels(lab)


def test_connectivity_wraps():
    lab = np.zeros((5, 5, 5), dtype=bool)
    lab[0, 0, 0] = lab[4, 0, 0] = True
    assert fluid_is_connected(lab, periodic=True)
    assert not fluid_is_connected(lab, periodic=False)


def test_tiling_arithmetic(sphere):
    spec = ThinDomainSpec(1.0, 1.0, 0.25, 0.125)
    assert spec.cell_counts == (8, 8, 2)
    cell = voxelize_cell(sphere, 8)
    dom = build_thin_domain(spec, cell)
    assert dom.shape == (64, 64, 16)
    assert porosity(dom) == pytest.approx(porosity(cell), abs=1e-15)
    # one obstacle per microcell
    solid_per_block = (~dom.labels).reshape(8, 8, 8, 8, 2, 8).sum(axis=(1, 3, 5))
    assert (solid_per_block == cell.solid.sum()).all()


def test_non_integer_tiling():
    with pytest.raises(NonIntegerTiling):
        ThinDomainSpec(1.0, 1.0, 0.3, 0.125)
    with pytest.raises(GeometryError):
        ThinDomainSpec(1.0, 1.0, 0.125, 0.125)


def test_all_fluid_domain():
    dom = build_thin_domain(ThinDomainSpec(0.5, 0.5, 0.25, 0.125), voxelize_cell(None, 4))
    assert dom.labels.all() and not dom.has_obstacles


def test_no_solid_in_outer_layer(sphere):
    dom = build_thin_domain(ThinDomainSpec(0.5, 0.5, 0.25, 0.125), voxelize_cell(sphere, 6))
    for ax, end in itertools.product(range(3), (0, -1)):
        assert dom.labels.take(end, axis=ax).all()


def test_lattice_coordinates_roundtrip(sphere):
    spec = ThinDomainSpec(0.5, 0.5, 0.25, 0.125)
    dom = build_thin_domain(spec, voxelize_cell(sphere, 4))
    idx = np.argwhere(np.ones(dom.shape, dtype=bool))
    k, y = dom.lattice_coordinates(idx)
    x = dom.lattice_origin + spec.a_eps * k + spec.a_eps * y
    assert np.allclose(x, dom.voxel_center(idx), atol=1e-15)
    assert (np.abs(y) < 0.5).all()


@given(st.integers(0, 2), st.integers(0, 2), st.integers(0, 1), st.integers(0, 5),
       st.integers(0, 5), st.integers(0, 5))
def test_tiling_periodicity(sx, sy, sz, i, j, k):
    spec = ThinDomainSpec(0.375, 0.375, 0.25, 0.125)
    dom = build_thin_domain(spec, _asym_cell())
    n = dom.n_c
    assert dom.labels[i, j, k] == dom.labels[i + sx * n, j + sy * n, k + sz * n]


def _asym_cell():
    return voxelize_cell(ObstacleShape("superellipsoid", (0.05, -0.05, 0.0),
                                       half_extents=(0.3, 0.2, 0.15), exponent=3), 6)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_mirror_symmetry(sphere, axis):
    m = voxelize_cell(sphere, 9)
    assert np.array_equal(m.labels, np.flip(m.labels, axis=axis))


def test_refinement_consistency(sphere):
    fr = {n: voxelize_cell(sphere, n).solid.mean() for n in (8, 16, 32)}
    C = abs(fr[16] - fr[8]) * 8
    assert abs(fr[32] - fr[16]) <= C / 16 + 1e-15


def test_cellmask_shape_check():
    with pytest.raises(GeometryError):
        CellMask(4, np.ones((4, 4, 5), dtype=bool))

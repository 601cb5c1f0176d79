import math

import numpy as np
import pytest

from chemotaxis_lab.grid import from_spec, polar_disk, radial_disk, rect


@pytest.mark.parametrize("grid", [radial_disk(1.0, 40), rect(2.0, 0.5, 16, 4),
                                  polar_disk(1.0, 12, 16)])
def test_volumes_tile_the_domain(grid):
    assert grid.volumes.sum() == pytest.approx(grid.area, rel=1e-13)
    assert np.all(grid.volumes > 0)


def test_radial_geometry():
    g = radial_disk(2.0, 8)
    dr = 0.25
    np.testing.assert_allclose(g.radii(), (np.arange(8) + 0.5) * dr)
    np.testing.assert_allclose(g.face_areas, 2 * np.pi * np.arange(1, 8) * dr)
    assert g.area == pytest.approx(4 * np.pi)
    assert g.boundary_cells.tolist() == [7]


def test_rect_faces_and_indexing():
    g = rect(1.0, 1.0, 3, 2)
    # 2 interior x-faces per column times 2 rows, 1 y-face per column times 3 columns
    assert g.left.size == 2 * 2 + 3 * 1
    # cell (i, j) sits at flat index i*ny + j
    np.testing.assert_allclose(g.centers[1 * 2 + 1], [0.5, 0.75])
    assert sorted(g.boundary_cells.tolist()) == list(range(6))


def test_polar_is_periodic_in_angle():
    g = polar_disk(1.0, 4, 8)
    ang = g.face_areas.size - 3 * 8
    assert ang == 4 * 8
    # each cell has exactly two angular neighbours
    deg = np.bincount(g.left[-ang:], minlength=g.n) + np.bincount(g.right[-ang:], minlength=g.n)
    assert np.all(deg == 2)


def test_locate_and_boundary_snap():
    g = rect(1.0, 1.0, 10, 10)
    k = g.locate((0.05, 0.95))
    np.testing.assert_allclose(g.centers[k], [0.05, 0.95])
    b = g.nearest_boundary_center((0.0, 0.5))
    assert b[0] == pytest.approx(0.05)


def test_radial_distance_only_from_origin():
    g = radial_disk(1.0, 4)
    np.testing.assert_allclose(g.distance_to((0.0, 0.0)), g.radii())
    with pytest.raises(ValueError):
        g.distance_to((0.5, 0.0))


def test_spec_round_trip():
    for g in (radial_disk(1.5, 7), rect(2.0, 1.0, 5, 3), polar_disk(0.5, 6, 9)):
        h = from_spec(g.to_dict())
        np.testing.assert_array_equal(h.volumes, g.volumes)
        assert h.spec == g.spec


def test_invalid_grids_rejected():
    with pytest.raises(ValueError):
        rect(-1.0, 1.0)
    with pytest.raises(ValueError):
        polar_disk(1.0, 4, 2)
    with pytest.raises(ValueError):
        from_spec({"kind": "hexagon"})


def test_grid_h_is_smallest_spacing():
    g = polar_disk(1.0, 10, 20)
    assert g.h == pytest.approx(0.05 * 2 * math.pi / 20)

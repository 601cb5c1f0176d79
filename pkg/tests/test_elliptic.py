import numpy as np
import pytest

from chemotaxis_lab import elliptic
from chemotaxis_lab.grid import polar_disk, radial_disk, rect
from chemotaxis_lab.operators import laplacian_neumann, mean

GRIDS = [radial_disk(1.0, 32), rect(2.0, 0.5, 16, 4), polar_disk(1.0, 8, 12)]


@pytest.mark.parametrize("g", GRIDS)
def test_shifted_solve_reproduces_manufactured_data(g):
    x = np.cos(3 * g.centers[:, 0]) + g.centers[:, 1] ** 2
    f = -2.0 * laplacian_neumann(x, g) + 0.7 * x
    np.testing.assert_allclose(elliptic.solve_shifted(f, g, 2.0, 0.7), x, atol=1e-10)


@pytest.mark.parametrize("g", GRIDS)
def test_mean_zero_solve(g):
    f = np.exp(-np.sum(g.centers**2, axis=1))
    x = elliptic.solve_mean_zero(f, g, 1.5)
    assert abs(mean(x, g)) < 1e-13
    np.testing.assert_allclose(-1.5 * laplacian_neumann(x, g), f - mean(f, g), atol=1e-9)


def test_constant_source_gives_constant_signal():
    g = GRIDS[0]
    x = elliptic.solve_shifted(np.full(g.n, 3.0), g, 1.0, 2.0)
    np.testing.assert_allclose(x, 1.5, rtol=1e-12)
    assert np.max(np.abs(elliptic.solve_mean_zero(np.full(g.n, 3.0), g, 1.0))) < 1e-14


@pytest.mark.parametrize("g", GRIDS)
def test_guess_is_exact_for_the_solution(g):
    f = 1.0 + np.sin(np.arange(g.n))
    x = elliptic.solve_shifted(f, g, 1.0, 1.0)
    np.testing.assert_allclose(elliptic.solve_shifted(f, g, 1.0, 1.0, guess=x), x, atol=1e-12)
    y = elliptic.solve_mean_zero(f, g, 1.0)
    np.testing.assert_allclose(elliptic.solve_mean_zero(f, g, 1.0, guess=y + 4.0), y,
                               atol=1e-12)


def test_constant_guess_with_matching_source_is_kept_bitwise():
    g = GRIDS[2]
    w = np.full(g.n, 2.5)
    assert np.array_equal(elliptic.solve_shifted(np.full(g.n, 2.5), g, 1.0, 1.0, guess=w), w)


def test_zero_shift_rejected():
    with pytest.raises(ValueError):
        elliptic.solve_shifted(np.ones(GRIDS[0].n), GRIDS[0], 1.0, 0.0)

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import example, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemotaxis_lab.grid import polar_disk, radial_disk, rect
from chemotaxis_lab.operators import (FactorizedSystem, LinearSolveError, bernoulli,
                                      chemotactic_flux_divergence, entropy_production,
                                      gradient_sq_norm, implicit_drift_diffusion, integrate,
                                      laplacian_matrix, laplacian_neumann, mean,
                                      sg_flux, stiffness_apply, stiffness_matrix)

GRIDS = [radial_disk(1.0, 24), rect(1.0, 0.5, 8, 4), polar_disk(1.0, 6, 8)]
finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_integrate_and_mean_of_constants():
    for g in GRIDS:
        assert integrate(np.full(g.n, 2.0), g) == pytest.approx(2.0 * g.area, rel=1e-13)
        assert mean(np.full(g.n, 2.0), g) == pytest.approx(2.0, rel=1e-13)


def test_gradient_of_r_squared_is_the_exact_discrete_sum():
    # faces at r = k dr carry a jump 2k dr^2 and transmissibility 2 pi k
    for n in (16, 64, 256):
        g = radial_disk(1.0, n)
        f = g.radii() ** 2
        assert gradient_sq_norm(f, g) == pytest.approx(2 * np.pi * (1 - 1 / n) ** 2, rel=1e-12)


def test_gradient_converges_first_order_to_continuum():
    errs = [abs(gradient_sq_norm(radial_disk(1.0, n).radii() ** 2, radial_disk(1.0, n))
                - 2 * np.pi) for n in (32, 64, 128)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_laplacian_second_order_in_the_interior():
    # lap r^4 = 16 r^2; r^2 itself is reproduced exactly and cannot show an order
    errs = []
    for n in (32, 64, 128):
        g = radial_disk(1.0, n)
        r = g.radii()
        inner = (r > 0.25) & (r < 0.75)
        errs.append(np.max(np.abs(laplacian_neumann(r**4, g) - 16 * r**2)[inner]))
    assert math.log2(errs[0] / errs[1]) > 1.9
    assert math.log2(errs[1] / errs[2]) > 1.9


def test_laplacian_of_r_squared_is_exact_away_from_the_boundary():
    g = radial_disk(1.0, 32)
    lap = laplacian_neumann(g.radii() ** 2, g)
    np.testing.assert_allclose(lap[:-1], 4.0, rtol=1e-12)


@pytest.mark.parametrize("g", GRIDS)
def test_laplacian_kills_constants_and_conserves(g):
    assert np.max(np.abs(laplacian_neumann(np.full(g.n, 3.7), g))) == 0.0
    f = np.sin(np.arange(g.n))
    assert abs(integrate(laplacian_neumann(f, g), g)) < 1e-12


@pytest.mark.parametrize("g", GRIDS)
def test_matrices_match_matrix_free_operators(g):
    f = np.cos(np.arange(g.n) * 0.3)
    np.testing.assert_allclose(laplacian_matrix(g) @ f, laplacian_neumann(f, g), atol=1e-10)
    np.testing.assert_allclose(stiffness_matrix(g) @ f, stiffness_apply(f, g), atol=1e-10)
    K = stiffness_matrix(g)
    assert abs(K - K.T).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(arrays(float, 24, elements=finite), arrays(float, 24, elements=finite))
def test_summation_by_parts(f, h):
    g = GRIDS[0]
    lhs = integrate(h * laplacian_neumann(f, g), g)
    rhs = -np.sum(g.trans * np.diff(f) * np.diff(h))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(rhs)))


def test_bernoulli_values():
    assert bernoulli(np.array([0.0]))[0] == 1.0
    x = np.array([-50.0, -1.0, -1e-8, 1e-8, 1.0, 50.0, 800.0])
    b = bernoulli(x)
    np.testing.assert_allclose(b[[1, 4]], [1 / (1 - math.exp(-1.0)), 1 / (math.e - 1)])
    assert np.all(b >= 0) and np.all(np.isfinite(b))
    # B(-x) - B(x) = x
    np.testing.assert_allclose(bernoulli(-x) - b, x, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("g", GRIDS)
def test_flux_vanishes_on_gibbs_states(g):
    w = np.sin(np.arange(g.n) * 0.7)
    u = 3.0 * np.exp(w)
    J = sg_flux(u, w, g)
    assert np.max(np.abs(J)) < 1e-12 * np.max(g.trans * u[g.left])
    assert entropy_production(u, w, g) < 1e-12


@pytest.mark.parametrize("g", GRIDS)
def test_flux_divergence_conserves_mass(g):
    rng = np.random.default_rng(1)
    u, w = rng.uniform(0.1, 2.0, g.n), rng.normal(size=g.n)
    assert abs(integrate(chemotactic_flux_divergence(u, w, g), g)) < 1e-10


def test_flux_reduces_to_diffusion_without_signal():
    g = GRIDS[1]
    u = np.arange(g.n, dtype=float)
    np.testing.assert_allclose(chemotactic_flux_divergence(u, np.zeros(g.n), g),
                               laplacian_neumann(u, g), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(arrays(float, 24, elements=st.floats(0.0, 10.0)),
       arrays(float, 24, elements=st.floats(-20.0, 20.0)),
       st.sampled_from([1e-4, 1e-2, 1.0]))
@example(np.full(24, 5e-324), np.zeros(24), 1e-4)  # subnormal data
def test_implicit_step_positive_and_conservative(u, w, dt):
    g = GRIDS[0]
    new = implicit_drift_diffusion(u, w, dt, g)
    assert np.all(new >= 0.0)
    # conservation is exact up to rounding of vol/dt against Peclet-sized
    # flux weights; at dt = 1 and jumps of 20 in w that reaches ~1e-12
    m = integrate(u, g)
    assert abs(integrate(new, g) - m) <= 1e-10 * m


@pytest.mark.parametrize("g", GRIDS[1:])
def test_implicit_step_general_grids(g):
    rng = np.random.default_rng(5)
    u = rng.uniform(0.0, 1.0, g.n)
    w = 5 * rng.normal(size=g.n)
    new = implicit_drift_diffusion(u, w, 0.1, g)
    assert new.min() >= 0.0
    assert integrate(new, g) == pytest.approx(integrate(u, g), rel=1e-13)


def test_implicit_step_keeps_equilibria_bitwise():
    for g in GRIDS:
        w = np.full(g.n, 0.3)
        u = np.full(g.n, 2.0)
        assert np.array_equal(implicit_drift_diffusion(u, w, 0.01, g), u)


def test_entropy_production_nonnegative():
    g = GRIDS[2]
    rng = np.random.default_rng(2)
    for _ in range(20):
        assert entropy_production(rng.uniform(0, 3, g.n), rng.normal(size=g.n), g) >= 0.0


def test_factorized_system_refines_and_reports_failure():
    A = sp.csc_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x = FactorizedSystem(A).solve(np.array([1.0, 2.0]))
    np.testing.assert_allclose(A @ x, [1.0, 2.0], rtol=1e-14)
    with pytest.raises(RuntimeError):
        FactorizedSystem(sp.csc_matrix(np.ones((2, 2))))


class _InexactLU:
    def solve(self, b):
        return 0.5 * np.ones_like(b)


def test_factorized_system_rejects_unconverged_solves():
    A = sp.csc_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    system = FactorizedSystem(A, max_iters=0)
    system.lu = _InexactLU()
    with pytest.raises(LinearSolveError):
        system.solve(np.array([1.0, 2.0]))

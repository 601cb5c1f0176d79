import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from chemotaxis_lab import functionals as fn
from chemotaxis_lab.grid import polar_disk, radial_disk, rect
from chemotaxis_lab.model import ModelParams, State
from chemotaxis_lab.operators import integrate, laplacian_neumann, mean

GRIDS = [radial_disk(1.0, 32), rect(1.0, 1.0, 8, 8), polar_disk(1.0, 8, 12)]


def _smooth(g, seed):
    rng = np.random.default_rng(seed)
    x, y = g.centers[:, 0], g.centers[:, 1]
    a = rng.normal(size=4)
    return a[0] * np.cos(np.pi * x) + a[1] * np.sin(2 * y) + a[2] * x * y + a[3]


def _gibbs(w, g, M):
    return M * np.exp(w - fn.log_exp_integral(w, g))


def test_entropy_values():
    assert fn.entropy_L(1.0) == 0.0
    assert fn.entropy_L(0.0) == 1.0
    assert fn.entropy_L(math.e) == pytest.approx(1.0, rel=1e-15)
    np.testing.assert_allclose(fn.entropy_L(np.array([0.0, 1.0, 2.0])),
                               [1.0, 0.0, 2 * math.log(2) - 1])
    with pytest.raises(ValueError):
        fn.entropy_L(-1e-3)


@given(st.floats(0.0, 1e6))
def test_entropy_nonnegative(r):
    assert fn.entropy_L(r) >= 0.0


@pytest.mark.parametrize("g", GRIDS)
def test_energy_of_constant_state(g):
    p = ModelParams(delta=0.7, eps=0.3)
    M = 5.0
    c = M / g.area
    s = State(np.full(g.n, c), np.full(g.n, c), np.full(g.n, c / p.delta), g)
    rep = fn.energy(s, p)
    assert rep.grad_term == 0.0 and rep.relax_term == 0.0
    expect = g.area * fn.entropy_L(c) - M * M / (2 * p.delta * g.area)
    assert rep.E == pytest.approx(expect, rel=1e-12)
    assert fn.constant_state_energy(M, p, g.area) == pytest.approx(expect, rel=1e-14)
    assert fn.dissipation(s, p) == 0.0


def test_energy_terms_and_trivial_cases():
    g = rect(1.0, 1.0, 6, 6)
    p = ModelParams()
    zero = np.zeros(g.n)
    rep = fn.energy(State(np.ones(g.n), zero, zero, g), p)
    assert rep.E == pytest.approx(0.0, abs=1e-15)
    u = np.linspace(0.0, 3.0, g.n)
    rep = fn.energy(State(u, zero, zero, g), p)
    assert rep.E == pytest.approx(integrate(fn.entropy_L(u), g)) and rep.E >= 0
    s = State(u + 0.1, _smooth(g, 1) ** 2, _smooth(g, 2), g)
    rep = fn.energy(s, p)
    assert rep.E0 == rep.entropy_term - rep.coupling_term + rep.grad_term + rep.l2_term
    assert rep.E == rep.E0 + rep.relax_term


@pytest.mark.parametrize("g", GRIDS)
def test_stationary_like_states_do_not_dissipate(g):
    p = ModelParams(delta=1.0, diff=0.5)
    w = 0.3 * _smooth(g, 3)
    u = _gibbs(w, g, 4.0)
    v = -p.diff * laplacian_neumann(w, g) + p.delta * w
    assert fn.dissipation(State(u, v, w, g), p) < 1e-10


def test_dissipation_of_pure_relaxation_defect():
    g = radial_disk(1.0, 64)
    p = ModelParams(nu=2.0, eps=0.5, delta=1.3, diff=0.8)
    w = 3.0 + 0.1 * np.cos(np.pi * g.radii())
    u = _gibbs(w, g, 2.0)
    c = 1.0 / math.sqrt(g.area)
    v = -p.diff * laplacian_neumann(w, g) + p.delta * w - c
    assert v.min() > 0
    d = fn.dissipation(State(u, v, w, g), p)
    assert d == pytest.approx((1 + p.delta * p.eps) / p.nu, rel=1e-10)


def test_dissipation_elliptic_variants():
    g = GRIDS[0]
    w = 0.2 * _smooth(g, 4)
    for variant in ("tw", "twd"):
        p = ModelParams(variant=variant)
        ww = w - mean(w, g) if variant == "tw" else w
        u = _gibbs(ww, g, 3.0)
        assert fn.dissipation(State(u, u, ww, g), p) < 1e-12
        assert fn.dissipation(State(u, 0.5 * u, ww, g), p) > 0
    with pytest.raises(ValueError):
        fn.signal_rate(State(u, u, w, g), ModelParams())


def test_energy_lower_bound_trivial_and_mass_check():
    g = rect(1.0, 1.0, 4, 4)
    s = State(np.ones(g.n), np.zeros(g.n), np.zeros(g.n), g)
    assert fn.energy_lower_bound(s, ModelParams(), 1.0) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        fn.energy_lower_bound(s, ModelParams(), 2.0)


@pytest.mark.parametrize("g", GRIDS)
def test_lower_bound_equality_case(g):
    p = ModelParams(delta=0.4)
    for seed in range(5):
        w = _smooth(g, seed)
        M = 1.0 + seed
        u = _gibbs(w, g, M)
        s = State(u, u, w, g)
        assert fn.energy(s, p).E0 == pytest.approx(fn.energy_lower_bound(s, p, M), abs=1e-8)


def test_lower_bound_holds_for_many_random_states():
    g = radial_disk(1.0, 16)
    p = ModelParams(delta=0.8)
    rng = np.random.default_rng(0)
    worst = np.inf
    for _ in range(10_000):
        M = rng.uniform(0.1, 30.0)
        u = rng.exponential(size=g.n) * (rng.uniform(size=g.n) < 0.8)
        u = u + (u.sum() == 0)
        u *= M / integrate(u, g)
        w = rng.normal(scale=rng.uniform(0.1, 3.0), size=g.n)
        s = State(u, u, w, g)
        worst = min(worst, fn.energy(s, p).E0 - fn.energy_lower_bound(s, p, M))
    assert worst >= -1e-10


def test_F_functional_basics():
    g = GRIDS[2]
    p = ModelParams()
    assert fn.F_functional(np.zeros(g.n), g, p, 3.0) == 0.0
    W = _smooth(g, 7)
    W -= mean(W, g)
    with pytest.raises(ValueError):
        fn.F_functional(W + 1.0, g, p, 3.0)
    f2, f3 = (fn.F_functional(t * W, g, p, 3.0) for t in (1e-2, 1e-3))
    assert f2 / f3 == pytest.approx(100.0, rel=0.02)


@pytest.mark.parametrize("g", GRIDS)
def test_reduced_energy_is_gauge_shift_of_F(g):
    p = ModelParams(delta=0.6)
    M = 7.0
    W = _smooth(g, 8)
    W -= mean(W, g)
    w = W + M / (p.delta * g.area)
    u = _gibbs(w, g, M)
    lower = fn.energy_lower_bound(State(u, u, w, g), p, M)
    expect = M / g.area * fn.F_functional(W, g, p, M) + fn.gauge_constant(M, p, g.area)
    assert lower == pytest.approx(expect, rel=1e-11, abs=1e-11)


def test_energy_change_matches_difference():
    g = GRIDS[0]
    p = ModelParams(eps=0.4)
    rng = np.random.default_rng(3)
    a = State(rng.uniform(0, 2, g.n), rng.uniform(0, 2, g.n), rng.normal(size=g.n), g)
    b = State(rng.uniform(0, 2, g.n), rng.uniform(0, 2, g.n), rng.normal(size=g.n), g)
    for relax in (True, False):
        key = "E" if relax else "E0"
        diff = getattr(fn.energy(b, p), key) - getattr(fn.energy(a, p), key)
        assert fn.energy_change(a, b, p, relax) == pytest.approx(diff, rel=1e-11, abs=1e-12)
    assert fn.energy_change(a, a.copy(), p) == 0.0


P_GENERAL = ModelParams(nu=1.5, eps=0.5, delta=0.8)


def test_mass_v_law():
    p = P_GENERAL
    assert fn.closed_form_mass_v(0.0, 3.0, 1.0, p) == 1.0
    assert fn.closed_form_mass_v(50 * p.relaxation_time, 3.0, 1.0, p) == pytest.approx(3.0,
                                                                                     rel=1e-10)
    for t in (0.0, 0.3, 10.0):
        assert fn.closed_form_mass_v(t, 3.0, 3.0, p) == pytest.approx(3.0, rel=1e-15)
    with pytest.raises(ValueError):
        fn.closed_form_mass_v(-1.0, 1.0, 1.0, p)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 20.0), st.floats(0.0, 10.0), st.floats(0.1, 10.0))
def test_mass_v_satisfies_its_ode(t, vin, M):
    p = P_GENERAL
    h = 1e-5
    d = (fn.closed_form_mass_v(t + h, M, vin, p) - fn.closed_form_mass_v(t - h, M, vin, p)) / (2 * h)
    assert p.relaxation_time * d + fn.closed_form_mass_v(t, M, vin, p) == pytest.approx(
        M, abs=1e-6 * (1 + M + vin))


@pytest.mark.parametrize("eps", [0.5, 1.25, 1.0 / 0.8])
def test_mass_w_matches_integrated_ode(eps):
    p = ModelParams(nu=1.5, eps=eps, delta=0.8)
    M, vin, win = 2.0, 0.5, 4.0

    def rhs(_, y):
        return [(M - y[0]) / p.relaxation_time, (-p.delta * y[1] + y[0]) / p.nu]

    ts = np.linspace(0.0, 15.0, 31)
    sol = solve_ivp(rhs, (0, 15.0), [vin, win], t_eval=ts, rtol=1e-12, atol=1e-12)
    for t, w in zip(ts, sol.y[1]):
        assert fn.closed_form_mass_w(t, M, vin, win, p) == pytest.approx(w, rel=1e-8)


def test_mass_w_equilibria_and_initial_value():
    p = P_GENERAL
    assert fn.closed_form_mass_w(0.0, 2.0, 0.3, 1.7, p) == pytest.approx(1.7, rel=1e-15)
    for t in (0.0, 1.0, 100.0):
        assert fn.closed_form_mass_w(t, 2.0, 2.0, 2.0 / p.delta, p) == pytest.approx(
            2.0 / p.delta, rel=1e-14)


def test_mass_w_continuous_across_degeneracy():
    delta = 0.8
    for t in (0.1, 1.0, 5.0):
        ref = fn.closed_form_mass_w(t, 2.0, 0.5, 1.0, ModelParams(eps=1 / delta, delta=delta))
        for s in (1 + 1e-6, 1 - 1e-6):
            p = ModelParams(eps=s / delta, delta=delta)
            assert fn.closed_form_mass_w(t, 2.0, 0.5, 1.0, p) == pytest.approx(ref, rel=1e-4)


@pytest.mark.parametrize("eps", [0.3, 1.25, 4.0])
def test_mass_w_stays_below_uniform_bound(eps):
    p = ModelParams(nu=1.0, eps=eps, delta=0.8)
    bound = fn.mass_w_bound(3.0, 0.2, 1.0, p)
    ts = np.linspace(0.0, 40.0, 100)
    assert max(fn.closed_form_mass_w(t, 3.0, 0.2, 1.0, p) for t in ts) <= bound

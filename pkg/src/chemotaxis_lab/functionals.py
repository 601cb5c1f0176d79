"""Energies, dissipation and closed-form L1 laws evaluated on discrete states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import elliptic
from .grid import Grid
from .model import ModelParams, State, Variant
from .operators import (entropy_production, gradient_sq_norm, integrate, l2_sq,
                        laplacian_neumann, mean)

DEGENERACY_TOL = 1e-9


def entropy_L(r):
    """``L(r) = r ln r - r + 1`` with the limit value ``L(0) = 1``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("entropy_L is only defined for r >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)) - r + 1.0, 1.0)
    return out if out.ndim else float(out)


def log_exp_integral(w: np.ndarray, grid: Grid) -> float:
    """``ln ||e^w||_1`` by the midpoint rule, without overflow."""
    return float(logsumexp(w, b=grid.volumes))


def elliptic_residual(state: State, params: ModelParams) -> np.ndarray:
    """Defect of the signal equation: ``-D lap w + delta w - v`` (``tw``: ``-D lap w + <v> - v``)."""
    g = state.grid
    lap = laplacian_neumann(state.w, g)
    if params.variant is Variant.TW:
        return -params.diff * lap + mean(state.v, g) - state.v
    return -params.diff * lap + params.delta * state.w - state.v


@dataclass(frozen=True)
class EnergyReport:
    entropy_term: float
    coupling_term: float
    grad_term: float
    l2_term: float
    relax_term: float
    E0: float
    E: float


def energy(state: State, params: ModelParams) -> EnergyReport:
    g = state.grid
    delta = params.effective_delta
    ent = integrate(entropy_L(state.u), g)
    coup = integrate(state.u * state.w, g)
    grad = 0.5 * params.diff * gradient_sq_norm(state.w, g)
    l2 = 0.5 * delta * l2_sq(state.w, g)
    relax = 0.5 * params.eps * l2_sq(elliptic_residual(state, params), g)
    E0 = ent - coup + grad + l2
    return EnergyReport(ent, coup, grad, l2, relax, E0, E0 + relax)


def _pair_diff(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """``sum weights (b^2 - a^2)`` as ``sum weights (b - a)(b + a)``."""
    return math.fsum(weights * (b - a) * (b + a))


def energy_change(old: State, new: State, params: ModelParams, relax: bool = True) -> float:
    """``E(new) - E(old)`` (``E0`` when ``relax`` is false) from cellwise differences.

    Subtracting two energies of size O(1) loses about 1e-16 absolute, which
    the difference quotient ``/dt`` amplifies; differencing cell by cell
    keeps the result exact for unchanged states.
    """
    g = old.grid
    vol, T = g.volumes, g.trans
    lu0 = np.where(old.u > 0, old.u * np.log(np.maximum(old.u, 1e-300)), 0.0)
    lu1 = np.where(new.u > 0, new.u * np.log(np.maximum(new.u, 1e-300)), 0.0)
    ent = math.fsum(vol * ((lu1 - lu0) - (new.u - old.u)))
    coup = math.fsum(vol * ((new.u - old.u) * new.w + old.u * (new.w - old.w)))
    dw0 = old.w[g.right] - old.w[g.left]
    dw1 = new.w[g.right] - new.w[g.left]
    grad = 0.5 * params.diff * _pair_diff(dw0, dw1, T)
    l2 = 0.5 * params.effective_delta * _pair_diff(old.w, new.w, vol)
    out = ent - coup + grad + l2
    if relax:
        out += 0.5 * params.eps * _pair_diff(elliptic_residual(old, params),
                                             elliptic_residual(new, params), vol)
    return out


def signal_rate(state: State, params: ModelParams) -> np.ndarray:
    """Instantaneous ``w_t`` of the elliptic variants, from ``v_t = (u - v)/(nu eps)``."""
    vt = (state.u - state.v) / params.relaxation_time
    if params.variant is Variant.TW:
        return elliptic.solve_mean_zero(vt, state.grid, params.diff)
    if params.variant is Variant.TWD:
        return elliptic.solve_shifted(vt, state.grid, params.diff, params.delta)
    raise ValueError("signal_rate is defined for the elliptic variants only")


def dissipation(state: State, params: ModelParams) -> float:
    """Dissipation of the variant's Liapunov functional.

    ``a1``:  ``int u|grad(ln u - w)|^2 + (1+delta eps)/nu ||R||^2 + eps D/nu ||grad R||^2``
    with ``R = -D lap w + delta w - v``.

    ``tw``/``twd``: ``int u|grad(ln u - w)|^2 + nu eps (D ||grad w_t||^2 + delta ||w_t||^2)``
    (``delta = 0`` for ``tw``), with ``w_t`` the exact rate of the elliptic signal.
    """
    g = state.grid
    fisher = entropy_production(state.u, state.w, g)
    if params.variant is Variant.A1:
        R = elliptic_residual(state, params)
        return (fisher
                + (1.0 + params.delta * params.eps) / params.nu * l2_sq(R, g)
                + params.eps * params.diff / params.nu * gradient_sq_norm(R, g))
    wt = signal_rate(state, params)
    return fisher + params.relaxation_time * (
        params.diff * gradient_sq_norm(wt, g) + params.effective_delta * l2_sq(wt, g))


def energy_lower_bound(state: State, params: ModelParams, M: float) -> float:
    """``D/2 ||grad w||^2 + delta/2 ||w||^2 - M ln||e^w||_1 + M ln M - M + |Omega|``.

    Bounds ``E0(u, w)`` from below for every ``u >= 0`` of mass ``M``, with
    equality iff ``u = M e^w / ||e^w||_1``.
    """
    g = state.grid
    mass = integrate(state.u, g)
    if abs(mass - M) > 1e-8 * max(1.0, abs(M)):
        raise ValueError(f"state mass {mass!r} does not match M = {M!r}")
    return (0.5 * params.diff * gradient_sq_norm(state.w, g)
            + 0.5 * params.effective_delta * l2_sq(state.w, g)
            - M * log_exp_integral(state.w, g) + M * math.log(M) - M + g.area)


def F_functional(W: np.ndarray, grid: Grid, params: ModelParams, M: float) -> float:
    """``|Omega|/(2M) (D||grad W||^2 + delta||W||^2) - |Omega| ln(||e^W||_1 / |Omega|)`` for mean-zero W."""
    m = mean(W, grid)
    if abs(m) > 1e-8 * max(1.0, float(np.max(np.abs(W)))):
        raise ValueError(f"F_functional needs a mean-zero argument, got mean {m:.3e}")
    A = grid.area
    quad = params.diff * gradient_sq_norm(W, grid) + params.effective_delta * l2_sq(W, grid)
    return A / (2.0 * M) * quad - A * (log_exp_integral(W, grid) - math.log(A))


def gauge_constant(M: float, params: ModelParams, area: float) -> float:
    """``chi`` in ``E(w) = (M/|Omega|) F(w - <w>) + chi`` when ``<w> = M/(delta |Omega|)``."""
    return (-M * M / (2.0 * params.delta * area) + M * math.log(M) - M + area
            - M * math.log(area))


def constant_state_energy(M: float, params: ModelParams, area: float) -> float:
    """Energy of ``u = v = M/|Omega|``, ``w = M/(delta |Omega|)``."""
    return area * float(entropy_L(M / area)) - M * M / (2.0 * params.delta * area)


def closed_form_mass_v(t: float, M: float, v_in_mass: float, params: ModelParams) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    decay = math.exp(-t / params.relaxation_time)
    return v_in_mass * decay + M * (1.0 - decay)


def closed_form_mass_w(t: float, M: float, v_in_mass: float, w_in_mass: float,
                       params: ModelParams) -> float:
    """L1 norm of ``w`` for the fully parabolic model, including the ``delta eps = 1`` branch."""
    if t < 0:
        raise ValueError("t must be non-negative")
    nu, eps, delta = params.nu, params.eps, params.delta
    slow = math.exp(-delta * t / nu)
    base = M / delta + (w_in_mass - M / delta) * slow
    de = delta * eps - 1.0
    if abs(de) > DEGENERACY_TOL:
        return base + eps / de * (v_in_mass - M) * (math.exp(-t / (nu * eps)) - slow)
    return base + (v_in_mass - M) / nu * t * slow


def mass_w_bound(M: float, v_in_mass: float, w_in_mass: float, params: ModelParams) -> float:
    """Time-uniform upper bound ``||w_in||_1 + M/delta + b0 (||v_in||_1 + M)``."""
    de = params.delta * params.eps - 1.0
    b0 = params.eps / abs(de) if abs(de) > DEGENERACY_TOL else 1.0 / (params.delta * math.e)
    return w_in_mass + M / params.delta + b0 * (v_in_mass + M)

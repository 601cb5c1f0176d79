"""Initial states: equilibria, mass-normalised bumps, and the concentrating Theta_eta family."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import elliptic
from .functionals import F_functional, energy, gauge_constant
from .grid import Grid
from .model import ModelParams, State, Variant
from .operators import gradient_sq_norm, integrate, laplacian_neumann, mean


def _signal_for(v: np.ndarray, params: ModelParams, grid: Grid) -> np.ndarray:
    """``w`` with zero signal-equation defect for the given ``v``."""
    if params.variant is Variant.TW:
        return elliptic.solve_mean_zero(v, grid, params.diff)
    return elliptic.solve_shifted(v, grid, params.diff, params.delta)


def _mean_signal(M: float, params: ModelParams, grid: Grid) -> float:
    return 0.0 if params.variant is Variant.TW else M / (params.delta * grid.area)


def build_constant(M: float, params: ModelParams, grid: Grid) -> State:
    if M <= 0:
        raise ValueError("M must be positive")
    n = grid.n
    u = np.full(n, M / grid.area)
    return State(u, u.copy(), np.full(n, _mean_signal(M, params, grid)), grid, 0.0)


def _distance(grid: Grid, center) -> np.ndarray:
    if grid.is_radial:
        r0 = float(np.atleast_1d(center)[0]) if center is not None else 0.0
        return np.abs(grid.radii() - r0)
    return grid.distance_to(center)


def bump_profile(grid: Grid, center, width: float) -> np.ndarray:
    """Compactly supported ``cos(pi s / 2)^4`` (C^3), ``s = |x - center| / width``.

    On a radial grid ``center`` is a radius: 0 gives a centered bump, a
    positive value a ring.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    s = _distance(grid, center) / width
    out = np.zeros(grid.n)
    inside = s < 1.0
    out[inside] = np.cos(0.5 * np.pi * s[inside]) ** 4
    return out


def build_bump(M: float, center, width: float, params: ModelParams, grid: Grid,
               background: float = 0.0) -> State:
    """``u = v`` a mass-``M`` bump, ``w`` solving the signal equation exactly.

    ``background`` is the fraction of the mass spread uniformly over the domain.
    """
    if M <= 0 or not 0.0 <= background < 1.0:
        raise ValueError("need M > 0 and 0 <= background < 1")
    phi = bump_profile(grid, center, width)
    mphi = integrate(phi, grid)
    if mphi <= 0:
        raise ValueError("bump is narrower than the grid resolution")
    u = M * ((1.0 - background) * phi / mphi + background / grid.area)
    return State(u, u.copy(), _signal_for(u, params, grid), grid, 0.0)


def build_random(M: float, params: ModelParams, grid: Grid, rng: np.random.Generator,
                 n_bumps: int = 3) -> State:
    """Random smooth non-negative state with ``integrate(u) = M``.

    ``u`` and ``v`` are independent sums of Gaussians over a positive floor;
    for ``a1`` the signal ``w`` is an independent smooth field, so the
    state is generally far from the signal equation.
    """

    def blob():
        f = np.full(grid.n, rng.uniform(0.05, 0.5))
        scale = math.sqrt(grid.area)
        for _ in range(n_bumps):
            if grid.is_radial:
                d = np.abs(grid.radii() - rng.uniform(0.0, 0.8) * scale)
            else:
                c = grid.centers[rng.integers(grid.n)]
                d = grid.distance_to(c)
            width = rng.uniform(0.1, 0.4) * scale
            f += rng.uniform(0.2, 1.0) * np.exp(-(d / width) ** 2)
        return f

    u = blob()
    u *= M / integrate(u, grid)
    v = blob()
    v *= rng.uniform(0.5, 1.5) * M / integrate(v, grid)
    if params.variant is Variant.A1:
        w = blob()
        w *= rng.uniform(0.5, 1.5) * M / (params.delta * integrate(w, grid))
    else:
        w = _signal_for(v, params, grid)
    return State(u, v, w, grid, 0.0)


@dataclass(frozen=True)
class ThetaEtaSpec:
    eta: float
    M: float
    anchor: Optional[Sequence[float]] = None  # default: origin (radial) or (radius, 0)

    def __post_init__(self):
        if not (self.eta > 0 and self.M > 0):
            raise ValueError("eta and M must be positive")


@dataclass
class ThetaEtaData:
    state: State
    W: np.ndarray            # mean-zero profile actually used
    v_unclipped: np.ndarray  # exact discrete -D lap w + delta w
    clipped_mass: float
    anchor: np.ndarray
    profile: str


class UnresolvedProfileError(ValueError):
    pass


def theta_eta(grid: Grid, eta: float, anchor) -> np.ndarray:
    """Mean-zero ``2 ln(eta / (eta^2 + pi |x - x0|^2))`` sampled at cell centers."""
    d2 = grid.distance_to(anchor) ** 2
    th = 2.0 * np.log(eta / (eta**2 + np.pi * d2))
    return th - mean(th, grid)


def _theta_source(grid: Grid, eta: float, anchor) -> np.ndarray:
    """``-lap`` of the unsubtracted profile, in closed form."""
    d2 = grid.distance_to(anchor) ** 2
    return 8.0 * np.pi * eta**2 / (eta**2 + np.pi * d2) ** 2


def resolve_anchor(grid: Grid, anchor) -> np.ndarray:
    if grid.is_radial:
        if anchor is not None and np.any(np.asarray(anchor, dtype=float) != 0.0):
            raise ValueError("radial grids only support the origin as anchor")
        return np.zeros(2)
    if anchor is None:
        if grid.kind == "polar":
            anchor = (grid.spec["radius"], 0.0)
        else:
            anchor = (0.0, grid.spec["ly"] / 2.0)
    return grid.nearest_boundary_center(anchor)


def build_theta_eta(spec: ThetaEtaSpec, params: ModelParams, grid: Grid,
                    profile: str = "neumann") -> ThetaEtaData:
    """Low-energy concentrated data ``w = W + M/(delta|Omega|)``, ``u = M e^w / ||e^w||_1``.

    ``profile="sampled"`` takes ``W`` as the mean-zero logarithmic profile
    sampled at cell centers.  ``profile="neumann"`` (default) takes the
    mean-zero solution of ``-lap W = g - <g>`` with ``g`` the closed-form
    ``-lap`` of that profile: it has the same logarithmic core but satisfies
    the no-flux condition, so ``v = -D lap w + delta w`` stays non-negative
    for masses above the concentration threshold.

    ``v`` is the exact discrete value, clipped at zero; the clipped mass is
    reported.
    """
    x0 = resolve_anchor(grid, spec.anchor)
    if profile == "sampled":
        W = theta_eta(grid, spec.eta, x0)
    elif profile == "neumann":
        W = elliptic.solve_mean_zero(_theta_source(grid, spec.eta, x0), grid, 1.0)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    M = spec.M
    w = W + _mean_signal(M, params, grid)
    e = np.exp(w - w.max())
    share = e * grid.volumes / integrate(e, grid)
    core = grid.locate(x0)
    if share[core] > 0.5:
        raise UnresolvedProfileError(
            f"eta = {spec.eta:g} is unresolved: the anchor cell carries {share[core]:.1%} "
            f"of ||e^w||_1; use eta >= {minimum_resolved_eta(grid, x0):.3g}")
    u = M * share / grid.volumes
    lap = laplacian_neumann(w, grid)
    if params.variant is Variant.TW:
        v_raw = -params.diff * lap + M / grid.area
    else:
        v_raw = -params.diff * lap + params.delta * w
    v = np.maximum(v_raw, 0.0)
    clipped = integrate(v - v_raw, grid)
    return ThetaEtaData(State(u, v, w, grid, 0.0), W, v_raw, clipped, x0, profile)


def minimum_resolved_eta(grid: Grid, anchor) -> float:
    """Smallest ``eta`` on a geometric ladder whose sampled core is resolved."""
    anchor = resolve_anchor(grid, anchor)
    core = grid.locate(anchor)
    eta = 1.0
    while eta > 1e-8:
        e = np.exp(theta_eta(grid, eta / 2.0, anchor))
        if e[core] * grid.volumes[core] / integrate(e, grid) > 0.5:
            return eta
        eta /= 2.0
    return eta


@dataclass(frozen=True)
class ProbeRow:
    eta: float
    F_theta: float       # functional of the sampled mean-zero profile
    grad_theta: float    # ||grad Theta_eta||_2 of the sampled profile
    F_W: float           # functional of the profile used for the state
    E: float             # Liapunov energy of the (clipped) state
    E_preclip: float     # same with the unclipped v (relaxation term zero)
    identity_defect: float  # E_preclip - (M/|Omega|) F_W - chi
    clipped_mass: float
    clipped_fraction: float


@dataclass
class ProbeTable:
    M: float
    rows: list[ProbeRow]

    def _strict(self, key, sign) -> bool:
        vals = [getattr(r, key) for r in self.rows]
        return all(sign * (b - a) > 0 for a, b in zip(vals, vals[1:]))

    @property
    def F_decreasing(self) -> bool:
        return self._strict("F_theta", -1)

    @property
    def grad_increasing(self) -> bool:
        return self._strict("grad_theta", +1)

    @property
    def E_decreasing(self) -> bool:
        return self._strict("E", -1)

    @property
    def max_identity_defect(self) -> float:
        return max(abs(r.identity_defect) for r in self.rows)


def energy_divergence_probe(M: float, params: ModelParams, grid: Grid,
                            etas: Sequence[float], anchor=None,
                            profile: str = "neumann") -> ProbeTable:
    """Tabulate the functional and the energy along ``Theta_eta`` as ``eta`` decreases."""
    etas = list(etas)
    if any(e <= 0 for e in etas) or any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be positive and strictly decreasing")
    if params.variant is Variant.TW:
        raise ValueError("the energy probe needs a positive degradation rate")
    chi = gauge_constant(M, params, grid.area)
    rows = []
    for eta in etas:
        data = build_theta_eta(ThetaEtaSpec(eta, M, anchor), params, grid, profile)
        th = theta_eta(grid, eta, data.anchor)
        s = data.state
        pre = State(s.u, data.v_unclipped, s.w, grid, 0.0)
        E_pre = energy(pre, params).E
        F_W = F_functional(data.W, grid, params, M)
        rows.append(ProbeRow(
            eta=eta,
            F_theta=F_functional(th, grid, params, M),
            grad_theta=math.sqrt(gradient_sq_norm(th, grid)),
            F_W=F_W,
            E=energy(s, params).E,
            E_preclip=E_pre,
            identity_defect=E_pre - (M / grid.area * F_W + chi),
            clipped_mass=data.clipped_mass,
            clipped_fraction=data.clipped_mass / integrate(np.abs(data.v_unclipped), grid),
        ))
    return ProbeTable(M, rows)


def stationary_seeds(M: float, params: ModelParams, grid: Grid) -> dict[str, np.ndarray]:
    """Signal seeds for the stationary solver: constant, centered bump, boundary bump."""
    const = np.full(grid.n, _mean_signal(M, params, grid))
    if grid.is_radial:
        R = grid.spec["radius"]
        centre, edge, width = 0.0, R, 0.5 * R
    elif grid.kind == "polar":
        R = grid.spec["radius"]
        centre, edge, width = (0.0, 0.0), (R, 0.0), 0.5 * R
    else:
        lx, ly = grid.spec["lx"], grid.spec["ly"]
        centre, edge, width = (lx / 2, ly / 2), (0.0, ly / 2), 0.5 * max(lx, ly)
    seeds = {"constant": const}
    for name, c in (("centered_bump", centre), ("boundary_bump", edge)):
        seeds[name] = build_bump(M, c, width, params, grid, background=0.1).w
    return seeds


__all__ = [
    "build_constant", "build_bump", "build_random", "bump_profile", "ThetaEtaSpec",
    "ThetaEtaData", "UnresolvedProfileError", "theta_eta", "build_theta_eta",
    "minimum_resolved_eta", "ProbeRow", "ProbeTable", "energy_divergence_probe",
    "stationary_seeds",
]

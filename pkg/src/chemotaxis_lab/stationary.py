"""Steady states ``-D lap w + delta w = M e^w / ||e^w||_1`` with ``u = v = M e^w / ||e^w||_1``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from . import elliptic
from .dynamics import StepConfig, run
from .functionals import energy
from .grid import Grid
from .model import ModelParams, State, Variant
from .operators import integrate, laplacian_neumann

log = logging.getLogger(__name__)

# residuals below this fraction of max u are at the rounding floor
ROUNDING_FLOOR = 1e-13


class StationaryConvergenceError(RuntimeError):
    def __init__(self, msg, residual=np.inf, w_last=None):
        super().__init__(msg)
        self.residual = residual
        self.w_last = w_last


class StationaryOverflowError(StationaryConvergenceError):
    pass


@dataclass
class StationaryState:
    w_star: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    mass: float
    residual: float
    energy: float
    iterations: int
    grid: Grid = field(repr=False)

    def as_state(self) -> State:
        return State(self.u_star.copy(), self.v_star.copy(), self.w_star.copy(), self.grid)

    @property
    def peak_cell_fraction(self) -> float:
        """Largest share of the mass held by a single cell."""
        return float(np.max(self.u_star * self.grid.volumes)) / self.mass


def gibbs_density(w: np.ndarray, M: float, grid: Grid) -> np.ndarray:
    """``M e^w / ||e^w||_1``, computed from ``e^(w - max w)``."""
    e = np.exp(w - np.max(w))
    return M * e / integrate(e, grid)


def stationary_residual(w: np.ndarray, M: float, params: ModelParams, grid: Grid) -> float:
    """Max-norm defect of the nonlocal equation."""
    r = (-params.diff * laplacian_neumann(w, grid) + params.delta * w
         - gibbs_density(w, M, grid))
    return float(np.max(np.abs(r)))


def solve_stationary(M: float, params: ModelParams, grid: Grid, w_seed: np.ndarray,
                     damping: float = 0.5, tol: float = 1e-10,
                     max_iters: int = 5000) -> StationaryState:
    """Damped fixed point ``w <- (1 - theta) w + theta (-D lap + delta)^{-1} [M e^w/||e^w||_1]``.

    Converges to whichever steady state attracts ``w_seed``; above the
    critical mass several may exist and uniqueness is never claimed.  The
    iteration stops when the max-norm residual is below ``tol``, or below
    ``ROUNDING_FLOOR * max u`` for concentrated states whose residual
    cannot reach an absolute ``tol`` in floating point.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if params.variant is Variant.TW:
        raise ValueError("the steady-state problem needs a positive degradation rate")
    w = np.array(w_seed, dtype=float)
    if w.shape != (grid.n,):
        raise ValueError("w_seed does not match the grid")
    res = np.inf
    for it in range(max_iters + 1):
        if not np.all(np.isfinite(w)):
            raise StationaryOverflowError(
                f"iterate overflowed after {it} iterations (max w = {np.nanmax(w):.3e})",
                res, w)
        res = stationary_residual(w, M, params, grid)
        u = gibbs_density(w, M, grid)
        if res <= max(tol, ROUNDING_FLOOR * float(np.max(u))):
            st = State(u, u.copy(), w, grid)
            return StationaryState(w, u, u.copy(), M, res, energy(st, params).E, it, grid)
        if it == max_iters:
            break
        target = elliptic.solve_shifted(u, grid, params.diff, params.delta)
        w = (1.0 - damping) * w + damping * target
    raise StationaryConvergenceError(
        f"no convergence after {max_iters} iterations (residual {res:.3e}, "
        f"max w = {np.max(w):.3e}); try a smaller damping", res, w)


@dataclass
class StationarySample:
    """Steady states reached from a set of seeds.

    States with more than ``max_cell_fraction`` of the mass in one cell are
    grid artifacts: their energy diverges under refinement, so they are
    kept in ``states`` but left out of ``mu_upper_bound``.
    """

    seeds: list[str]
    states: dict[str, StationaryState]
    failures: dict[str, str]
    max_cell_fraction: float = 0.5

    @property
    def resolved(self) -> dict[str, StationaryState]:
        return {k: s for k, s in self.states.items()
                if s.peak_cell_fraction <= self.max_cell_fraction}

    @property
    def mu_upper_bound(self) -> float:
        resolved = self.resolved
        if not resolved:
            raise RuntimeError("no seed produced a converged, resolved steady state")
        return min(s.energy for s in resolved.values())


def sample_stationary(M: float, params: ModelParams, grid: Grid,
                      seeds: Union[Mapping[str, np.ndarray], Iterable[np.ndarray]],
                      max_cell_fraction: float = 0.5, **solver_kw) -> StationarySample:
    if not isinstance(seeds, Mapping):
        seeds = {f"seed{i}": s for i, s in enumerate(seeds)}
    states, failures = {}, {}
    for name, seed in seeds.items():
        try:
            states[name] = solve_stationary(M, params, grid, seed, **solver_kw)
        except StationaryConvergenceError as exc:
            log.info("seed %s did not converge: %s", name, exc)
            failures[name] = str(exc)
    return StationarySample(list(seeds), states, failures, max_cell_fraction)


def estimate_mu_M(M: float, params: ModelParams, grid: Grid,
                  seeds: Union[Mapping[str, np.ndarray], Iterable[np.ndarray]],
                  **solver_kw) -> float:
    """Smallest energy among the resolved steady states reached from ``seeds``.

    This is an upper bound on the infimum over all steady states of mass
    ``M``; sampling cannot certify the infimum itself.
    """
    return sample_stationary(M, params, grid, seeds, **solver_kw).mu_upper_bound


def verify_stationary_under_flow(s: StationaryState, params: ModelParams, cfg: StepConfig,
                                 n_steps: Optional[int] = None) -> float:
    """Max relative drift of ``(u, v, w)`` after ``n_steps`` steps of the parabolic flow."""
    if s.residual > 1e-10:
        raise ValueError(f"steady state residual {s.residual:.3e} exceeds 1e-10")
    n = cfg.n_steps if n_steps is None else n_steps
    if n == 0:
        return 0.0
    cfg_n = StepConfig(**{**cfg.to_dict(), "t_end": n * cfg.dt, "output_every": n})
    final = run(s.as_state(), params, cfg_n).final_state
    drift = 0.0
    for a, b in ((final.u, s.u_star), (final.v, s.v_star), (final.w, s.w_star)):
        drift = max(drift, float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)))
    return drift

"""Time stepping for the three model variants.

One step of the fully parabolic model (``a1``) performs, in order:

1. ``w``: implicit Euler, ``(nu/dt)(w' - w) = D lap w' - delta w' + v``;
2. ``v``: exact integrating factor with ``u`` frozen, ``v' = u + (v - u) exp(-dt/(nu eps))``;
3. ``u``: implicit Euler for ``u_t = div(grad u - u grad w')`` with the
   exponentially fitted flux (see :mod:`chemotaxis_lab.operators`).

The elliptic variants update ``v`` first and then solve for ``w`` from the
new ``v``, so every returned state satisfies the signal equation.  All three
sub-steps are linear and preserve non-negativity; the ``u`` step conserves
mass exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import elliptic
from .functionals import dissipation, energy
from .model import Diagnostics, ModelParams, State, Variant
from .operators import (FactorizedSystem, face_diff, h1_norm, implicit_drift_diffusion,
                        integrate, stiffness_apply, stiffness_matrix)

log = logging.getLogger(__name__)


class CFLError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    """Raised when a run produces non-finite values; carries the last good state."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class StepConfig:
    dt: float
    t_end: float
    output_every: int = 1
    linear_tol: float = 1e-12
    max_linear_iters: int = 3
    # "record": track the advective CFL number only; "error": raise when it
    # exceeds 1; "halve": split the offending step into 2^k sub-steps.
    cfl_policy: str = "record"
    growth_cap: float = 1e8
    # abort when one cell holds more than this fraction of the mass
    resolution_fraction: Optional[float] = None
    keep_snapshots: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0 and self.output_every >= 1):
            raise ValueError("dt, t_end must be positive and output_every >= 1")
        if self.cfl_policy not in ("record", "error", "halve"):
            raise ValueError(f"unknown cfl_policy {self.cfl_policy!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    diagnostics: list[Diagnostics] = field(default_factory=list)
    snapshots: list[State] = field(default_factory=list)
    status: str = "completed"  # or "cap_reached"
    cap_reason: str = ""
    steps: int = 0
    min_u: float = math.inf
    min_v: float = math.inf
    max_cfl: float = 0.0
    final_state: Optional[State] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics])


def cfl_number(w: np.ndarray, grid, dt: float) -> float:
    """``dt * max |grad w| / h`` over faces."""
    speed = np.abs(face_diff(w, grid)) / grid.face_dists
    return float(dt * np.max(speed / grid.face_dists)) if speed.size else 0.0


class Integrator:
    """Stepper for one (grid, params, dt) triple with cached factorizations."""

    def __init__(self, grid, params: ModelParams, cfg: StepConfig):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self._w_systems: dict[float, FactorizedSystem] = {}

    def _w_system(self, dt: float) -> FactorizedSystem:
        sys_ = self._w_systems.get(dt)
        if sys_ is None:
            p, g = self.params, self.grid
            A = p.diff * stiffness_matrix(g) + sp.diags((p.nu / dt + p.delta) * g.volumes)
            sys_ = FactorizedSystem(A, self.cfg.linear_tol, self.cfg.max_linear_iters)
            self._w_systems[dt] = sys_
        return sys_

    def _solve_signal(self, v: np.ndarray, w_old: np.ndarray) -> np.ndarray:
        p, g, c = self.params, self.grid, self.cfg
        if p.variant is Variant.TW:
            return elliptic.solve_mean_zero(v, g, p.diff, c.linear_tol, c.max_linear_iters,
                                            guess=w_old)
        return elliptic.solve_shifted(v, g, p.diff, p.delta, c.linear_tol, c.max_linear_iters,
                                      guess=w_old)

    def _substep(self, s: State, dt: float) -> State:
        p, g, c = self.params, self.grid, self.cfg
        decay = math.exp(-dt / p.relaxation_time)
        if p.variant is Variant.A1:
            sys_ = self._w_system(dt)
            # correction form, exact for equilibria
            rhs = g.volumes * (s.v - p.delta * s.w) - p.diff * stiffness_apply(s.w, g)
            w = s.w + sys_.solve(rhs)
            v = s.u + (s.v - s.u) * decay
        else:
            v = s.u + (s.v - s.u) * decay
            w = self._solve_signal(v, s.w)
        u = implicit_drift_diffusion(s.u, w, dt, g, c.linear_tol, c.max_linear_iters)
        return State(u, v, w, g, s.time + dt)

    def step(self, s: State) -> tuple[State, float]:
        """Advance by ``cfg.dt``; returns the new state and the CFL number used."""
        dt = self.cfg.dt
        new = self._substep(s, dt)
        cfl = cfl_number(new.w, self.grid, dt)
        if cfl <= 1.0 or self.cfg.cfl_policy == "record":
            return new, cfl
        if self.cfg.cfl_policy == "error":
            raise CFLError(f"CFL number {cfl:.3g} > 1 at t = {s.time:.6g}")
        k = 1
        while True:
            m = 2**k
            sub, cur, ok = dt / m, s, True
            worst = 0.0
            for _ in range(m):
                cur = self._substep(cur, sub)
                worst = max(worst, cfl_number(cur.w, self.grid, sub))
                if worst > 1.0:
                    ok = False
                    break
            if ok or k >= 20:
                cur.time = s.time + dt
                return cur, worst
            k += 1


def _check_variant(params: ModelParams, want: Variant):
    if params.variant is not want:
        raise ValueError(f"expected variant {want.value}, got {params.variant.value}")


def step_a1(state: State, params: ModelParams, cfg: StepConfig) -> State:
    _check_variant(params, Variant.A1)
    return Integrator(state.grid, params, cfg).step(state)[0]


def step_tw(state: State, params: ModelParams, cfg: StepConfig) -> State:
    _check_variant(params, Variant.TW)
    return Integrator(state.grid, params, cfg).step(state)[0]


def step_twd(state: State, params: ModelParams, cfg: StepConfig) -> State:
    _check_variant(params, Variant.TWD)
    return Integrator(state.grid, params, cfg).step(state)[0]


def diagnose(state: State, params: ModelParams) -> Diagnostics:
    g = state.grid
    rep = energy(state, params)
    return Diagnostics(
        time=state.time,
        mass_u=integrate(np.abs(state.u), g),
        mass_v=integrate(np.abs(state.v), g),
        mass_w=integrate(np.abs(state.w), g),
        energy_E0=rep.E0,
        energy_E=rep.E,
        dissipation_D=dissipation(state, params),
        sup_u=float(np.max(state.u)),
        sup_v=float(np.max(state.v)),
        w_H1_norm=h1_norm(state.w, g),
    )


def run(initial: State, params: ModelParams, cfg: StepConfig,
        observer: Optional[Callable[[int, State], None]] = None) -> Trajectory:
    """Integrate from ``initial`` to ``cfg.t_end`` recording diagnostics.

    ``observer(n, state)`` is called after every step.  The run stops early
    (status ``cap_reached``) when ``sup u`` exceeds ``cfg.growth_cap`` or a
    single cell holds more than ``cfg.resolution_fraction`` of the mass.
    """
    initial.check_nonnegative(params)
    integ = Integrator(initial.grid, params, cfg)
    traj = Trajectory()
    g = initial.grid
    mass = integrate(initial.u, g)
    s = initial
    traj.min_u, traj.min_v = float(s.u.min()), float(s.v.min())
    traj.diagnostics.append(diagnose(s, params))
    if cfg.keep_snapshots:
        traj.snapshots.append(s.copy())
    for n in range(1, cfg.n_steps + 1):
        new, cfl = integ.step(s)
        if not (np.all(np.isfinite(new.u)) and np.all(np.isfinite(new.w))
                and np.all(np.isfinite(new.v))):
            raise SimulationError(f"non-finite values at step {n} (t = {new.time:.6g})", s)
        s = new
        traj.steps = n
        traj.max_cfl = max(traj.max_cfl, cfl)
        traj.min_u = min(traj.min_u, float(s.u.min()))
        traj.min_v = min(traj.min_v, float(s.v.min()))
        if observer is not None:
            observer(n, s)
        sup = float(s.u.max())
        reason = ""
        if sup >= cfg.growth_cap:
            reason = f"sup u = {sup:.3e} >= growth cap {cfg.growth_cap:.3e}"
        elif cfg.resolution_fraction is not None:
            frac = float(np.max(s.u * g.volumes)) / mass
            if frac > cfg.resolution_fraction:
                reason = f"one cell holds {frac:.2%} of the mass"
        if reason or n % cfg.output_every == 0 or n == cfg.n_steps:
            traj.diagnostics.append(diagnose(s, params))
            if cfg.keep_snapshots:
                traj.snapshots.append(s.copy())
        if reason:
            traj.status, traj.cap_reason = "cap_reached", reason
            log.info("growth cap reached at t = %.6g: %s", s.time, reason)
            break
    traj.final_state = s
    return traj

"""The five harness experiments.

Each experiment takes a :class:`RunConfig`, writes its outputs under
``cfg.out_dir`` and returns an :class:`ExperimentResult` whose ``ok`` flag
says whether every checked invariant held.  Wall-clock times are never
written, so identical configs give byte-identical outputs.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import Integrator, StepConfig, Trajectory, run
from ..functionals import constant_state_energy, dissipation, energy, energy_change
from ..grid import Grid, from_spec
from ..initdata import (ThetaEtaSpec, UnresolvedProfileError, build_bump, build_constant,
                        build_random, build_theta_eta, energy_divergence_probe,
                        stationary_seeds)
from ..model import ModelParams, State, Variant
from ..operators import integrate, mean
from ..stationary import (StationaryConvergenceError, sample_stationary, solve_stationary,
                          verify_stationary_under_flow)
from . import io
from .config import ConfigError, RunConfig

log = logging.getLogger(__name__)

CLIP_WARN_FRACTION = 0.01


@dataclass
class ExperimentResult:
    report: dict
    ok: bool
    failures: list = field(default_factory=list)


def _check(failures: list, cond: bool, msg: str) -> bool:
    if not cond:
        failures.append(msg)
    return bool(cond)


def threshold_general(diff: float) -> float:
    """Critical mass ``4 pi D`` for general domains."""
    return 4.0 * math.pi * diff


def threshold_radial(diff: float) -> float:
    """Critical mass ``8 pi D`` for radially symmetric data on a disk."""
    return 8.0 * math.pi * diff


# --- set-up ---------------------------------------------------------------

def build_grid(cfg: RunConfig) -> Grid:
    try:
        return from_spec(cfg.grid)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid spec {cfg.grid}: {exc}") from exc


def initial_state(cfg: RunConfig, grid: Grid) -> tuple[State, dict]:
    """Initial state for ``cfg.init`` plus facts about it for the report."""
    ini, params = cfg.init, cfg.model
    info: dict = {"kind": ini.kind, "mass": ini.mass}
    if ini.kind == "constant":
        s = build_constant(ini.mass, params, grid)
    elif ini.kind == "bump":
        center = ini.center if ini.center is not None else _default_center(grid)
        s = build_bump(ini.mass, center, ini.width, params, grid, ini.background)
    elif ini.kind == "random":
        s = build_random(ini.mass, params, grid, np.random.default_rng(cfg.seed))
    else:
        data = build_theta_eta(ThetaEtaSpec(ini.eta, ini.mass, ini.anchor), params, grid,
                               ini.profile)
        s = data.state
        vmass = integrate(np.abs(data.v_unclipped), grid)
        info.update(eta=ini.eta, anchor=data.anchor, clipped_mass=data.clipped_mass,
                    clipped_fraction=data.clipped_mass / vmass)
        if data.clipped_mass > CLIP_WARN_FRACTION * vmass:
            log.warning("clipping v removed %.2f%% of its mass",
                        100.0 * data.clipped_mass / vmass)
    return s, info


def _default_center(grid: Grid):
    if grid.is_radial:
        return 0.0
    if grid.kind == "polar":
        return (0.0, 0.0)
    return (grid.spec["lx"] / 2.0, grid.spec["ly"] / 2.0)


def _diag_dict(d) -> dict:
    return dict(zip(io.CSV_HEADER, d.row()))


class _Monitor:
    """Per-step observer: mass drift, signal mean (``tw``) and positivity."""

    def __init__(self, mass: float, grid: Grid, params: ModelParams):
        self.mass, self.grid, self.params = mass, grid, params
        self.max_mass_drift = 0.0
        self.max_abs_mean_w = 0.0
        self.negative_steps: list[int] = []

    def __call__(self, n: int, s: State) -> None:
        g = self.grid
        m = integrate(s.u, g)
        self.max_mass_drift = max(self.max_mass_drift, abs(m - self.mass) / self.mass)
        if self.params.variant is Variant.TW:
            self.max_abs_mean_w = max(self.max_abs_mean_w, abs(mean(s.w, g)))
        if s.u.min() < 0.0 or s.v.min() < 0.0:
            self.negative_steps.append(n)


def _common(cfg: RunConfig) -> dict:
    return {"config": cfg.to_dict(), "config_hash": cfg.hash(), "experiment": cfg.experiment}


# --- simulate -------------------------------------------------------------

def simulate(cfg: RunConfig, write: bool = True) -> tuple[ExperimentResult, Trajectory]:
    grid = build_grid(cfg)
    params = cfg.model
    s0, info = initial_state(cfg, grid)
    mass = integrate(s0.u, grid)
    mon = _Monitor(mass, grid, params)
    traj = run(s0, params, cfg.step, observer=mon)
    failures: list = []
    _check(failures, traj.min_u >= 0.0 and traj.min_v >= 0.0,
           f"positivity violated (min u = {traj.min_u:.3e}, min v = {traj.min_v:.3e})")
    _check(failures, mon.max_mass_drift <= cfg.mass_tol,
           f"mass drift {mon.max_mass_drift:.3e} > {cfg.mass_tol:.1e}")
    if params.variant is Variant.TW:
        _check(failures, mon.max_abs_mean_w <= 1e-12,
               f"signal mean drifted to {mon.max_abs_mean_w:.3e}")
    report = {
        **_common(cfg),
        "initial_data": info,
        "status": traj.status,
        "cap_reason": traj.cap_reason,
        "steps": traj.steps,
        "min_u": traj.min_u,
        "min_v": traj.min_v,
        "max_mass_drift": mon.max_mass_drift,
        "max_abs_mean_w": mon.max_abs_mean_w,
        "max_cfl": traj.max_cfl,
        "initial": _diag_dict(traj.diagnostics[0]),
        "final": _diag_dict(traj.diagnostics[-1]),
        "failures": failures,
        "ok": not failures,
    }
    if write:
        out = Path(cfg.out_dir)
        io.write_diagnostics_csv(out / "diagnostics.csv", traj.diagnostics)
        if cfg.write_fields:
            _write_trajectory_fields(out / "fields", s0, traj, grid)
        io.write_json(out / "report.json", report)
    return ExperimentResult(report, not failures, failures), traj


def _write_trajectory_fields(directory: Path, s0: State, traj: Trajectory, grid: Grid):
    snaps = traj.snapshots if traj.snapshots else [s0, traj.final_state]
    fields, times = {}, []
    for k, s in enumerate(snaps):
        for name in ("u", "v", "w"):
            fields[f"{name}_{k:05d}"] = getattr(s, name)
        times.append(s.time)
    io.write_fields(directory, fields, grid, {"snapshot_times": times})


# --- energy identity ------------------------------------------------------

def _energy_level(s0: State, params: ModelParams, step: StepConfig) -> dict:
    """Integrate one dt level, returning the identity residual and invariants."""
    grid = s0.grid
    integ = Integrator(grid, params, step)
    with_relax = params.variant is Variant.A1
    mass = integrate(s0.u, grid)
    s, D = s0, dissipation(s0, params)
    res = incr = drift = mean_w = 0.0
    min_u, min_v = float(s.u.min()), float(s.v.min())
    for _ in range(step.n_steps):
        new, _ = integ.step(s)
        dE = energy_change(s, new, params, relax=with_relax)
        res = max(res, abs(dE / step.dt + D))
        incr = max(incr, dE)
        s = new
        D = dissipation(s, params)
        drift = max(drift, abs(integrate(s.u, grid) - mass) / mass)
        min_u, min_v = min(min_u, float(s.u.min())), min(min_v, float(s.v.min()))
        if params.variant is Variant.TW:
            mean_w = max(mean_w, abs(mean(s.w, grid)))
    return {"dt": step.dt, "residual": res, "max_energy_increase": incr,
            "mass_drift": drift, "min_u": min_u, "min_v": min_v, "max_abs_mean_w": mean_w}


def energy_check(cfg: RunConfig, write: bool = True) -> ExperimentResult:
    """Refinement study of ``dE/dt + D = 0`` over halving time steps.

    The residual at each step is ``|(E^{n+1} - E^n)/dt + D^n|``; the energy
    is ``E`` for ``a1`` and ``E0`` for the elliptic variants, whose own
    dissipation is used.
    """
    opts = cfg.energy_check
    if opts.levels < 3:
        raise ConfigError("energy_check needs at least 3 dt levels")
    grid = build_grid(cfg)
    params = cfg.model
    s0, info = initial_state(cfg, grid)
    rows = []
    for k in range(opts.levels):
        dt = cfg.step.dt / 2**k
        step = StepConfig(**{**cfg.step.to_dict(), "dt": dt})
        if abs(step.n_steps * dt - cfg.step.t_end) > 1e-9 * cfg.step.t_end:
            raise ConfigError(f"t_end is not a multiple of dt = {dt:g}")
        rows.append(_energy_level(s0, params, step))
    res = [r["residual"] for r in rows]
    orders = [math.log2(a / b) if a > opts.floor and b > 0 else math.inf
              for a, b in zip(res, res[1:])]
    exact = max(res) <= opts.floor
    failures: list = []
    if not exact:
        _check(failures, all(b < a for a, b in zip(res, res[1:])),
               f"residuals are not decreasing: {res}")
        _check(failures, all(o >= opts.min_order for o in orders),
               f"empirical orders {orders} below {opts.min_order}")
    _check(failures, all(r["min_u"] >= 0.0 and r["min_v"] >= 0.0 for r in rows),
           "positivity violated")
    _check(failures, max(r["mass_drift"] for r in rows) <= cfg.mass_tol, "mass not conserved")
    _check(failures, max(r["max_energy_increase"] for r in rows) <= opts.energy_slack,
           "energy increased")
    if params.variant is Variant.TW:
        _check(failures, max(r["max_abs_mean_w"] for r in rows) <= 1e-12,
               "signal mean not preserved")
    report = {**_common(cfg), "initial_data": info,
              "energy": "E" if params.variant is Variant.A1 else "E0",
              "levels": rows, "orders": orders, "exact": exact,
              "failures": failures, "ok": not failures}
    if write:
        out = Path(cfg.out_dir)
        header = ["dt", "residual", "order", "max_energy_increase", "mass_drift",
                  "min_u", "min_v", "max_abs_mean_w"]
        table = [[r["dt"], r["residual"], (orders[i - 1] if i else float("nan")),
                  r["max_energy_increase"], r["mass_drift"], r["min_u"], r["min_v"],
                  r["max_abs_mean_w"]] for i, r in enumerate(rows)]
        io.write_table_csv(out / "energy_check.csv", header, table)
        io.write_json(out / "report.json", report)
    return ExperimentResult(report, not failures, failures)


# --- stationary -----------------------------------------------------------

def stationary(cfg: RunConfig, write: bool = True) -> ExperimentResult:
    grid = build_grid(cfg)
    params = cfg.model
    if params.variant is Variant.TW:
        raise ConfigError("the steady-state problem needs a positive degradation rate")
    opts, M = cfg.stationary, cfg.init.mass
    all_seeds = stationary_seeds(M, params, grid)
    unknown = set(opts.seeds) - set(all_seeds)
    if unknown:
        raise ConfigError(f"unknown seeds {sorted(unknown)}; choose from {sorted(all_seeds)}")
    target = M / (params.delta * grid.area)
    states, fields, failures = {}, {}, []
    for name in opts.seeds:
        try:
            st = solve_stationary(M, params, grid, all_seeds[name], opts.damping, opts.tol,
                                  opts.max_iters)
        except StationaryConvergenceError as exc:
            failures.append(f"{name}: {exc}")
            if exc.w_last is not None:
                fields[f"w_last_{name}"] = exc.w_last
            states[name] = {"converged": False, "error": str(exc), "residual": exc.residual}
            continue
        mw = mean(st.w_star, grid)
        frac = st.peak_cell_fraction
        entry = {"converged": True, "residual": st.residual, "energy": st.energy,
                 "iterations": st.iterations, "mean_w": mw, "mean_w_target": target,
                 "mean_w_defect": abs(mw - target),
                 "w_range": float(np.ptp(st.w_star)), "sup_u": float(st.u_star.max()),
                 "peak_cell_fraction": frac, "resolved": frac <= _cell_fraction(cfg)}
        _check(failures, abs(mw - target) <= 1e-8,
               f"{name}: mean identity defect {abs(mw - target):.3e}")
        if opts.flow_steps > 0 and st.residual > 1e-10:
            # converged to the rounding floor of a concentrated state
            entry["flow_drift"] = None
        elif opts.flow_steps > 0:
            drift = verify_stationary_under_flow(st, params, cfg.step, opts.flow_steps)
            entry["flow_drift"] = drift
            _check(failures, drift <= 1e-6, f"{name}: drift {drift:.3e} under the flow")
        states[name] = entry
        fields[f"w_{name}"], fields[f"u_{name}"] = st.w_star, st.u_star
    converged = [s for s in states.values() if s["converged"]]
    _check(failures, bool(converged), "no seed converged")
    report = {**_common(cfg), "mass": M, "states": states,
              "constant_state_energy": constant_state_energy(M, params, grid.area),
              "mu_upper_bound": min((s["energy"] for s in converged if s["resolved"]),
                                    default=math.inf),
              "failures": failures, "ok": not failures}
    if write:
        out = Path(cfg.out_dir)
        if fields:
            io.write_fields(out / "fields", fields, grid)
        io.write_json(out / "report.json", report)
    return ExperimentResult(report, not failures, failures)


# --- Theta_eta probe ------------------------------------------------------

def theta_probe(cfg: RunConfig, write: bool = True) -> ExperimentResult:
    grid = build_grid(cfg)
    params, M = cfg.model, cfg.init.mass
    etas = sorted(cfg.probe.etas, reverse=True)
    table = energy_divergence_probe(M, params, grid, etas, cfg.init.anchor, cfg.init.profile)
    failures: list = []
    _check(failures, table.F_decreasing, "F(Theta_eta) is not strictly decreasing")
    _check(failures, table.grad_increasing, "||grad Theta_eta|| is not strictly increasing")
    _check(failures, table.E_decreasing, "E(u_eta, v_eta, w_eta) is not strictly decreasing")
    _check(failures, table.max_identity_defect <= cfg.probe.identity_tol,
           f"identity defect {table.max_identity_defect:.3e} > {cfg.probe.identity_tol:.1e}")
    heavy = [r.eta for r in table.rows if r.clipped_fraction > CLIP_WARN_FRACTION]
    rows = [vars(r) for r in table.rows]
    report = {**_common(cfg), "mass": M, "rows": rows,
              "F_decreasing": table.F_decreasing, "grad_increasing": table.grad_increasing,
              "E_decreasing": table.E_decreasing,
              "max_identity_defect": table.max_identity_defect,
              "etas_clipping_over_1pct": heavy,
              "failures": failures, "ok": not failures}
    if write:
        out = Path(cfg.out_dir)
        header = list(rows[0])
        io.write_table_csv(out / "probe.csv", header, [[r[k] for k in header] for r in rows])
        io.write_json(out / "report.json", report)
    return ExperimentResult(report, not failures, failures)


# --- threshold sweep ------------------------------------------------------

def theorem_flags(M: float, diff: float, radial: bool) -> dict:
    """Where ``M`` sits relative to the critical masses ``4 pi D`` and ``8 pi D``."""
    g, r = threshold_general(diff), threshold_radial(diff)
    k = M / g
    on_lattice = k >= 1.0 - 1e-12 and abs(k - round(k)) <= 1e-9 * max(1.0, k)
    if radial:
        regime = "bounded" if M < r else "unbounded"
        return {"mode": "radial", "regime": regime, "outside_theorem": False,
                "ambiguous_nonradial": g <= M <= r, "on_4piD_lattice": on_lattice}
    regime = "bounded" if M < g else "unbounded"
    return {"mode": "general", "regime": regime, "outside_theorem": on_lattice,
            "ambiguous_nonradial": False, "on_4piD_lattice": on_lattice}


def _trailing_slope(t: np.ndarray, y: np.ndarray, frac: float) -> float:
    sel = t >= t[-1] - frac * (t[-1] - t[0])
    if sel.sum() < 2:
        sel = np.zeros_like(sel)
        sel[-2:] = True
    return float(np.polyfit(t[sel], y[sel], 1)[0])


def classify(traj: Trajectory, opts) -> dict:
    sup = traj.column("sup_u")
    t = traj.column("time")
    E = traj.column("energy_E")
    amp = float(sup.max() / sup[0])
    slope = _trailing_slope(t, E, opts.plateau_window) if t.size > 1 else 0.0
    increasing = bool(sup.size > 1 and sup[-1] > sup[-2])
    if traj.status == "cap_reached":
        verdict = "cap-reached"
    elif amp <= opts.bounded_amplification and abs(slope) < opts.plateau_slope:
        verdict = "bounded-like"
    elif amp >= opts.growing_amplification and increasing:
        verdict = "growing"
    else:
        verdict = "inconclusive"
    return {"sup_u0": float(sup[0]), "sup_u_max": float(sup.max()), "amplification": amp,
            "final_E": float(E[-1]), "energy_slope": slope,
            "sup_u_increasing": increasing, "verdict": verdict}


def _mass_config(cfg: RunConfig, M: float) -> RunConfig:
    opts = cfg.sweep
    kind = opts.data
    if kind == "auto":
        crit = (threshold_radial if cfg.grid["kind"] == "radial" else threshold_general)(
            cfg.model.diff)
        kind = "bump" if M < crit else "theta_eta"
    if kind not in ("bump", "theta_eta"):
        raise ConfigError(f"sweep.data must be auto, bump or theta_eta, got {kind!r}")
    return cfg.replace(**{"init.mass": float(M), "init.kind": kind,
                          "step.t_end": float(opts.horizon), "experiment": "simulate",
                          "sweep.masses": []})


def _cell_fraction(cfg: RunConfig) -> float:
    """Single-cell mass share above which a state counts as unresolved."""
    frac = cfg.step.resolution_fraction
    return 0.5 if frac is None else frac


def _energy_admissible(cfg: RunConfig, grid: Grid) -> tuple[RunConfig, dict]:
    """Halve ``eta`` until the data sit below the stationary-energy bound by the margin."""
    params, M, opts = cfg.model, cfg.init.mass, cfg.sweep
    sample = sample_stationary(M, params, grid, stationary_seeds(M, params, grid),
                               max_cell_fraction=_cell_fraction(cfg),
                               damping=cfg.stationary.damping, tol=cfg.stationary.tol,
                               max_iters=cfg.stationary.max_iters)
    eta = cfg.init.eta
    facts = {"converged_seeds": sorted(sample.states),
             "unresolved_seeds": sorted(set(sample.states) - set(sample.resolved))}
    if not sample.resolved:
        facts.update(mu_upper_bound=None, energy_condition=False)
        return cfg, facts
    mu = facts["mu_upper_bound"] = sample.mu_upper_bound
    while True:
        try:
            s, _ = initial_state(cfg.replace(**{"init.eta": eta}), grid)
        except UnresolvedProfileError:
            break
        E_in = energy(s, params).E
        if E_in < mu - opts.energy_margin:
            facts.update(E_in=E_in, energy_condition=True)
            return cfg.replace(**{"init.eta": eta}), facts
        if eta / 2.0 < opts.min_eta:
            break
        eta /= 2.0
    facts["energy_condition"] = False
    return cfg.replace(**{"init.eta": eta}), facts


def _sweep_job(cfg_dict: dict) -> dict:
    cfg = RunConfig.from_dict(cfg_dict)
    grid = build_grid(cfg)
    facts: dict = {}
    if cfg.init.kind == "theta_eta":
        cfg, facts = _energy_admissible(cfg, grid)
    s0, info = initial_state(cfg, grid)
    mass = integrate(s0.u, grid)
    mon = _Monitor(mass, grid, cfg.model)
    traj = run(s0, cfg.model, cfg.step, observer=mon)
    rec = {"mass": cfg.init.mass, "seed": cfg.seed, "config_hash": cfg.hash(),
           "config": cfg.to_dict(), "data": cfg.init.kind, "eta": info.get("eta"),
           "E_in": energy(s0, cfg.model).E, "status": traj.status,
           "cap_reason": traj.cap_reason, "steps": traj.steps, "min_u": traj.min_u,
           "min_v": traj.min_v, "mass_drift": mon.max_mass_drift,
           "flags": theorem_flags(cfg.init.mass, cfg.model.diff, grid.is_radial)}
    rec.update(facts)
    rec.update(classify(traj, cfg.sweep))
    rec["diagnostics"] = [d.row() for d in traj.diagnostics]
    return rec


def threshold_sweep(cfg: RunConfig, write: bool = True) -> ExperimentResult:
    opts = cfg.sweep
    if not opts.masses or any(m <= 0 for m in opts.masses):
        raise ConfigError("sweep.masses must be a non-empty list of positive masses")
    jobs = [_mass_config(cfg, M).to_dict() for M in opts.masses]
    if opts.workers > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            records = list(pool.map(_sweep_job, jobs))
    else:
        records = [_sweep_job(j) for j in jobs]
    records.sort(key=lambda r: (r["mass"], r["seed"]))
    failures: list = []
    for r in records:
        _check(failures, r["min_u"] >= 0.0 and r["min_v"] >= 0.0,
               f"M = {r['mass']:g}: positivity violated")
        _check(failures, r["mass_drift"] <= cfg.mass_tol,
               f"M = {r['mass']:g}: mass drift {r['mass_drift']:.3e}")
    D = cfg.model.diff
    report = {**_common(cfg),
              "boundaries": {"general_4piD": threshold_general(D),
                             "radial_8piD": threshold_radial(D)},
              "records": [{k: v for k, v in r.items() if k != "diagnostics"} for r in records],
              "failures": failures, "ok": not failures}
    if write:
        out = Path(cfg.out_dir)
        header = ["mass", "seed", "data", "eta", "E_in", "mu_upper_bound", "sup_u0",
                  "sup_u_max", "amplification", "final_E", "energy_slope", "status",
                  "verdict", "regime", "outside_theorem", "config_hash"]
        rows = [[r["mass"], r["seed"], r["data"], r.get("eta") or "", r["E_in"],
                 r.get("mu_upper_bound", ""), r["sup_u0"], r["sup_u_max"],
                 r["amplification"], r["final_E"], r["energy_slope"], r["status"],
                 r["verdict"], r["flags"]["regime"], r["flags"]["outside_theorem"],
                 r["config_hash"]] for r in records]
        io.write_table_csv(out / "sweep.csv", header, rows)
        for i, r in enumerate(records):
            path = out / "runs" / f"{i:03d}" / "diagnostics.csv"
            io.write_table_csv(path, list(io.CSV_HEADER), r["diagnostics"])
        io.write_json(out / "report.json", report)
    return ExperimentResult(report, not failures, failures)


EXPERIMENT_FUNCS = {
    "simulate": lambda cfg: simulate(cfg)[0],
    "energy_check": energy_check,
    "stationary": stationary,
    "theta_probe": theta_probe,
    "threshold_sweep": threshold_sweep,
}


def run_experiment(cfg: RunConfig) -> ExperimentResult:
    return EXPERIMENT_FUNCS[cfg.experiment](cfg)

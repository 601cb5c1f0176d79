"""Versioned JSON run configuration.

A :class:`RunConfig` holds everything a run depends on.  Its hash is the
SHA-256 of the canonical JSON form (sorted keys, no whitespace) with the
output directory left out, so moving a run does not change its identity.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..dynamics import StepConfig
from ..model import ModelParams

SCHEMA_VERSION = 1
EXPERIMENTS = ("simulate", "energy_check", "stationary", "theta_probe", "threshold_sweep")
INIT_KINDS = ("constant", "bump", "random", "theta_eta")


class ConfigError(ValueError):
    pass


def _known(cls, d: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    return d


@dataclass
class InitSpec:
    kind: str = "bump"
    mass: float = 2.0 * math.pi
    center: Optional[list] = None     # radius on radial grids, a point otherwise
    width: float = 0.5
    background: float = 0.1
    eta: float = 0.05
    anchor: Optional[list] = None
    profile: str = "neumann"

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ConfigError(f"init.kind must be one of {INIT_KINDS}, got {self.kind!r}")
        if not self.mass > 0:
            raise ConfigError("init.mass must be positive")


@dataclass
class EnergyCheckOptions:
    levels: int = 3            # dt, dt/2, dt/4, ...
    min_order: float = 0.9
    floor: float = 1e-12       # residuals below this count as exact
    energy_slack: float = 1e-8   # allowed energy increase per step


@dataclass
class StationaryOptions:
    seeds: list = field(default_factory=lambda: ["constant", "centered_bump", "boundary_bump"])
    damping: float = 0.5
    tol: float = 1e-10
    max_iters: int = 5000
    flow_steps: int = 100      # drift check under the parabolic flow; 0 disables


@dataclass
class ProbeOptions:
    etas: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    identity_tol: float = 1e-6


@dataclass
class SweepOptions:
    masses: list = field(default_factory=list)
    horizon: float = 50.0
    data: str = "auto"         # "auto", "bump" or "theta_eta"
    bounded_amplification: float = 2.0
    growing_amplification: float = 10.0
    plateau_slope: float = 1e-4
    plateau_window: float = 0.1   # trailing fraction of the horizon used for the slope
    energy_margin: float = 1.0    # required gap below the stationary-energy bound
    min_eta: float = 1e-3
    workers: int = 1


@dataclass
class RunConfig:
    experiment: str = "simulate"
    model: ModelParams = field(default_factory=ModelParams)
    grid: dict = field(default_factory=lambda: {"kind": "radial", "radius": 1.0, "n": 256})
    init: InitSpec = field(default_factory=InitSpec)
    step: StepConfig = field(default_factory=lambda: StepConfig(dt=1e-3, t_end=1.0))
    seed: int = 0
    out_dir: str = "out"
    write_fields: bool = True
    mass_tol: float = 1e-10
    energy_check: EnergyCheckOptions = field(default_factory=EnergyCheckOptions)
    stationary: StationaryOptions = field(default_factory=StationaryOptions)
    probe: ProbeOptions = field(default_factory=ProbeOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.grid.get("kind") not in ("radial", "rect", "polar"):
            raise ConfigError(f"unknown grid kind {self.grid.get('kind')!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["step"] = self.step.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        _known(cls, d, "config")
        kw = dict(d)
        try:
            if "model" in d:
                kw["model"] = ModelParams.from_dict(_known(ModelParams, d["model"], "model"))
            if "step" in d:
                kw["step"] = StepConfig(**_known(StepConfig, d["step"], "step"))
            for name, sub in (("init", InitSpec), ("energy_check", EnergyCheckOptions),
                              ("stationary", StationaryOptions), ("probe", ProbeOptions),
                              ("sweep", SweepOptions)):
                if name in d:
                    kw[name] = sub(**_known(sub, d[name], name))
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        """Copy with top-level fields or dotted sub-fields (``"init.mass"``) replaced."""
        d = self.to_dict()
        for key, value in changes.items():
            node = d
            *path, last = key.split(".")
            for part in path:
                node = node[part]
            node[last] = value
        return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(cfg.to_json())

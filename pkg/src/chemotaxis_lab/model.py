"""Model parameters, state container and per-output diagnostics."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields

import numpy as np

from .grid import Grid


class Variant(str, enum.Enum):
    """The three model variants.

    ``A1``: fully parabolic, ``nu w_t = D lap w - delta w + v``.
    ``TW``: elliptic with mean correction, ``0 = D lap w - <v> + v``, ``<w> = 0``.
    ``TWD``: elliptic with degradation, ``0 = D lap w - delta w + v``.
    """

    A1 = "a1"
    TW = "tw"
    TWD = "twd"


@dataclass(frozen=True)
class ModelParams:
    nu: float = 1.0
    eps: float = 1.0
    diff: float = 1.0
    delta: float = 1.0
    variant: Variant = Variant.A1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (self.nu > 0 and self.eps > 0 and self.diff > 0):
            raise ValueError("nu, eps and diff must be positive")
        if self.variant is not Variant.TW and not self.delta > 0:
            raise ValueError(f"delta must be positive for variant {self.variant.value}")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")

    @property
    def effective_delta(self) -> float:
        """Degradation rate entering the functionals (zero for ``tw``)."""
        return 0.0 if self.variant is Variant.TW else self.delta

    @property
    def relaxation_time(self) -> float:
        return self.nu * self.eps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**{k: d[k] for k in ("nu", "eps", "diff", "delta", "variant") if k in d})


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    grid: Grid
    time: float = 0.0

    def __post_init__(self):
        for name in ("u", "v", "w"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({self.grid.n},)")
            setattr(self, name, arr)

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.w.copy(), self.grid, self.time)

    def check_nonnegative(self, params: ModelParams) -> None:
        if self.u.min() < 0 or self.v.min() < 0:
            raise ValueError("u and v must be non-negative")
        if params.variant is not Variant.TW and self.w.min() < 0:
            raise ValueError("w must be non-negative for variants a1 and twd")


@dataclass(frozen=True)
class Diagnostics:
    time: float
    mass_u: float
    mass_v: float
    mass_w: float
    energy_E0: float
    energy_E: float
    dissipation_D: float
    sup_u: float
    sup_v: float
    w_H1_norm: float

    CSV_HEADER = ("t", "mass_u", "mass_v", "mass_w", "E0", "E", "D",
                  "sup_u", "sup_v", "w_H1")

    def row(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


"""Finite-volume laboratory for chemotaxis with indirect signal production."""

from .dynamics import (StepConfig, Trajectory, diagnose, run, step_a1, step_tw,
                       step_twd)
from .functionals import (EnergyReport, F_functional, closed_form_mass_v,
                          closed_form_mass_w, dissipation, energy, energy_lower_bound,
                          entropy_L)
from .grid import Grid, polar_disk, radial_disk, rect
from .initdata import (ThetaEtaSpec, build_bump, build_constant, build_random,
                       build_theta_eta, energy_divergence_probe)
from .model import Diagnostics, ModelParams, State, Variant
from .operators import (chemotactic_flux_divergence, gradient_sq_norm, integrate,
                        laplacian_neumann, mean)
from .stationary import (StationaryState, estimate_mu_M, solve_stationary,
                         verify_stationary_under_flow)

__version__ = "0.1.0"

__all__ = [
    "StepConfig", "Trajectory", "diagnose", "run", "step_a1", "step_tw", "step_twd",
    "EnergyReport", "F_functional", "closed_form_mass_v", "closed_form_mass_w",
    "dissipation", "energy", "energy_lower_bound", "entropy_L",
    "Grid", "polar_disk", "radial_disk", "rect",
    "ThetaEtaSpec", "build_bump", "build_constant", "build_random", "build_theta_eta",
    "energy_divergence_probe",
    "Diagnostics", "ModelParams", "State", "Variant",
    "chemotactic_flux_divergence", "gradient_sq_norm", "integrate", "laplacian_neumann",
    "mean",
    "StationaryState", "estimate_mu_M", "solve_stationary", "verify_stationary_under_flow",
]

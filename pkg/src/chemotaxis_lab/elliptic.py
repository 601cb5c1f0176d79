"""Cached Neumann elliptic solves ``(-D lap + c) x = f``."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import Grid
from .operators import FactorizedSystem, stiffness_apply, stiffness_matrix


@lru_cache(maxsize=32)
def _shifted(grid: Grid, diff: float, shift: float, tol: float, max_iters: int):
    A = diff * stiffness_matrix(grid) + sp.diags(shift * grid.volumes)
    return FactorizedSystem(A, tol, max_iters)


@lru_cache(maxsize=32)
def _bordered(grid: Grid, diff: float, tol: float, max_iters: int):
    n = grid.n
    vol = grid.volumes[:, None]
    A = sp.bmat([[diff * stiffness_matrix(grid), sp.csr_matrix(vol)],
                 [sp.csr_matrix(vol.T), None]])
    return FactorizedSystem(A, tol, max_iters), n


def _from_guess(system, rhs: np.ndarray, guess, apply) -> np.ndarray:
    if guess is None:
        return system.solve(rhs)
    # correction form: an exact guess gives a zero right-hand side
    return guess + system.solve(rhs - apply(guess))


def solve_shifted(f: np.ndarray, grid: Grid, diff: float, shift: float,
                  tol: float = 1e-12, max_iters: int = 3, guess=None) -> np.ndarray:
    """Solve ``-diff * lap x + shift * x = f`` with ``shift > 0``.

    With ``guess`` the solve is for the correction ``x - guess``.
    """
    if shift <= 0:
        raise ValueError("shift must be positive; use solve_mean_zero for shift = 0")
    system = _shifted(grid, float(diff), float(shift), tol, max_iters)
    return _from_guess(system, grid.volumes * f, guess,
                       lambda x: diff * stiffness_apply(x, grid) + shift * grid.volumes * x)


def solve_mean_zero(f: np.ndarray, grid: Grid, diff: float,
                    tol: float = 1e-12, max_iters: int = 3, guess=None) -> np.ndarray:
    """Solve ``-diff * lap x = f - <f>`` subject to ``<x> = 0``.

    The singular Neumann system is closed by bordering it with the volume
    vector (a Lagrange multiplier for the mean constraint).
    """
    system, n = _bordered(grid, float(diff), tol, max_iters)
    g = f - np.dot(f, grid.volumes) / grid.area
    if guess is not None:
        guess = np.concatenate([guess - np.dot(guess, grid.volumes) / grid.area, [0.0]])

    def apply(y):
        return np.concatenate([diff * stiffness_apply(y[:n], grid) + y[n] * grid.volumes,
                               [np.dot(grid.volumes, y[:n])]])

    x = _from_guess(system, np.concatenate([grid.volumes * g, [0.0]]), guess, apply)[:n]
    return x - np.dot(x, grid.volumes) / grid.area

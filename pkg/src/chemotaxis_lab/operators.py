"""Discrete integral and differential operators on a :class:`~chemotaxis_lab.grid.Grid`.

All differential operators are assembled from face differences, so that

* ``integrate(laplacian_neumann(f)) == 0`` and the chemotactic divergence
  integrates to zero (conservation),
* ``integrate(f * -laplacian_neumann(g)) == dirichlet_form(f, g)`` (duality).

The chemotactic flux uses exponential fitting (Scharfetter-Gummel): the
face flux of ``-(grad u - u grad w)`` from cell L to cell R is

    J = T * (B(-dw) u_L - B(dw) u_R),   B(x) = x / (exp(x) - 1),

which reduces to pure diffusion when ``dw = 0`` and to first-order upwinding
of ``u`` when ``|dw|`` is large.  Written in ``psi = ln u - w`` it is
``J = -T * B(dw) exp(w_R) (exp(psi_R) - exp(psi_L))``, hence ``-J * dpsi >= 0``
face by face.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid

U_FLOOR = 1e-300


class LinearSolveError(RuntimeError):
    pass


def integrate(f: np.ndarray, grid: Grid) -> float:
    return float(np.dot(f, grid.volumes))


def mean(f: np.ndarray, grid: Grid) -> float:
    return integrate(f, grid) / grid.area


def l2_sq(f: np.ndarray, grid: Grid) -> float:
    return float(np.dot(f * f, grid.volumes))


def face_diff(f: np.ndarray, grid: Grid) -> np.ndarray:
    return f[grid.right] - f[grid.left]


def gradient_sq_norm(f: np.ndarray, grid: Grid) -> float:
    """Discrete ``||grad f||_2^2 = sum_faces T (f_R - f_L)^2``."""
    d = face_diff(f, grid)
    return float(np.dot(grid.trans, d * d))


def dirichlet_form(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    return float(np.dot(grid.trans, face_diff(f, grid) * face_diff(g, grid)))


def _scatter(face_vals: np.ndarray, grid: Grid) -> np.ndarray:
    """Net inflow per cell of a left-to-right face quantity."""
    n = grid.n
    return np.bincount(grid.right, face_vals, n) - np.bincount(grid.left, face_vals, n)


def laplacian_neumann(f: np.ndarray, grid: Grid) -> np.ndarray:
    flux = grid.trans * face_diff(f, grid)
    return -_scatter(flux, grid) / grid.volumes


def stiffness_apply(f: np.ndarray, grid: Grid) -> np.ndarray:
    """``K f = -vol * lap f`` face by face; exactly zero for constant ``f``."""
    return _scatter(grid.trans * face_diff(f, grid), grid)


def h1_norm(f: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(l2_sq(f, grid) + gradient_sq_norm(f, grid)))


def bernoulli(x: np.ndarray) -> np.ndarray:
    """``B(x) = x / (exp(x) - 1)`` with ``B(0) = 1``, stable for all real x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0
    xl = x[~small]
    with np.errstate(over="ignore"):
        out[~small] = xl / np.expm1(xl)
    return out


def sg_flux(u: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Face fluxes of ``-(grad u - u grad w)`` from left to right cell."""
    dw = face_diff(w, grid)
    return grid.trans * (bernoulli(-dw) * u[grid.left] - bernoulli(dw) * u[grid.right])


def chemotactic_flux_divergence(u: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Conservative discretisation of ``div(grad u - u grad w)``."""
    return _scatter(sg_flux(u, w, grid), grid) / grid.volumes


def entropy_production(u: np.ndarray, w: np.ndarray, grid: Grid) -> float:
    """Discrete ``int u |grad(ln u - w)|^2`` consistent with :func:`sg_flux`.

    Per face this is ``-J * (psi_R - psi_L)``, i.e. ``T * u_f * dpsi^2`` with
    the exponentially fitted face value ``u_f``.  Faces touching a cell
    with ``u`` below ``U_FLOOR`` contribute nothing.
    """
    uf = np.maximum(u, U_FLOOR)
    psi = np.log(uf) - w
    prod = -sg_flux(u, w, grid) * face_diff(psi, grid)
    live = (u[grid.left] >= U_FLOOR) & (u[grid.right] >= U_FLOOR)
    return float(np.sum(np.maximum(prod[live], 0.0)))


# -- matrices -----------------------------------------------------------------

def stiffness_matrix(grid: Grid) -> sp.csr_matrix:
    """Symmetric ``K`` with ``K f = -vol * laplacian_neumann(f)``."""
    n, T, L, R = grid.n, grid.trans, grid.left, grid.right
    rows = np.concatenate([L, R, L, R])
    cols = np.concatenate([L, R, R, L])
    vals = np.concatenate([T, T, -T, -T])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    return (-sp.diags(1.0 / grid.volumes) @ stiffness_matrix(grid)).tocsr()


def _backward_error(r, Ax_abs, b):
    """Componentwise relative backward error ``max |r| / (|A||x| + |b|)``.

    Residuals in the subnormal range are rounding noise and count as zero.
    """
    denom = Ax_abs + np.abs(b)
    denom = np.where(denom > 0, denom, 1.0)
    num = np.abs(r)
    num = np.where(num < np.finfo(float).tiny, 0.0, num)
    return float(np.max(num / denom))


class FactorizedSystem:
    """Sparse LU of a fixed matrix with residual-checked iterative refinement.

    Convergence is judged by the componentwise backward error, which is
    insensitive to row scaling.
    """

    def __init__(self, A, tol: float = 1e-12, max_iters: int = 3):
        self.A = sp.csc_matrix(A)
        self.absA = abs(self.A)
        self.lu = spla.splu(self.A)
        self.tol = tol
        self.max_iters = max_iters

    def residual(self, x, b):
        r = b - self.A @ x
        return _backward_error(r, self.absA @ np.abs(x), b), r

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self.lu.solve(b)
        res, r = self.residual(x, b)
        it = 0
        while res > self.tol and it < self.max_iters:
            x = x + self.lu.solve(r)
            res, r = self.residual(x, b)
            it += 1
        if not np.isfinite(res) or res > self.tol:
            raise LinearSolveError(f"backward error {res:.3e} > tol {self.tol:.1e}")
        return x


def _tridiag_solve(lower, diag, upper, rhs, tol, max_iters):
    """Banded solve with refinement; ``lower[i] = A[i+1, i]``, ``upper[i] = A[i, i+1]``."""
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower

    def matvec(x, absval=False):
        lo, up, d = (np.abs(lower), np.abs(upper), np.abs(diag)) if absval else (lower, upper, diag)
        y = d * x
        y[:-1] += up * x[1:]
        y[1:] += lo * x[:-1]
        return y

    x = sla.solve_banded((1, 1), ab, rhs, check_finite=False)
    r = rhs - matvec(x)
    res = _backward_error(r, matvec(np.abs(x), True), rhs)
    it = 0
    while res > tol and it < max_iters:
        x = x + sla.solve_banded((1, 1), ab, r, check_finite=False)
        r = rhs - matvec(x)
        res = _backward_error(r, matvec(np.abs(x), True), rhs)
        it += 1
    if not np.isfinite(res) or res > tol:
        raise LinearSolveError(f"backward error {res:.3e} > tol {tol:.1e}")
    return x


def implicit_drift_diffusion(u: np.ndarray, w: np.ndarray, dt: float, grid: Grid,
                             tol: float = 1e-12, max_iters: int = 3) -> np.ndarray:
    """Solve ``(u' - u)/dt = div(grad u' - u' grad w)`` for ``u'``.

    The scaled matrix ``vol/dt + (flux coefficients)`` is a column-diagonally
    dominant M-matrix whose columns sum to ``vol/dt``: the update is
    positivity preserving and conserves ``integrate(u)`` exactly.

    The system is solved for the increment ``u' - u``, whose right-hand side
    is the exact net outflow; states with zero flux (the equilibria) are then
    reproduced bit for bit.
    """
    n, T, L, R, vol = grid.n, grid.trans, grid.left, grid.right, grid.volumes
    dw = face_diff(w, grid)
    a = T * bernoulli(-dw)  # weight of u_L in J
    b = T * bernoulli(dw)   # weight of u_R in J
    diag = vol / dt + np.bincount(L, a, n) + np.bincount(R, b, n)
    J = a * u[L] - b * u[R]
    outflow = np.bincount(L, J, n) - np.bincount(R, J, n)
    if grid.is_radial:
        # faces join i and i+1 only: row L holds -b in column R, row R holds -a in column L
        def solve(rhs):
            return _tridiag_solve(-a, diag, -b, rhs, tol, max_iters)
    else:
        rows = np.concatenate([np.arange(n), L, R])
        cols = np.concatenate([np.arange(n), R, L])
        vals = np.concatenate([diag, -b, -a])
        system = FactorizedSystem(sp.csc_matrix((vals, (rows, cols)), shape=(n, n)),
                                  tol, max_iters)
        solve = system.solve
    new = u + solve(-outflow)
    if np.any(new < 0.0):
        # cancellation in u + increment near vacuum; the direct form keeps the sign
        new = solve(vol * u / dt)
    return new

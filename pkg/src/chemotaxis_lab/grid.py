"""Cell-centered finite-volume grids with no-flux boundaries.

Every grid is described by the same face list: for each interior face the
indices of the two adjacent cells (``left``, ``right``), the face area
(length in 2D) and the distance between the two cell centers.  Boundary
faces carry zero flux and are simply absent from the list, so every
operator built on top of the face list is conservative by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Grid:
    kind: str
    shape: tuple[int, ...]
    centers: np.ndarray  # (n, 2) cartesian coordinates of the cell centers
    volumes: np.ndarray
    left: np.ndarray
    right: np.ndarray
    face_areas: np.ndarray
    face_dists: np.ndarray
    boundary_cells: np.ndarray  # indices of cells touching the boundary
    area: float  # exact |Omega|
    h: float  # characteristic (smallest) cell size
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("centers", "volumes", "left", "right", "face_areas",
                     "face_dists", "boundary_cells"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.volumes.size

    @property
    def trans(self) -> np.ndarray:
        """Face transmissibilities ``area / distance``."""
        return self.face_areas / self.face_dists

    @property
    def is_radial(self) -> bool:
        return self.kind == "radial"

    def radii(self) -> np.ndarray:
        return np.hypot(self.centers[:, 0], self.centers[:, 1])

    def distance_to(self, point) -> np.ndarray:
        """Distance from every cell center to ``point``.

        On a radial grid a field is a function of |x| only, so the only
        admissible anchor is the origin.
        """
        p = np.asarray(point, dtype=float)
        if self.is_radial:
            if np.any(p != 0.0):
                raise ValueError("radial grids only support the origin as anchor")
            return self.radii()
        return np.hypot(self.centers[:, 0] - p[0], self.centers[:, 1] - p[1])

    def locate(self, point) -> int:
        """Index of the cell whose center is closest to ``point``."""
        return int(np.argmin(self.distance_to(point)))

    def nearest_boundary_center(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        c = self.centers[self.boundary_cells]
        k = np.argmin(np.hypot(c[:, 0] - p[0], c[:, 1] - p[1]))
        return c[k].copy()

    def to_dict(self) -> dict:
        return dict(self.spec)


def radial_disk(radius: float = 1.0, n: int = 256) -> Grid:
    """Axisymmetric disk ``B_radius(0)`` split into ``n`` annuli.

    Cell centers sit at ``(i + 1/2) dr``; the face at the origin has zero
    area, so no special treatment of ``1/r`` is required.
    """
    if radius <= 0 or n < 2:
        raise ValueError("radial_disk needs radius > 0 and n >= 2")
    dr = radius / n
    rc = (np.arange(n) + 0.5) * dr
    vol = 2.0 * np.pi * rc * dr
    rf = np.arange(1, n) * dr
    centers = np.column_stack([rc, np.zeros(n)])
    return Grid(
        kind="radial",
        shape=(n,),
        centers=centers,
        volumes=vol,
        left=np.arange(n - 1),
        right=np.arange(1, n),
        face_areas=2.0 * np.pi * rf,
        face_dists=np.full(n - 1, dr),
        boundary_cells=np.array([n - 1]),
        area=np.pi * radius**2,
        h=dr,
        spec={"kind": "radial", "radius": radius, "n": n},
    )


def rect(lx: float = 1.0, ly: float = 1.0, nx: int = 32, ny: int = 32) -> Grid:
    """Rectangle ``[0, lx] x [0, ly]``; cell ``(i, j)`` has flat index ``i*ny + j``."""
    if lx <= 0 or ly <= 0 or nx < 2 or ny < 1:
        raise ValueError("rect needs positive lengths, nx >= 2 and ny >= 1")
    dx, dy = lx / nx, ly / ny
    idx = np.arange(nx * ny).reshape(nx, ny)
    xc, yc = np.meshgrid((np.arange(nx) + 0.5) * dx, (np.arange(ny) + 0.5) * dy,
                         indexing="ij")
    lx_l, lx_r = idx[:-1, :].ravel(), idx[1:, :].ravel()
    ly_l, ly_r = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    left = np.concatenate([lx_l, ly_l])
    right = np.concatenate([lx_r, ly_r])
    areas = np.concatenate([np.full(lx_l.size, dy), np.full(ly_l.size, dx)])
    dists = np.concatenate([np.full(lx_l.size, dx), np.full(ly_l.size, dy)])
    bmask = np.zeros((nx, ny), dtype=bool)
    bmask[0, :] = bmask[-1, :] = bmask[:, 0] = bmask[:, -1] = True
    return Grid(
        kind="rect",
        shape=(nx, ny),
        centers=np.column_stack([xc.ravel(), yc.ravel()]),
        volumes=np.full(nx * ny, dx * dy),
        left=left,
        right=right,
        face_areas=areas,
        face_dists=dists,
        boundary_cells=idx[bmask],
        area=lx * ly,
        h=min(dx, dy),
        spec={"kind": "rect", "lx": lx, "ly": ly, "nx": nx, "ny": ny},
    )


def polar_disk(radius: float = 1.0, nr: int = 128, ntheta: int = 128) -> Grid:
    """Full (non-symmetric) disk on a polar mesh; cell ``(i, k)`` is ``i*ntheta + k``.

    The innermost ring consists of wedges meeting at the origin through
    faces of zero area.  The angular direction is periodic.
    """
    if radius <= 0 or nr < 2 or ntheta < 3:
        raise ValueError("polar_disk needs radius > 0, nr >= 2, ntheta >= 3")
    dr, dth = radius / nr, 2.0 * np.pi / ntheta
    rc = (np.arange(nr) + 0.5) * dr
    th = (np.arange(ntheta) + 0.5) * dth
    R, TH = np.meshgrid(rc, th, indexing="ij")
    idx = np.arange(nr * ntheta).reshape(nr, ntheta)
    # radial faces
    rl, rr = idx[:-1, :].ravel(), idx[1:, :].ravel()
    r_area = (np.arange(1, nr)[:, None] * dr * dth * np.ones((1, ntheta))).ravel()
    r_dist = np.full(rl.size, dr)
    # angular faces, periodic
    al, ar = idx.ravel(), np.roll(idx, -1, axis=1).ravel()
    a_area = np.full(al.size, dr)
    a_dist = (R * dth).ravel()
    return Grid(
        kind="polar",
        shape=(nr, ntheta),
        centers=np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()]),
        volumes=(R * dr * dth).ravel(),
        left=np.concatenate([rl, al]),
        right=np.concatenate([rr, ar]),
        face_areas=np.concatenate([r_area, a_area]),
        face_dists=np.concatenate([r_dist, a_dist]),
        boundary_cells=idx[-1, :].copy(),
        area=np.pi * radius**2,
        h=min(dr, rc[0] * dth),
        spec={"kind": "polar", "radius": radius, "nr": nr, "ntheta": ntheta},
    )


def from_spec(spec: dict) -> Grid:
    kind = spec["kind"]
    if kind == "radial":
        return radial_disk(spec.get("radius", 1.0), spec.get("n", 256))
    if kind == "rect":
        return rect(spec.get("lx", 1.0), spec.get("ly", 1.0),
                    spec.get("nx", 32), spec.get("ny", 32))
    if kind == "polar":
        return polar_disk(spec.get("radius", 1.0), spec.get("nr", 128),
                          spec.get("ntheta", 128))
    raise ValueError(f"unknown grid kind {kind!r}")

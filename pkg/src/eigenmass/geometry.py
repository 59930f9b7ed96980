"""Model domains, structured grids, clipped ball regions and Fermi coordinates.

Every grid is a tensor (or row-reduced tensor) product in the domain's native
coordinates.  Each node owns a cell in those coordinates; the node weight is the
exact measure of its cell, so weight sums reproduce the domain volume up to
round-off.  Partial cells at the edge of a ball are handled by sampling the
cell at ``q`` midpoints per axis.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

GRID_MAGIC = b"EMGRID1\n"
GRID_FORMAT_VERSION = 1

# radial node clustering towards r = 1 on polar and spherical-shell grids
RADIAL_CLUSTERING = 0.25


class DomainKind(str, enum.Enum):
    UNIT_SQUARE = "square"
    UNIT_DISK = "disk"
    SPHERE_S2 = "sphere"
    UNIT_BALL3 = "ball"


class BoundaryFlag(enum.IntEnum):
    INTERIOR = 0
    BOUNDARY = 1


@dataclass(frozen=True)
class Domain:
    kind: DomainKind

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))

    @property
    def dimension(self) -> int:
        return 3 if self.kind is DomainKind.UNIT_BALL3 else 2

    @property
    def ambient_dimension(self) -> int:
        """Length of the Cartesian coordinate tuples used for points."""
        return 2 if self.kind in (DomainKind.UNIT_SQUARE, DomainKind.UNIT_DISK) else 3

    @property
    def boundary_present(self) -> bool:
        return self.kind is not DomainKind.SPHERE_S2

    @property
    def is_flat(self) -> bool:
        return self.kind is not DomainKind.SPHERE_S2

    @property
    def volume(self) -> float:
        return {
            DomainKind.UNIT_SQUARE: 1.0,
            DomainKind.UNIT_DISK: math.pi,
            DomainKind.SPHERE_S2: 4.0 * math.pi,
            DomainKind.UNIT_BALL3: 4.0 * math.pi / 3.0,
        }[self.kind]

    @property
    def diameter(self) -> float:
        return {
            DomainKind.UNIT_SQUARE: math.sqrt(2.0),
            DomainKind.UNIT_DISK: 2.0,
            DomainKind.SPHERE_S2: math.pi,
            DomainKind.UNIT_BALL3: 2.0,
        }[self.kind]

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Membership in the closed domain (on S^2: unit norm within ``tol``)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[1] != self.ambient_dimension:
            raise ValueError(
                f"{self.kind.value} points need {self.ambient_dimension} coordinates, got {p.shape[1]}"
            )
        if self.kind is DomainKind.UNIT_SQUARE:
            return np.all((p >= -tol) & (p <= 1.0 + tol), axis=1)
        norm = np.linalg.norm(p, axis=1)
        if self.kind is DomainKind.SPHERE_S2:
            return np.abs(norm - 1.0) <= max(tol, 1e-9)
        return norm <= 1.0 + tol


UNIT_SQUARE = Domain(DomainKind.UNIT_SQUARE)
UNIT_DISK = Domain(DomainKind.UNIT_DISK)
SPHERE_S2 = Domain(DomainKind.SPHERE_S2)
UNIT_BALL3 = Domain(DomainKind.UNIT_BALL3)


def get_domain(kind) -> Domain:
    if isinstance(kind, Domain):
        return kind
    return Domain(DomainKind(kind))


# ---------------------------------------------------------------------------
# native coordinates
# ---------------------------------------------------------------------------

def native_to_cartesian(kind: DomainKind, native: np.ndarray) -> np.ndarray:
    u = np.asarray(native, dtype=float)
    if kind is DomainKind.UNIT_SQUARE:
        return u.copy()
    if kind is DomainKind.UNIT_DISK:
        r, t = u[..., 0], u[..., 1]
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
    if kind is DomainKind.SPHERE_S2:
        th, ph = u[..., 0], u[..., 1]
        s = np.sin(th)
        return np.stack([s * np.cos(ph), s * np.sin(ph), np.cos(th)], axis=-1)
    r, th, ph = u[..., 0], u[..., 1], u[..., 2]
    s = np.sin(th)
    return np.stack([r * s * np.cos(ph), r * s * np.sin(ph), r * np.cos(th)], axis=-1)


def cartesian_to_native(kind: DomainKind, points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if kind is DomainKind.UNIT_SQUARE:
        return p.copy()
    if kind is DomainKind.UNIT_DISK:
        return np.stack([np.hypot(p[..., 0], p[..., 1]), np.arctan2(p[..., 1], p[..., 0])], axis=-1)
    r = np.linalg.norm(p, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    th = np.arccos(np.clip(p[..., 2] / safe, -1.0, 1.0))
    ph = np.arctan2(p[..., 1], p[..., 0])
    if kind is DomainKind.SPHERE_S2:
        return np.stack([th, ph], axis=-1)
    return np.stack([r, th, ph], axis=-1)


def native_jacobian(kind: DomainKind, native: np.ndarray) -> np.ndarray:
    u = np.asarray(native, dtype=float)
    if kind is DomainKind.UNIT_SQUARE:
        return np.ones(u.shape[:-1])
    if kind is DomainKind.UNIT_DISK:
        return u[..., 0]
    if kind is DomainKind.SPHERE_S2:
        return np.sin(u[..., 0])
    return u[..., 0] ** 2 * np.sin(u[..., 1])


def _point_distance(kind: DomainKind, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting distance; geodesic on S^2, Euclidean otherwise."""
    if kind is DomainKind.SPHERE_S2:
        dot = np.sum(a * b, axis=-1)
        cross = np.linalg.norm(np.cross(a, b), axis=-1)
        return np.arctan2(cross, dot)
    return np.linalg.norm(a - b, axis=-1)


def geodesic_distance(domain: Domain, a, b) -> float:
    """Distance between two points of ``domain``: arc length on S^2, Euclidean on flat domains."""
    domain = get_domain(domain)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if domain.kind is DomainKind.SPHERE_S2:
        a = a / np.linalg.norm(a)
        b = b / np.linalg.norm(b)
    return float(_point_distance(domain.kind, a, b))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Discretization nodes with exact cell weights.

    ``native``/``cell_lo``/``cell_hi`` are native coordinates (x, y), (r, theta),
    (theta, phi) or (r, theta, phi).  ``shape`` is the tensor shape in C order,
    or ``None`` for the row-reduced sphere grid.
    """

    domain: Domain
    resolution: int
    nodes: np.ndarray
    weights: np.ndarray
    boundary_flags: np.ndarray
    spacing: float
    native: np.ndarray
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    shape: tuple | None
    rotation: float = 0.0
    axes: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def is_boundary(self) -> np.ndarray:
        return self.boundary_flags == BoundaryFlag.BOUNDARY

    @property
    def subsamples_per_axis(self) -> int:
        return 4 if self.native.shape[1] == 2 else 3

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.nodes)

    def cell_samples(self, idx: np.ndarray):
        """Cartesian subsample points (len(idx), q^k, d) and their Jacobian weights."""
        q = self.subsamples_per_axis
        k = self.native.shape[1]
        t = (np.arange(q) + 0.5) / q
        mesh = np.stack(np.meshgrid(*([t] * k), indexing="ij"), axis=-1).reshape(-1, k)
        lo = self.cell_lo[idx][:, None, :]
        hi = self.cell_hi[idx][:, None, :]
        u = lo + (hi - lo) * mesh[None, :, :]
        jac = native_jacobian(self.domain.kind, u)
        return native_to_cartesian(self.domain.kind, u), jac

    @cached_property
    def cell_radius(self) -> np.ndarray:
        """Largest distance from a node to its own subsample points."""
        out = np.empty(self.size)
        chunk = max(1, 400_000 // self.subsamples_per_axis ** self.native.shape[1])
        for start in range(0, self.size, chunk):
            idx = np.arange(start, min(start + chunk, self.size))
            pts, _ = self.cell_samples(idx)
            d = _point_distance(self.domain.kind, pts, self.nodes[idx][:, None, :])
            out[idx] = d.max(axis=1)
        return out

    @cached_property
    def max_cell_radius(self) -> float:
        return float(self.cell_radius.max())


def _polar_radial(nr: int):
    """Radial nodes and faces of a polar/shell grid with the last node on r = 1."""
    ds = 1.0 / (nr - 0.5)
    c = RADIAL_CLUSTERING

    def g(s):
        return (1.0 + c) * s - c * s * s

    s_nodes = (np.arange(1, nr + 1) - 0.5) * ds
    r = g(s_nodes)
    r[-1] = 1.0
    faces = np.empty(nr + 1)
    faces[0] = 0.0
    faces[1:nr] = g(np.arange(1, nr) * ds)
    faces[nr] = 1.0
    return r, faces


def _build_square(resolution: int) -> dict:
    n = resolution
    d = 1.0 / n
    x = np.arange(n + 1) * d
    x[-1] = 1.0
    f = np.ones(n + 1)
    f[0] = f[-1] = 0.5
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(f, f) * d * d
    native = np.stack([X.ravel(), Y.ravel()], axis=1)
    lo = np.clip(native - d / 2, 0.0, 1.0)
    hi = np.clip(native + d / 2, 0.0, 1.0)
    bflag = (X == 0) | (X == 1) | (Y == 0) | (Y == 1)
    return dict(
        nodes=native.copy(), weights=W.ravel(), native=native, lo=lo, hi=hi,
        boundary=bflag.ravel(), spacing=d, shape=(n + 1, n + 1), axes={"x": x},
    )


def _build_disk(resolution: int, rotation: float) -> dict:
    nr = max(4, resolution // 2)
    nt = 4 * max(2, int(round(math.pi * resolution / 4)))
    r, faces = _polar_radial(nr)
    dt = 2 * math.pi / nt
    t = rotation + dt * np.arange(nt)
    R, T = np.meshgrid(r, t, indexing="ij")
    area = 0.5 * (faces[1:] ** 2 - faces[:-1] ** 2)
    W = np.repeat(area[:, None] * dt, nt, axis=1)
    native = np.stack([R.ravel(), T.ravel()], axis=1)
    lo = np.stack([np.repeat(faces[:-1], nt), T.ravel() - dt / 2], axis=1)
    hi = np.stack([np.repeat(faces[1:], nt), T.ravel() + dt / 2], axis=1)
    bflag = np.zeros((nr, nt), dtype=bool)
    bflag[-1] = True
    return dict(
        nodes=native_to_cartesian(DomainKind.UNIT_DISK, native), weights=W.ravel(), native=native,
        lo=lo, hi=hi, boundary=bflag.ravel(), spacing=2.0 / resolution, shape=(nr, nt),
        axes={"r": r, "r_faces": faces, "theta": t, "dtheta": dt},
    )


def _build_sphere(resolution: int, rotation: float) -> dict:
    rows = resolution
    dth = math.pi / rows
    th_faces = np.arange(rows + 1) * dth
    th_faces[-1] = math.pi
    natives, los, his, ws = [], [], [], []
    counts = []
    for i in range(rows):
        th = (i + 0.5) * dth
        nph = max(4, 2 * int(round(resolution * math.sin(th))))
        counts.append(nph)
        dph = 2 * math.pi / nph
        ph = rotation + dph * np.arange(nph)
        band = (math.cos(th_faces[i]) - math.cos(th_faces[i + 1])) * dph
        natives.append(np.stack([np.full(nph, th), ph], axis=1))
        los.append(np.stack([np.full(nph, th_faces[i]), ph - dph / 2], axis=1))
        his.append(np.stack([np.full(nph, th_faces[i + 1]), ph + dph / 2], axis=1))
        ws.append(np.full(nph, band))
    native = np.concatenate(natives)
    return dict(
        nodes=native_to_cartesian(DomainKind.SPHERE_S2, native), weights=np.concatenate(ws),
        native=native, lo=np.concatenate(los), hi=np.concatenate(his),
        boundary=np.zeros(len(native), dtype=bool), spacing=math.pi / resolution, shape=None,
        axes={"row_counts": np.array(counts), "theta_faces": th_faces},
    )


def _build_ball(resolution: int, rotation: float) -> dict:
    nr = max(4, resolution // 2)
    nth = resolution
    nph = 2 * resolution
    r, faces = _polar_radial(nr)
    dth = math.pi / nth
    th_faces = np.arange(nth + 1) * dth
    th_faces[-1] = math.pi
    th = 0.5 * (th_faces[1:] + th_faces[:-1])
    dph = 2 * math.pi / nph
    ph = rotation + dph * np.arange(nph)
    R, TH, PH = np.meshgrid(r, th, ph, indexing="ij")
    vol_r = (faces[1:] ** 3 - faces[:-1] ** 3) / 3.0
    band = np.cos(th_faces[:-1]) - np.cos(th_faces[1:])
    W = vol_r[:, None, None] * band[None, :, None] * dph * np.ones(nph)[None, None, :]
    native = np.stack([R.ravel(), TH.ravel(), PH.ravel()], axis=1)
    shape = (nr, nth, nph)
    ir, ith, _ = np.unravel_index(np.arange(native.shape[0]), shape)
    lo = np.stack([faces[ir], th_faces[ith], PH.ravel() - dph / 2], axis=1)
    hi = np.stack([faces[ir + 1], th_faces[ith + 1], PH.ravel() + dph / 2], axis=1)
    bflag = np.zeros(shape, dtype=bool)
    bflag[-1] = True
    return dict(
        nodes=native_to_cartesian(DomainKind.UNIT_BALL3, native), weights=W.ravel(), native=native,
        lo=lo, hi=hi, boundary=bflag.ravel(), spacing=2.0 / resolution, shape=shape,
        axes={"r": r, "r_faces": faces, "theta": th, "theta_faces": th_faces, "phi": ph, "dphi": dph},
    )


def build_grid(domain, resolution: int, rotation: float = 0.0) -> Grid:
    """Structured grid for ``domain``; ``rotation`` turns polar/sphere grids about the z axis.

    Square: (R+1)^2 trapezoid nodes, spacing 1/R.  Disk: polar grid with R/2
    radial nodes clustered towards r = 1 and ~pi R angles.  Sphere: latitude rows
    with row-reduced longitudes.  Ball: spherical shells times a latitude-longitude
    product.
    """
    domain = get_domain(domain)
    resolution = int(resolution)
    if resolution < 8:
        raise ValueError(f"resolution must be >= 8, got {resolution}")
    if domain.kind is DomainKind.UNIT_SQUARE:
        if rotation:
            raise ValueError("the square grid has no rotation parameter")
        parts = _build_square(resolution)
    elif domain.kind is DomainKind.UNIT_DISK:
        parts = _build_disk(resolution, rotation)
    elif domain.kind is DomainKind.SPHERE_S2:
        parts = _build_sphere(resolution, rotation)
    else:
        parts = _build_ball(resolution, rotation)
    flags = np.where(parts["boundary"], BoundaryFlag.BOUNDARY, BoundaryFlag.INTERIOR).astype(np.int8)
    return Grid(
        domain=domain, resolution=resolution, nodes=parts["nodes"], weights=parts["weights"],
        boundary_flags=flags, spacing=parts["spacing"], native=parts["native"],
        cell_lo=parts["lo"], cell_hi=parts["hi"], shape=parts["shape"], rotation=float(rotation),
        axes=parts["axes"],
    )


# ---------------------------------------------------------------------------
# ball regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BallRegion:
    center: np.ndarray
    radius: float
    node_indices: np.ndarray
    clipped_weights: np.ndarray
    under_resolved: bool = False

    @property
    def weight_sum(self) -> float:
        return float(self.clipped_weights.sum())

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature of node-sampled ``values`` (full grid length) over the region."""
        return float(np.dot(self.clipped_weights, np.asarray(values)[self.node_indices]))


def _query_radius(grid: Grid, mu: float) -> float:
    if grid.domain.kind is DomainKind.SPHERE_S2:
        chord = 2.0 * math.sin(min(mu, math.pi) / 2.0)
    else:
        chord = mu
    return chord + grid.max_cell_radius * 1.0000001 + 1e-14


def _check_center(grid: Grid, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != grid.domain.ambient_dimension:
        raise ValueError(f"center needs {grid.domain.ambient_dimension} coordinates")
    if not grid.domain.contains(x0, tol=1e-9)[0]:
        raise ValueError(f"center {tuple(x0)} lies outside the closed {grid.domain.kind.value}")
    if grid.domain.kind is DomainKind.SPHERE_S2:
        x0 = x0 / np.linalg.norm(x0)
    return x0


def ball_region(grid: Grid, x0, mu: float) -> BallRegion:
    """Nodes whose cells meet B(x0, mu), with weights scaled by the sampled inside-fraction."""
    x0 = _check_center(grid, x0)
    mu = float(mu)
    if not (0.0 < mu <= grid.domain.diameter + 1e-12):
        raise ValueError(f"radius must lie in (0, {grid.domain.diameter}], got {mu}")
    _, idx, w = _region_entries(grid, x0[None, :], mu)
    order = np.argsort(idx, kind="stable")
    return BallRegion(
        center=x0, radius=mu, node_indices=idx[order], clipped_weights=w[order],
        under_resolved=mu < 2.0 * grid.spacing,
    )


def _check_centers(grid: Grid, centers) -> np.ndarray:
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    if c.shape[1] != grid.domain.ambient_dimension:
        raise ValueError(f"centers need {grid.domain.ambient_dimension} coordinates")
    bad = ~grid.domain.contains(c, tol=1e-9)
    if bad.any():
        raise ValueError(f"center {tuple(c[np.argmax(bad)])} lies outside the closed {grid.domain.kind.value}")
    if grid.domain.kind is DomainKind.SPHERE_S2:
        c = c / np.linalg.norm(c, axis=1, keepdims=True)
    return c


def _region_entries(grid: Grid, centers: np.ndarray, mu: float):
    """(center index, node index, clipped weight) triples for B(c, mu) over all centers."""
    kind = grid.domain.kind
    lists = grid.tree.query_ball_point(centers, _query_radius(grid, mu))
    lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    if lens.sum() == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    cols = np.concatenate([np.asarray(x, dtype=np.int64) for x in lists])
    rows = np.repeat(np.arange(len(centers)), lens)
    d = _point_distance(kind, grid.nodes[cols], centers[rows])
    rc = grid.cell_radius[cols]
    frac = np.where(d + rc <= mu, 1.0, 0.0)
    straddle = np.nonzero((d + rc > mu) & (d - rc <= mu))[0]
    chunk = 20_000
    for s in range(0, len(straddle), chunk):
        sel = straddle[s:s + chunk]
        pts, jac = grid.cell_samples(cols[sel])
        inside = _point_distance(kind, pts, centers[rows[sel]][:, None, :]) <= mu
        frac[sel] = np.sum(jac * inside, axis=1) / np.sum(jac, axis=1)
    keep = frac > 0
    return rows[keep], cols[keep], grid.weights[cols[keep]] * frac[keep]


def region_matrix(grid: Grid, centers, mus):
    """Sparse (len(centers)*len(mus), N) matrix of clipped weights, row = (center, mu) C order.

    ``region_matrix(...) @ f`` integrates node values ``f`` over every ball at once;
    each row equals ``ball_region(grid, c, mu).clipped_weights`` scattered to the grid.
    """
    from scipy import sparse

    centers = _check_centers(grid, centers)
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    nm = len(mus)
    rows, cols, vals = [], [], []
    for i, mu in enumerate(mus):
        r, c, v = _region_entries(grid, centers, float(mu))
        rows.append(r * nm + i)
        cols.append(c)
        vals.append(v)
    shape = (len(centers) * nm, grid.size)
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def exact_ball_measure(domain: Domain, x0, mu: float) -> float | None:
    """|B(x0, mu) ∩ Ω| where a closed form is available (ball inside, flat half-ball, S^2 cap)."""
    domain = get_domain(domain)
    x0 = np.asarray(x0, dtype=float)
    if domain.kind is DomainKind.SPHERE_S2:
        return 2 * math.pi * (1 - math.cos(min(mu, math.pi)))
    full = math.pi * mu * mu if domain.dimension == 2 else 4 * math.pi * mu ** 3 / 3
    if domain.kind is DomainKind.UNIT_SQUARE:
        gaps = [x0[0], 1 - x0[0], x0[1], 1 - x0[1]]
        if min(gaps) >= mu:
            return full
        touching = [g for g in gaps if g < mu]
        if len(touching) == 1 and touching[0] == 0.0:
            return full / 2
        return None
    if np.linalg.norm(x0) + mu <= 1.0:
        return full
    return None


# ---------------------------------------------------------------------------
# Fermi coordinates
# ---------------------------------------------------------------------------

SQUARE_FACES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class FermiCoordinates:
    tangential: object
    normal: float
    face: str | None = None
    tie: bool = False


def _square_gaps(p):
    x, y = p
    return np.array([y, 1.0 - x, 1.0 - y, x])


def fermi_coordinates(domain, p, face: str | None = None) -> FermiCoordinates:
    """(x', x_n) with x_n the distance to the boundary (or to ``face`` on the square)."""
    domain = get_domain(domain)
    p = np.asarray(p, dtype=float).ravel()
    if not domain.boundary_present:
        raise ValueError("S^2 has no boundary; Fermi coordinates are undefined")
    if domain.kind is DomainKind.UNIT_SQUARE:
        gaps = _square_gaps(p)
        tie = False
        if face is None:
            k = int(np.argmin(gaps))
            tie = bool(np.sum(np.abs(gaps - gaps[k]) <= 1e-12) > 1)
        else:
            k = SQUARE_FACES.index(face)
        tang = p[0] if k in (0, 2) else p[1]
        return FermiCoordinates(float(tang), float(gaps[k]), SQUARE_FACES[k], tie)
    r = float(np.linalg.norm(p))
    if r == 0.0:
        tang = 0.0 if domain.kind is DomainKind.UNIT_DISK else (0.0, 0.0, 1.0)
        return FermiCoordinates(tang, 1.0, "sphere" if domain.dimension == 3 else "circle", True)
    if domain.kind is DomainKind.UNIT_DISK:
        return FermiCoordinates(float(math.atan2(p[1], p[0])), 1.0 - r, "circle")
    return FermiCoordinates(tuple(p / r), 1.0 - r, "sphere")


def fermi_to_points(domain, tangential, normal, face: str | None = None) -> np.ndarray:
    """Inverse of :func:`fermi_coordinates`, vectorized; negative ``normal`` leaves Ω."""
    domain = get_domain(domain)
    xn = np.asarray(normal, dtype=float)
    if domain.kind is DomainKind.UNIT_SQUARE:
        t = np.asarray(tangential, dtype=float)
        t, xn = np.broadcast_arrays(t, xn)
        face = face or "bottom"
        if face == "bottom":
            return np.stack([t, xn], axis=-1)
        if face == "top":
            return np.stack([t, 1.0 - xn], axis=-1)
        if face == "left":
            return np.stack([xn, t], axis=-1)
        if face == "right":
            return np.stack([1.0 - xn, t], axis=-1)
        raise ValueError(f"unknown face {face!r}")
    if domain.kind is DomainKind.UNIT_DISK:
        t = np.asarray(tangential, dtype=float)
        t, xn = np.broadcast_arrays(t, xn)
        r = 1.0 - xn
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
    if domain.kind is DomainKind.UNIT_BALL3:
        u = np.asarray(tangential, dtype=float)
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        return (1.0 - xn)[..., None] * u
    raise ValueError("S^2 has no boundary")


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

_GRID_ARRAYS = ("nodes", "weights", "boundary_flags", "native", "cell_lo", "cell_hi")


def _write_arrays(fh, arrays: dict):
    for arr in arrays.values():
        fh.write(np.ascontiguousarray(arr).tobytes())


def _array_specs(arrays: dict) -> list:
    return [{"name": k, "dtype": str(v.dtype), "shape": list(v.shape)} for k, v in arrays.items()]


def _read_arrays(fh, specs: list) -> dict:
    out = {}
    for s in specs:
        dt = np.dtype(s["dtype"])
        count = int(np.prod(s["shape"])) if s["shape"] else 1
        buf = fh.read(count * dt.itemsize)
        if len(buf) != count * dt.itemsize:
            raise ValueError(f"truncated cache file while reading {s['name']}")
        out[s["name"]] = np.frombuffer(buf, dtype=dt).reshape(s["shape"]).copy()
    return out


def write_header(fh, magic: bytes, header: dict):
    blob = json.dumps(header, sort_keys=True).encode()
    fh.write(magic)
    fh.write(len(blob).to_bytes(8, "little"))
    fh.write(blob)


def read_header(fh, magic: bytes) -> dict:
    got = fh.read(len(magic))
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    n = int.from_bytes(fh.read(8), "little")
    return json.loads(fh.read(n).decode())


def save_grid(grid: Grid, path) -> Path:
    path = Path(path)
    arrays = {k: getattr(grid, k) for k in _GRID_ARRAYS}
    axes = {f"axis:{k}": np.asarray(v) for k, v in grid.axes.items()}
    arrays.update(axes)
    header = {
        "version": GRID_FORMAT_VERSION,
        "domain": grid.domain.kind.value,
        "resolution": grid.resolution,
        "node_count": grid.size,
        "spacing": grid.spacing,
        "rotation": grid.rotation,
        "shape": list(grid.shape) if grid.shape is not None else None,
        "arrays": _array_specs(arrays),
    }
    with open(path, "wb") as fh:
        write_header(fh, GRID_MAGIC, header)
        _write_arrays(fh, arrays)
    return path


def load_grid(path, domain=None, resolution: int | None = None) -> Grid:
    with open(path, "rb") as fh:
        header = read_header(fh, GRID_MAGIC)
        if header.get("version") != GRID_FORMAT_VERSION:
            raise ValueError(f"unsupported grid cache version {header.get('version')}")
        if domain is not None and header["domain"] != get_domain(domain).kind.value:
            raise ValueError(f"cache holds a {header['domain']} grid, not {get_domain(domain).kind.value}")
        if resolution is not None and header["resolution"] != int(resolution):
            raise ValueError(f"cache resolution {header['resolution']} != requested {resolution}")
        arrays = _read_arrays(fh, header["arrays"])
    axes = {k.split(":", 1)[1]: v for k, v in arrays.items() if k.startswith("axis:")}
    if len(arrays["weights"]) != header["node_count"]:
        raise ValueError("node count in header does not match stored arrays")
    shape = tuple(header["shape"]) if header["shape"] is not None else None
    return Grid(
        domain=get_domain(header["domain"]), resolution=header["resolution"], nodes=arrays["nodes"],
        weights=arrays["weights"], boundary_flags=arrays["boundary_flags"], spacing=header["spacing"],
        native=arrays["native"], cell_lo=arrays["cell_lo"], cell_hi=arrays["cell_hi"], shape=shape,
        rotation=header["rotation"], axes=axes,
    )


def cached_grid(domain, resolution: int, cache_dir=None) -> Grid:
    """build_grid backed by an on-disk cache when ``cache_dir`` is given."""
    if cache_dir is None:
        return build_grid(domain, resolution)
    domain = get_domain(domain)
    path = Path(cache_dir) / f"grid_{domain.kind.value}_{int(resolution)}.emgrid"
    if path.exists():
        try:
            return load_grid(path, domain, resolution)
        except ValueError as exc:
            warnings.warn(f"ignoring unreadable grid cache {path}: {exc}")
    grid = build_grid(domain, resolution)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_grid(grid, path)
    return grid

"""Small-ball mass, scaling fits, sup norms, h-Sobolev norms and the boundary-layer cosine test."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .closed_form import EigenMode
from .geometry import (
    DomainKind, Grid, _check_center, build_grid, cartesian_to_native, fermi_to_points,
    native_to_cartesian, region_matrix, ball_region,
)

UNDER_RESOLVED_FACTOR = 4.0      # ball_mass flags mu < 4 Δ
MAX_SOBOLEV_LAMBDA_DX = 0.3
DEFAULT_RESOLUTION = {
    DomainKind.UNIT_SQUARE: 256, DomainKind.UNIT_DISK: 256, DomainKind.SPHERE_S2: 256,
    DomainKind.UNIT_BALL3: 160,
}


def fmt(x) -> str:
    return format(float(x), ".12g")


def format_point(p) -> str:
    return ";".join(fmt(v) for v in np.ravel(p))


@lru_cache(maxsize=8)
def default_grid(kind: DomainKind, resolution: int | None = None) -> Grid:
    return build_grid(kind.value, resolution or DEFAULT_RESOLUTION[kind])


def _grid_for(mode: EigenMode, grid: Grid | None) -> Grid:
    if grid is not None:
        return grid
    if mode.grid is not None:
        return mode.grid
    return default_grid(mode.domain.kind)


def node_density(mode: EigenMode, grid: Grid) -> np.ndarray:
    v = mode.values_on(grid)
    return np.abs(v) ** 2 if np.iscomplexobj(v) else v * v


# ---------------------------------------------------------------------------
# ball mass
# ---------------------------------------------------------------------------

class BallMass(NamedTuple):
    mass: float
    under_resolved: bool
    method: str


def _gauss_piecewise(breaks, npts_total: float, min_pts: int = 12):
    """Gauss-Legendre nodes/weights on consecutive intervals of ``breaks``."""
    xs, ws = [], []
    span = breaks[-1] - breaks[0]
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 1e-15:
            continue
        n = max(min_pts, int(math.ceil(npts_total * (b - a) / span)))
        x, w = np.polynomial.legendre.leggauss(n)
        xs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def beam_cap_mass(mode: EigenMode, x0, mu: float, nodes: int = 400) -> float:
    """Exact 1D reduction of ∫_{B(x0, μ)} |N (x+iy)^n|² dσ over a geodesic cap.

    In polar angle θ about the z axis the cap cuts each latitude circle in an arc
    of length 2 arccos((cos μ - cos θ_p cos θ)/(sin θ_p sin θ)).  The θ integral
    is split at the arc's endpoints and each piece mapped by θ = a + (b-a)(1-cos t)/2,
    which removes the square-root behaviour of the arc length at the ends.
    """
    n = mode.params["n"]
    p = np.asarray(x0, dtype=float)
    p = p / np.linalg.norm(p)
    tp = math.acos(max(-1.0, min(1.0, p[2])))
    mu = min(float(mu), math.pi)
    cuts = {0.0, math.pi}
    for c in (tp - mu, tp + mu, mu - tp, 2 * math.pi - tp - mu):
        if 0.0 < c < math.pi:
            cuts.add(c)
    cuts = sorted(cuts)
    t, wt = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * math.pi * (t + 1.0)
    wt = 0.5 * math.pi * wt
    total = 0.0
    st_p = math.sin(tp)
    log_n2 = 2 * math.log(mode.norm_const)
    for a, b in zip(cuts[:-1], cuts[1:]):
        th = a + 0.5 * (b - a) * (1.0 - np.cos(t))
        jac = 0.5 * (b - a) * np.sin(t)
        s = np.sin(th)
        with np.errstate(divide="ignore", invalid="ignore"):
            if st_p < 1e-15:
                arc = np.where(np.cos(th) * np.sign(p[2]) >= math.cos(mu), 2 * math.pi, 0.0)
            else:
                c = (math.cos(mu) - math.cos(tp) * np.cos(th)) / (st_p * s)
                arc = 2.0 * np.arccos(np.clip(c, -1.0, 1.0))
            dens = np.exp(log_n2 + 2 * n * np.log(s))
        dens = np.where(s > 0, dens, 0.0)
        total += float(np.sum(wt * jac * dens * arc * s))
    return total


def _flat_exit(kind: DomainKind, x0: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Distance from x0 along unit directions u to the boundary of a convex domain."""
    if kind is DomainKind.UNIT_SQUARE:
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(u[:, 0] > 0, (1 - x0[0]) / u[:, 0], np.where(u[:, 0] < 0, -x0[0] / u[:, 0], np.inf))
            ty = np.where(u[:, 1] > 0, (1 - x0[1]) / u[:, 1], np.where(u[:, 1] < 0, -x0[1] / u[:, 1], np.inf))
        return np.maximum(np.minimum(tx, ty), 0.0)
    b = u @ x0
    c = float(x0 @ x0) - 1.0
    return np.maximum(-b + np.sqrt(np.maximum(b * b - c, 0.0)), 0.0)


def _angle_breaks_2d(kind: DomainKind, x0: np.ndarray, mu: float):
    br = [0.0, 2 * math.pi]
    if kind is DomainKind.UNIT_SQUARE:
        for cx in (0.0, 1.0):
            for cy in (0.0, 1.0):
                br.append(math.atan2(cy - x0[1], cx - x0[0]) % (2 * math.pi))
        # directions where the circle |y - x0| = mu meets an edge line
        for axis, edge in ((0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)):
            s = (edge - x0[axis]) / mu
            if abs(s) <= 1:
                base = math.acos(s) if axis == 0 else math.asin(s)
                cands = (base, -base) if axis == 0 else (base, math.pi - base)
                br.extend(a % (2 * math.pi) for a in cands)
    else:
        r0 = float(np.linalg.norm(x0))
        if r0 > 0:
            c = (1 - r0 * r0 - mu * mu) / (2 * mu * r0)
            if abs(c) <= 1:
                a0 = math.atan2(x0[1], x0[0])
                br.extend((a0 + s * math.acos(c)) % (2 * math.pi) for s in (1, -1))
    return np.unique(np.array(br))


def polar_mass(mode: EigenMode, x0, mu: float, density=None) -> float:
    """∫_{B(x0, μ) ∩ Ω} |φ|² in polar coordinates about x0, exact domain clipping by ray exit."""
    kind = mode.domain.kind
    x0 = np.asarray(x0, dtype=float)
    f = density or mode.density
    lam_mu = max(mode.lam, 1.0) * mu
    nr = 16 + int(2 * lam_mu)
    xr, wr = np.polynomial.legendre.leggauss(nr)
    tr = 0.5 * (xr + 1.0)
    wr = 0.5 * wr
    if kind in (DomainKind.UNIT_SQUARE, DomainKind.UNIT_DISK):
        a, wa = _gauss_piecewise(_angle_breaks_2d(kind, x0, mu), 64 + 8 * lam_mu)
        u = np.stack([np.cos(a), np.sin(a)], axis=1)
        rmax = np.minimum(mu, _flat_exit(kind, x0, u))
        rho = rmax[:, None] * tr[None, :]
        pts = x0[None, None, :] + rho[..., None] * u[:, None, :]
        w = wa[:, None] * wr[None, :] * rmax[:, None] * rho
        return float(np.sum(w * f(pts)))
    if kind is DomainKind.SPHERE_S2:
        x0 = x0 / np.linalg.norm(x0)
        e1 = np.cross(x0, [0.0, 0.0, 1.0] if abs(x0[2]) < 0.9 else [1.0, 0.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(x0, e1)
        na = 64 + int(8 * lam_mu)
        a = (np.arange(na) + 0.5) * 2 * math.pi / na
        rmax = min(mu, math.pi)
        rho = rmax * tr
        dirs = np.cos(a)[:, None] * e1[None, :] + np.sin(a)[:, None] * e2[None, :]
        pts = np.cos(rho)[None, :, None] * x0 + np.sin(rho)[None, :, None] * dirs[:, None, :]
        w = (2 * math.pi / na) * (wr * rmax * np.sin(rho))[None, :]
        return float(np.sum(w * f(pts)))
    # unit 3-ball: polar axis through the origin and x0, so the exit distance depends on β only
    r0 = float(np.linalg.norm(x0))
    axis = x0 / r0 if r0 > 0 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(axis, [0.0, 0.0, 1.0] if abs(axis[2]) < 0.9 else [1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    br = [0.0, math.pi]
    if r0 > 0:
        c = (1 - r0 * r0 - mu * mu) / (2 * mu * r0)
        if abs(c) <= 1:
            br.append(math.acos(c))
    b, wb = _gauss_piecewise(np.unique(br), 32 + 4 * lam_mu)
    na = 32 + int(8 * lam_mu)
    a = (np.arange(na) + 0.5) * 2 * math.pi / na
    sb, cb = np.sin(b), np.cos(b)
    u = (sb[:, None, None] * (np.cos(a)[None, :, None] * e1 + np.sin(a)[None, :, None] * e2)
         + cb[:, None, None] * axis)
    flat_u = u.reshape(-1, 3)
    rmax = np.minimum(mu, _flat_exit(kind, x0, flat_u)).reshape(len(b), na)
    rho = rmax[..., None] * tr
    pts = x0 + rho[..., None] * u[:, :, None, :]
    w = (wb * sb)[:, None, None] * (2 * math.pi / na) * (rmax[..., None] * wr) * rho ** 2
    return float(np.sum(w * f(pts)))


def ball_mass(mode: EigenMode, x0, mu: float, grid: Grid | None = None) -> BallMass:
    """‖φ‖² over B(x0, μ) ∩ Ω.

    Complex Gaussian beams use the exact cap reduction; other closed-form modes
    use polar quadrature with exact clipping unless a ``grid`` is supplied; grid
    quadrature (clipped weights) is used for discrete modes or when asked.
    """
    mu = float(mu)
    if mu <= 0:
        raise ValueError("radius must be positive")
    if grid is None and mode.is_closed_form:
        if mode.family == "beam" and mode.is_complex:
            return BallMass(beam_cap_mass(mode, x0, mu), False, "cap-1d")
        p = np.asarray(x0, dtype=float)
        if not mode.domain.contains(p, tol=1e-9)[0]:
            raise ValueError(f"center {tuple(p)} lies outside the domain")
        return BallMass(polar_mass(mode, p, mu), False, "polar")
    g = _grid_for(mode, grid)
    region = ball_region(g, x0, mu)
    mass = region.integrate(node_density(mode, g))
    return BallMass(mass, mu < UNDER_RESOLVED_FACTOR * g.spacing, "grid")


# ---------------------------------------------------------------------------
# profiles and sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MassProfile:
    mode_id: str
    center: tuple
    mus: np.ndarray
    masses: np.ndarray
    flags: np.ndarray
    exponent: float
    log_constant: float
    fit_residual: float
    window: tuple
    method: str

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.masses) >= -1e-14))


def geometric_mus(lo: float, hi: float, count: int) -> np.ndarray:
    return np.geomspace(float(lo), float(hi), int(count))


def _check_geometric(mus: np.ndarray):
    if len(mus) < 8:
        raise ValueError("a mass profile needs at least 8 radii")
    if np.any(mus <= 0) or np.any(np.diff(mus) <= 0):
        raise ValueError("radii must be positive and increasing")
    q = np.diff(np.log(mus))
    if np.max(np.abs(q - q.mean())) > 1e-6 * max(1.0, abs(q.mean())):
        raise ValueError("radii must be geometrically spaced")


def fit_power_law(mus, masses, window=None):
    """Least-squares line log M = α log μ + log C over μ in ``window``; returns (α, log C, rms)."""
    mus = np.asarray(mus, dtype=float)
    masses = np.asarray(masses, dtype=float)
    lo, hi = window if window is not None else (mus.min(), mus.max())
    sel = (mus >= lo * (1 - 1e-12)) & (mus <= hi * (1 + 1e-12)) & (masses > 0)
    if sel.sum() < 2:
        raise ValueError(f"fit window [{lo:g}, {hi:g}] holds fewer than two usable radii")
    x, y = np.log(mus[sel]), np.log(masses[sel])
    slope, icept = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + icept)) ** 2)))
    return float(slope), float(icept), res


def mass_profile(mode: EigenMode, x0, mus, window=None, grid: Grid | None = None) -> MassProfile:
    """Masses on a geometric μ grid ⊂ [h, diam] and a power-law fit over ``window``.

    Without an explicit window, discrete modes fit over μ >= 3h (the smallest
    radii are under-resolved); closed-form modes use the whole grid.
    """
    mus = np.asarray(mus, dtype=float)
    _check_geometric(mus)
    diam = mode.domain.diameter
    # the constant mode has no wavelength, so only the upper bound applies
    h = min(mode.h, diam) if mode.lam > 0 else 0.0
    if mus[0] < h * (1 - 1e-9) or mus[-1] > diam * (1 + 1e-12):
        raise ValueError(f"radii must lie in [h, diam] = [{h:.6g}, {diam:.6g}]")
    if mode.is_closed_form and grid is None:
        vals = [ball_mass(mode, x0, m) for m in mus]
        masses = np.array([v.mass for v in vals])
        flags = np.zeros(len(mus), dtype=bool)
        method = vals[0].method
    else:
        g = _grid_for(mode, grid)
        c = _check_center(g, x0)
        masses = region_matrix(g, c[None, :], mus) @ node_density(mode, g)
        flags = mus < UNDER_RESOLVED_FACTOR * g.spacing
        method = "grid"
    if window is None:
        window = (mus[0], mus[-1]) if mode.is_closed_form else (max(mus[0], 3 * h), mus[-1])
    alpha, logc, res = fit_power_law(mus, masses, window)
    return MassProfile(mode.mode_id, tuple(np.ravel(x0).tolist()), mus, masses, flags, alpha, logc, res,
                       (float(window[0]), float(window[1])), method)


@dataclass(frozen=True)
class SweepRow:
    mode_id: str
    lam: float
    K: float
    center: tuple
    mu: float
    flagged: bool
    masses: np.ndarray = field(repr=False, default=None)


def nonconcentration_sweep(modes: Sequence[EigenMode], centers, mus, grid: Grid | None = None,
                           mu_floor: str = "h") -> list[SweepRow]:
    """K(φ) = max over centers and μ >= h of M(x0, μ)/μ, for every mode.

    With a ``grid`` all masses come from one shared sparse region matrix (one
    row per center and radius); without one, each mass uses :func:`ball_mass`.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    mus = np.asarray(mus, dtype=float)
    rows = []
    mat = None
    if grid is not None:
        mat = region_matrix(grid, centers, mus)
    for mode in modes:
        # the constant mode has no wavelength, hence no lower radius bound
        floor = min(mode.h, mode.domain.diameter) if mu_floor == "h" and mode.lam > 0 else 0.0
        if mat is not None:
            m = (mat @ node_density(mode, grid)).reshape(len(centers), len(mus))
        else:
            m = np.array([[ball_mass(mode, c, mu).mass for mu in mus] for c in centers])
        ok = mus >= floor * (1 - 1e-9)
        if not ok.any():
            raise ValueError(f"no radius >= h for {mode.mode_id}")
        ratio = np.where(ok[None, :], m / mus[None, :], -np.inf)
        ci, mi = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        flagged = bool(grid is not None and np.any(mus[ok] < UNDER_RESOLVED_FACTOR * grid.spacing))
        rows.append(SweepRow(mode.mode_id, mode.lam, float(ratio[ci, mi]), tuple(centers[ci].tolist()),
                             float(mus[mi]), flagged, m))
    return rows


# ---------------------------------------------------------------------------
# sup norm and the local-mass ratio
# ---------------------------------------------------------------------------

def _native_bounds(kind: DomainKind):
    if kind is DomainKind.UNIT_SQUARE:
        return [(0.0, 1.0), (0.0, 1.0)]
    if kind is DomainKind.UNIT_DISK:
        return [(0.0, 1.0), (None, None)]
    if kind is DomainKind.SPHERE_S2:
        return [(0.0, math.pi), (None, None)]
    return [(0.0, 1.0), (0.0, math.pi), (None, None)]


def sup_norm(mode: EigenMode, grid: Grid | None = None, refine: bool = True):
    """(max |φ|, argmax point): node maximum, then local refinement for closed-form modes."""
    g = _grid_for(mode, grid)
    dens = node_density(mode, g)
    i = int(np.argmax(dens))
    best, point = math.sqrt(dens[i]), g.nodes[i].copy()
    if not (refine and mode.is_closed_form):
        return best, point
    kind = mode.domain.kind
    u0 = cartesian_to_native(kind, point)
    span = np.asarray(g.cell_hi[i] - g.cell_lo[i], dtype=float)
    box = []
    for (lo, hi), c, s in zip(_native_bounds(kind), u0, span):
        a, b = c - 2 * s, c + 2 * s
        box.append((a if lo is None else max(lo, a), b if hi is None else min(hi, b)))

    def neg(u):
        return -float(mode.density(native_to_cartesian(kind, np.asarray(u)[None, :]))[0])

    res = minimize(neg, u0, method="L-BFGS-B", bounds=box, options={"ftol": 1e-15, "gtol": 1e-12})
    if -res.fun > best * best:
        best = math.sqrt(-res.fun)
        point = native_to_cartesian(kind, res.x[None, :])[0]
    return best, point


@dataclass(frozen=True)
class Thm2Report:
    mode_id: str
    lam: float
    h: float
    supnorm: float
    S_h: float
    ratio: float
    center_count: int
    pitch: float
    argmax_center: tuple
    under_resolved: bool


def lattice_centers(kind: DomainKind, pitch: float) -> np.ndarray:
    """Centers covering Ω̄ with nearest-center distance <= pitch/√2 (plus boundary points)."""
    if kind is DomainKind.UNIT_SQUARE:
        n = int(math.ceil(1.0 / pitch))
        x = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)
    if kind is DomainKind.UNIT_DISK:
        n = int(math.ceil(1.0 / pitch))
        x = np.linspace(-1.0, 1.0, 2 * n + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= 1.0]
        nt = int(math.ceil(2 * math.pi / pitch))
        t = 2 * math.pi * np.arange(nt) / nt
        return np.concatenate([pts, np.stack([np.cos(t), np.sin(t)], axis=1)])
    raise ValueError(f"no center lattice for {kind.value}")


def thm2_ratio(mode: EigenMode, grid: Grid | None = None, centers=None) -> Thm2Report:
    """R = ‖φ‖∞ / (h^{-n/2} max_x ‖φ‖_{L²(B(x, h) ∩ Ω)}) with both sides on one grid."""
    if mode.lam <= 0:
        raise ValueError("the ratio needs λ > 0 (the constant mode has no finite h)")
    g = _grid_for(mode, grid)
    h = mode.h
    pitch = h / 2
    if centers is None:
        centers = lattice_centers(mode.domain.kind, pitch)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    gap = float(cKDTree(centers).query(g.nodes)[0].max())
    if gap > h / 2 * (1 + 1e-9):
        raise ValueError(f"center set too sparse: a node lies {gap:.4g} > h/2 from every center")
    dens = node_density(mode, g)
    masses = region_matrix(g, centers, [h]) @ dens
    k = int(np.argmax(masses))
    s_h = math.sqrt(max(float(masses[k]), 0.0))
    sup = math.sqrt(float(dens.max()))
    n = mode.domain.dimension
    ratio = sup / (h ** (-n / 2) * s_h)
    return Thm2Report(mode.mode_id, mode.lam, h, sup, s_h, ratio, len(centers), pitch,
                      tuple(centers[k].tolist()), h < UNDER_RESOLVED_FACTOR * g.spacing)


# ---------------------------------------------------------------------------
# h-Sobolev norms
# ---------------------------------------------------------------------------

def _second_difference(v: np.ndarray, d: float, axis: int) -> np.ndarray:
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / (d * d)
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / (d * d)
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / (d * d)
    return np.moveaxis(out, 0, axis)


def h_sobolev_norm(mode: EigenMode, order: int, grid: Grid | None = None) -> float:
    """‖φ‖²_{H^s_h} = Σ_{|β| <= s} ‖(hD)^β φ‖², each multi-index once, by finite differences.

    Provided on the unit square (tensor grid with trapezoid weights).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if mode.domain.kind is not DomainKind.UNIT_SQUARE:
        raise ValueError("h-Sobolev norms are computed on the unit square grid")
    g = _grid_for(mode, grid)
    d = g.spacing
    if mode.lam * d > MAX_SOBOLEV_LAMBDA_DX:
        raise ValueError(f"λΔ = {mode.lam * d:.3g} > {MAX_SOBOLEV_LAMBDA_DX}: derivatives unresolved")
    h = mode.h if mode.lam > 0 else 1.0
    v = np.real(mode.values_on(g)).reshape(g.shape)
    w = g.weights.reshape(g.shape)
    terms = [v]
    dx = np.gradient(v, d, axis=0, edge_order=2)
    dy = np.gradient(v, d, axis=1, edge_order=2)
    terms += [h * dx, h * dy]
    if order == 2:
        terms += [h * h * _second_difference(v, d, 0), h * h * np.gradient(dx, d, axis=1, edge_order=2),
                  h * h * _second_difference(v, d, 1)]
    return float(sum(np.sum(w * t * t) for t in terms))


# ---------------------------------------------------------------------------
# boundary layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerReport:
    mode_id: str
    face: str | None
    width: float
    layers: int
    max_layer_phi: float
    max_psi_boundary: float
    max_psi_inner: float
    max_layer_psi: float
    ratio: float
    max_principle_ratio: float


def boundary_layer_diagnostic(mode: EigenMode, face: str | None = None, layers: int = 32,
                              tangential: int | None = None) -> LayerReport:
    """Compare |φ| in {0 <= x_n <= πh/8} with ψ_h = cos(2x_n/h) φ on the layer's two edges.

    ratio = max_layer |φ| / (√2 · max over both edges of |ψ_h|); the weak maximum
    principle for ψ_h together with cos(2x_n/h) >= 2^{-1/2} bounds it by 1.
    """
    kind = mode.domain.kind
    if not mode.domain.boundary_present:
        raise ValueError("the domain has no boundary")
    if mode.lam <= 0:
        raise ValueError("the layer needs λ > 0")
    if kind is DomainKind.UNIT_BALL3:
        raise ValueError("layer diagnostic is provided for 2D domains")
    h = mode.h
    width = math.pi * h / 8
    if kind is DomainKind.UNIT_SQUARE:
        face = face or "bottom"
    if mode.is_closed_form:
        if layers < 4:
            raise ValueError("the layer must be resolved by at least 4 grid layers")
        xn = np.linspace(0.0, width, layers + 1)
        nt = tangential or max(1024, int(32 * mode.lam))
        if kind is DomainKind.UNIT_SQUARE:
            t = np.linspace(0.0, 1.0, nt + 1)
        else:
            t = 2 * math.pi * np.arange(nt) / nt
        T, XN = np.meshgrid(t, xn, indexing="ij")
        phi = np.abs(mode.value(fermi_to_points(mode.domain, T, XN, face)))
    else:
        g = mode.grid
        if kind is DomainKind.UNIT_SQUARE:
            v = mode.vector.reshape(g.shape)
            x = g.axes["x"]
            if face == "bottom":
                sub = v
            elif face == "top":
                sub = v[:, ::-1]
            elif face == "left":
                sub = v.T
            else:
                sub = v.T[:, ::-1]
            rows = int(np.sum(x <= width * (1 + 1e-12)))
            xn = x[:rows]
            phi = np.abs(sub[:, :rows])
        else:
            r = g.axes["r"]
            rows = int(np.sum(1 - r <= width * (1 + 1e-12)))
            xn = (1 - r)[::-1][:rows]
            phi = np.abs(mode.vector.reshape(g.shape)[::-1][:rows].T)
        if rows < 5:
            raise ValueError(f"layer of width {width:.4g} holds only {rows} grid rows (need >= 5 rows)")
        layers = rows - 1
    psi = np.cos(2 * xn / h)[None, :] * phi
    outer = float(psi[:, 0].max())
    inner = float(psi[:, -1].max())
    edge = max(outer, inner)
    max_phi = float(phi.max())
    return LayerReport(mode.mode_id, face, width, layers, max_phi, outer, inner, float(psi.max()),
                       max_phi / (math.sqrt(2) * edge), float(psi.max()) / edge)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

MASS_PROFILE_COLUMNS = ("mode_id", "x0", "mu", "mass", "flag")
THM2_COLUMNS = ("mode_id", "lambda", "supnorm", "S_h", "ratio")
SWEEP_COLUMNS = ("mode_id", "lambda", "K", "x0", "mu", "flag")


def csv_writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_mass_profile_csv(profiles: Sequence[MassProfile], path) -> Path:
    fh, w = csv_writer(path)
    with fh:
        w.writerow(MASS_PROFILE_COLUMNS)
        for p in profiles:
            for mu, m, f in zip(p.mus, p.masses, p.flags):
                w.writerow([p.mode_id, format_point(p.center), fmt(mu), fmt(m), "under_resolved" if f else "ok"])
    return Path(path)


def write_thm2_csv(reports: Sequence[Thm2Report], path) -> Path:
    fh, w = csv_writer(path)
    with fh:
        w.writerow(THM2_COLUMNS)
        for r in reports:
            w.writerow([r.mode_id, fmt(r.lam), fmt(r.supnorm), fmt(r.S_h), fmt(r.ratio)])
    return Path(path)


def write_sweep_summary_csv(rows: Sequence[SweepRow], path) -> Path:
    fh, w = csv_writer(path)
    with fh:
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r.mode_id, fmt(r.lam), fmt(r.K), format_point(r.center), fmt(r.mu),
                        "under_resolved" if r.flagged else "ok"])
    return Path(path)


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


__all__ = [
    "BallMass", "MassProfile", "SweepRow", "Thm2Report", "LayerReport", "ball_mass", "beam_cap_mass",
    "polar_mass", "mass_profile", "fit_power_law", "geometric_mus", "nonconcentration_sweep",
    "sup_norm", "thm2_ratio", "lattice_centers", "h_sobolev_norm", "boundary_layer_diagnostic",
    "write_mass_profile_csv", "write_thm2_csv", "write_sweep_summary_csv", "read_csv_rows",
    "default_grid", "node_density", "csv_writer",
]

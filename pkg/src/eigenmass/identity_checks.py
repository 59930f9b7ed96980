"""Numerical checks of the identities behind the non-concentration argument.

* ``CutoffFamily``: a concrete odd, monotone cutoff χ̃ with χ̃(s) = s/2 on
  [-1, 1] and |χ̃| = 1 outside [-3, 3], together with γ = χ̃'.
* Rellich commutator at a flat boundary: with P = -h²Δ - 1 and
  A = ψ(x/μ)(x·hD), the pairing (i/h)<[P, A]φ, φ> vanishes for an eigenfunction
  and splits into a core term (≈ 2<ψφ, φ>) and a cutoff term.  Everything is
  evaluated with the discrete Laplacian of the solver and grid quadrature.
* Green representation on the unit 3-ball, where the metric is exactly flat:
  the mean-value identity with G = c₃|x₀ - y|⁻¹ and the resulting formula for
  φ(x₀) in terms of ball integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .closed_form import BoundaryCondition, EigenMode
from .discrete_solver import assemble
from .geometry import DomainKind
from .mass_analysis import ball_mass, csv_writer, default_grid, fmt, format_point

_GAUSS_NODES = 64
RELLICH_RESOLUTION = 512
MAX_LAMBDA_DX = 0.2
CORE_CONSTANT = 0.5       # |T_core - 2 M_ψ| <= CORE_CONSTANT·μ + ε_disc
CUTOFF_CONSTANT = 4.0     # |T_cutoff| <= CUTOFF_CONSTANT·μ (+ ε_disc)
MIN_GREEN_NODES = 10      # μ >= 10 Δ_quad
ROUNDOFF = 1e-12          # relative floor for ε_disc


# ---------------------------------------------------------------------------
# cutoff family
# ---------------------------------------------------------------------------

def _step_parts(t):
    """Smooth step S(t) (0 for t <= 0, 1 for t >= 1), S' and S'' from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    s = np.where(t >= 1, 1.0, 0.0)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    ti = t[inside]
    q = 1.0 / ti - 1.0 / (1.0 - ti)
    dq = -1.0 / ti ** 2 - 1.0 / (1.0 - ti) ** 2
    ddq = 2.0 / ti ** 3 - 2.0 / (1.0 - ti) ** 3
    si = expit(-q)
    w = si * expit(q)           # S(1 - S) without overflow
    s1 = -w * dq
    s[inside] = si
    d1[inside] = s1
    d2[inside] = -s1 * (1.0 - 2.0 * si) * dq - w * ddq
    return s, d1, d2


def _step_integral_to_one(a):
    """∫_a^1 S(t) dt for a in [0, 1] (Gauss-Legendre, S is smooth)."""
    a = np.asarray(a, dtype=float)
    x, w = np.polynomial.legendre.leggauss(_GAUSS_NODES)
    half = 0.5 * (1.0 - a)
    t = a[..., None] + half[..., None] * (x + 1.0)
    return half * (_step_parts(t)[0] @ w)


@dataclass(frozen=True)
class CutoffFamily:
    """χ̃ and γ = χ̃' at scale ``mu``: χ̃_μ(s) = χ̃(s/μ), γ_μ(s) = γ(s/μ).

    γ(s) = S((3 - |s|)/2)/2, so γ ≡ 1/2 on [-1, 1] and vanishes outside
    [-3, 3].  Because S(t) + S(1 - t) = 1 the transition integrates to 1/2 and
    χ̃(3) = 1 without any calibration constant.
    """

    mu: float = 1.0

    def scaled(self, mu: float) -> "CutoffFamily":
        if not mu > 0:
            raise ValueError("scale must be positive")
        return replace(self, mu=float(mu))

    def chi(self, s):
        u = np.asarray(s, dtype=float) / self.mu
        a = np.abs(u)
        out = np.where(a <= 1, 0.5 * a, 1.0)
        mid = (a > 1) & (a < 3)
        if np.any(mid):
            out = np.array(out, dtype=float)
            out[mid] = 0.5 + _step_integral_to_one((3.0 - a[mid]) / 2.0)
        return np.sign(u) * out

    def gamma(self, s):
        u = np.asarray(s, dtype=float) / self.mu
        return 0.5 * _step_parts((3.0 - np.abs(u)) / 2.0)[0]

    def gamma_prime(self, s):
        """d/ds of γ(s/μ) (includes the 1/μ chain factor)."""
        u = np.asarray(s, dtype=float) / self.mu
        d1 = _step_parts((3.0 - np.abs(u)) / 2.0)[1]
        return -0.25 * np.sign(u) * d1 / self.mu

    def bump(self, s, derivative: int = 0):
        """Plateau profile b(s/μ) = 2γ(2|s|/μ - 1): 1 on |s| <= μ, 0 for |s| >= 2μ."""
        u = np.asarray(s, dtype=float) / self.mu
        vals = _step_parts(2.0 - np.abs(u))
        if derivative == 0:
            return vals[0]
        if derivative == 1:
            return -np.sign(u) * vals[1] / self.mu
        if derivative == 2:
            return vals[2] / self.mu ** 2
        raise ValueError("derivative must be 0, 1 or 2")


def build_cutoffs() -> CutoffFamily:
    """The unit-scale cutoff family."""
    return CutoffFamily()


# ---------------------------------------------------------------------------
# Rellich commutator on the unit square
# ---------------------------------------------------------------------------

_EDGE_MIDPOINTS = {(0.5, 0.0), (0.5, 1.0), (0.0, 0.5), (1.0, 0.5)}


@dataclass
class CommutatorReport:
    mode_id: str
    p0: tuple
    mu: float
    h: float
    resolution: int
    t_rellich: float
    t_core: float
    t_cutoff: float
    psi_mass: float               # M_ψ = <ψφ, φ>
    ball_mass: float              # ‖φ‖² on B_μ(p0)
    core_residual: float          # T_core - 2 M_ψ
    eps_rellich: float
    eps_core: float
    decomposition_error: float    # T_rellich - (T_core + T_cutoff)
    extras: dict = field(default_factory=dict)

    @property
    def recovered_mass(self) -> float:
        return 2.0 * self.ball_mass

    @property
    def rellich_ok(self) -> bool:
        return abs(self.t_rellich) <= self.eps_rellich

    @property
    def core_ok(self) -> bool:
        return abs(self.core_residual) <= CORE_CONSTANT * self.mu + self.eps_core

    def to_text(self) -> str:
        rows = [
            ("mode_id", self.mode_id), ("p0", format_point(self.p0)), ("mu", fmt(self.mu)),
            ("h", fmt(self.h)), ("resolution", self.resolution),
            ("T_rellich", fmt(self.t_rellich)), ("T_core", fmt(self.t_core)),
            ("T_cutoff", fmt(self.t_cutoff)), ("psi_mass", fmt(self.psi_mass)),
            ("recovered_mass", fmt(self.recovered_mass)),
            ("core_residual", fmt(self.core_residual)),
            ("eps_rellich", fmt(self.eps_rellich)), ("eps_core", fmt(self.eps_core)),
            ("decomposition_error", fmt(self.decomposition_error)),
            ("rellich_ok", self.rellich_ok), ("core_ok", self.core_ok),
        ]
        rows += [(k, fmt(v) if isinstance(v, float) else v) for k, v in self.extras.items()]
        return "\n".join(f"{k} = {v}" for k, v in rows)


def _check_rellich_inputs(mode: EigenMode, p0, mu: float, resolution: int, allow_subscale=False):
    if mode.domain.kind is not DomainKind.UNIT_SQUARE:
        raise ValueError("the Rellich check runs on the unit square only")
    if mode.bc not in (BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN):
        raise ValueError("mode must carry a Dirichlet or Neumann condition")
    p0 = tuple(float(c) for c in np.asarray(p0, dtype=float).ravel())
    if p0 not in _EDGE_MIDPOINTS:
        raise ValueError(f"p0 must be an edge midpoint of the square, got {p0}")
    if not mu > 0:
        raise ValueError("mu must be positive")
    if mu > 0.25:
        raise ValueError(f"mu = {mu:g} > 1/4: the cutoff support would reach a corner")
    if mode.lam == 0:
        raise ValueError("the constant mode has no semiclassical scale")
    if not allow_subscale and mu < mode.h * (1 - 1e-12):
        raise ValueError(f"mu = {mu:g} is below h = {mode.h:g}")
    if mode.lam / resolution > MAX_LAMBDA_DX:
        raise ValueError(f"lambda·Δ = {mode.lam / resolution:.3g} exceeds {MAX_LAMBDA_DX}; "
                         "raise the resolution")
    return np.array(p0)


@lru_cache(maxsize=8)
def _square_operator(resolution: int, bc: BoundaryCondition):
    return assemble(default_grid(DomainKind.UNIT_SQUARE, resolution), bc)


def _rellich_terms(mode: EigenMode, p0: np.ndarray, mu: float, resolution: int) -> dict:
    op = _square_operator(resolution, mode.bc)
    grid = op.grid
    shape = grid.shape
    d = grid.spacing
    h2 = mode.h ** 2
    w = grid.weights

    def P(v):
        return h2 * op.apply_laplacian(v) - v

    def grad(v):
        gx, gy = np.gradient(v.reshape(shape), d, edge_order=2)
        return gx.ravel(), gy.ravel()

    X = grid.nodes[:, 0] - p0[0]
    Y = grid.nodes[:, 1] - p0[1]

    def B0(v):
        gx, gy = grad(v)
        return X * gx + Y * gy

    cut = build_cutoffs().scaled(mu)
    bx, by = cut.bump(X), cut.bump(Y)
    psi = bx * by
    phi = mode.values_on(grid)

    def pair(u):
        return float(np.dot(w, u * phi))

    u = B0(phi)
    Pphi = P(phi)
    Pu = P(u)
    t_rellich = pair(P(psi * u)) - pair(psi * B0(Pphi))
    t_core = pair(psi * (Pu - B0(Pphi)))
    t_cutoff = pair(P(psi * u) - psi * Pu)
    # analytic split of [-h²Δ, ψ]u = -2h²∇ψ·∇u - h²(Δψ)u
    dpx = cut.bump(X, 1) * by
    dpy = bx * cut.bump(Y, 1)
    lap_psi = cut.bump(X, 2) * by + bx * cut.bump(Y, 2)
    ux, uy = grad(u)
    t_grad = pair(-2.0 * h2 * (dpx * ux + dpy * uy))
    t_lap = pair(-h2 * lap_psi * u)
    return dict(t_rellich=t_rellich, t_core=t_core, t_cutoff=t_cutoff,
                psi_mass=pair(psi * phi), t_grad=t_grad, t_lap=t_lap)


def _roundoff_floor(terms: dict) -> float:
    return ROUNDOFF * max(1.0, abs(terms["t_core"]), abs(terms["t_cutoff"]))


def rellich_commutator_report(mode: EigenMode, p0=(0.5, 0.0), mu: float = 0.2,
                              resolution: int = RELLICH_RESOLUTION) -> CommutatorReport:
    """Rellich pairing and its core/cutoff split for a square mode at an edge midpoint.

    ε_disc for each term is the gap between the values at ``resolution`` and
    ``resolution // 2`` (a Richardson estimate that bounds the fine-grid error
    whenever the scheme converges at order >= 1).  The identity holds at any
    scale, so μ < h is flagged (``mu_below_h``) rather than rejected.
    """
    p0 = _check_rellich_inputs(mode, p0, mu, resolution, allow_subscale=True)
    fine = _rellich_terms(mode, p0, mu, resolution)
    coarse = _rellich_terms(mode, p0, mu, resolution // 2)
    core_res = fine["t_core"] - 2.0 * fine["psi_mass"]
    core_res_coarse = coarse["t_core"] - 2.0 * coarse["psi_mass"]
    bm = ball_mass(mode, p0, mu).mass
    floor = _roundoff_floor(fine)
    return CommutatorReport(
        mode_id=mode.mode_id, p0=tuple(p0), mu=float(mu), h=mode.h, resolution=resolution,
        t_rellich=fine["t_rellich"], t_core=fine["t_core"], t_cutoff=fine["t_cutoff"],
        psi_mass=fine["psi_mass"], ball_mass=bm, core_residual=core_res,
        eps_rellich=abs(fine["t_rellich"] - coarse["t_rellich"]) + floor,
        eps_core=abs(core_res - core_res_coarse) + floor,
        decomposition_error=fine["t_rellich"] - (fine["t_core"] + fine["t_cutoff"]),
        extras={"mass_over_mu": bm / mu, "mu_below_h": bool(mu < mode.h)},
    )


def rellich_refinement(mode: EigenMode, p0=(0.5, 0.0), mu: float = 0.2,
                       resolutions=(128, 256, 512)) -> tuple[np.ndarray, float]:
    """|T_rellich| at each resolution and the fitted convergence order.

    Sampled rectangle modes are exact eigenvectors of the 5-point operator, so
    T_rellich usually sits at round-off already; the order is then reported as
    infinite instead of fitting noise.
    """
    p0 = _check_rellich_inputs(mode, p0, mu, min(resolutions), allow_subscale=True)
    terms = [_rellich_terms(mode, p0, mu, r) for r in resolutions]
    vals = np.array([abs(t["t_rellich"]) for t in terms])
    if all(v <= _roundoff_floor(t) for v, t in zip(vals, terms)):
        return vals, math.inf
    order = -np.polyfit(np.log(resolutions), np.log(vals), 1)[0]
    return vals, float(order)


@dataclass
class CutoffTermReport:
    mode_id: str
    mu: float
    h: float
    t_cutoff: float
    t_grad: float                 # <-2h²∇ψ·∇(x·∇φ), φ>
    t_lap: float                  # <-h²(Δψ)(x·∇φ), φ>
    ratio: float                  # |T_cutoff| / μ
    bound_ok: bool
    subscale_ratio: float | None = None   # |T_cutoff|/μ at μ = h/4
    growth: float | None = None           # subscale_ratio / (ratio at μ = h)

    def to_text(self) -> str:
        rows = [("mode_id", self.mode_id), ("mu", fmt(self.mu)), ("h", fmt(self.h)),
                ("T_cutoff", fmt(self.t_cutoff)), ("T_grad", fmt(self.t_grad)),
                ("T_lap", fmt(self.t_lap)), ("ratio", fmt(self.ratio)),
                ("bound_ok", self.bound_ok)]
        if self.growth is not None:
            rows += [("subscale_ratio", fmt(self.subscale_ratio)), ("growth", fmt(self.growth))]
        return "\n".join(f"{k} = {v}" for k, v in rows)


def cutoff_term_bound(mode: EigenMode, p0=(0.5, 0.0), mu: float | None = None,
                      resolution: int = RELLICH_RESOLUTION, subscale: bool = False) -> CutoffTermReport:
    """The two cutoff-derivative terms and |T_cutoff| <= CUTOFF_CONSTANT·μ.

    ``mu`` defaults to h.  With ``subscale=True`` the terms are also evaluated
    at μ = h/4 (outside the μ >= h regime) and the growth of |T_cutoff|/μ
    relative to μ = h is reported.
    """
    mu = mode.h if mu is None else float(mu)
    p0 = _check_rellich_inputs(mode, p0, mu, resolution)
    t = _rellich_terms(mode, p0, mu, resolution)
    ratio = abs(t["t_cutoff"]) / mu
    rep = CutoffTermReport(mode.mode_id, mu, mode.h, t["t_cutoff"], t["t_grad"], t["t_lap"],
                           ratio, ratio <= CUTOFF_CONSTANT)
    if subscale:
        at_h = ratio if math.isclose(mu, mode.h) else \
            abs(_rellich_terms(mode, p0, mode.h, resolution)["t_cutoff"]) / mode.h
        small = mode.h / 4
        _check_rellich_inputs(mode, p0, small, resolution, allow_subscale=True)
        if small < 4 * default_grid(DomainKind.UNIT_SQUARE, resolution).spacing:
            raise ValueError("mu = h/4 is not resolved; raise the resolution")
        rep.subscale_ratio = abs(_rellich_terms(mode, p0, small, resolution)["t_cutoff"]) / small
        rep.growth = rep.subscale_ratio / at_h
    return rep


def scale_law_table(modes, p0=(0.5, 0.0), c: float = 1.0, thetas=(0.0, 0.5, 1.0)) -> list:
    """Rows (mode_id, θ, μ, ‖φ‖²_{B_μ(p0)}/μ) with μ = c·h^θ capped at 1/4."""
    rows = []
    for mode in modes:
        for th in thetas:
            mu = min(0.25, c * mode.h ** th)
            rows.append((mode.mode_id, th, mu, ball_mass(mode, p0, mu).mass / mu))
    return rows


# ---------------------------------------------------------------------------
# Green representation on the unit 3-ball
# ---------------------------------------------------------------------------

C3 = -1.0 / (4.0 * math.pi)
C3_PRIME = (2 - 3) * C3


def _ball_gradient(mode: EigenMode, pts):
    """∇φ for a radial ball mode N sin(λρ)/(λρ)."""
    rho = np.linalg.norm(pts, axis=-1)
    lam = mode.lam
    x = lam * rho
    safe = np.where(x > 1e-6, x, 1.0)
    # d/dρ [sin x / x] = λ (x cos x - sin x)/x², ≈ -λ x/3 near 0
    dprof = np.where(x > 1e-6, lam * (safe * np.cos(safe) - np.sin(safe)) / safe ** 2, -lam * x / 3)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(rho[..., None] > 0, pts / np.where(rho > 0, rho, 1.0)[..., None], 0.0)
    return mode.norm_const * dprof[..., None] * unit


class _PolarQuadrature:
    """Midpoint product rule in (r, θ, φ) about x₀ with pitch Δ_quad."""

    def __init__(self, x0, mu, pitch):
        nr = int(math.ceil(mu / pitch - 1e-9))
        nt = int(math.ceil(math.pi * mu / pitch - 1e-9))
        nphi = 2 * nt
        self.pitch = max(mu / nr, math.pi * mu / nt)
        r = (np.arange(nr) + 0.5) * mu / nr
        t = (np.arange(nt) + 0.5) * math.pi / nt
        p = (np.arange(nphi) + 0.5) * 2 * math.pi / nphi
        st = np.sin(t)
        omega = np.stack(np.broadcast_arrays(np.outer(st, np.cos(p)), np.outer(st, np.sin(p)),
                                             np.cos(t)[:, None]), axis=-1).reshape(-1, 3)
        self.dw = np.repeat(st * (math.pi / nt) * (2 * math.pi / nphi), nphi)   # dω weights
        self.omega = omega
        self.r = r
        self.dr = mu / nr
        self.x0 = np.asarray(x0, dtype=float)
        self.mu = mu

    def ball(self, f, power=0):
        """∫_{B_μ(x₀)} f(y) |y - x₀|^power dy."""
        total = 0.0
        for ri in self.r:
            vals = f(self.x0 + ri * self.omega)
            total += ri ** (2 + power) * self.dr * float(np.dot(self.dw, vals))
        return total

    def sphere(self, f):
        """∫_{S_μ(x₀)} f dσ; ``f`` receives (points, outward unit normals)."""
        pts = self.x0 + self.mu * self.omega
        return self.mu ** 2 * float(np.dot(self.dw, f(pts, self.omega)))


@dataclass
class GreenReport:
    mode_id: str
    x0: tuple
    mu: float
    pitch: float
    phi_x0: float
    lhs: float
    rhs: float
    sphere_mean: float            # ∫_{S_μ} φ dσ
    sphere_flux: float            # ∫_{S_μ} ∂_r φ dσ
    singular_integral: float      # ∫_{B_μ} φ |x₀ - y|⁻¹ dy
    c3: float = C3
    c3_prime: float = C3_PRIME

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / abs(self.phi_x0)

    def to_text(self) -> str:
        rows = [("mode_id", self.mode_id), ("x0", format_point(self.x0)), ("mu", fmt(self.mu)),
                ("pitch", fmt(self.pitch)), ("phi_x0", fmt(self.phi_x0)), ("lhs", fmt(self.lhs)),
                ("rhs", fmt(self.rhs)), ("residual", fmt(self.residual)),
                ("relative_residual", fmt(self.relative_residual)),
                ("sphere_mean", fmt(self.sphere_mean)), ("sphere_flux", fmt(self.sphere_flux)),
                ("singular_integral", fmt(self.singular_integral)),
                ("c3", fmt(self.c3)), ("c3_prime", fmt(self.c3_prime))]
        return "\n".join(f"{k} = {v}" for k, v in rows)


def _check_green_inputs(mode: EigenMode, x0, mu, pitch):
    if mode.family != "ball":
        raise ValueError("the Green identity check needs a radial unit-ball mode")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (3,):
        raise ValueError("x0 must be a point in R^3")
    if not mu > 0:
        raise ValueError("mu must be positive")
    if np.linalg.norm(x0) + mu >= 1.0:
        raise ValueError(f"B({format_point(x0)}, {mu:g}) is not inside the unit ball")
    pitch = mu / 40 if pitch is None else float(pitch)
    if mu < MIN_GREEN_NODES * pitch * (1 - 1e-12):
        raise ValueError(f"mu = {mu:g} is below {MIN_GREEN_NODES}·Δ_quad = {MIN_GREEN_NODES * pitch:g}")
    return x0, pitch


def green_identity_residual(mode: EigenMode, x0=(0.0, 0.0, 0.0), mu: float = 0.3,
                            pitch: float | None = None) -> GreenReport:
    """Both sides of the Green mean-value identity with Δφ = -λ²φ.

    left  = φ(x₀) - ∫_{B_μ} Δφ·G dy = φ(x₀) + c₃λ²∫φ|x₀ - y|⁻¹ dy
    right = c₃'μ⁻²∫_{S_μ} φ dσ - c₃μ⁻¹∫_{S_μ} ∂_rφ dσ
    ``pitch`` is the quadrature spacing Δ_quad (default μ/40).
    """
    x0, pitch = _check_green_inputs(mode, x0, mu, pitch)
    q = _PolarQuadrature(x0, mu, pitch)
    phi0 = float(mode.value(x0))
    sing = q.ball(mode.value, power=-1)
    s_mean = q.sphere(lambda p, n: mode.value(p))
    s_flux = q.sphere(lambda p, n: np.sum(_ball_gradient(mode, p) * n, axis=-1))
    lhs = phi0 + C3 * mode.lam ** 2 * sing
    rhs = C3_PRIME * mu ** -2 * s_mean - C3 * mu ** -1 * s_flux
    return GreenReport(mode.mode_id, tuple(x0), float(mu), q.pitch, phi0, lhs, rhs,
                       s_mean, s_flux, sing)


@dataclass
class Reconstruction:
    mode_id: str
    x0: tuple
    h: float
    phi_x0: float
    terms: dict                   # name -> contribution to φ(x₀)
    integrals: dict               # I_r, I_rho, I_0, I_abs, L2 on B_h
    bound: float                  # h² h^{-3/2} ‖φ‖_{L²(B_h)}

    @property
    def reconstructed(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def error(self) -> float:
        return self.reconstructed - self.phi_x0

    @property
    def relative_error(self) -> float:
        return abs(self.error) / abs(self.phi_x0)

    @property
    def rho_bound_ok(self) -> bool:
        return abs(self.integrals["I_rho"]) <= self.h ** 2 * self.integrals["I_abs"]

    def to_text(self) -> str:
        rows = [("mode_id", self.mode_id), ("x0", format_point(self.x0)), ("h", fmt(self.h)),
                ("phi_x0", fmt(self.phi_x0)), ("reconstructed", fmt(self.reconstructed)),
                ("error", fmt(self.error)), ("relative_error", fmt(self.relative_error)),
                ("bound", fmt(self.bound)), ("rho_bound_ok", self.rho_bound_ok)]
        rows += [(f"term_{k}", fmt(v)) for k, v in self.terms.items()]
        rows += [(k, fmt(v)) for k, v in self.integrals.items()]
        return "\n".join(f"{k} = {v}" for k, v in rows)


def mean_value_reconstruction(mode: EigenMode, x0=(0.0, 0.0, 0.0),
                              pitch: float | None = None) -> Reconstruction:
    """φ(x₀) rebuilt from integrals over B_h(x₀), h = 1/λ, in dimension n = 3.

    Combining the Green identity with G, the flux relation ∫_{S_μ}∂_rφ = -λ²∫_{B_μ}φ
    and Green's identity for ρ = |y - x₀|² (Δρ = 2n) at μ = h gives

        φ(x₀) = -c h⁻²∫φ|x₀-y|⁻¹ + (c'/2) h⁻⁵∫φρ + [c'(2n-1)/2 + c] h⁻³∫φ.
    """
    n = 3
    h = mode.h
    x0, pitch = _check_green_inputs(mode, x0, h, pitch)
    q = _PolarQuadrature(x0, h, pitch)
    i_r = q.ball(mode.value, power=-1)
    i_rho = q.ball(mode.value, power=2)
    i_0 = q.ball(mode.value)
    i_abs = q.ball(lambda p: np.abs(mode.value(p)))
    l2 = math.sqrt(q.ball(lambda p: mode.value(p) ** 2))
    terms = {
        "singular": float(-C3 * h ** -2 * i_r),
        "rho": float(0.5 * C3_PRIME * h ** (-2 - n) * i_rho),
        "mass": float((0.5 * C3_PRIME * (2 * n - 1) + C3) * h ** -n * i_0),
    }
    ints = {"I_r": i_r, "I_rho": i_rho, "I_0": i_0, "I_abs": i_abs, "L2_Bh": l2}
    return Reconstruction(mode.mode_id, tuple(x0), h, float(mode.value(x0)), terms, ints,
                          h ** 2 * h ** (-n / 2) * l2)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

RELLICH_COLUMNS = ("mode_id", "p0", "mu", "h", "resolution", "T_rellich", "T_core", "T_cutoff",
                   "psi_mass", "core_residual", "eps_rellich", "eps_core", "rellich_ok", "core_ok")
CUTOFF_COLUMNS = ("mode_id", "mu", "h", "T_cutoff", "T_grad", "T_lap", "ratio", "bound_ok",
                  "subscale_ratio", "growth")
GREEN_COLUMNS = ("identity", "mode_id", "x0", "mu", "pitch", "phi_x0", "value", "residual",
                 "relative_residual")


def _flag(ok: bool) -> str:
    return "ok" if ok else "violated"


def write_rellich_csv(reports: Sequence[CommutatorReport], path) -> Path:
    fh, w = csv_writer(path)
    with fh:
        w.writerow(RELLICH_COLUMNS)
        for r in reports:
            w.writerow([r.mode_id, format_point(r.p0), fmt(r.mu), fmt(r.h), r.resolution,
                        fmt(r.t_rellich), fmt(r.t_core), fmt(r.t_cutoff), fmt(r.psi_mass),
                        fmt(r.core_residual), fmt(r.eps_rellich), fmt(r.eps_core),
                        _flag(r.rellich_ok), _flag(r.core_ok)])
    return Path(path)


def write_cutoff_csv(reports: Sequence[CutoffTermReport], path) -> Path:
    fh, w = csv_writer(path)
    with fh:
        w.writerow(CUTOFF_COLUMNS)
        for r in reports:
            w.writerow([r.mode_id, fmt(r.mu), fmt(r.h), fmt(r.t_cutoff), fmt(r.t_grad), fmt(r.t_lap),
                        fmt(r.ratio), _flag(r.bound_ok),
                        "" if r.subscale_ratio is None else fmt(r.subscale_ratio),
                        "" if r.growth is None else fmt(r.growth)])
    return Path(path)


def write_green_csv(reports: Sequence, path) -> Path:
    """Rows for GreenReport ("mvt") and Reconstruction ("reconstruction") results."""
    fh, w = csv_writer(path)
    with fh:
        w.writerow(GREEN_COLUMNS)
        for r in reports:
            if isinstance(r, GreenReport):
                w.writerow(["mvt", r.mode_id, format_point(r.x0), fmt(r.mu), fmt(r.pitch),
                            fmt(r.phi_x0), fmt(r.rhs), fmt(r.residual), fmt(r.relative_residual)])
            else:
                w.writerow(["reconstruction", r.mode_id, format_point(r.x0), fmt(r.h), "",
                            fmt(r.phi_x0), fmt(r.reconstructed), fmt(r.error), fmt(r.relative_error)])
    return Path(path)

"""Closed-form Laplace eigenfunctions on the model domains.

Families: separable rectangle modes, Bessel modes on the unit disk, the
highest-weight spherical harmonic (x + iy)^n on S^2 (a Gaussian beam around the
equator), and radial modes of the unit 3-ball.  All are unit-normalized in L^2.
Grid-sampled (discrete) modes share the same :class:`EigenMode` container.
"""

from __future__ import annotations

import enum
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .bessel import MAX_ORDER, bessel_j, bessel_zero, bessel_zeros_below
from .geometry import (
    SPHERE_S2, UNIT_BALL3, UNIT_DISK, UNIT_SQUARE, Domain, DomainKind, Grid, SQUARE_FACES,
)

MAX_BEAM_DEGREE = 5000
MAX_BALL_INDEX = 50


class BoundaryCondition(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    NONE = "none"

    @property
    def letter(self) -> str:
        return {"dirichlet": "D", "neumann": "N", "none": "0"}[self.value]


_BC_ALIASES = {"d": "dirichlet", "n": "neumann", "0": "none", "": "none"}


def as_bc(bc) -> BoundaryCondition:
    if isinstance(bc, BoundaryCondition):
        return bc
    key = str(bc).strip().lower()
    return BoundaryCondition(_BC_ALIASES.get(key, key))


class Parity(str, enum.Enum):
    EVEN = "even"
    ODD = "odd"


@dataclass(frozen=True, eq=False)
class EigenMode:
    """One eigenpair -Δφ = λ²φ.

    ``family`` is one of "rectangle", "disk", "beam", "ball" for closed-form
    modes or "discrete" for grid-sampled ones.  ``params`` holds the integer
    indices (and parity/part for disk and beam modes).
    """

    lam: float
    bc: BoundaryCondition
    domain: Domain
    family: str
    params: dict
    norm_const: float
    _evaluate: Callable = field(repr=False)
    grid: Grid | None = field(default=None, repr=False)
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return math.inf if self.lam == 0 else 1.0 / self.lam

    @property
    def eigenvalue(self) -> float:
        return self.lam * self.lam

    @property
    def is_closed_form(self) -> bool:
        return self.family != "discrete"

    @property
    def is_complex(self) -> bool:
        return self.family == "beam" and self.params.get("part") == "complex"

    @property
    def mode_id(self) -> str:
        d = self.domain.kind.value
        p = self.params
        if self.family == "rectangle":
            return f"{d}-{self.bc.letter}-{p['j']}-{p['k']}"
        if self.family == "disk":
            return f"{d}-{self.bc.letter}-{p['m']}-{p['k']}-{p['parity']}"
        if self.family == "beam":
            return f"{d}-beam-{p['n']}-{p['part']}"
        if self.family == "ball":
            return f"{d}-{self.bc.letter}-0-{p['k']}"
        return f"{d}-{self.bc.letter}-discrete-{p.get('index', 0)}-{self.eigenvalue:.6f}"

    def value(self, points) -> np.ndarray:
        """Mode values at Cartesian points of shape (..., d)."""
        pts = np.asarray(points, dtype=float)
        return self._evaluate(self, pts)

    def density(self, points) -> np.ndarray:
        """|φ|² at Cartesian points."""
        v = self.value(points)
        return np.abs(v) ** 2 if np.iscomplexobj(v) else v * v

    def values_on(self, grid: Grid) -> np.ndarray:
        """Node values on ``grid``, using tensor structure where available."""
        if self.vector is not None and grid is self.grid:
            return self.vector
        if self.family == "disk" and grid.domain.kind is DomainKind.UNIT_DISK and grid.shape is not None:
            r = grid.axes["r"]
            t = grid.axes["theta"]
            radial = _disk_radial(self, r)
            return (radial[:, None] * _disk_angular(self, t)[None, :]).ravel()
        if self.family == "ball" and grid.domain.kind is DomainKind.UNIT_BALL3:
            r = grid.native[:, 0]
            return _ball_radial(self, r)
        if self.family == "rectangle" and grid.domain.kind is DomainKind.UNIT_SQUARE:
            x = grid.axes["x"]
            fx, fy = _rectangle_factors(self, x, x)
            return (fx[:, None] * fy[None, :]).ravel()
        return self.value(grid.nodes)

    def to_record(self) -> str:
        """Structured key = value text record of the descriptor."""
        lines = [f"family = {self.family}", f"domain = {self.domain.kind.value}", f"bc = {self.bc.value}"]
        for k in sorted(self.params):
            lines.append(f"{k} = {self.params[k]}")
        lines.append(f"lambda = {self.lam!r}")
        lines.append(f"norm = {self.norm_const!r}")
        return "\n".join(lines) + "\n"


def mode_from_record(text: str) -> EigenMode:
    """Rebuild a closed-form mode from :meth:`EigenMode.to_record` output."""
    rec = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        rec[key.strip()] = val.strip()
    fam = rec.get("family")
    bc = as_bc(rec.get("bc", "none"))
    if fam == "rectangle":
        return rectangle_mode(int(rec["j"]), int(rec["k"]), bc)
    if fam == "disk":
        return disk_mode(int(rec["m"]), int(rec["k"]), bc, rec.get("parity", "cos"))
    if fam == "beam":
        return sphere_highest_weight(int(rec["n"]), rec.get("part", "complex"))
    if fam == "ball":
        return ball3_mode(int(rec["k"]))
    raise ValueError(f"cannot rebuild mode family {fam!r} from a record")


# ---------------------------------------------------------------------------
# rectangle
# ---------------------------------------------------------------------------

def _rectangle_factors(mode: EigenMode, x, y):
    j, k = mode.params["j"], mode.params["k"]
    if mode.bc is BoundaryCondition.DIRICHLET:
        return math.sqrt(2) * np.sin(j * math.pi * x), math.sqrt(2) * np.sin(k * math.pi * y)
    cj = 1.0 if j == 0 else math.sqrt(2)
    ck = 1.0 if k == 0 else math.sqrt(2)
    return cj * np.cos(j * math.pi * x), ck * np.cos(k * math.pi * y)


def rectangle_mode(j: int, k: int, bc) -> EigenMode:
    """Unit-square mode: 2 sin(jπx) sin(kπy) (Dirichlet) or c_j c_k cos cos (Neumann)."""
    bc = as_bc(bc)
    j, k = int(j), int(k)
    if bc is BoundaryCondition.DIRICHLET:
        if j < 1 or k < 1:
            raise ValueError(f"Dirichlet rectangle modes need j, k >= 1, got ({j}, {k})")
    elif bc is BoundaryCondition.NEUMANN:
        if j < 0 or k < 0:
            raise ValueError(f"Neumann rectangle modes need j, k >= 0, got ({j}, {k})")
    else:
        raise ValueError("rectangle modes need a Dirichlet or Neumann condition")
    lam = math.pi * math.hypot(j, k)
    if bc is BoundaryCondition.DIRICHLET:
        norm = 2.0
    else:
        norm = (1.0 if j == 0 else math.sqrt(2)) * (1.0 if k == 0 else math.sqrt(2))
    return EigenMode(lam, bc, UNIT_SQUARE, "rectangle", {"j": j, "k": k}, norm, _rectangle_eval)


def _rectangle_eval(mode, p):
    fx, fy = _rectangle_factors(mode, p[..., 0], p[..., 1])
    return fx * fy


def rectangle_modes_in_band(lo: float, hi: float, bc) -> list[EigenMode]:
    """All rectangle modes with lo <= λ² <= hi, ordered by (λ², j, k)."""
    bc = as_bc(bc)
    start = 1 if bc is BoundaryCondition.DIRICHLET else 0
    top = int(math.sqrt(hi) / math.pi) + 1
    pairs = []
    for j in range(start, top + 1):
        for k in range(start, top + 1):
            ev = math.pi ** 2 * (j * j + k * k)
            if lo <= ev <= hi:
                pairs.append((ev, j, k))
    return [rectangle_mode(j, k, bc) for _, j, k in sorted(pairs)]


# ---------------------------------------------------------------------------
# disk
# ---------------------------------------------------------------------------

def _disk_radial(mode: EigenMode, r):
    m = mode.params["m"]
    if mode.lam == 0:
        return np.full(np.shape(r), mode.norm_const)
    return mode.norm_const * bessel_j(m, np.clip(mode.lam * np.asarray(r, dtype=float), 0.0, None))


def _disk_angular(mode: EigenMode, t):
    m = mode.params["m"]
    return np.cos(m * t) if mode.params["parity"] == "cos" else np.sin(m * t)


@lru_cache(maxsize=256)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _radial_norm_integral(m: int, alpha: float, dim: int = 2) -> float:
    """∫_0^1 J_m(αr)² r dr by Gauss-Legendre with enough nodes for the oscillation."""
    x, w = _gauss_legendre(int(alpha) + 64)
    r = 0.5 * (x + 1.0)
    vals = bessel_j(m, alpha * r)
    return float(0.5 * np.sum(w * vals * vals * r ** (dim - 1)))


def disk_mode(m: int, k: int, bc, parity: str = "cos") -> EigenMode:
    """N J_m(αr) {cos, sin}(mθ) on the unit disk.

    α is the k-th zero of J_m (Dirichlet) or J_m' (Neumann).  For Neumann m = 0
    the index k counts nontrivial zeros; (0, 0, Neumann) is the constant mode.
    """
    bc = as_bc(bc)
    m, k = int(m), int(k)
    parity = str(parity).lower()
    if parity not in ("cos", "sin"):
        raise ValueError(f"parity must be cos or sin, got {parity!r}")
    if m == 0 and parity == "sin":
        raise ValueError("m = 0 has no sin partner")
    if bc is BoundaryCondition.NONE:
        raise ValueError("disk modes need a Dirichlet or Neumann condition")
    if bc is BoundaryCondition.NEUMANN and m == 0 and k == 0:
        return _disk_mode_at(m, k, bc, parity, 0.0)
    if k < 1:
        raise ValueError(f"zero index must be >= 1, got {k}")
    return _disk_mode_at(m, k, bc, parity, bessel_zero(m, k, "j" if bc is BoundaryCondition.DIRICHLET else "jp"))


def _disk_mode_at(m: int, k: int, bc: BoundaryCondition, parity: str, alpha: float) -> EigenMode:
    if alpha == 0.0:
        norm = 1.0 / math.sqrt(math.pi)
    else:
        angular = 2 * math.pi if m == 0 else math.pi
        norm = 1.0 / math.sqrt(angular * _radial_norm_integral(m, alpha))

    return EigenMode(alpha, bc, UNIT_DISK, "disk", {"m": m, "k": k, "parity": parity}, norm, _disk_eval)


def _disk_eval(mode, p):
    r = np.hypot(p[..., 0], p[..., 1])
    t = np.arctan2(p[..., 1], p[..., 0])
    return _disk_radial(mode, r) * _disk_angular(mode, t)


def disk_modes_in_band(lo: float, hi: float, bc, both_parities: bool = False) -> list[EigenMode]:
    """Disk modes with lo <= α² <= hi (cos parity only unless ``both_parities``)."""
    bc = as_bc(bc)
    kind = "j" if bc is BoundaryCondition.DIRICHLET else "jp"
    found = []
    lam_hi = math.sqrt(hi)
    for m in range(0, min(int(lam_hi) + 2, MAX_ORDER + 1)):
        for k, a in enumerate(bessel_zeros_below(m, lam_hi * (1 + 1e-12), kind), start=1):
            if lo <= a * a <= hi:
                found.append((a * a, m, k, a))
    if bc is BoundaryCondition.NEUMANN and lo <= 0.0:
        found.append((0.0, 0, 0, 0.0))
    out = []
    for _, m, k, a in sorted(found):
        out.append(_disk_mode_at(m, k, bc, "cos", a))
        if both_parities and m > 0:
            out.append(_disk_mode_at(m, k, bc, "sin", a))
    return out


# ---------------------------------------------------------------------------
# sphere: highest-weight harmonic
# ---------------------------------------------------------------------------

def beam_log_norm(n: int) -> float:
    """log N for the complex beam N (x + iy)^n, from ∫_{-1}^{1} (1 - z²)^n dz = √π Γ(n+1)/Γ(n+3/2)."""
    log_int = 0.5 * math.log(math.pi) + math.lgamma(n + 1) - math.lgamma(n + 1.5)
    return -0.5 * (math.log(2 * math.pi) + log_int)


def sphere_highest_weight(n: int, part: str = "complex") -> EigenMode:
    """Gaussian beam N (x + iy)^n on S², evaluated as exp(log N + n log ρ + i n φ).

    ``part`` selects the complex mode (default; |φ|² is zonal, ∝ (1 - z²)^n) or
    its real/imaginary partner, each renormalized to unit L² norm.
    """
    n = int(n)
    if not 1 <= n <= MAX_BEAM_DEGREE:
        raise ValueError(f"degree must lie in [1, {MAX_BEAM_DEGREE}], got {n}")
    part = str(part).lower()
    if part not in ("complex", "re", "im"):
        raise ValueError(f"part must be complex, re or im, got {part!r}")
    log_norm = beam_log_norm(n) + (0.5 * math.log(2) if part != "complex" else 0.0)
    lam = math.sqrt(n * (n + 1.0))

    return EigenMode(lam, BoundaryCondition.NONE, SPHERE_S2, "beam", {"n": n, "part": part},
                     math.exp(log_norm), _beam_eval)


def _beam_eval(mode, p):
    n, part = mode.params["n"], mode.params["part"]
    rho = np.hypot(p[..., 0], p[..., 1])
    ph = np.arctan2(p[..., 1], p[..., 0])
    with np.errstate(divide="ignore"):
        amp = np.exp(math.log(mode.norm_const) + n * np.log(rho))
    if part == "complex":
        return amp * np.exp(1j * n * ph)
    return amp * (np.cos(n * ph) if part == "re" else np.sin(n * ph))


def heuristic_beam_prefactor(n: int) -> float:
    """The rough amplitude (2πn)^{1/4} quoted for the beam; kept for comparison only."""
    return (2 * math.pi * n) ** 0.25


# ---------------------------------------------------------------------------
# unit 3-ball, radial modes
# ---------------------------------------------------------------------------

def _ball_radial(mode: EigenMode, r):
    x = mode.lam * np.asarray(r, dtype=float)
    return mode.norm_const * np.sinc(x / math.pi)


def ball3_mode(k: int, bc="dirichlet") -> EigenMode:
    """N sin(kπr)/(kπr) on the unit 3-ball (ℓ = 0, Dirichlet)."""
    k = int(k)
    if not 1 <= k <= MAX_BALL_INDEX:
        raise ValueError(f"k must lie in [1, {MAX_BALL_INDEX}], got {k}")
    if as_bc(bc) is not BoundaryCondition.DIRICHLET:
        raise ValueError("only Dirichlet radial ball modes are provided")
    lam = k * math.pi
    x, w = np.polynomial.legendre.leggauss(4 * k + 40)
    r = 0.5 * (x + 1.0)
    radial = np.sinc(lam * r / math.pi)
    norm = 1.0 / math.sqrt(4 * math.pi * 0.5 * np.sum(w * radial ** 2 * r ** 2))

    return EigenMode(lam, BoundaryCondition.DIRICHLET, UNIT_BALL3, "ball", {"k": k}, norm, _ball_eval)


def _ball_eval(mode, p):
    return _ball_radial(mode, np.linalg.norm(p, axis=-1))


# ---------------------------------------------------------------------------
# discrete modes
# ---------------------------------------------------------------------------

def discrete_mode(grid: Grid, vector: np.ndarray, eigenvalue: float, bc, index: int = 0) -> EigenMode:
    """Wrap a node vector as an EigenMode (normalized in the grid's weighted L² norm)."""
    vector = np.asarray(vector, dtype=float)
    nrm = math.sqrt(float(np.dot(grid.weights, vector * vector)))
    vector = vector / nrm
    if grid.domain.kind is DomainKind.UNIT_SQUARE:
        x = grid.axes["x"]
        interp = RegularGridInterpolator((x, x), vector.reshape(grid.shape), method="linear",
                                         bounds_error=False, fill_value=None)

        def evaluate(_mode, p):
            flat = p.reshape(-1, 2)
            return interp(flat).reshape(p.shape[:-1])
    else:
        def evaluate(_mode, p):
            flat = p.reshape(-1, p.shape[-1])
            _, idx = grid.tree.query(flat)
            return vector[idx].reshape(p.shape[:-1])

    lam = math.sqrt(max(float(eigenvalue), 0.0))
    return EigenMode(lam, as_bc(bc), grid.domain, "discrete", {"index": int(index)}, nrm, evaluate,
                     grid=grid, vector=vector)


# ---------------------------------------------------------------------------
# reflection across the boundary
# ---------------------------------------------------------------------------

# largest admissible collar width: half the square side, the radius for disk/ball
_INJECTIVITY = {DomainKind.UNIT_SQUARE: 0.5, DomainKind.UNIT_DISK: 1.0, DomainKind.UNIT_BALL3: 1.0}


@dataclass(frozen=True, eq=False)
class ExtendedMode:
    """Odd (Dirichlet) or even (Neumann) reflection of a mode across one boundary face.

    Points are Cartesian; those outside Ω within the collar are mapped to their
    mirror image y* and evaluated with the parity sign.
    """

    base: EigenMode
    parity: Parity
    width: float
    face: str | None = None

    @property
    def sign(self) -> float:
        return 1.0 if self.parity is Parity.EVEN else -1.0

    def _signed_normal(self, p):
        kind = self.base.domain.kind
        if kind is DomainKind.UNIT_SQUARE:
            x, y = p[..., 0], p[..., 1]
            return {"bottom": y, "top": 1.0 - y, "left": x, "right": 1.0 - x}[self.face]
        return 1.0 - np.linalg.norm(p, axis=-1)

    def _mirror(self, p):
        kind = self.base.domain.kind
        q = p.copy()
        if kind is DomainKind.UNIT_SQUARE:
            axis = 1 if self.face in ("bottom", "top") else 0
            edge = 0.0 if self.face in ("bottom", "left") else 1.0
            q[..., axis] = 2 * edge - p[..., axis]
            return q
        # r -> 2 - r along the ray
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        return p * ((2.0 - r) / r)

    def value(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        xn = self._signed_normal(p)
        if np.any(xn < -self.width - 1e-12):
            raise ValueError(f"points lie beyond the collar of width {self.width}")
        outside = xn < 0
        if not np.any(outside):
            return self.base.value(p)
        q = np.where(outside[..., None], self._mirror(p), p)
        v = self.base.value(q)
        return np.where(outside, self.sign * v, v)

    def value_fermi(self, tangential, normal) -> np.ndarray:
        """Value at Fermi coordinates (y', y_n) with y_n >= -width."""
        from .geometry import fermi_to_points

        yn = np.asarray(normal, dtype=float)
        if np.any(yn < -self.width - 1e-12):
            raise ValueError(f"normal coordinate below -{self.width}")
        pts = fermi_to_points(self.base.domain, tangential, np.abs(yn), self.face)
        v = self.base.value(pts)
        return np.where(yn < 0, self.sign * v, v)


def reflect_extend(mode: EigenMode, collar_width: float, face: str | None = None) -> ExtendedMode:
    """Odd extension of a Dirichlet mode, even extension of a Neumann mode."""
    if mode.bc not in (BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN):
        raise ValueError("reflection needs a Dirichlet or Neumann mode")
    kind = mode.domain.kind
    if kind not in _INJECTIVITY:
        raise ValueError(f"{kind.value} has no boundary to reflect across")
    w = float(collar_width)
    if not 0 < w <= _INJECTIVITY[kind]:
        raise ValueError(f"collar width must lie in (0, {_INJECTIVITY[kind]}], got {w}")
    if kind is DomainKind.UNIT_SQUARE:
        face = face or "bottom"
        if face not in SQUARE_FACES:
            raise ValueError(f"unknown face {face!r}")
    else:
        face = None
    parity = Parity.ODD if mode.bc is BoundaryCondition.DIRICHLET else Parity.EVEN
    return ExtendedMode(mode, parity, w, face)

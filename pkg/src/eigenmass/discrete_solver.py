"""Finite-volume Laplacians on the structured grids and shift-invert eigensolves.

The stiffness matrix K is assembled edge by edge, K = Σ w_e (e_i - e_j)(e_i - e_j)^T,
with w_e = |dual face| / |edge|, and the mass matrix M is the diagonal of cell
measures.  That makes K symmetric and positive semidefinite by construction and
gives Neumann conditions for free.  Dirichlet conditions drop the boundary rows.
On the unit square this is exactly the 5-point stencil with mirror ghost nodes.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .closed_form import BoundaryCondition, EigenMode, as_bc, discrete_mode
from .geometry import DomainKind, Grid, read_header, write_header

log = logging.getLogger(__name__)

SOLVER_VERSION = "fv-1"
EIG_MAGIC = b"EMEIG1\n\0"
ACCEPT_RESIDUAL = 1e-8
MAX_COUNT = 50
# weyl_check trusts eigenvalues with λΔ <= 0.3, i.e. Λ <= (3/Δ)² · 10⁻²
WEYL_C = 3.0

# fourth-order periodic stencil for the angular second derivative (offsets 1, 2)
_ANGULAR4 = ((1, 16.0 / 12.0), (2, -1.0 / 12.0))
_ANGULAR2 = ((1, 1.0),)


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """K v = λ² M v on the free nodes ``free`` (indices into the grid)."""

    stiffness: sparse.csr_matrix
    mass: np.ndarray
    bc: BoundaryCondition
    grid: Grid
    free: np.ndarray
    scheme: str = ""

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]

    def expand(self, vectors: np.ndarray) -> np.ndarray:
        """Lift free-node vectors to full-grid vectors (zero on eliminated rows)."""
        vectors = np.asarray(vectors)
        out = np.zeros((self.grid.size,) + vectors.shape[1:], dtype=vectors.dtype)
        out[self.free] = vectors
        return out

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        """-Δ applied to full-grid values (M⁻¹ K on free nodes, 0 on eliminated rows)."""
        v = np.asarray(values)[self.free]
        return self.expand(self.stiffness @ v / (self.mass if v.ndim == 1 else self.mass[:, None]))


def _edge_matrix(n: int, i, j, w) -> sparse.csr_matrix:
    i = np.asarray(i, dtype=np.int64)
    w = np.broadcast_to(np.asarray(w, dtype=float), i.shape).ravel()
    i = i.ravel()
    j = np.asarray(j, dtype=np.int64).ravel()
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([w, w, -w, -w])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _square_stiffness(grid: Grid) -> sparse.csr_matrix:
    n = grid.shape[0]
    idx = np.arange(n * n).reshape(n, n)
    half = np.ones(n)
    half[0] = half[-1] = 0.5
    # x-edges (i, j)-(i+1, j): dual face length Δ·half[j], edge length Δ
    kx = _edge_matrix(n * n, idx[:-1, :], idx[1:, :], np.broadcast_to(half[None, :], (n - 1, n)))
    ky = _edge_matrix(n * n, idx[:, :-1], idx[:, 1:], np.broadcast_to(half[:, None], (n, n - 1)))
    return (kx + ky).tocsr()


def _ring_stencil(angular_order: int):
    return _ANGULAR4 if angular_order == 4 else _ANGULAR2


def _disk_stiffness(grid: Grid, angular_order: int) -> sparse.csr_matrix:
    nr, nt = grid.shape
    r = grid.axes["r"]
    f = grid.axes["r_faces"]
    dt = grid.axes["dtheta"]
    idx = np.arange(nr * nt).reshape(nr, nt)
    # radial edges across the face f[i+1]
    wr = f[1:nr] * dt / np.diff(r)
    mats = [_edge_matrix(nr * nt, idx[:-1, :], idx[1:, :], np.broadcast_to(wr[:, None], (nr - 1, nt)))]
    # angular: ring measure (f_{i+1}² - f_i²)/2 times the 1D periodic stencil,
    # divided by r_i² (the angular metric) over dθ²
    ring = 0.5 * (f[1:] ** 2 - f[:-1] ** 2) / (r * r * dt)
    for off, c in _ring_stencil(angular_order):
        mats.append(_edge_matrix(nr * nt, idx, np.roll(idx, -off, axis=1),
                                 c * np.broadcast_to(ring[:, None], (nr, nt))))
    return sum(mats[1:], mats[0]).tocsr()


def _ball_stiffness(grid: Grid) -> sparse.csr_matrix:
    nr, nth, nph = grid.shape
    r = grid.axes["r"]
    f = grid.axes["r_faces"]
    th = grid.axes["theta"]
    tf = grid.axes["theta_faces"]
    dph = grid.axes["dphi"]
    dth = tf[1] - tf[0]
    n = nr * nth * nph
    idx = np.arange(n).reshape(nr, nth, nph)
    band = np.cos(tf[:-1]) - np.cos(tf[1:])
    shell = 0.5 * (f[1:] ** 2 - f[:-1] ** 2)
    # radial faces: f² · band · dφ over Δr
    wr = (f[1:nr] ** 2 / np.diff(r))[:, None, None] * band[None, :, None] * dph
    k = _edge_matrix(n, idx[:-1], idx[1:], np.broadcast_to(wr, (nr - 1, nth, nph)))
    # polar faces at θ = tf[j+1]: shell · sin(tf) · dφ over r dθ
    wt = (shell / r)[:, None, None] * (np.sin(tf[1:nth]) / dth)[None, :, None] * dph
    k = k + _edge_matrix(n, idx[:, :-1], idx[:, 1:], np.broadcast_to(wt, (nr, nth - 1, nph)))
    # azimuthal faces: shell · dθ over r sinθ dφ
    wp = (shell / r)[:, None, None] * (dth / np.sin(th))[None, :, None] / dph
    k = k + _edge_matrix(n, idx, np.roll(idx, -1, axis=2), np.broadcast_to(wp, (nr, nth, nph)))
    return k.tocsr()


def assemble(grid: Grid, bc, angular_order: int = 4) -> DiscreteOperator:
    """Stiffness/mass pair for ``grid`` with Dirichlet or Neumann conditions.

    ``angular_order`` selects the 2nd- or 4th-order periodic stencil around the
    rings of the polar disk grid (ignored elsewhere).
    """
    bc = as_bc(bc)
    if bc is BoundaryCondition.NONE:
        raise ValueError("assemble needs a Dirichlet or Neumann condition")
    kind = grid.domain.kind
    if kind is DomainKind.UNIT_SQUARE:
        k, scheme = _square_stiffness(grid), "5-point"
    elif kind is DomainKind.UNIT_DISK:
        if angular_order not in (2, 4):
            raise ValueError("angular_order must be 2 or 4")
        k, scheme = _disk_stiffness(grid, angular_order), f"polar-fv-angular{angular_order}"
    elif kind is DomainKind.UNIT_BALL3:
        k, scheme = _ball_stiffness(grid), "7-point-spherical"
    else:
        raise ValueError(f"no discrete Laplacian for the {kind.value} grid family")
    if bc is BoundaryCondition.DIRICHLET:
        free = np.nonzero(~grid.is_boundary)[0]
        k = k[free][:, free]
    else:
        free = np.arange(grid.size)
    k = sparse.csr_matrix(k)
    k.sum_duplicates()
    k.sort_indices()
    # exact symmetry: average with the transpose (differences are round-off from summation)
    k = ((k + k.T) * 0.5).tocsr()
    return DiscreteOperator(k, grid.weights[free].copy(), bc, grid, free, scheme)


# ---------------------------------------------------------------------------
# eigenpairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EigenpairBatch:
    eigenvalues: np.ndarray
    vectors: np.ndarray          # full-grid, M-orthonormal columns
    target: float
    residuals: np.ndarray
    accepted: np.ndarray
    provenance: dict = field(default_factory=dict)
    grid: Grid | None = None
    bc: BoundaryCondition = BoundaryCondition.NONE

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def complete(self) -> bool:
        return bool(np.all(self.accepted))

    def mode(self, i: int) -> EigenMode:
        return discrete_mode(self.grid, self.vectors[:, i], float(self.eigenvalues[i]), self.bc, i)


def _shift_inverse(op: DiscreteOperator, sigma: float):
    a = (op.stiffness - sigma * sparse.diags(op.mass)).tocsc()
    lu = splu(a)
    if not np.all(np.isfinite(lu.U.diagonal())) or np.min(np.abs(lu.U.diagonal())) == 0.0:
        raise RuntimeError("Factor is exactly singular")
    return LinearOperator(a.shape, matvec=lu.solve, dtype=float)


def _factor_with_retry(op: DiscreteOperator, target: float, prov: dict):
    sigma = float(target)
    for attempt in range(4):
        try:
            return sigma, _shift_inverse(op, sigma)
        except RuntimeError as exc:
            bump = 1e-3 * max(abs(target), 1.0) * (attempt + 1)
            log.info("factorization at shift %g failed (%s); retrying at %g", sigma, exc, target + bump)
            prov.setdefault("shift_perturbations", []).append(
                {"from": sigma, "to": target + bump, "reason": str(exc)})
            sigma = target + bump
    raise SolverFailure(f"could not factor K - σM near σ = {target}")


def _rayleigh_ritz(op: DiscreteOperator, v: np.ndarray):
    kv = op.stiffness @ v
    mv = op.mass[:, None] * v
    vals, c = eigh(v.T @ kv, v.T @ mv)
    v = v @ c
    kv = kv @ c
    mv = mv @ c
    res = np.sqrt(np.sum((kv - vals[None, :] * mv) ** 2 / op.mass[:, None], axis=0))
    return vals, v, res / np.maximum(np.abs(vals), 1.0)


def solve_near(op: DiscreteOperator, target: float, count: int, seed: int = 0,
               maxiter: int | None = None, tol: float = 0.0) -> EigenpairBatch:
    """The ``count`` eigenpairs of K v = λ² M v closest to ``target`` (shift-invert Lanczos)."""
    count = int(count)
    target = float(target)
    if not 1 <= count <= MAX_COUNT:
        raise ValueError(f"count must lie in [1, {MAX_COUNT}]")
    if target < 0:
        raise ValueError("target must be >= 0")
    if count >= op.size - 1:
        raise ValueError("count too large for this operator")
    prov = {"method": "shift-invert-lanczos", "scheme": op.scheme, "seed": int(seed),
            "solver_version": SOLVER_VERSION}
    sigma, opinv = _factor_with_retry(op, target, prov)
    prov["shift"] = sigma
    v0 = np.random.default_rng(seed).standard_normal(op.size)
    msq = sparse.diags(op.mass)
    converged = np.ones(count, dtype=bool)
    try:
        vals, vecs = eigsh(op.stiffness, k=count, M=msq, sigma=sigma, which="LM", OPinv=opinv,
                           v0=v0, maxiter=maxiter, tol=tol)
    except ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        prov["arpack"] = f"converged {len(vals)} of {count}"
        converged = np.zeros(count, dtype=bool)
        if len(vals) == 0:
            return EigenpairBatch(np.zeros(0), np.zeros((op.grid.size, 0)), target, np.zeros(0),
                                  np.zeros(0, dtype=bool), prov, op.grid, op.bc)
        converged[: len(vals)] = True
        converged = converged[: len(vals)]
    vals, vecs, res = _rayleigh_ritz(op, np.asarray(vecs, dtype=float))
    # deterministic sign: largest-magnitude entry positive
    pick = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pick, np.arange(vecs.shape[1])])[None, :]
    order = np.argsort(np.abs(vals - target), kind="stable")
    ordered = np.argsort(vals[order], kind="stable")
    sel = order[ordered]
    vals, vecs, res = vals[sel], vecs[:, sel], res[sel]
    accepted = (res <= ACCEPT_RESIDUAL) & converged
    return EigenpairBatch(vals, op.expand(vecs), target, res, accepted, prov, op.grid, op.bc)


# ---------------------------------------------------------------------------
# Weyl counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylReport:
    cutoff: float
    count: int
    weyl_one_term: float
    weyl_two_term: float
    deviation: float
    deviation_two_term: float
    method: str = "inertia"


def _boundary_length(kind: DomainKind) -> float:
    return {DomainKind.UNIT_SQUARE: 4.0, DomainKind.UNIT_DISK: 2 * math.pi}[kind]


def weyl_max_cutoff(op: DiscreteOperator) -> float:
    return (WEYL_C / op.grid.spacing) ** 2 * 1e-2


def _inertia_count(op: DiscreteOperator, cutoff: float) -> int | None:
    """#{λ² < Λ} from the negative pivots of K - ΛM (Sylvester's law of inertia).

    Requires symmetric pivoting; returns None when SuperLU swapped rows off the
    diagonal, in which case the pivot signs say nothing about the inertia.
    """
    a = (op.stiffness - cutoff * sparse.diags(op.mass)).tocsc()
    try:
        lu = splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options={"SymmetricMode": True})
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    d = lu.U.diagonal()
    if np.any(d == 0) or not np.all(np.isfinite(d)):
        return None
    return int(np.sum(d < 0))


def _lanczos_count(op: DiscreteOperator, cutoff: float, estimate: float, seed: int) -> int:
    k = max(8, int(1.5 * estimate) + 8)
    while True:
        k = min(k, op.size - 2)
        vals = eigsh(op.stiffness, k=k, M=sparse.diags(op.mass), sigma=-1.0, which="LM",
                     OPinv=_shift_inverse(op, -1.0),
                     v0=np.random.default_rng(seed).standard_normal(op.size), return_eigenvectors=False)
        if vals.max() > cutoff or k >= op.size - 2:
            return int(np.sum(vals <= cutoff))
        k *= 2


def weyl_check(op: DiscreteOperator, cutoff: float, seed: int = 0) -> WeylReport:
    """Count discrete eigenvalues <= Λ and compare with |Ω|Λ/4π (and the boundary-corrected law)."""
    kind = op.grid.domain.kind
    if kind not in (DomainKind.UNIT_SQUARE, DomainKind.UNIT_DISK):
        raise ValueError("Weyl counting is provided for the 2D flat domains")
    cutoff = float(cutoff)
    if cutoff > weyl_max_cutoff(op):
        raise ValueError(f"Λ = {cutoff} exceeds the trustworthy band Λ <= {weyl_max_cutoff(op):.4g}")
    area = op.grid.domain.volume
    one = area * cutoff / (4 * math.pi)
    sign = -1.0 if op.bc is BoundaryCondition.DIRICHLET else 1.0
    two = one + sign * _boundary_length(kind) * math.sqrt(max(cutoff, 0.0)) / (4 * math.pi)
    count, method = _inertia_count(op, cutoff), "inertia"
    if count is None:
        count, method = _lanczos_count(op, cutoff, one, seed), "lanczos"
    dev = (count - one) / one if one > 0 else math.inf
    dev2 = (count - two) / two if two > 0 else math.inf
    return WeylReport(cutoff, count, one, two, dev, dev2, method)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def cache_store(batch: EigenpairBatch, path) -> Path:
    """Write eigenvalues, residuals, flags and full vectors to a versioned binary file."""
    path = Path(path)
    grid = batch.grid
    header = {
        "solver_version": SOLVER_VERSION,
        "domain": grid.domain.kind.value,
        "resolution": grid.resolution,
        "bc": batch.bc.value,
        "node_count": grid.size,
        "count": len(batch),
        "target": batch.target,
        "provenance": batch.provenance,
    }
    with open(path, "wb") as fh:
        write_header(fh, EIG_MAGIC, header)
        fh.write(np.ascontiguousarray(batch.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(batch.residuals, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(batch.accepted, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(batch.vectors.T, dtype="<f8").tobytes())
    return path


def cache_load(path, grid: Grid, bc=None) -> EigenpairBatch:
    """Read a batch written by :func:`cache_store`; the header must match ``grid`` (and ``bc``)."""
    with open(path, "rb") as fh:
        header = read_header(fh, EIG_MAGIC)
        if header.get("solver_version") != SOLVER_VERSION:
            raise ValueError(f"cache solver version {header.get('solver_version')} != {SOLVER_VERSION}")
        if header["domain"] != grid.domain.kind.value:
            raise ValueError(f"cache domain {header['domain']} != {grid.domain.kind.value}")
        if header["resolution"] != grid.resolution or header["node_count"] != grid.size:
            raise ValueError(f"cache resolution {header['resolution']} != grid resolution {grid.resolution}")
        if bc is not None and header["bc"] != as_bc(bc).value:
            raise ValueError(f"cache bc {header['bc']} != {as_bc(bc).value}")
        c, n = header["count"], header["node_count"]

        def read(dtype, count):
            buf = fh.read(count * np.dtype(dtype).itemsize)
            if len(buf) != count * np.dtype(dtype).itemsize:
                raise ValueError("truncated eigenpair cache")
            return np.frombuffer(buf, dtype=dtype).copy()

        vals = read("<f8", c)
        res = read("<f8", c)
        acc = read(np.uint8, c).astype(bool)
        vecs = read("<f8", c * n).reshape(c, n).T.copy()
    return EigenpairBatch(vals, vecs, header["target"], res, acc, header["provenance"], grid,
                          as_bc(header["bc"]))


def describe(batch: EigenpairBatch) -> str:
    return json.dumps({"target": batch.target, "eigenvalues": batch.eigenvalues.tolist(),
                       "residuals": batch.residuals.tolist(), "provenance": batch.provenance},
                      sort_keys=True)

"""Execution of single experiments into a staging directory."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import identity_checks as ic
from .. import mass_analysis as ma
from ..closed_form import BoundaryCondition, EigenMode
from ..discrete_solver import (
    SolverFailure, assemble, cache_load, cache_store, solve_near, weyl_check, weyl_max_cutoff,
)
from ..geometry import DomainKind, cached_grid, get_domain
from .manifest import ExperimentKind, ExperimentManifest, resolve_mu
from .svg import PALETTE, loglog_svg

MODES_COLUMNS = ("mode_id", "domain", "bc", "lambda2", "residual", "accepted")
CONVERGENCE_COLUMNS = ("mode_id", "resolution", "spacing", "lambda2", "exact", "error")
WEYL_COLUMNS = ("domain", "bc", "resolution", "cutoff", "count", "weyl_one_term", "deviation",
                "weyl_two_term", "deviation_two_term", "method")
EXPONENT_COLUMNS = ("mode_id", "x0", "exponent", "log_constant", "fit_residual", "mu_lo", "mu_hi",
                    "mass_over_mu")
SUPNORM_COLUMNS = ("mode_id", "lambda", "supnorm", "scaled", "argmax")
REFINEMENT_COLUMNS = ("mode_id", "resolution", "spacing", "abs_T_rellich", "order")
GREEN_REFINEMENT_COLUMNS = ("mode_id", "x0", "mu", "pitch", "residual")
CUTOFF_FAMILY_COLUMNS = ("property", "value", "flag")


class UnderResolved(RuntimeError):
    """The experiment cannot be resolved at the requested resolution (exit status 4)."""


@dataclass
class Context:
    cache_dir: Path | None
    threads: int = 1
    resolution: int | None = None
    seed: int | None = None


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _resolution(exp: ExperimentManifest, ctx: Context, kind: DomainKind | None = None) -> int:
    return ctx.resolution if ctx.resolution is not None else exp.resolution_for(kind)


def _seed(exp: ExperimentManifest, ctx: Context) -> int:
    return ctx.seed if ctx.seed is not None else exp.seed


def _grid(exp, ctx, resolution=None):
    res = resolution if resolution is not None else _resolution(exp, ctx)
    if ctx.cache_dir is None:
        return ma.default_grid(exp.domain, res)
    return cached_grid(get_domain(exp.domain), res, ctx.cache_dir)


def _write_rows(path: Path, columns, rows):
    fh, w = ma.csv_writer(path)
    with fh:
        w.writerow(columns)
        w.writerows(rows)


def _under_resolved(exp: ExperimentManifest, message: str, notes: list):
    if exp.on_under_resolved == "fail":
        raise UnderResolved(f"[experiment {exp.name}] {message}")
    notes.append(message)


def _radius_grid(exp: ExperimentManifest, h: float) -> np.ndarray:
    lo = resolve_mu(exp.mu_min, h)
    if not 0 < lo < exp.mu_max:
        raise ValueError(f"mu_min = {lo:g} must lie below mu_max = {exp.mu_max:g}")
    return ma.geometric_mus(lo, exp.mu_max, exp.mu_count)


# ---------------------------------------------------------------------------
# modes: listing, discrete solves, refinement, Weyl counts
# ---------------------------------------------------------------------------

def _solve_cached(exp, ctx, grid, target, count):
    op = assemble(grid, exp.bc)
    seed = _seed(exp, ctx)
    path = None
    if ctx.cache_dir is not None:
        path = Path(ctx.cache_dir) / (f"eig_{grid.domain.kind.value}_{exp.bc.letter}_R{grid.resolution}"
                                      f"_t{target:.10g}_c{count}_s{seed}.emeig")
        if path.exists():
            try:
                return cache_load(path, grid, exp.bc)
            except ValueError:
                pass
    batch = solve_near(op, target, count, seed=seed)
    if not batch.complete:
        raise SolverFailure(f"only {int(batch.accepted.sum())} of {count} eigenpairs near {target:g} "
                            "met the residual tolerance")
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        cache_store(batch, path)
    return batch


def run_modes(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    rows = []
    if exp.source == "discrete":
        grid = _grid(exp, ctx)
        lam_max = 0.5 * grid.resolution
        for t in exp.targets:
            if math.sqrt(max(t, 0.0)) > lam_max:
                _under_resolved(exp, f"target λ² = {t:g} needs λΔ <= 0.5", notes)
            batch = _solve_cached(exp, ctx, grid, t, exp.count)
            for i in range(len(batch)):
                rows.append([f"{exp.domain.value}-{exp.bc.letter}-discrete-{i}-t{t:g}", exp.domain.value,
                             exp.bc.value, ma.fmt(batch.eigenvalues[i]), ma.fmt(batch.residuals[i]),
                             "ok" if batch.accepted[i] else "rejected"])
    else:
        for m in exp.mode_list:
            rows.append([m.mode_id, m.domain.kind.value, m.bc.value, ma.fmt(m.lam ** 2), "", "exact"])
    _write_rows(dest / "modes.csv", MODES_COLUMNS, rows)

    if exp.resolutions:
        conv, series = [], []
        for m in exp.mode_list:
            xs, ys = [], []
            for r in exp.resolutions:
                grid = _grid(exp, ctx, r)
                target = m.lam ** 2
                batch = _solve_cached(exp, ctx, grid, target, 3)
                k = int(np.argmin(np.abs(batch.eigenvalues - target)))
                err = abs(batch.eigenvalues[k] - target)
                conv.append([m.mode_id, r, ma.fmt(grid.spacing), ma.fmt(batch.eigenvalues[k]),
                             ma.fmt(target), ma.fmt(err)])
                xs.append(grid.spacing)
                ys.append(err / target)
            series.append({"label": m.mode_id, "x": xs, "y": ys, "style": "line"})
        _write_rows(dest / "convergence.csv", CONVERGENCE_COLUMNS, conv)
        (dest / "convergence.svg").write_text(loglog_svg(series, "eigenvalue error vs spacing",
                                                         "grid spacing", "relative error"))

    if exp.weyl_cutoff is not None:
        grid = _grid(exp, ctx)
        bcs = [exp.bc] if exp.bc is not BoundaryCondition.NONE else \
            [BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN]
        wrows = []
        for bc in bcs:
            op = assemble(grid, bc)
            if exp.weyl_cutoff > weyl_max_cutoff(op):
                raise UnderResolved(f"[experiment {exp.name}] Weyl cutoff {exp.weyl_cutoff:g} exceeds the "
                                    f"trusted band {weyl_max_cutoff(op):.4g} at resolution {grid.resolution}")
            rep = weyl_check(op, exp.weyl_cutoff, seed=_seed(exp, ctx))
            wrows.append([exp.domain.value, bc.value, grid.resolution, ma.fmt(rep.cutoff), rep.count,
                          ma.fmt(rep.weyl_one_term), ma.fmt(rep.deviation), ma.fmt(rep.weyl_two_term),
                          ma.fmt(rep.deviation_two_term), rep.method])
        _write_rows(dest / "weyl.csv", WEYL_COLUMNS, wrows)


# ---------------------------------------------------------------------------
# mass scans and exponents
# ---------------------------------------------------------------------------

def _profile_svg(profiles, title):
    series = []
    for i, p in enumerate(profiles[:8]):
        color = PALETTE[i % len(PALETTE)]
        series.append({"label": f"{p.mode_id} @ {ma.format_point(p.center)}", "x": list(p.mus),
                       "y": list(p.masses), "style": "points", "color": color})
        xs = list(p.window)
        ys = [math.exp(p.log_constant) * x ** p.exponent for x in xs]
        series.append({"label": "", "x": xs, "y": ys, "style": "line", "dashed": True, "color": color})
    return loglog_svg(series, title, "mu", "mass M(x0, mu)")


def run_mass_scan(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    modes = exp.mode_list
    centers = exp.center_points
    hs = [min(m.h, m.domain.diameter) if m.lam > 0 else exp.mu_max / 4 for m in modes]
    mus = _radius_grid(exp, min(hs))
    grid = _grid(exp, ctx) if exp.quadrature == "grid" else None
    if grid is not None and mus[0] < ma.UNDER_RESOLVED_FACTOR * grid.spacing:
        notes.append(f"radii below {ma.UNDER_RESOLVED_FACTOR:g}Δ are flagged under_resolved")
    rows = ma.nonconcentration_sweep(modes, centers, mus, grid=grid)
    profiles = []
    for mode, row, h in zip(modes, rows, hs):
        floor = resolve_mu(exp.mu_min, h)
        keep = mus >= floor * (1 - 1e-9)
        for ci, c in enumerate(centers):
            masses = row.masses[ci][keep]
            kept = mus[keep]
            flags = kept < ma.UNDER_RESOLVED_FACTOR * grid.spacing if grid is not None else \
                np.zeros(len(kept), dtype=bool)
            if len(kept) >= 2 and np.all(masses > 0):
                alpha, logc, res = ma.fit_power_law(kept, masses)
            else:
                alpha, logc, res = float("nan"), float("nan"), float("nan")
            profiles.append(ma.MassProfile(mode.mode_id, tuple(c.tolist()), kept, masses, flags, alpha,
                                           logc, res, (float(kept[0]), float(kept[-1])) if len(kept) else
                                           (float("nan"),) * 2, "grid" if grid is not None else "exact"))
    if exp.write_profiles:
        ma.write_mass_profile_csv(profiles, dest / "mass_profile.csv")
    ma.write_sweep_summary_csv(rows, dest / "sweep_summary.csv")
    (dest / "mass_profile.svg").write_text(_profile_svg([p for p in profiles if len(p.mus) >= 2],
                                                        f"mass profiles ({exp.name})"))


def run_exponent(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    grid = _grid(exp, ctx) if exp.quadrature == "grid" else None
    jobs = [(m, c) for m in exp.mode_list for c in exp.center_points]

    def one(job):
        mode, c = job
        return ma.mass_profile(mode, c, _radius_grid(exp, mode.h), grid=grid)

    profiles = _pmap(one, jobs, ctx.threads)
    rows = []
    for p in profiles:
        rows.append([p.mode_id, ma.format_point(p.center), ma.fmt(p.exponent), ma.fmt(p.log_constant),
                     ma.fmt(p.fit_residual), ma.fmt(p.window[0]), ma.fmt(p.window[1]),
                     ma.fmt(p.masses[-1] / p.mus[-1])])
        if np.any(p.flags):
            notes.append(f"{p.mode_id}: radii below {ma.UNDER_RESOLVED_FACTOR:g}Δ")
    ma.write_mass_profile_csv(profiles, dest / "mass_profile.csv")
    _write_rows(dest / "exponent.csv", EXPONENT_COLUMNS, rows)
    (dest / "exponent.svg").write_text(_profile_svg(profiles, f"mass exponent fits ({exp.name})"))


# ---------------------------------------------------------------------------
# sup norms and the sup-norm to h-scaled mass ratio
# ---------------------------------------------------------------------------

def run_supnorm(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    grid = _grid(exp, ctx)
    modes = exp.mode_list

    def one(mode: EigenMode):
        return ma.sup_norm(mode, grid)

    res = _pmap(one, modes, ctx.threads)
    rows, xs, ys = [], [], []
    for mode, (sup, point) in zip(modes, res):
        n = mode.domain.dimension
        scaled = sup * mode.h ** ((n - 1) / 2) if mode.lam > 0 else float("nan")
        rows.append([mode.mode_id, ma.fmt(mode.lam), ma.fmt(sup), ma.fmt(scaled), ma.format_point(point)])
        xs.append(mode.lam)
        ys.append(scaled)
    _write_rows(dest / "supnorm.csv", SUPNORM_COLUMNS, rows)
    (dest / "supnorm.svg").write_text(loglog_svg([{"label": exp.name, "x": xs, "y": ys}],
                                                 "scaled sup norm vs lambda", "lambda",
                                                 "sup|phi| h^((n-1)/2)"))


def run_thm2(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    grid = _grid(exp, ctx)
    modes = exp.mode_list
    for m in modes:
        if m.h < ma.UNDER_RESOLVED_FACTOR * grid.spacing:
            _under_resolved(exp, f"{m.mode_id}: h = {m.h:.4g} < {ma.UNDER_RESOLVED_FACTOR:g}Δ", notes)
    reports = _pmap(lambda m: ma.thm2_ratio(m, grid), modes, ctx.threads)
    ma.write_thm2_csv(reports, dest / "thm2.csv")
    (dest / "thm2.svg").write_text(loglog_svg(
        [{"label": exp.name, "x": [r.lam for r in reports], "y": [r.ratio for r in reports]}],
        "local-mass ratio R vs lambda", "lambda", "R"))


# ---------------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------------

def _cutoff_family_rows():
    c = ic.build_cutoffs()
    s = np.linspace(-5.0, 5.0, 10001)
    chi, gam = c.chi(s), c.gamma(s)
    inner = np.abs(s) <= 1
    num = np.gradient(chi, s)
    checks = [
        ("odd", float(np.max(np.abs(c.chi(-s) + chi))), 1e-15),
        ("gamma_nonnegative", float(max(-gam.min(), 0.0)), 1e-12),
        ("chi_outer_plateau", float(max(np.max(np.abs(chi[s >= 3] - 1)), np.max(np.abs(chi[s <= -3] + 1)))),
         1e-15),
        ("chi_linear_core", float(np.max(np.abs(chi[inner] - s[inner] / 2))), 1e-15),
        ("chi_at_half", float(abs(c.chi(0.5) - 0.25)), 0.0),
        ("gamma_core_half", float(np.max(np.abs(gam[inner] - 0.5))), 1e-15),
        ("gamma_support", float(np.max(np.abs(gam[np.abs(s) >= 3]))), 0.0),
        ("gamma_is_derivative", float(np.max(np.abs(gam - num)[1:-1])), 1e-6),
        ("gamma_integral", float(abs(_gamma_integral(c) - 2.0)), 1e-6),
    ]
    return [[name, ma.fmt(v), "ok" if v <= tol else "violated"] for name, v, tol in checks]


def _gamma_integral(c) -> float:
    x, w = np.polynomial.legendre.leggauss(80)
    total = 1.0                                   # ∫_{-1}^{1} 1/2
    for a, b in ((1.0, 3.0), (-3.0, -1.0)):
        t = 0.5 * (b - a) * (x + 1) + a
        total += 0.5 * (b - a) * float(np.dot(w, c.gamma(t)))
    return total


def run_rellich(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    res = _resolution(exp, ctx) if (ctx.resolution or exp.resolution) else ic.RELLICH_RESOLUTION
    reports, cut, refine = [], [], []
    series = []
    for m in exp.mode_list:
        if m.lam / res > ic.MAX_LAMBDA_DX:
            raise UnderResolved(f"[experiment {exp.name}] {m.mode_id}: λΔ = {m.lam / res:.3g} > "
                                f"{ic.MAX_LAMBDA_DX}")
        for spec in exp.mu_values:
            mu = resolve_mu(spec, m.h)
            reports.append(ic.rellich_commutator_report(m, exp.p0, mu, resolution=res))
            if exp.cutoff and mu >= m.h * (1 - 1e-12):
                sub = exp.subscale and math.isclose(mu, m.h)
                cut.append(ic.cutoff_term_bound(m, exp.p0, mu, resolution=res, subscale=sub))
        if exp.resolutions:
            mu = resolve_mu(exp.mu_values[0], m.h)
            vals, order = ic.rellich_refinement(m, exp.p0, mu, exp.resolutions)
            for r, v in zip(exp.resolutions, vals):
                refine.append([m.mode_id, r, ma.fmt(1.0 / r), ma.fmt(v), ma.fmt(order)])
            series.append({"label": m.mode_id, "x": [1.0 / r for r in exp.resolutions],
                           "y": [max(v, 1e-300) for v in vals], "style": "line"})
    ic.write_rellich_csv(reports, dest / "rellich.csv")
    if exp.cutoff:
        ic.write_cutoff_csv(cut, dest / "cutoff.csv")
    if refine:
        _write_rows(dest / "rellich_refinement.csv", REFINEMENT_COLUMNS, refine)
        (dest / "rellich_refinement.svg").write_text(loglog_svg(series, "|T_rellich| vs spacing",
                                                                "grid spacing", "|T_rellich|"))
    if exp.cutoff_family:
        _write_rows(dest / "cutoff_family.csv", CUTOFF_FAMILY_COLUMNS, _cutoff_family_rows())


def run_green(exp: ExperimentManifest, ctx: Context, dest: Path, notes: list):
    out, refine, series = [], [], []
    for m in exp.mode_list:
        for c in exp.center_points:
            for spec in exp.mu_values:
                mu = resolve_mu(spec, m.h)
                out.append(ic.green_identity_residual(m, c, mu))
                if exp.pitches:
                    xs, ys = [], []
                    for p in exp.pitches:
                        g = ic.green_identity_residual(m, c, mu, pitch=p)
                        refine.append([m.mode_id, ma.format_point(c), ma.fmt(mu), ma.fmt(g.pitch),
                                       ma.fmt(g.residual)])
                        xs.append(g.pitch)
                        ys.append(abs(g.residual))
                    series.append({"label": f"{m.mode_id} mu={mu:.3g}", "x": xs, "y": ys, "style": "line"})
            if exp.reconstruct:
                out.append(ic.mean_value_reconstruction(m, c))
    ic.write_green_csv(out, dest / "green.csv")
    if refine:
        _write_rows(dest / "green_refinement.csv", GREEN_REFINEMENT_COLUMNS, refine)
        (dest / "green_refinement.svg").write_text(loglog_svg(series, "Green residual vs quadrature pitch",
                                                              "pitch", "|residual|"))


RUNNERS = {
    ExperimentKind.MODES: run_modes,
    ExperimentKind.MASS_SCAN: run_mass_scan,
    ExperimentKind.EXPONENT: run_exponent,
    ExperimentKind.SUPNORM: run_supnorm,
    ExperimentKind.THM2: run_thm2,
    ExperimentKind.RELLICH: run_rellich,
    ExperimentKind.GREEN_CHECK: run_green,
}

"""Merge experiment outputs into one table keyed by (domain, bc, λ) and flag violated invariants."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

from .. import mass_analysis as ma

REPORT_COLUMNS = ("domain", "bc", "lambda", "mode_id", "K", "thm2_ratio", "supnorm_scaled", "flags")

# invariant identifiers
INV_MONOTONE = "mass-monotone"
INV_THM1 = "thm1-no-growth"
INV_THM2 = "thm2-band"
INV_SUPNORM = "supnorm-no-growth"
INV_RELLICH = "rellich-vanishes"
INV_CORE = "rellich-core-mass"
INV_CUTOFF = "cutoff-bound"
INV_GREEN = "green-balance"
INV_RECON = "mean-value-reconstruction"
INV_CUTOFF_FAMILY = "cutoff-family"

NO_GROWTH_FACTOR = 1.5
THM2_BAND_FACTOR = 3.0
GREEN_TOLERANCE = 0.01
RECONSTRUCTION_TOLERANCE = 0.02
_KNOWN = ("sweep_summary.csv", "thm2.csv", "supnorm.csv", "mass_profile.csv", "rellich.csv",
          "cutoff.csv", "green.csv", "cutoff_family.csv")


class MissingInputs(FileNotFoundError):
    """Report inputs are absent (exit status 4)."""


def split_mode_id(mode_id: str) -> tuple[str, str]:
    """(domain, bc letter) from a mode identifier such as ``square-D-3-4``."""
    parts = mode_id.split("-")
    bc = parts[1] if len(parts) > 1 and parts[1] in ("D", "N") else "0"
    return parts[0], bc


def _collect(inputs) -> dict:
    found = defaultdict(list)
    for root in inputs:
        root = Path(root)
        if not root.exists():
            raise MissingInputs(f"report input {root} does not exist")
        for name in _KNOWN:
            for path in sorted(root.rglob(name)):
                found[name].append(path)
    if not any(found.values()):
        raise MissingInputs("no experiment outputs found under " + ", ".join(str(p) for p in inputs))
    return found


def _rows(paths):
    out = []
    for p in paths:
        out += ma.read_csv_rows(p)
    return out


def _halves(values: dict) -> tuple[float, float] | None:
    """(max over the lower half of the λ range, max over the upper half)."""
    lams = [lam for lam, _ in values]
    if len(set(lams)) < 2:
        return None
    mid = 0.5 * (min(lams) + max(lams))
    lower = [v for lam, v in values if lam <= mid]
    upper = [v for lam, v in values if lam > mid]
    if not lower or not upper:
        return None
    return max(lower), max(upper)


def build_report(inputs):
    """Return (table rows, summary lines, flags); raises MissingInputs."""
    found = _collect(inputs)
    table = {}
    flags = []

    def entry(mode_id, lam):
        dom, bc = split_mode_id(mode_id)
        key = (dom, bc, round(lam, 9), mode_id)
        return table.setdefault(key, {"K": "", "thm2_ratio": "", "supnorm_scaled": "", "flags": []})

    k_by_group = defaultdict(list)
    for r in _rows(found["sweep_summary.csv"]):
        lam = float(r["lambda"])
        entry(r["mode_id"], lam)["K"] = r["K"]
        k_by_group[split_mode_id(r["mode_id"])].append((lam, float(r["K"])))
    ratios = []
    for r in _rows(found["thm2.csv"]):
        entry(r["mode_id"], float(r["lambda"]))["thm2_ratio"] = r["ratio"]
        ratios.append(float(r["ratio"]))
    sup_by_group = defaultdict(list)
    for r in _rows(found["supnorm.csv"]):
        lam = float(r["lambda"])
        entry(r["mode_id"], lam)["supnorm_scaled"] = r["scaled"]
        if math.isfinite(float(r["scaled"])):
            sup_by_group[split_mode_id(r["mode_id"])].append((lam, float(r["scaled"])))

    # monotonicity of every mass profile
    profiles = defaultdict(list)
    for r in _rows(found["mass_profile.csv"]):
        profiles[(r["mode_id"], r["x0"])].append((float(r["mu"]), float(r["mass"])))
    for (mode_id, x0), pts in sorted(profiles.items()):
        pts.sort()
        for (mu_a, m_a), (mu_b, m_b) in zip(pts, pts[1:]):
            if m_b < m_a - 1e-12 * max(1.0, abs(m_a)):
                flags.append((INV_MONOTONE, f"{mode_id} x0={x0}: mass drops from {m_a:.6g} at mu={mu_a:.6g} "
                                            f"to {m_b:.6g} at mu={mu_b:.6g}"))
                break

    summary = []
    for (dom, bc), vals in sorted(k_by_group.items()):
        kdom = max(v for _, v in vals)
        summary.append(f"K_dom[{dom}-{bc}] = {ma.fmt(kdom)}")
        halves = _halves(vals)
        if halves:
            lo, hi = halves
            summary.append(f"K_growth[{dom}-{bc}] = {ma.fmt(hi / lo)}")
            if hi > NO_GROWTH_FACTOR * lo:
                flags.append((INV_THM1, f"{dom}-{bc}: upper-half max {hi:.6g} > {NO_GROWTH_FACTOR} x {lo:.6g}"))
    kdoms = defaultdict(float)
    for (dom, _), vals in k_by_group.items():
        kdoms[dom] = max(kdoms[dom], max(v for _, v in vals))
    for dom in sorted(kdoms):
        summary.append(f"K_dom[{dom}] = {ma.fmt(kdoms[dom])}")
    if ratios:
        r0, r1 = min(ratios), max(ratios)
        summary.append(f"thm2_band = [{ma.fmt(r0)}, {ma.fmt(r1)}]")
        if r1 > THM2_BAND_FACTOR * r0:
            flags.append((INV_THM2, f"r1/r0 = {r1 / r0:.6g} > {THM2_BAND_FACTOR}"))
    for (dom, bc), vals in sorted(sup_by_group.items()):
        halves = _halves(vals)
        if halves:
            lo, hi = halves
            summary.append(f"supnorm_growth[{dom}-{bc}] = {ma.fmt(hi / lo)}")
            if hi > NO_GROWTH_FACTOR * lo:
                flags.append((INV_SUPNORM, f"{dom}-{bc}: upper-half max {hi:.6g} > {NO_GROWTH_FACTOR} x {lo:.6g}"))

    for r in _rows(found["rellich.csv"]):
        where = f"{r['mode_id']} p0={r['p0']} mu={r['mu']}"
        if r["rellich_ok"] != "ok":
            flags.append((INV_RELLICH, f"{where}: |T_rellich| = {r['T_rellich']} > eps = {r['eps_rellich']}"))
        if r["core_ok"] != "ok":
            flags.append((INV_CORE, f"{where}: T_core - 2 M_psi = {r['core_residual']}"))
    for r in _rows(found["cutoff.csv"]):
        if r["bound_ok"] != "ok":
            flags.append((INV_CUTOFF, f"{r['mode_id']} mu={r['mu']}: |T_cutoff|/mu = {r['ratio']}"))
    for r in _rows(found["green.csv"]):
        tol = GREEN_TOLERANCE if r["identity"] == "mvt" else RECONSTRUCTION_TOLERANCE
        inv = INV_GREEN if r["identity"] == "mvt" else INV_RECON
        if float(r["relative_residual"]) > tol:
            flags.append((inv, f"{r['mode_id']} x0={r['x0']} mu={r['mu']}: relative residual "
                               f"{r['relative_residual']} > {tol}"))
    for r in _rows(found["cutoff_family.csv"]):
        if r["flag"] != "ok":
            flags.append((INV_CUTOFF_FAMILY, f"{r['property']} = {r['value']}"))

    for inv, detail in flags:
        mode_id = detail.split(" ", 1)[0].rstrip(":")
        for key, e in table.items():
            if key[3] == mode_id and inv not in e["flags"]:
                e["flags"].append(inv)
    rows = []
    for key in sorted(table):
        dom, bc, lam, mode_id = key
        e = table[key]
        rows.append([dom, bc, ma.fmt(lam), mode_id, e["K"], e["thm2_ratio"], e["supnorm_scaled"],
                     ";".join(e["flags"])])
    summary.append(f"flags = {len(flags)}")
    return rows, summary, flags


def write_report(inputs, dest: Path) -> list:
    rows, summary, flags = build_report(inputs)
    fh, w = ma.csv_writer(dest / "report.csv")
    with fh:
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
    lines = summary + [f"flag = {inv} | {detail}" for inv, detail in flags]
    (dest / "report.txt").write_text("\n".join(lines) + "\n")
    return flags

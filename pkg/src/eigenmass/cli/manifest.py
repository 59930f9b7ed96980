"""Experiment manifests: INI files with one ``[experiment NAME]`` section per run.

Every field is parsed and validated (including construction of the selected
modes) before anything executes, so a bad manifest never produces output.
"""

from __future__ import annotations

import configparser
import enum
import io
import math
import re
from dataclasses import dataclass, field, fields
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from ..closed_form import (
    BoundaryCondition, as_bc, ball3_mode, disk_mode, disk_modes_in_band, rectangle_mode,
    rectangle_modes_in_band, sphere_highest_weight,
)
from ..geometry import DomainKind, get_domain
from ..mass_analysis import DEFAULT_RESOLUTION


class ManifestError(ValueError):
    """Invalid manifest (exit status 2)."""


class ExperimentKind(str, enum.Enum):
    MODES = "modes"
    MASS_SCAN = "mass-scan"
    EXPONENT = "exponent"
    SUPNORM = "supnorm"
    THM2 = "thm2"
    RELLICH = "rellich"
    GREEN_CHECK = "green-check"
    REPORT = "report"


DEFAULT_CENTERS = {
    DomainKind.UNIT_SQUARE: ((0.5, 0.5), (0.3, 0.7), (0.5, 0.0), (0.0, 0.3), (1.0, 0.5), (0.0, 0.0)),
    DomainKind.UNIT_DISK: ((0.0, 0.0), (0.4, 0.3), (0.5, 0.0), (1.0, 0.0), (0.0, 1.0), (-0.6, 0.8)),
    DomainKind.SPHERE_S2: ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.6, 0.8, 0.0)),
    DomainKind.UNIT_BALL3: ((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (1.0, 0.0, 0.0)),
}


@dataclass(frozen=True)
class ExperimentManifest:
    """One experiment.  Field order is the on-disk key order."""

    name: str
    kind: ExperimentKind
    domain: DomainKind | None = None
    bc: BoundaryCondition = BoundaryCondition.NONE
    source: str = "closed_form"             # closed_form | discrete
    modes: tuple = ()                        # index tuples, e.g. ((1, 1), (2, 3))
    band: tuple | None = None                # λ² band (lo, hi)
    parity: str = "cos"                      # disk: cos | both
    sample: int | None = None                # keep this many modes, evenly spread in λ
    targets: tuple = ()                      # λ² targets for the discrete solver
    count: int = 1
    centers: tuple | None = None             # None: per-domain default set
    mu_min: str = "h"                        # number, "h", "<c>h" or "sqrt_h"
    mu_max: float = 0.5
    mu_count: int = 16
    mu_spacing: str = "geometric"
    mu_values: tuple = ()                    # explicit radii (rellich, green-check); may use "h"
    quadrature: str = "exact"                # exact | grid
    resolution: dict | None = None           # {DomainKind: int}; None: module defaults
    resolutions: tuple = ()                  # refinement studies
    pitches: tuple = ()                      # green-check quadrature refinement
    p0: tuple = (0.5, 0.0)
    cutoff: bool = False
    subscale: bool = False
    cutoff_family: bool = False
    reconstruct: bool = False
    weyl_cutoff: float | None = None
    write_profiles: bool = True
    on_under_resolved: str = "fail"          # fail | flag
    inputs: tuple = ()
    output: str = "eigenmass-out"
    seed: int = 0

    # -- derived -----------------------------------------------------------
    def resolution_for(self, kind: DomainKind | None = None) -> int:
        kind = kind or self.domain
        if self.resolution and kind in self.resolution:
            return int(self.resolution[kind])
        return DEFAULT_RESOLUTION[kind]

    @cached_property
    def mode_list(self) -> list:
        """The selected closed-form modes (empty for discrete sources and reports)."""
        if self.kind is ExperimentKind.REPORT or self.source != "closed_form":
            return []
        out = [_make_mode(self.domain, self.bc, idx) for idx in self.modes]
        if self.band is not None:
            out += _band_modes(self.domain, self.bc, self.band, self.parity)
        seen, uniq = set(), []
        for m in out:
            if m.mode_id not in seen:
                seen.add(m.mode_id)
                uniq.append(m)
        if self.modes and self.band is None:
            selected = uniq
        else:
            selected = sorted(uniq, key=lambda m: (m.lam, m.mode_id))
        if self.sample is not None and len(selected) > self.sample:
            pick = np.unique(np.round(np.linspace(0, len(selected) - 1, self.sample)).astype(int))
            selected = [selected[i] for i in pick]
        return selected

    @property
    def center_points(self) -> np.ndarray:
        pts = DEFAULT_CENTERS[self.domain] if self.centers is None else self.centers
        return np.array(pts, dtype=float)


# ---------------------------------------------------------------------------
# mode construction
# ---------------------------------------------------------------------------

def _make_mode(domain: DomainKind, bc: BoundaryCondition, idx: tuple):
    if domain is DomainKind.UNIT_SQUARE:
        if len(idx) != 2:
            raise ManifestError(f"square modes need (j, k), got {idx}")
        return rectangle_mode(int(idx[0]), int(idx[1]), bc)
    if domain is DomainKind.UNIT_DISK:
        if len(idx) not in (2, 3):
            raise ManifestError(f"disk modes need (m, k[, parity]), got {idx}")
        parity = idx[2] if len(idx) == 3 else "cos"
        return disk_mode(int(idx[0]), int(idx[1]), bc, parity)
    if domain is DomainKind.SPHERE_S2:
        if len(idx) not in (1, 2):
            raise ManifestError(f"sphere modes need (n[, part]), got {idx}")
        return sphere_highest_weight(int(idx[0]), idx[1] if len(idx) == 2 else "complex")
    if len(idx) != 1:
        raise ManifestError(f"ball modes need (k,), got {idx}")
    return ball3_mode(int(idx[0]))


def _band_modes(domain: DomainKind, bc: BoundaryCondition, band: tuple, parity: str):
    lo, hi = band
    if domain is DomainKind.UNIT_SQUARE:
        return rectangle_modes_in_band(lo, hi, bc)
    if domain is DomainKind.UNIT_DISK:
        return disk_modes_in_band(lo, hi, bc, both_parities=(parity == "both"))
    raise ManifestError(f"band selection is available on the square and disk only, not {domain.value}")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_SECTION = re.compile(r"^experiment\s+([A-Za-z0-9_.-]+)$")
_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _split_list(text: str, sep: str = ";") -> list[str]:
    return [t.strip() for t in text.split(sep) if t.strip()]


def _floats(text: str, what: str) -> tuple:
    try:
        return tuple(float(t) for t in _split_list(text.replace(";", ","), ","))
    except ValueError as exc:
        raise ManifestError(f"{what}: expected numbers, got {text!r}") from exc


def _point_list(text: str, what: str) -> tuple:
    return tuple(_floats(p, what) for p in _split_list(text))


def _index_list(text: str) -> tuple:
    out = []
    for item in _split_list(text):
        parts = []
        for t in _split_list(item, ","):
            parts.append(int(t) if re.fullmatch(r"-?\d+", t) else t)
        out.append(tuple(parts))
    return tuple(out)


def _parse_resolution(text: str, domain: DomainKind | None) -> dict:
    text = text.strip()
    if re.fullmatch(r"\d+", text):
        if domain is None:
            raise ManifestError("a bare resolution needs a domain")
        return {domain: int(text)}
    out = {}
    for item in text.split():
        key, _, val = item.partition(":")
        try:
            out[DomainKind(key)] = int(val)
        except ValueError as exc:
            raise ManifestError(f"bad resolution entry {item!r}") from exc
    return out


def _parse_value(name: str, raw: str, domain):
    raw = raw.strip()
    try:
        if name == "kind":
            return ExperimentKind(raw)
        if name == "domain":
            return DomainKind(raw)
        if name == "bc":
            return as_bc(raw)
        if name in ("modes",):
            return _index_list(raw)
        if name == "band":
            v = _floats(raw, name)
            if len(v) != 2:
                raise ManifestError("band needs two numbers")
            return v
        if name in ("targets", "pitches"):
            return _floats(raw, name)
        if name == "resolutions":
            return tuple(int(v) for v in _split_list(raw.replace(";", ","), ","))
        if name in ("centers",):
            return None if raw == "default" else _point_list(raw, name)
        if name == "p0":
            return _floats(raw, name)
        if name == "mu_values":
            return tuple(_split_list(raw.replace(";", ","), ","))
        if name in ("count", "mu_count", "seed"):
            return int(raw)
        if name == "sample":
            return None if raw == "all" else int(raw)
        if name == "mu_max":
            return float(raw)
        if name == "weyl_cutoff":
            return None if raw == "none" else float(raw)
        if name == "resolution":
            return None if raw == "default" else _parse_resolution(raw, domain)
        if name in ("cutoff", "subscale", "cutoff_family", "reconstruct", "write_profiles"):
            if raw.lower() not in _BOOL:
                raise ManifestError(f"{name}: expected true/false, got {raw!r}")
            return _BOOL[raw.lower()]
        if name == "inputs":
            return tuple(_split_list(raw.replace(";", ","), ","))
        return raw
    except ManifestError:
        raise
    except ValueError as exc:
        raise ManifestError(f"{name}: {exc}") from exc


def _format_value(name: str, value) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    if value is None:
        return {"centers": "default", "sample": "all", "weyl_cutoff": "none", "resolution": "default",
                "band": "none", "domain": "none"}[name]
    if isinstance(value, bool):
        return "true" if value else "false"
    if name == "resolution":
        return " ".join(f"{k.value}:{v}" for k, v in sorted(value.items(), key=lambda kv: kv[0].value))
    if name in ("modes",):
        return "; ".join(",".join(str(p) for p in idx) for idx in value)
    if name == "centers":
        return "; ".join(",".join(repr(float(c)) for c in p) for p in value)
    if name in ("band", "targets", "pitches", "p0"):
        return ", ".join(repr(float(v)) for v in value)
    if name in ("resolutions", "mu_values", "inputs"):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_FIELD_NAMES = [f.name for f in fields(ExperimentManifest)]


def parse_manifest(text: str, source: str = "<manifest>") -> list[ExperimentManifest]:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ManifestError(f"{source}: {exc}") from exc
    out = []
    for section in cp.sections():
        m = _SECTION.match(section)
        if not m:
            raise ManifestError(f"{source}: unknown section [{section}] (expected [experiment NAME])")
        data = dict(cp.items(section))
        unknown = set(data) - set(_FIELD_NAMES)
        if unknown:
            raise ManifestError(f"{source} [{section}]: unknown keys {sorted(unknown)}")
        if "kind" not in data:
            raise ManifestError(f"{source} [{section}]: missing 'kind'")
        domain = None
        if data.get("domain", "none").strip() != "none":
            domain = _parse_value("domain", data["domain"], None)
        kw = {"name": m.group(1)}
        for key, raw in data.items():
            if key == "band" and raw.strip() == "none":
                kw[key] = None
            elif key == "domain":
                kw[key] = domain
            else:
                kw[key] = _parse_value(key, raw, domain)
        exp = ExperimentManifest(**kw)
        validate(exp)
        out.append(exp)
    if not out:
        raise ManifestError(f"{source}: no [experiment NAME] sections")
    names = [e.name for e in out]
    if len(set(names)) != len(names):
        raise ManifestError(f"{source}: duplicate experiment names")
    return out


def dump_manifest(experiments) -> str:
    buf = io.StringIO()
    for i, exp in enumerate(experiments):
        if i:
            buf.write("\n")
        buf.write(f"[experiment {exp.name}]\n")
        for name in _FIELD_NAMES[1:]:
            buf.write(f"{name} = {_format_value(name, getattr(exp, name))}\n")
    return buf.getvalue()


def canned_manifest_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("eigenmass.manifests").iterdir()
                  if p.name.endswith(".ini"))


def load_manifest(path_or_name) -> list[ExperimentManifest]:
    """Read a manifest file, or a canned manifest by name (e.g. ``c01_beam_sharpness``)."""
    p = Path(path_or_name)
    if p.is_file():
        try:
            text = p.read_text()
        except OSError as exc:
            raise ManifestError(f"cannot read {p}: {exc}") from exc
        return parse_manifest(text, str(p))
    name = str(path_or_name)
    if name in canned_manifest_names():
        text = resources.files("eigenmass.manifests").joinpath(name + ".ini").read_text()
        return parse_manifest(text, name)
    raise ManifestError(f"no manifest file or canned manifest named {name!r}")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def resolve_mu(spec: str, h: float) -> float:
    """'0.1' -> 0.1, 'h' -> h, '3h' -> 3h, 'sqrt_h' -> √h."""
    spec = str(spec).strip()
    if spec == "sqrt_h":
        return math.sqrt(h)
    m = re.fullmatch(r"([0-9.eE+-]*)h", spec)
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * h
    return float(spec)


def _check_mu_spec(spec: str, what: str):
    try:
        resolve_mu(spec, 0.5)
    except ValueError as exc:
        raise ManifestError(f"{what}: bad radius {spec!r}") from exc


def validate(exp: ExperimentManifest) -> None:
    """Raise ManifestError on any inconsistency; constructs the selected modes."""
    k = exp.kind
    where = f"[experiment {exp.name}]"
    if k is ExperimentKind.REPORT:
        if not exp.inputs:
            raise ManifestError(f"{where}: a report needs 'inputs'")
        return
    if exp.domain is None:
        raise ManifestError(f"{where}: missing 'domain'")
    dom = get_domain(exp.domain)
    if exp.source not in ("closed_form", "discrete"):
        raise ManifestError(f"{where}: source must be closed_form or discrete")
    if exp.quadrature not in ("exact", "grid"):
        raise ManifestError(f"{where}: quadrature must be exact or grid")
    if exp.mu_spacing != "geometric":
        raise ManifestError(f"{where}: only geometric mu spacing is supported")
    if exp.on_under_resolved not in ("fail", "flag"):
        raise ManifestError(f"{where}: on_under_resolved must be fail or flag")
    if exp.parity not in ("cos", "both"):
        raise ManifestError(f"{where}: parity must be cos or both")
    if exp.mu_count < 8:
        raise ManifestError(f"{where}: mu_count must be >= 8")
    if not 0 < exp.mu_max <= dom.diameter:
        raise ManifestError(f"{where}: mu_max must lie in (0, {dom.diameter:g}]")
    _check_mu_spec(exp.mu_min, where)
    for v in exp.mu_values:
        _check_mu_spec(v, where)
    if exp.resolution:
        for kind, r in exp.resolution.items():
            if r < 4:
                raise ManifestError(f"{where}: resolution for {kind.value} too small")
    if any(r < 4 for r in exp.resolutions):
        raise ManifestError(f"{where}: refinement resolutions must be >= 4")
    if exp.centers is not None:
        pts = np.array(exp.centers, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != dom.ambient_dimension:
            raise ManifestError(f"{where}: centers need {dom.ambient_dimension} coordinates each")
        if not np.all(dom.contains(pts, tol=1e-9)):
            raise ManifestError(f"{where}: a center lies outside the {dom.kind.value}")
    if exp.source == "discrete":
        if k is not ExperimentKind.MODES:
            raise ManifestError(f"{where}: discrete sources are supported by the modes experiment")
        if exp.bc is BoundaryCondition.NONE:
            raise ManifestError(f"{where}: the solver needs a Dirichlet or Neumann condition")
        if not exp.targets:
            raise ManifestError(f"{where}: discrete sources need 'targets'")
        if not 1 <= exp.count <= 50:
            raise ManifestError(f"{where}: count must lie in [1, 50]")
        return
    try:
        modes = exp.mode_list
    except ManifestError:
        raise
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from exc
    if not modes and not (k is ExperimentKind.MODES and exp.weyl_cutoff is not None):
        raise ManifestError(f"{where}: no modes selected")
    if k is ExperimentKind.RELLICH and (exp.domain is not DomainKind.UNIT_SQUARE or not exp.mu_values):
        raise ManifestError(f"{where}: rellich runs on the square and needs mu_values")
    if k is ExperimentKind.GREEN_CHECK and exp.domain is not DomainKind.UNIT_BALL3:
        raise ManifestError(f"{where}: green-check runs on the unit ball")
    if k is ExperimentKind.THM2 and exp.domain not in (DomainKind.UNIT_SQUARE, DomainKind.UNIT_DISK):
        raise ManifestError(f"{where}: thm2 needs the square or the disk")
    if k is ExperimentKind.MODES and exp.resolutions and exp.domain not in (
            DomainKind.UNIT_SQUARE, DomainKind.UNIT_DISK, DomainKind.UNIT_BALL3):
        raise ManifestError(f"{where}: refinement needs a domain the solver supports")

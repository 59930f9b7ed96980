import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigenmass import cli
from eigenmass.cli import runners
from eigenmass.cli.manifest import (
    ExperimentKind, ExperimentManifest, ManifestError, canned_manifest_names, dump_manifest, load_manifest,
    parse_manifest,
)
from eigenmass.closed_form import BoundaryCondition
from eigenmass.discrete_solver import SolverFailure
from eigenmass.geometry import DomainKind

MINIMAL = """
[experiment minimal]
kind = mass-scan
domain = square
bc = dirichlet
modes = 1,1
centers = 0.5,0.5
mu_min = h
mu_max = 0.5
mu_count = 8
"""


def run_cli(tmp_path, *args, manifest_text=None, name="m.ini"):
    argv = list(args)
    if manifest_text is not None:
        p = tmp_path / name
        p.write_text(manifest_text)
        argv += ["--manifest", str(p)]
    return cli.main(argv)


def files_under(root: Path):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


# ---------------------------------------------------------------------------
# smoke and outputs
# ---------------------------------------------------------------------------

def test_minimal_manifest_writes_three_files(tmp_path):
    out = tmp_path / "out"
    code = run_cli(tmp_path, "mass-scan", "--out", str(out), "--cache-dir", str(tmp_path / "c"),
                   manifest_text=MINIMAL)
    assert code == 0
    assert files_under(out) == ["minimal/mass_profile.csv", "minimal/mass_profile.svg", "minimal/sweep_summary.csv"]
    with open(out / "minimal" / "mass_profile.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["mode_id", "x0", "mu", "mass", "flag"]
    assert len(rows) == 1 + 8


def test_canned_smoke_manifest(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["mass-scan", "--manifest", "smoke_minimal", "--out", str(out),
                     "--cache-dir", str(tmp_path / "c")]) == 0
    assert len(files_under(out)) == 3


def test_svg_is_well_formed(tmp_path):
    out = tmp_path / "out"
    run_cli(tmp_path, "mass-scan", "--out", str(out), "--cache-dir", str(tmp_path / "c"), manifest_text=MINIMAL)
    root = ET.parse(out / "minimal" / "mass_profile.svg").getroot()
    assert root.tag.endswith("svg")
    assert any(el.tag.endswith("path") or el.tag.endswith("polyline") or el.tag.endswith("circle")
               for el in root.iter())


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"out{i}"
        assert run_cli(tmp_path, "mass-scan", "--out", str(out), "--cache-dir", str(tmp_path / f"c{i}"),
                       manifest_text=MINIMAL) == 0
        outs.append(out)
    for f in files_under(outs[0]):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_discrete_rerun_uses_cache_and_is_identical(tmp_path):
    text = """
[experiment solve]
kind = modes
domain = square
bc = dirichlet
source = discrete
targets = 200
count = 4
resolution = 48
seed = 3
"""
    cache = tmp_path / "cache"
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(tmp_path, "modes", "--out", str(a), "--cache-dir", str(cache), manifest_text=text) == 0
    assert len(list(cache.glob("*.emeig"))) == 1
    assert run_cli(tmp_path, "modes", "--out", str(b), "--cache-dir", str(cache), manifest_text=text) == 0
    assert (a / "solve" / "modes.csv").read_bytes() == (b / "solve" / "modes.csv").read_bytes()


def test_cache_dir_from_environment(tmp_path, monkeypatch):
    env_cache = tmp_path / "envcache"
    monkeypatch.setenv("EIGENMASS_CACHE", str(env_cache))
    assert cli.default_cache_dir() == env_cache
    text = """
[experiment solve]
kind = modes
domain = square
bc = neumann
source = discrete
targets = 100
count = 2
resolution = 32
"""
    assert run_cli(tmp_path, "modes", "--out", str(tmp_path / "o"), manifest_text=text) == 0
    assert list(env_cache.glob("*.emeig"))


def test_list_manifests(capsys):
    assert cli.main(["--list-manifests"]) == 0
    names = capsys.readouterr().out.split()
    assert names == canned_manifest_names()
    assert {f"c{i:02d}" for i in range(1, 11)} <= {n[:3] for n in names}


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_exit_invalid_manifest(tmp_path):
    bad = MINIMAL + "colour = blue\n"
    assert run_cli(tmp_path, "mass-scan", "--out", str(tmp_path / "o"), manifest_text=bad) == 2
    assert cli.main(["mass-scan", "--manifest", "no_such_manifest", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["mass-scan", "--out", str(tmp_path / "o")]) == 2
    assert cli.main([]) == 2
    # a manifest without experiments of the requested kind
    assert run_cli(tmp_path, "thm2", "--out", str(tmp_path / "o"), manifest_text=MINIMAL) == 2


def test_exit_solver_failure(tmp_path, monkeypatch):
    def failing(*a, **k):
        raise SolverFailure("forced")

    monkeypatch.setattr(runners, "solve_near", failing)
    text = """
[experiment solve]
kind = modes
domain = square
bc = dirichlet
source = discrete
targets = 120
count = 2
resolution = 32
"""
    assert run_cli(tmp_path, "modes", "--out", str(tmp_path / "o"), "--cache-dir", str(tmp_path / "c"),
                   manifest_text=text) == 3
    assert files_under(tmp_path / "o") == []


def test_exit_under_resolved(tmp_path):
    text = """
[experiment solve]
kind = modes
domain = square
bc = dirichlet
source = discrete
targets = 5000
count = 1
resolution = 32
"""
    assert run_cli(tmp_path, "modes", "--out", str(tmp_path / "o"), "--cache-dir", str(tmp_path / "c"),
                   manifest_text=text) == 4


def test_exit_missing_report_inputs(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path / "o"), str(tmp_path / "nothing-here")]) == 4


def test_exit_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert run_cli(tmp_path, "mass-scan", "--out", str(blocker / "out"), "--cache-dir", str(tmp_path / "c"),
                   manifest_text=MINIMAL) == 5


def test_invalid_manifest_never_partially_executes(tmp_path):
    # the second experiment fails validation, so the first must not run either
    text = MINIMAL + """
[experiment broken]
kind = mass-scan
domain = square
bc = dirichlet
modes = 1
"""
    out = tmp_path / "o"
    assert run_cli(tmp_path, "mass-scan", "--out", str(out), manifest_text=text) == 2
    assert not out.exists() or files_under(out) == []


def test_runtime_failure_commits_nothing(tmp_path):
    # valid on paper, but the radius grid is empty once h is known: nothing is committed
    text = MINIMAL + """
[experiment late]
kind = mass-scan
domain = square
bc = dirichlet
modes = 1,1
centers = 0.5,0.5
mu_min = 0.6
mu_max = 0.5
mu_count = 8
"""
    out = tmp_path / "o"
    code = run_cli(tmp_path, "mass-scan", "--out", str(out), "--cache-dir", str(tmp_path / "c"), manifest_text=text)
    assert code == 2
    assert files_under(out) == []


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", canned_manifest_names())
def test_canned_manifests_round_trip(name):
    exps = load_manifest(name)
    again = parse_manifest(dump_manifest(exps))
    assert again == exps
    assert dump_manifest(again) == dump_manifest(exps)


mode_index = st.tuples(st.integers(0, 12), st.integers(0, 12))
point = st.tuples(st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False))


@given(
    bc=st.sampled_from([BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN]),
    modes=st.lists(mode_index, min_size=1, max_size=4, unique=True),
    centers=st.one_of(st.none(), st.lists(point, min_size=1, max_size=3).map(tuple)),
    mu_max=st.floats(0.2, 1.0),
    mu_count=st.integers(8, 40),
    seed=st.integers(0, 2 ** 31 - 1),
    res=st.one_of(st.none(), st.integers(16, 512)),
    quadrature=st.sampled_from(["exact", "grid"]),
)
def test_manifest_round_trip_property(bc, modes, centers, mu_max, mu_count, seed, res, quadrature):
    if bc is BoundaryCondition.DIRICHLET:
        modes = [(max(j, 1), max(k, 1)) for j, k in modes]
    modes = tuple(dict.fromkeys(modes))
    exp = ExperimentManifest(name="prop", kind=ExperimentKind.MASS_SCAN, domain=DomainKind.UNIT_SQUARE, bc=bc,
                             modes=modes, centers=centers, mu_max=mu_max, mu_count=mu_count, seed=seed,
                             resolution=None if res is None else {DomainKind.UNIT_SQUARE: res},
                             quadrature=quadrature)
    back = parse_manifest(dump_manifest([exp]))
    assert back == [exp]


BASE_FIELDS = {"kind": "mass-scan", "domain": "square", "bc": "dirichlet", "modes": "1,1"}


@pytest.mark.parametrize("key, value", [
    ("kind", "teleport"),
    ("domain", "torus"),
    ("mu_count", "many"),
    ("cutoff", "maybe"),
])
def test_bad_field_values_rejected(key, value):
    fields = dict(BASE_FIELDS, **{key: value})
    text = "[experiment x]\n" + "".join(f"{k} = {v}\n" for k, v in fields.items())
    with pytest.raises(ManifestError, match=key):
        parse_manifest(text)


def test_structural_errors_rejected():
    with pytest.raises(ManifestError, match="section"):
        parse_manifest("[run x]\nkind = mass-scan\n")
    with pytest.raises(ManifestError, match="no \\[experiment"):
        parse_manifest("# empty\n")
    with pytest.raises(ManifestError, match="duplicate"):
        parse_manifest(MINIMAL + MINIMAL.replace("[experiment minimal]", "[experiment  minimal]"))
    with pytest.raises(ManifestError, match="kind"):
        parse_manifest("[experiment x]\ndomain = square\n")


def test_manifest_name_beside_same_named_directory(tmp_path, monkeypatch):
    # an output directory named after a canned manifest must not shadow it
    monkeypatch.chdir(tmp_path)
    (tmp_path / "smoke_minimal").mkdir()
    assert [e.name for e in load_manifest("smoke_minimal")] == ["minimal"]


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _run_minimal(tmp_path):
    out = tmp_path / "out"
    assert run_cli(tmp_path, "mass-scan", "--out", str(out), "--cache-dir", str(tmp_path / "c"),
                   manifest_text=MINIMAL) == 0
    return out / "minimal"


def test_report_all_green_has_zero_flags(tmp_path):
    src = _run_minimal(tmp_path)
    rep = tmp_path / "rep"
    assert cli.main(["report", "--out", str(rep), str(src)]) == 0
    text = (rep / "report" / "report.txt").read_text()
    assert "flags = 0" in text.splitlines()
    assert (rep / "report" / "report.csv").exists()


def test_report_flags_corrupted_monotonicity(tmp_path):
    src = _run_minimal(tmp_path)
    path = src / "mass_profile.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    # make the mass at the fourth radius drop below the third
    col = rows[0].index("mass")
    rows[4][col] = repr(float(rows[3][col]) * 0.5)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    rep = tmp_path / "rep"
    assert cli.main(["report", "--out", str(rep), str(src)]) == 0
    text = (rep / "report" / "report.txt").read_text()
    assert "flags = 1" in text.splitlines()
    assert any(line.startswith("flag = mass-monotone") for line in text.splitlines())
    with open(rep / "report" / "report.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    assert any("mass-monotone" in r["flags"] for r in table)

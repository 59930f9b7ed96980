"""``eigenmass`` command line: run manifest experiments and merge their outputs.

Exit status: 0 success, 2 invalid manifest, 3 solver failure, 4 under-resolved
experiment or missing report inputs, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
from pathlib import Path

from ..discrete_solver import SolverFailure
from .manifest import (
    ExperimentKind, ExperimentManifest, ManifestError, canned_manifest_names, load_manifest,
)
from .report import MissingInputs, write_report
from .runners import RUNNERS, Context, UnderResolved

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_UNDER_RESOLVED = 4
EXIT_IO = 5


def default_cache_dir() -> Path:
    env = os.environ.get("EIGENMASS_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "eigenmass"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigenmass", description=__doc__.splitlines()[0])
    parser.add_argument("--list-manifests", action="store_true", help="list the canned manifests and exit")
    sub = parser.add_subparsers(dest="command")
    for kind in ExperimentKind:
        p = sub.add_parser(kind.value, help=f"run the {kind.value} experiments of a manifest")
        p.add_argument("--manifest", help="manifest file or canned manifest name")
        p.add_argument("--cache-dir", type=Path, help="grid and eigenpair cache (default $EIGENMASS_CACHE "
                                                     "or ~/.cache/eigenmass)")
        p.add_argument("--out", type=Path, help="output directory (overrides the manifest)")
        p.add_argument("--resolution", type=int, help="grid resolution for every experiment")
        p.add_argument("--seed", type=int, help="solver seed for every experiment")
        p.add_argument("--threads", type=int, default=1, help="worker threads for per-mode work")
        if kind is ExperimentKind.REPORT:
            p.add_argument("inputs", nargs="*", type=Path, help="experiment output directories")
    return parser


def _select(args) -> list[ExperimentManifest]:
    kind = ExperimentKind(args.command)
    if args.manifest is None:
        if kind is ExperimentKind.REPORT and args.inputs:
            return [ExperimentManifest(name="report", kind=kind,
                                       inputs=tuple(str(p) for p in args.inputs))]
        raise ManifestError("--manifest is required")
    exps = [e for e in load_manifest(args.manifest) if e.kind is kind]
    if not exps:
        raise ManifestError(f"manifest {args.manifest} has no {kind.value} experiments")
    return exps


def _report_inputs(exp: ExperimentManifest, out: Path) -> list[Path]:
    paths = []
    for item in exp.inputs:
        p = Path(item)
        paths.append(p if p.is_absolute() or p.exists() else out / p)
    return paths


def _commit(staging: Path, exp: ExperimentManifest, out: Path) -> list[Path]:
    target = out / exp.name
    target.mkdir(parents=True, exist_ok=True)
    written = []
    for f in sorted((staging / exp.name).iterdir()):
        dest = target / f.name
        os.replace(f, dest)
        written.append(dest)
    return written


def run(args) -> int:
    try:
        exps = _select(args)
    except ManifestError as exc:
        print(f"eigenmass: invalid manifest: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.threads < 1:
        print("eigenmass: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out = args.out if args.out is not None else Path(exps[0].output)
    cache = args.cache_dir if args.cache_dir is not None else default_cache_dir()
    ctx = Context(cache_dir=cache, threads=args.threads, resolution=args.resolution, seed=args.seed)
    staging = None
    try:
        out.mkdir(parents=True, exist_ok=True)
        cache.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
        notes = []
        for exp in exps:
            d = staging / exp.name
            d.mkdir()
            if exp.kind is ExperimentKind.REPORT:
                flags = write_report(_report_inputs(exp, out), d)
                notes.append(f"{exp.name}: {len(flags)} flagged invariant(s)")
            else:
                RUNNERS[exp.kind](exp, ctx, d, notes)
        for exp in exps:
            for path in _commit(staging, exp, out):
                print(path)
        for n in notes:
            print(f"note: {n}", file=sys.stderr)
        return EXIT_OK
    except ManifestError as exc:
        print(f"eigenmass: invalid manifest: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverFailure as exc:
        print(f"eigenmass: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (UnderResolved, MissingInputs) as exc:
        print(f"eigenmass: {exc}", file=sys.stderr)
        return EXIT_UNDER_RESOLVED
    except OSError as exc:
        print(f"eigenmass: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"eigenmass: invalid experiment: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        if staging is not None:
            shutil.rmtree(staging, ignore_errors=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_manifests:
        print("\n".join(canned_manifest_names()))
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_INVALID
    return run(args)


if __name__ == "__main__":
    sys.exit(main())

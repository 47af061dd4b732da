"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
4 tolerance failure in ``--check`` mode.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import NumericalError
from .model import ProblemSpec, validate

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfgteam", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, kind):
        p.add_argument("--spec", type=Path, help="problem spec JSON (schema mfgt-spec/1)")
        p.add_argument("--preset", choices=sorted(ex.PRESETS), help="built-in spec when --spec is absent")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--paths", type=int, default=ex.DEFAULT_PATHS)
        p.add_argument("--grid", type=int, default=ex.riccati.DEFAULT_M, help="Riccati grid intervals M")
        p.add_argument("--n-list", type=_ints, help="comma-separated population sizes")
        p.add_argument("--variant", choices=("printed", "derived"), default="printed",
                       help="CC block variant for the mean-field feedback")
        p.add_argument("--check", action="store_true", help="exit 4 if a declared tolerance fails")
        p.set_defaults(kind=kind)

    for kind in ("solve", "simulate", "converge-mf", "converge-gap"):
        common(sub.add_parser(kind, help=f"run the {kind} stage"), kind)
    pc = sub.add_parser("case", help="run a preset (alpha, beta) scenario")
    common(pc, "case")
    pc.add_argument("--case", required=True, choices=sorted(ex.CASES))
    pv = sub.add_parser("validate", help="check a spec against the standing assumptions")
    pv.add_argument("--spec", type=Path, required=True)
    pr = sub.add_parser("run", help="execute a manifest JSON")
    pr.add_argument("manifest", type=Path)
    pr.add_argument("--check", action="store_true")
    return ap


def _report(out: Path | None, code: int, stage: str, message: str, extra: dict | None = None) -> int:
    doc = {"exit_code": code, "stage": stage, "error": message}
    doc.update(extra or {})
    text = json.dumps(doc, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            spec = ProblemSpec.load(args.spec)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            return _report(None, EXIT_VALIDATION, "load", str(exc))
        vs = validate(spec)
        for v in vs:
            print(v)
        if not vs:
            print("valid")
        return EXIT_VALIDATION if vs else EXIT_OK

    if args.command == "run":
        try:
            man = ex.ExperimentManifest.load(args.manifest)
        except (OSError, ValueError, TypeError) as exc:
            return _report(None, EXIT_VALIDATION, "manifest", str(exc))
        man.check = man.check or args.check
    else:
        man = ex.ExperimentManifest(
            kind=args.kind, spec=str(args.spec) if args.spec else None, preset=args.preset,
            case=getattr(args, "case", None), n_list=args.n_list, n_paths=args.paths, seed=args.seed,
            out=str(args.out), grid=args.grid, variant=args.variant, check=args.check)
    out = Path(man.out)
    try:
        summary = ex.run_manifest(man)
    except ex.ValidationFailure as exc:
        return _report(out, EXIT_VALIDATION, "validate", str(exc), {"problems": exc.problems})
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return _report(out, EXIT_NUMERICAL, "numerics", f"{type(exc).__name__}: {exc}")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _report(out, EXIT_VALIDATION, "input", str(exc))
    except ex.CheckFailure as exc:
        print((out / "summary.txt").read_text(), end="")
        return _report(out, EXIT_CHECK, "check", str(exc), {"failed": exc.failed})
    print(ex.format_summary(summary), end="")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

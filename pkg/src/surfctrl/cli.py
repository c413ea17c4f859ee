"""Command line driver.

surfctrl run --example sphere1 --levels 0:5 --tol 1e-6 --out results/ [--vtk]
surfctrl table --example all [--out results/]

Exit code 0 only when every computed study stays inside its convergence
windows.  A flat key=value config file can seed the run options; explicit
command line flags win over the file.
"""

import argparse
import sys

from .harness import StudyConfig, check_thresholds, format_table, run_study
from .manufactured import Benchmark

EXAMPLES = [b.value for b in Benchmark]


def parse_levels(text):
    text = str(text).strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError("empty level range %r" % text)
        return tuple(range(lo, hi + 1))
    if "," in text:
        return tuple(int(t) for t in text.split(","))
    return (int(text),)


def read_config_file(path):
    """Flat key=value lines; blank lines and # comments ignored."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key=value" % (path, lineno))
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


_TRUE = {"1", "true", "yes", "on"}


def merge_options(args, file_options):
    """Fill unset CLI options from the config file, then from defaults."""
    def pick(flag, file_key, default, convert=lambda v: v):
        val = getattr(args, flag)
        if val is not None:
            return val
        if file_key in file_options:
            return convert(file_options[file_key])
        return default
    opts = argparse.Namespace()
    opts.example = pick("example", "example", "sphere1")
    opts.levels = pick("levels", "levels", None)
    opts.tol = pick("tol", "tol", 1e-6, float)
    opts.out = pick("out", "out", None)
    opts.vtk = args.vtk or file_options.get("vtk", "").lower() in _TRUE
    opts.iterates = args.iterates or file_options.get("iterates", "").lower() in _TRUE
    return opts


def _run_one(example, levels, tol, out, vtk, iterates):
    config = StudyConfig(benchmark=example,
                         levels=None if levels is None else parse_levels(levels),
                         newton_tol=float(tol), output_dir=out,
                         emit_vtk=vtk, emit_iterates=iterates)
    rows = run_study(config)
    print(format_table(example, rows))
    ok, msgs = check_thresholds(example, rows)
    for msg in msgs:
        print("  threshold violated: %s" % msg)
    return ok


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="surfctrl",
        description="optimal control refinement studies on surfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one benchmark study")
    runp.add_argument("--example", choices=EXAMPLES, default=None)
    runp.add_argument("--levels", default=None,
                      help="inclusive range like 0:5, or a comma list")
    runp.add_argument("--tol", type=float, default=None,
                      help="absolute fixed-point tolerance of the solver")
    runp.add_argument("--out", default=None, help="directory for CSV/VTK")
    runp.add_argument("--vtk", action="store_true",
                      help="write u, y, p as VTK per level")
    runp.add_argument("--iterates", action="store_true",
                      help="write every Newton iterate as VTK")
    runp.add_argument("--config", default=None,
                      help="flat key=value file; flags override it")

    tablep = sub.add_parser("table", help="regenerate benchmark tables")
    tablep.add_argument("--example", default="all",
                        choices=EXAMPLES + ["all"])
    tablep.add_argument("--levels", default=None,
                        help="override the per-benchmark default range")
    tablep.add_argument("--tol", type=float, default=1e-6)
    tablep.add_argument("--out", default=None)

    args = parser.parse_args(argv)

    if args.command == "run":
        file_options = read_config_file(args.config) if args.config else {}
        opts = merge_options(args, file_options)
        ok = _run_one(opts.example, opts.levels, opts.tol, opts.out,
                      opts.vtk, opts.iterates)
        return 0 if ok else 1

    names = EXAMPLES if args.example == "all" else [args.example]
    all_ok = True
    for i, name in enumerate(names):
        if i:
            print()
        all_ok &= _run_one(name, args.levels, args.tol, args.out,
                           False, False)
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())

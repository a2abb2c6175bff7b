"""Command-line entry point: ``gridexpand <command> ...``.

Exit codes: 0 ok, 1 input error, 2 mathematical failure (non-optimal solve,
failed KKT verification, equivalence mismatch), 3 I/O error, 4 interrupted
(enumeration checkpoint left valid).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__, bilevel, equilibrium, io, repdays, sweep
from .model import apply_policy, validate_policy, validate_system
from .qp import build_centralized
from .solver import BACKEND, SolverSettings

log = logging.getLogger("gridexpand")

EXIT_OK, EXIT_INPUT, EXIT_MATH, EXIT_IO, EXIT_INTERRUPTED = 0, 1, 2, 3, 4

FORMATS = """\
formats:
  system config     TOML, schema = "gridexpand-system/1"
  sweep design      TOML, schema = "gridexpand-design/1"
  hourly series     CSV, header "hour,<node>:<kind>,..." (kind: demand, wind,
                    solar), 8760 rows (8784 truncated), LF, UTF-8
  checkpoint        text, "# gridexpand-enum-checkpoint 1"
  QP dump           text, "gridexpand-qp 1"
  results           JSON or CSV, floats with 12 significant digits
  manifest          manifest.json next to every result, "gridexpand-manifest/1"

exit codes: 0 ok, 1 input, 2 math, 3 io, 4 interrupted
"""


class InputError(Exception):
    pass


class MathError(Exception):
    pass


def git_blob_sha1(data: bytes) -> str:
    """Hash of ``data`` as git stores it (``blob <len>\\0`` prefix)."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command, inputs, settings, outputs, started, extra=None):
    inputs = [Path(p) for p in inputs]
    hashes = {str(p): git_blob_sha1(p.read_bytes()) for p in inputs}
    combined = git_blob_sha1("".join(f"{h} {Path(p).name}\n"
                                     for p, h in hashes.items()).encode())
    doc = {
        "schema": "gridexpand-manifest/1",
        "tool": "gridexpand", "version": __version__, "backend": BACKEND,
        "command": command, "inputs": hashes, "input_hash": combined,
        "settings": settings, "outputs": sorted(outputs),
        "started": started, "finished": _now(),
    }
    if extra:
        doc.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def _settings(args):
    kw = {}
    if getattr(args, "max_iterations", None):
        kw["max_iterations"] = args.max_iterations
    return SolverSettings(**kw)


def _settings_doc(settings):
    return {k: getattr(settings, k) for k in settings.__dataclass_fields__}


def _load(config):
    system, policy = io.load_system(config)
    return system, policy, apply_policy(system, policy)


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------------------------------------------------------------ commands
def cmd_solve_central(args):
    started = _now()
    system, policy, eff = _load(args.config)
    settings = _settings(args)
    include = not args.no_constants
    outcome = equilibrium.solve_centralized(system, eff, settings, include_constants=include)
    constant = build_centralized(system, eff)[0].constant
    factors = equilibrium.output_factors(system, eff, outcome.plan, outcome)
    kkt = equilibrium.kkt_residuals(system, eff, outcome.plan, outcome, tol=args.tol)
    out = _out_dir(args.out)
    summary = {
        "type": "CentralizedSolution", "status": outcome.status,
        "objective": outcome.objective if include else outcome.objective - constant,
        "includes_constants": include, "maintenance_constant": constant,
        "welfare": factors.welfare, "vre_share": factors.vre_share,
        "total_generation": factors.total_generation, "kkt_passed": kkt.passed,
        "iterations": outcome.iterations,
    }
    io.write_results(summary, out / "solution.json")
    io.write_results(outcome, out / "outcome.json", system=system)
    io.write_results(kkt, out / "kkt.json")
    write_manifest(out, "solve-central", [args.config], _settings_doc(settings),
                   ["solution.json", "outcome.json", "kkt.json"], started,
                   {"no_constants": args.no_constants})
    print(f"optimal: objective {io.fmt_float(summary['objective'])}, "
          f"welfare {io.fmt_float(factors.welfare)}, KKT {'pass' if kkt.passed else 'FAIL'}")
    if not kkt.passed:
        raise MathError("KKT verification failed: " + ", ".join(kkt.violations()))
    return EXIT_OK


def cmd_solve_bilevel(args):
    started = _now()
    system, policy, eff = _load(args.config)
    settings = _settings(args)
    out = _out_dir(args.out)
    if args.mode == "exact":
        sol = bilevel.solve_bilevel_exact(system, eff, settings)
    else:
        if not args.grid:
            raise InputError("--mode enum needs --grid")
        try:
            grid = bilevel.PlanGrid.parse(system, args.grid)
        except ValueError as exc:
            raise InputError(f"--grid: {exc}") from None
        workers = args.workers or bilevel.default_workers()
        sol = bilevel.solve_bilevel_enum(
            system, eff, grid, settings, workers=workers, block_size=args.block_size,
            checkpoint=args.checkpoint, max_candidates=args.max_candidates or None,
            stop_after_blocks=args.stop_after_blocks, keep_log=args.log_candidates)
    io.write_results(sol, out / "solution.json")
    io.write_results(sol.outcome, out / "outcome.json", system=system)
    inputs = [args.config]
    write_manifest(out, "solve-bilevel", inputs, _settings_doc(settings),
                   ["solution.json", "outcome.json"], started,
                   {"mode": args.mode, "grid": args.grid})
    print(f"{args.mode}: welfare {io.fmt_float(sol.welfare)}, plan "
          + ",".join(io.fmt_float(v) for v in sol.plan.levels)
          + (f" ({sol.generated} generated, {sol.pruned} pruned, {sol.solved} solved)"
             if args.mode == "enum" else ""))
    return EXIT_OK


def _parse_bases(items):
    bases = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        node, sep2, kind = key.partition(":")
        if not sep or not sep2:
            raise InputError(f"--basis expects NODE:KIND=VALUE, got {item!r}")
        try:
            bases[(node, kind)] = float(value)
        except ValueError:
            raise InputError(f"--basis {item!r}: not a number") from None
    return bases


def cmd_cluster(args):
    started = _now()
    series = io.load_hourly_csv(args.series)
    bases = _parse_bases(args.basis)
    norm = []
    for s in series:
        basis = bases.get(s.key)
        if s.kind != "demand" and basis is None:
            if s.values.max() > 1.0:
                raise InputError(f"{s.node}:{s.kind} needs --basis {s.node}:{s.kind}=<MW>")
            basis = 1.0
        try:
            norm.append(repdays.normalize_series(s, basis))
        except ValueError as exc:
            raise InputError(str(exc)) from None
    try:
        result = repdays.cluster_days(repdays.day_features(norm), args.k, args.linkage)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    result = repdays.select_representatives(result, norm)
    out = _out_dir(args.out)
    io.write_results(result, out / "clusters.json")
    io.write_results(result, out / "clusters.csv")
    write_manifest(out, "cluster", [args.series], {"k": args.k, "linkage": args.linkage},
                   ["clusters.json", "clusters.csv"], started)
    print(f"{result.k} clusters, weights "
          + " ".join(f"{f.numerator}/{f.denominator}" for f in result.fractions))
    return EXIT_OK


def cmd_sweep(args):
    started = _now()
    system, policy = io.load_system(args.config)
    try:
        design = sweep.load_design(args.design)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{args.design}: {exc}") from None
    settings = _settings(args)
    workers = args.workers or 1
    report = sweep.run_sweep(system, design, settings, workers=workers)
    out = _out_dir(args.out)
    io.write_results(report, out / "report.json")
    io.write_results(report, out / "report.csv")
    io.write_csv_rows(out / "report_long.csv",
                      ["point", "axis", "parameter_value", "factor", "value"],
                      report.long_rows())
    write_manifest(out, "sweep", [args.config, args.design], _settings_doc(settings),
                   ["report.json", "report.csv", "report_long.csv"], started)
    print(f"{len(report.records)} records + baseline"
          + ("" if report.complete else f", {len(report.failed)} failed"))
    return EXIT_OK if report.complete else EXIT_MATH


def cmd_verify_kkt(args):
    system, policy, eff = _load(args.config)
    rec = io.read_json(args.outcome)
    if rec.get("type") != "MarketOutcome":
        raise InputError(f"{args.outcome}: not a MarketOutcome file")
    outcome = io.outcome_from_record(system, rec)
    kkt = equilibrium.kkt_residuals(system, eff, outcome.plan, outcome, tol=args.tol)
    if args.out:
        io.write_results(kkt, args.out)
    if kkt.passed:
        print(f"KKT pass (worst scaled residual {kkt.worst:.3e}, tol {args.tol:g})")
        return EXIT_OK
    print(f"KKT FAIL (worst scaled residual {kkt.worst:.3e}, tol {args.tol:g})")
    for v in kkt.violations():
        print(f"  violated: {v}")
    return EXIT_MATH


# ------------------------------------------------------------------ parser
def build_parser():
    p = argparse.ArgumentParser(
        prog="gridexpand", description="Transmission and generation expansion planning "
        "under renewable-energy policies.", epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"gridexpand {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--max-iterations", type=int, default=None)

    sp = sub.add_parser("solve-central", help="solve the planner program",
                        epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("config")
    sp.add_argument("out", help="output directory")
    sp.add_argument("--no-constants", action="store_true",
                    help="report the objective without maintenance of installed capacity")
    sp.add_argument("--tol", type=float, default=1e-6)
    common(sp)
    sp.set_defaults(func=cmd_solve_central)

    sp = sub.add_parser("solve-bilevel", help="optimal transmission plan",
                        epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("config")
    sp.add_argument("out", help="output directory")
    sp.add_argument("--mode", choices=("exact", "enum"), default="exact")
    sp.add_argument("--grid", help="levels per line, e.g. 0,3000,6000,9000 "
                                   "(or one list per line separated by ';')")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--checkpoint", help="enumeration checkpoint file (resumed if present)")
    sp.add_argument("--block-size", type=int, default=bilevel.DEFAULT_BLOCK_SIZE)
    sp.add_argument("--max-candidates", type=int, default=bilevel.DEFAULT_MAX_CANDIDATES,
                    help="refuse larger grids; 0 disables the cap")
    sp.add_argument("--stop-after-blocks", type=int, default=None,
                    help="stop after this many new blocks (exit 4)")
    sp.add_argument("--log-candidates", action="store_true",
                    help="include every candidate in solution.json")
    common(sp)
    sp.set_defaults(func=cmd_solve_bilevel)

    sp = sub.add_parser("cluster", help="representative days from hourly series",
                        epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("series", help="hourly CSV")
    sp.add_argument("out", help="output directory")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--linkage", choices=repdays.LINKAGES, default="ward")
    sp.add_argument("--basis", action="append", metavar="NODE:KIND=MW",
                    help="installed capacity used to normalize a wind/solar series")
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("sweep", help="run a sensitivity design",
                        epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("config")
    sp.add_argument("design")
    sp.add_argument("out", help="output directory")
    sp.add_argument("--workers", type=int, default=None)
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify-kkt", help="check an outcome file against the KKT system",
                        epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("config")
    sp.add_argument("outcome", help="outcome.json written by a solve command")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--out", help="write the KKT report here")
    sp.set_defaults(func=cmd_verify_kkt)
    return p


def _resolve(path):
    """Config names without a directory may refer to packaged fixtures."""
    p = Path(path)
    if p.exists() or p.parent != Path("."):
        return str(p)
    try:
        return str(io.packaged(path))
    except FileNotFoundError:
        return str(p)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    for attr in ("config", "design"):
        if getattr(args, attr, None):
            setattr(args, attr, _resolve(getattr(args, attr)))
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except bilevel.EnumerationInterrupted as exc:
        print(f"interrupted: {exc}", file=sys.stderr)
        return EXIT_INTERRUPTED
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED
    except (equilibrium.SolveError, bilevel.EquivalenceError, MathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

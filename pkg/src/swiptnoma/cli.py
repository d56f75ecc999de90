"""Command line: ``run`` experiment specs, ``validate`` the surrogate bounds, ``dump-instance``.

Exit codes: 0 success, 1 configuration error, 2 solver or validation failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import experiment
from .netmodel import ConfigError, default_scenario_path, generate_instance, instance_to_dict, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2

log = logging.getLogger("swiptnoma")


def _cmd_run(args) -> int:
    spec = experiment.load_spec(args.spec)
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed_base"] = args.seed
    if args.output is not None:
        changes["output"] = args.output
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.save_traces:
        changes["save_traces"] = True
    spec = dataclasses.replace(spec, **changes)
    if args.solver_tol is not None:
        spec = experiment.with_settings(spec, solver_tol=args.solver_tol)
    spec.validate()

    def progress(r):
        log.info("%s=%s %s trial %d: %s, %s %s after %d iterations", r.axis, r.value, r.algorithm, r.trial,
                 r.status, f"{r.objective:.4f}", r.unit, r.iterations)

    paths = experiment.run_experiment(spec, progress)
    detail = experiment.read_detail(paths["detail"].read_text())
    failed = [row for row in detail if row["status"] == "solver-failure"]
    for name, p in paths.items():
        print(f"{name}: {p}")
    if failed:
        print(f"{len(failed)} of {len(detail)} trials ended in a solver failure", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_validate(args) -> int:
    report = experiment.validate_bounds(args.seed, args.samples, args.tol, sign_flip=args.sign_flip)
    sys.stdout.write(report.to_csv())
    print(f"# {'PASS' if report.passed else 'FAIL'} in {report.wall_time:.2f} s")
    return EXIT_OK if report.passed else EXIT_FAILURE


def _cmd_dump(args) -> int:
    scen = load_scenario(args.scenario or default_scenario_path())
    if args.antennas is not None:
        scen = scen.with_overrides(antennas=args.antennas)
    scen.validate()
    text = json.dumps(instance_to_dict(generate_instance(scen, args.seed)), indent=1)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
        print(args.output)
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log every finished trial")
    p = argparse.ArgumentParser(prog="swiptnoma", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run an experiment spec (JSON) and write CSVs")
    r.add_argument("spec")
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int, help="seed base (trial t uses seed + t)")
    r.add_argument("--output", help="output directory")
    r.add_argument("--workers", type=int)
    r.add_argument("--solver-tol", type=float)
    r.add_argument("--save-traces", action="store_true", help="also write one iteration trace per trial")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="sample-check every surrogate bound")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--tol", type=float, default=1e-12)
    v.add_argument("--sign-flip", action="store_true", help="corrupt the bounds (negative control, must fail)")
    v.set_defaults(func=_cmd_validate)

    d = sub.add_parser("dump-instance", help="write one channel realization as JSON")
    d.add_argument("--scenario", help="scenario JSON (default: packaged defaults)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--antennas", type=int)
    d.add_argument("-o", "--output")
    d.set_defaults(func=_cmd_dump)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2; here that code means solver failure
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    verbose = getattr(args, "verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

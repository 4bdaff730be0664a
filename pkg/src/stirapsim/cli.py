"""Command line entry point: ``stirapsim {simulate,sweep,optimize,validate} CONFIG``.

Exit codes: 0 success, 1 ran but missed the declared fidelity floor,
2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import driver
from .config import ConfigError
from .evolution import IntegrationError

log = logging.getLogger("stirapsim")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stirapsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML file or builtin scenario name")
        sp.add_argument("--out-dir", type=Path, default=Path("results"))
        sp.add_argument("--dt-ns", type=float, default=None, help="override the integration step")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for sweeps/multi-start")
        sp.add_argument("--seed", type=int, default=None)

    for name, helptext in [
        ("simulate", "run one scenario, write trajectory CSV and summary JSON"),
        ("sweep", "decoherence sweep over (kappa, gamma)"),
        ("optimize", "multi-start pulse optimisation and verification run"),
        ("validate", "check a config without evolving"),
    ]:
        common(sub.add_parser(name, help=helptext))
    return p


def _print_problems(problems):
    for path, msg in problems:
        print(f"error: {path}: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            diag = driver.validate(args.config) if args.seed is None else driver.validate_data(
                driver.read_raw(args.config)[0], args.seed
            )
            for line in diag.lines():
                print(line)
            return driver.EXIT_OK if diag.ok else driver.EXIT_VALIDATION

        if args.command == "simulate":
            res = driver.run_scenario(args.config, args.out_dir, args.dt_ns)
            print(json.dumps(res.summary, indent=2))
            return res.exit_code

        if args.command == "sweep":
            res = driver.run_sweep(args.config, args.out_dir, args.dt_ns, args.threads)
            print(f"wrote {res.path}")
            return driver.EXIT_OK

        if args.command == "optimize":
            run = driver.run_optimize(args.config, args.out_dir, args.seed, args.threads, args.dt_ns)
            if run.exhausted:
                print("warning: evaluation budget exhausted before convergence; best-so-far emitted", file=sys.stderr)
            print(json.dumps(run.verification.summary, indent=2))
            for key, path in run.paths.items():
                print(f"{key}: {path}")
            return run.verification.exit_code
    except ConfigError as exc:
        _print_problems(exc.problems)
        return driver.EXIT_VALIDATION
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return driver.EXIT_NUMERICAL
    return driver.EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

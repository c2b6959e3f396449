"""Command line interface.

Verbs:
  polyest run <config.json>     run a scenario, write rows (CSV or JSON)
  polyest design <config.json>  emit contrast matrices + certificates only
  polyest verify <suite>        run a verification suite

Exit codes: 0 success, 1 configuration error, 2 verification failure,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .conic import SolverError
from .experiments import (
    VERIFY_SUITES,
    ConfigError,
    apply_overrides,
    design_report,
    load_config_file,
    render_rows,
    run_scenario,
    run_verify,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; 2 is reserved for
    # verification failures here, so usage errors map to 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"error: {message}") from None


def build_parser() -> _Parser:
    parser = _Parser(prog="polyest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed override")
    common.add_argument("--out", default=None, help="output file (default: stdout)")

    run = sub.add_parser("run", parents=[common], help="run a scenario config")
    run.add_argument("config", help="scenario config (JSON)")
    run.add_argument("--trials", type=int, default=None, help="trial count override")
    run.add_argument("--format", choices=("csv", "json"), default=None)
    run.add_argument("--jobs", type=int, default=None, help="trial worker processes")

    design = sub.add_parser(
        "design", parents=[common], help="emit contrast matrices and certificates"
    )
    design.add_argument("config", help="scenario config (JSON)")

    verify = sub.add_parser("verify", parents=[common], help="run a verification suite")
    verify.add_argument("suite", help=f"one of {', '.join(VERIFY_SUITES)}, or 'all'")
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _cmd_run(args) -> int:
    config = load_config_file(args.config)
    config = apply_overrides(
        config,
        seed=args.seed,
        trials=args.trials,
        out=args.out,
        fmt=args.format,
        jobs=args.jobs,
    )
    rows, summary = run_scenario(config)
    text = render_rows(rows, config.format)
    _write(text, config.out)
    blob = json.dumps({"scenario": config.scenario, "rows": len(rows), **summary})
    # The summary goes wherever the rows did not, so piping stays clean.
    (sys.stderr if config.out is None else sys.stdout).write(blob + "\n")
    return 0


def _cmd_design(args) -> int:
    config = load_config_file(args.config)
    if args.seed is not None:
        config = apply_overrides(config, seed=args.seed)
    report = design_report(config)
    _write(json.dumps(report, indent=1) + "\n", args.out)
    return 0


def _cmd_verify(args) -> int:
    seed = 0 if args.seed is None else args.seed
    checks, ok = run_verify(args.suite, seed=seed)
    lines = [
        f"[{'PASS' if c['passed'] else 'FAIL'}] {c['suite']}/{c['check']}: {c['detail']}"
        for c in checks
    ]
    _write("\n".join(lines) + "\n", args.out)
    return 0 if ok else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "design": _cmd_design, "verify": _cmd_verify}
    try:
        return handlers[args.verb](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SolverError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``mtlgrad {toy,run,sweep,verify}``.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
config error. Only explicit flags are read, never the environment.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import verify as verify_mod
from .config import ConfigError, ExperimentConfig, default_toy_config, load_config
from .errors import InvalidInputError
from .harness import run_experiment, summarize, summary_document, sweep_c, write_summary, write_trajectories

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

TOY_METHODS = {"gd": "mean", "mgda": "mgda", "pcgrad": "pcgrad", "cagrad": "cagrad"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _c_list(text):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(not v >= 0 for v in values):
        raise argparse.ArgumentTypeError("c values must be a nonempty list of numbers >= 0")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtlgrad", description="Multi-task gradient combiners and experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, method_choices=None):
        if method_choices:
            p.add_argument("--method", choices=method_choices)
        p.add_argument("--c", type=float, help="conflict-aversion radius for cagrad")
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=_positive_int)
        p.add_argument("--lr", type=_positive_float)
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=_positive_int, default=1, help="parallel runs (results do not change)")

    toy = sub.add_parser("toy", help="the two-task toy study from its 5 initial points")
    common(toy, list(TOY_METHODS))
    toy.set_defaults(method="gd")

    run = sub.add_parser("run", help="run a JSON experiment config")
    run.add_argument("config")
    common(run, ["mean", "gd", "mgda", "pcgrad", "cagrad", "cagrad_fast"])

    sweep = sub.add_parser("sweep", help="run a cagrad config for several c values")
    sweep.add_argument("config")
    sweep.add_argument("--c-list", type=_c_list, default=[0.0, 0.2, 0.5, 0.8, 10.0])
    common(sweep)

    ver = sub.add_parser("verify", help="randomized property checks against brute-force oracles")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--trials", type=int, default=100)
    # test hook: scales every tolerance; a non-positive value must make checks fail
    ver.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return parser


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    """Apply command-line flags on top of a config and re-validate."""
    data = cfg.model_dump(exclude_none=True)
    method = getattr(args, "method", None)
    if method is not None:
        data["method"] = {"method": "mean" if method == "gd" else method, "solver": data["method"]["solver"]}
    if args.c is not None:
        data["method"]["c"] = args.c
    if args.seed is not None:
        data["seed"] = args.seed
    if args.steps is not None:
        data["steps"] = args.steps
    if args.lr is not None:
        data["stepper"]["lr"] = args.lr
    if args.out is not None:
        data["output_path"] = args.out
    try:
        return ExperimentConfig.model_validate(data)
    except Exception as exc:  # pydantic ValidationError
        raise ConfigError(str(exc)) from None


def _report(rows, out, doc_path):
    for r in rows:
        state = "converged" if r.converged else ("diverged" if r.diverged else ("stalled" if r.stalled else "open"))
        prefix = f"c={r.c:g} " if r.c is not None else ""
        print(f"{prefix}init {r.init_index} {r.init}: pareto {r.final_pareto:.3e} {state}", file=out)
    print(f"stalled {sum(r.stalled for r in rows)}/{len(rows)}, converged {sum(r.converged for r in rows)}/{len(rows)}",
          file=out)
    print(f"summary: {doc_path}", file=out)


def _run_and_write(cfg, jobs, out):
    out_dir = Path(cfg.output_path or "out")
    trajs = run_experiment(cfg, jobs)
    write_trajectories(trajs, out_dir)
    rows = [summarize(t, cfg) for t in trajs]
    doc_path = out_dir / "summary.json"
    write_summary(summary_document(cfg, rows), doc_path)
    _report(rows, out, doc_path)
    return EXIT_FAIL if any(r.diverged for r in rows) else EXIT_OK


def cmd_toy(args, out) -> int:
    if args.method == "cagrad" and args.c is None:
        raise _UsageError("toy --method cagrad needs --c")
    if args.method != "cagrad" and args.c is not None:
        raise _UsageError("--c only applies to --method cagrad")
    if args.out is None:
        args.out = f"toy_{args.method}" + (f"_c{args.c:g}" if args.c is not None else "")
    return _run_and_write(_override(default_toy_config(), args), args.jobs, out)


def cmd_run(args, out) -> int:
    return _run_and_write(_override(load_config(args.config), args), args.jobs, out)


def cmd_sweep(args, out) -> int:
    cfg = _override(load_config(args.config), args)
    if cfg.method.method not in ("cagrad", "cagrad_fast"):
        raise _UsageError("sweep needs a config whose method is cagrad or cagrad_fast")
    out_dir = Path(cfg.output_path or "out")
    rows, by_c = sweep_c(cfg, args.c_list, args.jobs)
    for c, trajs in by_c.items():
        write_trajectories(trajs, out_dir / f"c_{c:g}")
    doc_path = out_dir / "summary.json"
    write_summary(summary_document(cfg, rows, c_values=args.c_list), doc_path)
    _report(rows, out, doc_path)
    return EXIT_FAIL if any(r.diverged for r in rows) else EXIT_OK


def cmd_verify(args, out) -> int:
    if args.trials < 1:
        raise _UsageError("--trials must be >= 1")
    checks = verify_mod.run_all(args.seed, args.trials, args.tolerance_scale)
    for chk in checks:
        print(chk.line(), file=out)
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} properties passed", file=out)
    return EXIT_OK if failed == 0 else EXIT_FAIL


class _UsageError(Exception):
    pass


COMMANDS = {"toy": cmd_toy, "run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return COMMANDS[args.command](args, out)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mtlgrad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"mtlgrad: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, ArithmeticError, OSError) as exc:
        print(f"mtlgrad: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

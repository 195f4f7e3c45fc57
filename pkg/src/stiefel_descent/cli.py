"""Command line front end.

Exit codes: 0 converged/passed, 2 not converged or failed check, 1 usage or
validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .costs import BrockettProblem, ProblemError, brockett_enumerate_critical, column_pattern
from .descent import DescentConfig
from .experiments import (
    ConfigError,
    gradcheck,
    parse_config,
    reproduce_reference_tables,
    run_experiment,
)
from .manifold import StiefelError

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


def _step(text: str) -> dict:
    if text == "armijo":
        return {"step": "armijo"}
    if text.startswith("fixed:"):
        try:
            lam = float(text.split(":", 1)[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad step length in {text!r}") from None
        return {"step": "fixed", "step_size": lam}
    raise argparse.ArgumentTypeError("expected 'armijo' or 'fixed:<lambda>'")


def _descent_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iters", type=int)
    p.add_argument("--grad-tol", type=float)
    p.add_argument("--step", type=_step, help="armijo | fixed:<lambda>")
    p.add_argument("--solver", choices=("closed", "generic"))


def _overrides(args) -> dict:
    kw = {"max_iters": args.max_iters, "grad_tol": args.grad_tol, "solver": args.solver}
    if args.step:
        kw.update(args.step)
    return kw


def _load(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    try:
        cfg.descent = cfg.descent.with_overrides(**_overrides(args))
    except ValueError as exc:
        raise ConfigError(f"descent: {exc}") from None
    if args.trace:
        cfg.trace_path = args.trace
    if args.report:
        cfg.report_path = args.report
    report, _ = run_experiment(cfg, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.converged else EXIT_FAIL


def cmd_gradcheck(args) -> int:
    cfg = _load(args.config)
    res = gradcheck(cfg.model(), points=args.points, seed=args.seed or 0)
    status = "pass" if res.passed else "FAIL"
    print(f"{res.problem}: max relative error {res.max_rel_error:.3e} over {res.points} points "
          f"(threshold {res.threshold:g}) {status}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_reference_tables(args) -> int:
    config = DescentConfig(max_iters=500).with_overrides(**_overrides(args))
    rows, enum = reproduce_reference_tables(config)
    header = f"{'run':<16} {'ref':>6} {'cost':>20} {'iters':>5}  {'verdict':<8} {'match':<5} limit"
    print(header)
    print("-" * len(header))
    for r in rows:
        expected = f"{r.expected_cost:g}"
        limit = r.pattern if r.expected_pattern is None else f"{r.pattern} (reference {r.expected_pattern})"
        print(f"{r.label:<16} {expected:>6} {r.cost:>20.15f} {r.iterations:>5}  "
              f"{'critical' if r.verdict else 'no':<8} {'yes' if r.match else 'NO':<5} {limit}; {r.detail}")
    print()
    levels = ", ".join(f"{k}:{v}" for k, v in enum["levels"].items())
    print(f"enumerated critical points: {enum['points']}; cost levels (level:count) {levels}; "
          f"{'matches' if enum['match'] else 'DOES NOT match'} reference list")
    ok = all(r.match for r in rows) and enum["match"]
    print(f"{sum(r.match for r in rows)}/{len(rows)} rows match")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_enumerate(args) -> int:
    cfg = _load(args.config)
    model = cfg.model()
    if not isinstance(model, BrockettProblem):
        raise ConfigError("problem.kind: enumerate-critical needs a brockett problem")
    points = brockett_enumerate_critical(model)
    print("index,cost,pattern")
    for k, U in enumerate(points):
        print(f"{k},{model.value(U):.17g},\"{column_pattern(U)}\"")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # exit status 2 is reserved for "not converged"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="stiefel-descent", description="Steepest descent on orthogonal Stiefel manifolds."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run descent from a JSON config")
    p.add_argument("config")
    _descent_flags(p)
    p.add_argument("--trace", help="write the per-iteration CSV here")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--seed", type=int, help="seed for a random initial point")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("config")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("paper-tables", help="rerun the St(4,2) Brockett reference runs")
    _descent_flags(p)
    p.set_defaults(func=cmd_reference_tables)

    p = sub.add_parser("enumerate-critical", help="list case-I Brockett critical points")
    p.add_argument("config")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.error("--seed must be nonnegative")
    try:
        return args.func(args)
    except (ConfigError, ProblemError, StiefelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: ``robustblock {design,evaluate,compare,estimate,reproduce}``.

Options may also come from a ``key = value`` config file (``--config``);
keys are option names with dashes or underscores.  Command-line flags win.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 reproduction
mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DataFormatError, adjacency_diagnostic, efficiency, estimate, read_experiment_csv
from .covariance import CorrelationModel, KKind, NeighbourhoodSpec, assemble_r0
from .design import BlockLayout, Design, EnumerationTooLarge, count_designs, render_grid
from .estimators import DEFAULT_EXHAUSTIVE_LIMIT
from .loss import Criterion, Estimator, LossSpec, max_loss
from .optimize import AnnealConfig, anneal, exhaustive_search
from .reproduce import EXAMPLES, fuel_data_path, run_example

log = logging.getLogger("robustblock")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _add_layout(p):
    g = p.add_argument_group("layout")
    g.add_argument("--t", type=int, help="number of treatments")
    g.add_argument("--b", type=int, help="number of blocks")
    g.add_argument("--m", type=int, help="plot rows per block (default t)")
    g.add_argument("--n", type=int, help="plot columns per block (default 1)")


def _add_model(p):
    g = p.add_argument_group("correlation and neighbourhood")
    g.add_argument("--process", choices=["nn", "ma1", "dg", "de"], default="nn")
    g.add_argument("--rho", type=float, default=0.0, help="nn / ma1 adjacent correlation")
    g.add_argument("--lambda", dest="lam", type=float, default=None, help="dg parameter")
    g.add_argument("--lambda-row", type=float, default=None)
    g.add_argument("--lambda-col", type=float, default=None)
    g.add_argument("--alpha", type=float, default=0.0, help="neighbourhood size")
    g.add_argument("--sigma2", type=float, default=1.0)
    g.add_argument("--k", dest="k_kind", choices=["rj0", "identity"], default="rj0")


def _add_loss(p):
    g = p.add_argument_group("loss")
    g.add_argument("--estimator", choices=["mglse", "lse"], default="mglse")
    g.add_argument("--criterion", choices=["d", "a"], default="d")


def _add_anneal(p):
    g = p.add_argument_group("search")
    g.add_argument("--method", choices=["auto", "exhaustive", "anneal"], default="auto")
    g.add_argument("--exhaustive-limit", type=int, default=DEFAULT_EXHAUSTIVE_LIMIT,
                   help="largest design count enumerated when --method auto")
    g.add_argument("--initial-temperature", default="auto")
    g.add_argument("--cooling-factor", type=float, default=0.95)
    g.add_argument("--iterations-per-temperature", type=int, default=None)
    g.add_argument("--max-temperature-stages", type=int, default=200)
    g.add_argument("--stall-stages-to-stop", type=int, default=20)
    g.add_argument("--restarts", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-jobs", type=int, default=1)
    g.add_argument("--trace", type=Path, help="write the annealing trace as CSV")


def _add_output(p, formats=("text", "json")):
    p.add_argument("--format", choices=list(formats), default="text")
    p.add_argument("--output", "-o", type=Path, help="write the design JSON here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustblock", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("design", help="search for a minimax robust design")
    _add_layout(p)
    _add_model(p)
    _add_loss(p)
    _add_anneal(p)
    _add_output(p)

    p = sub.add_parser("evaluate", help="maximum loss of a given design")
    p.add_argument("--design", type=Path, required=True, help="design JSON file")
    _add_model(p)
    _add_loss(p)
    p.add_argument("--all", action="store_true", help="every estimator / criterion pair")
    _add_output(p)

    p = sub.add_parser("compare", help="efficiency of a design against a robust design")
    p.add_argument("--design", type=Path, required=True, action="append",
                   help="candidate design JSON (repeatable)")
    p.add_argument("--robust", type=Path, required=True, help="reference design JSON")
    _add_model(p)
    _add_loss(p)
    _add_output(p)

    p = sub.add_parser("estimate", help="fit treatment means to CSV data")
    p.add_argument("--data", required=True,
                   help="CSV with block,row,col,treatment,response ('fuel' for the bundled data)")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    _add_model(p)
    p.add_argument("--estimator", choices=["mglse", "lse"], default="lse")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("reproduce", help="recompute published examples")
    p.add_argument("example", choices=list(EXAMPLES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--format", choices=["text", "json"], default="text")
    return parser


CONFIG_ALIASES = {"lambda": "lam", "k": "k_kind", "family": "process"}


def _coerce(parser: argparse.ArgumentParser, command: str, cfg: dict[str, str]) -> dict:
    """Convert config strings using the option types of the chosen subcommand."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[command]
    actions = {a.dest: a for a in sp._actions}
    out = {}
    for key, value in cfg.items():
        dest = CONFIG_ALIASES.get(key, key.replace("-", "_"))
        action = actions.get(dest)
        if action is None:
            raise UsageError(f"config key {key!r} is not an option of '{command}'")
        if action.type is not None:
            try:
                value = action.type(value)
            except (TypeError, ValueError):
                raise UsageError(f"config key {key!r}: invalid value {value!r}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: choose from {sorted(action.choices)}")
        out[dest] = value
    return out


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        cfg = _coerce(parser, args.command, read_config(args.config))
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub.choices[args.command].set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _layout(args) -> BlockLayout:
    if args.t is None or args.b is None:
        raise UsageError("--t and --b are required")
    try:
        return BlockLayout(args.t, args.b, args.m, args.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _model(args) -> CorrelationModel:
    try:
        if args.process in ("nn", "ma1"):
            return CorrelationModel(args.process, rho=args.rho)
        if args.process == "dg":
            lam = args.lam if args.lam is not None else args.lambda_row
            if lam is None:
                raise UsageError("--lambda is required for dg")
            return CorrelationModel.dg(lam)
        row = args.lambda_row if args.lambda_row is not None else args.lam
        if row is None:
            raise UsageError("--lambda-row (or --lambda) is required for de")
        return CorrelationModel.de(row, args.lambda_col)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _spec(args) -> NeighbourhoodSpec:
    try:
        return NeighbourhoodSpec(_model(args), args.alpha, KKind(args.k_kind), args.sigma2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _anneal_config(args) -> AnnealConfig:
    t0 = args.initial_temperature
    if t0 != "auto":
        try:
            t0 = float(t0)
        except ValueError:
            raise UsageError("--initial-temperature must be a number or 'auto'") from None
    try:
        return AnnealConfig(t0, args.cooling_factor, args.iterations_per_temperature,
                            args.max_temperature_stages, args.stall_stages_to_stop,
                            args.restarts, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _loss_dict(value) -> dict:
    return {"raw": value.raw, "scaled": value.scaled, "log_raw": value.log_raw}


def _load_design(path: Path) -> Design:
    try:
        return Design.from_json(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read design {path}: {exc}") from None


def cmd_design(args) -> int:
    layout = _layout(args)
    spec = _spec(args)
    loss = LossSpec(args.estimator, args.criterion)
    cfg = _anneal_config(args)
    method = args.method
    total = count_designs(layout)
    if method == "auto":
        method = "exhaustive" if total <= args.exhaustive_limit else "anneal"
    if method == "exhaustive":
        try:
            result = exhaustive_search(layout, spec, loss, n_jobs=args.n_jobs)
        except EnumerationTooLarge as exc:
            log.warning("%s; falling back to annealing", exc)
            method = "anneal"
    if method == "anneal":
        result = anneal(layout, spec, loss, cfg, n_jobs=args.n_jobs)
    design = result.best_design
    payload = {
        "design": design.to_dict(),
        "loss": _loss_dict(result.best_loss),
        "estimator": loss.estimator.value,
        "criterion": loss.criterion.value,
        "neighbourhood": {"k": spec.k_kind.value, "alpha": spec.alpha, "sigma2": spec.sigma2,
                          "correlation": _model(args).to_dict()},
        "method": result.method,
        "evaluations": result.evaluations,
        "seed": cfg.seed,
    }
    if args.output:
        args.output.write_text(design.to_json(indent=2) + "\n")
    if args.trace and result.trace:
        args.trace.write_text(result.trace_csv())
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(render_grid(design))
        print()
        label = "scaled loss (raw^(1/t))" if loss.criterion is Criterion.D else "loss"
        print(f"{label}: {result.best_loss.scaled:.10g}")
        print(f"raw loss: {result.best_loss.raw:.10g}")
        print(f"method: {result.method}  evaluations: {result.evaluations}  seed: {cfg.seed}")
        print(adjacency_diagnostic(design).summary().split("\n")[0])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    design = _load_design(args.design)
    spec = _spec(args)
    pairs = ([LossSpec(e, c) for e in Estimator for c in Criterion] if args.all
             else [LossSpec(args.estimator, args.criterion)])
    rows = []
    for loss in pairs:
        value = max_loss(design, spec, loss)
        rows.append({"estimator": loss.estimator.value, "criterion": loss.criterion.value,
                     **_loss_dict(value)})
    if args.format == "json":
        print(json.dumps({"design": design.to_dict(), "losses": rows}, indent=2))
    else:
        print(render_grid(design))
        print()
        for r in rows:
            print(f"{r['estimator']:>5} {r['criterion'].upper()}: raw={r['raw']:.10g} "
                  f"scaled={r['scaled']:.10g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    robust = _load_design(args.robust)
    spec = _spec(args)
    loss = LossSpec(args.estimator, args.criterion)
    rows = []
    for path in args.design:
        cand = _load_design(path)
        if cand.layout != robust.layout:
            raise UsageError(f"{path} has a different layout from {args.robust}")
        rows.append({"design": str(path), "efficiency": efficiency(cand, robust, spec, loss),
                     "loss": _loss_dict(max_loss(cand, spec, loss))})
    ref = _loss_dict(max_loss(robust, spec, loss))
    if args.format == "json":
        print(json.dumps({"robust": str(args.robust), "robust_loss": ref,
                          "candidates": rows}, indent=2))
    else:
        print(f"robust {args.robust}: scaled loss {ref['scaled']:.10g}")
        for r in rows:
            print(f"{r['design']}: efficiency {r['efficiency']:.6f} "
                  f"(scaled loss {r['loss']['scaled']:.10g})")
    return EXIT_OK


def cmd_estimate(args) -> int:
    path = fuel_data_path() if args.data == "fuel" else Path(args.data)
    try:
        data = read_experiment_csv(path, args.m, args.n)
    except OSError as exc:
        raise UsageError(f"cannot read {args.data}: {exc}") from None
    r0 = None
    if args.estimator == "mglse":
        r0 = assemble_r0(_spec(args), data.layout)
    res = estimate(data, args.estimator, r0)
    if args.format == "json":
        print(json.dumps(res.to_dict(), indent=2))
    else:
        print(f"estimator: {res.estimator.value}  (t={data.layout.t}, b={data.layout.b}, df={res.df})")
        for i, mu in enumerate(res.mu_hat, start=1):
            print(f"  mu[{i}] = {mu:.6f}")
        for j, beta in enumerate(res.beta_hat, start=1):
            print(f"  beta[{j}] = {beta:.6f}")
        print(f"  sigma_hat = {res.sigma_hat:.6f}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    names = list(EXAMPLES) if args.example == "all" else [args.example]
    cfg = AnnealConfig(restarts=args.restarts, seed=args.seed)
    results = {}
    ok = True
    for name in names:
        start = time.perf_counter()
        checks = run_example(name, cfg=cfg, n_jobs=args.n_jobs)
        elapsed = time.perf_counter() - start
        results[name] = checks
        ok &= all(c.passed for c in checks)
        if args.format == "text":
            print(f"== {name} ({elapsed:.1f} s)")
            for c in checks:
                print("  " + c.line())
    if args.format == "json":
        print(json.dumps({name: [{"name": c.name, "reference": c.reference, "computed": c.computed,
                                  "diff": c.diff, "tol": c.tol, "kind": c.kind,
                                  "passed": c.passed} for c in checks]
                          for name, checks in results.items()}, indent=2))
    return EXIT_OK if ok else EXIT_MISMATCH


COMMANDS = {
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "estimate": cmd_estimate,
    "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"robustblock: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DataFormatError) as exc:
        print(f"robustblock: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except np.linalg.LinAlgError as exc:
        print(f"robustblock: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

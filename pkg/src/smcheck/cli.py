"""Command-line front end: smcheck check | calibrate | list-models."""

from __future__ import annotations

import argparse
import shlex
import sys
import time
from dataclasses import replace as dc_replace

from . import calibration, models, query, report, steadystate, transient
from .parallel import default_workers
from .rng import SeedPlan
from .simulator import ExternalSimulator, SimulatorError
from .stats import CiSpec, StatsError


class ConfigError(Exception):
    """One or more invalid configuration values (all reported at once)."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smcheck",
        description="Statistical model checking and calibration for "
                    "black-box stochastic simulators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--model", required=True,
                       help="model locator: builtin:<name>?p=v&..., "
                            "exec:<command>, or connect:<host>:<port>")
        p.add_argument("--alpha", type=float, default=0.05,
                       help="significance level (default 0.05)")
        p.add_argument("--block-size", type=int, default=20,
                       help="replications added per block (default 20)")
        p.add_argument("--max-replications", type=int, default=100000,
                       help="per-target replication cap (default 100000)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker count (default: logical CPUs; "
                            "SMCHECK_WORKERS overrides)")
        p.add_argument("--seed", type=int, default=0,
                       help="master seed for replication-seed derivation")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="report format (default csv)")
        p.add_argument("--output", default="-",
                       help="report path, or - for stdout (default)")
        p.add_argument("--timeout", type=float, default=30.0,
                       help="per-call timeout for external simulators, seconds")

    p_check = sub.add_parser("check", help="run a property query against a model")
    add_common(p_check)
    p_check.add_argument("--query", required=True, help="path to the query file")
    p_check.add_argument("--delta", required=True,
                         help="max CI width: one value, a comma list (one per "
                              "target), or name=value pairs matched against "
                              "target ids")
    p_check.add_argument("--warmup", type=int, default=None,
                         help="warmup length for manualBM/manualRD queries")
    p_check.add_argument("--batch-count", type=int, default=20,
                         help="batch means per stability check (default 20)")
    p_check.add_argument("--batch-size", type=int, default=16,
                         help="initial batch size / warmup candidate unit (default 16)")
    p_check.add_argument("--horizon", type=int, default=None,
                         help="post-warmup steps averaged per RD replication "
                              "(default max(100, 10*warmup))")
    p_check.add_argument("--rd-block-size", type=int, default=10,
                         help="RD replications added per block (default 10)")
    p_check.add_argument("--max-total-steps", type=int, default=1 << 20,
                         help="step cap for long-run analyses (default 2^20)")
    p_check.add_argument("--sample-every", type=int, default=1,
                         help="steady-state sampling cadence in steps (default 1)")
    p_check.add_argument("--sample-offset", type=int, default=0,
                         help="offset of the first cadence sample (default 0)")

    p_cal = sub.add_parser("calibrate", help="grid calibration with a confidence set")
    add_common(p_cal)
    p_cal.add_argument("--grid", required=True, help="path to the grid JSON file")
    p_cal.add_argument("--delta", required=True, type=float,
                       help="max CI width for each combination's loss")
    p_cal.add_argument("--test-alpha", type=float, default=None,
                       help="level of the Welch filter (default: --alpha)")
    p_cal.add_argument("--losses-output", default=None,
                       help="path for the per-seed loss CSV "
                            "(default: <output>.losses.csv, or stdout suppressed)")

    sub.add_parser("list-models", help="list built-in models")
    return parser


# ---------------------------------------------------------------------------
# Model locators
# ---------------------------------------------------------------------------

def make_sim_factory(locator: str, timeout: float = 30.0):
    if locator.startswith("builtin:"):
        name, params = models.parse_builtin_locator(locator)
        models.make_builtin(name, params).close()  # validate eagerly
        return lambda: models.make_builtin(name, params)
    if locator.startswith("exec:"):
        command = shlex.split(locator[len("exec:"):])
        if not command:
            raise ConfigError(["exec: locator is missing a command"])
        return lambda: ExternalSimulator(command=command, timeout=timeout)
    if locator.startswith("connect:"):
        rest = locator[len("connect:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise ConfigError([f"connect: locator must be connect:host:port, got {locator!r}"])
        return lambda: ExternalSimulator(address=(host, int(port)), timeout=timeout)
    raise ConfigError([f"unknown model locator {locator!r} "
                       "(expected builtin:, exec:, or connect:)"])


# ---------------------------------------------------------------------------
# Delta parsing
# ---------------------------------------------------------------------------

def parse_deltas(spec: str, targets, alpha: float) -> list[CiSpec]:
    """Build one CiSpec per expanded target from the --delta argument."""
    problems = []
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if not parts:
        raise ConfigError(["--delta is empty"])
    if all("=" in p for p in parts):
        named = {}
        for p in parts:
            name, _, value = p.partition("=")
            try:
                named[name.strip()] = float(value)
            except ValueError:
                problems.append(f"--delta entry {p!r} is not name=number")
        if problems:
            raise ConfigError(problems)
        out = []
        for t in targets:
            match = next((v for k, v in named.items() if k in t.target_id), None)
            if match is None:
                problems.append(f"no --delta entry matches target {t.target_id!r}")
            else:
                out.append(CiSpec(alpha, match))
        if problems:
            raise ConfigError(problems)
        return out
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ConfigError([f"--delta {spec!r} is neither numbers nor name=value pairs"]) from None
    if len(values) == 1:
        values = values * len(targets)
    if len(values) != len(targets):
        raise ConfigError([
            f"--delta lists {len(values)} values but the query expands to "
            f"{len(targets)} targets (give 1 or {len(targets)})"])
    return [CiSpec(alpha, v) for v in values]


# ---------------------------------------------------------------------------
# check command
# ---------------------------------------------------------------------------

def _validate_common(args) -> list[str]:
    problems = []
    if not 0.0 < args.alpha < 1.0:
        problems.append(f"--alpha must be in (0, 1), got {args.alpha}")
    if args.block_size < 2:
        problems.append(f"--block-size must be >= 2, got {args.block_size}")
    if args.max_replications < args.block_size:
        problems.append("--max-replications must be at least one block")
    if args.workers is not None and args.workers < 1:
        problems.append("--workers must be >= 1")
    if args.seed < 0 or args.seed >= 1 << 64:
        problems.append("--seed must be a 64-bit unsigned integer")
    return problems


def _load_query(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read query file: {exc}"]) from exc


def cmd_check(args) -> int:
    problems = _validate_common(args)
    if args.sample_every < 1:
        problems.append("--sample-every must be >= 1")
    if args.sample_offset < 0:
        problems.append("--sample-offset must be >= 0")
    if problems:
        raise ConfigError(problems)

    source = _load_query(args.query)
    ast = query.parse(source)
    cmd = ast.eval_command
    if args.warmup is not None and cmd.kind in query.MANUAL_KINDS \
            and cmd.manual_warmup is None:
        ast = query.QueryAst(ast.operator_defs,
                             dc_replace(cmd, manual_warmup=args.warmup))
        cmd = ast.eval_command
    query.check_or_raise(ast)
    expanded = query.expand(ast)
    ci_specs = parse_deltas(args.delta, expanded, args.alpha)
    workers = args.workers if args.workers is not None else default_workers()
    factory = make_sim_factory(args.model, args.timeout)
    seeds = SeedPlan(args.seed)

    config = {
        "command": "check", "model": args.model, "query": args.query,
        "kind": cmd.kind, "alpha": args.alpha, "delta": args.delta,
        "block_size": args.block_size, "max_replications": args.max_replications,
        "seed": args.seed, "sample_every": args.sample_every,
        "sample_offset": args.sample_offset,
    }

    started = time.monotonic()
    if cmd.kind == "autoIR":
        cfg = transient.AutoIrConfig(
            block_size=args.block_size, max_replications=args.max_replications)
        targets = transient.make_targets(expanded, ci_specs)
        rep = transient.auto_ir(ast, targets, cfg, factory, seeds, workers)
        rep.config = config
    else:
        rep = _run_steady_state(args, ast, expanded, ci_specs, factory,
                                seeds, workers, config)
    elapsed = time.monotonic() - started
    print(f"smcheck: {rep.total_replications} replications, "
          f"{rep.total_steps} steps, {elapsed:.2f} s", file=sys.stderr)

    _write_report(rep, args)
    if not rep.valid:
        print(f"smcheck: error: {rep.error}", file=sys.stderr)
        return 1
    return 0 if rep.all_converged else 2


def _run_steady_state(args, ast, expanded, ci_specs, factory, seeds,
                      workers, config) -> report.AnalysisReport:
    cmd = ast.eval_command
    bcfg = steadystate.BatchConfig(
        batch_count=args.batch_count, initial_batch_size=args.batch_size,
        max_total_steps=args.max_total_steps,
        sample_every=args.sample_every, sample_offset=args.sample_offset)
    rep = report.AnalysisReport(config=config, seed_plan={
        "master_seed": seeds.master_seed, "derivation": seeds.derivation})
    for index, (target, ci) in enumerate(zip(expanded, ci_specs)):
        target_seeds = seeds.subplan(index)
        if cmd.kind == "autoWarmup":
            est = steadystate.detect_warmup(ast, target, factory, target_seeds, bcfg)
            rep.total_steps += est.steps_used
            rep.rows.append(report.TargetRow(
                target_id=target.target_id, estimate=None, ci_halfwidth=None,
                n_replications=1, converged=est.converged,
                warmup_steps=est.warmup, method="warmup",
                steps_used=est.steps_used))
        elif cmd.kind in ("autoBM", "manualBM"):
            if cmd.kind == "autoBM":
                res = steadystate.auto_bm(ast, target, factory, target_seeds, bcfg, ci)
            else:
                res = steadystate.manual_bm(ast, target, factory, target_seeds,
                                            cmd.manual_warmup, bcfg, ci)
            rep.total_replications += 1
            rep.total_steps += res.steps_used
            rep.rows.append(report.TargetRow(
                target_id=target.target_id, estimate=res.estimate,
                ci_halfwidth=res.halfwidth, n_replications=1,
                converged=res.converged, warmup_steps=res.warmup,
                method="BM" if cmd.kind == "autoBM" else "manualBM",
                batch_count=res.batch_count, batch_size=res.batch_size,
                steps_used=res.steps_used))
        else:  # autoRD | manualRD
            rcfg = steadystate.RdConfig(
                block_size=args.rd_block_size, horizon_steps=args.horizon,
                ci=ci, max_replications=args.max_replications,
                sample_every=args.sample_every, sample_offset=args.sample_offset)
            if cmd.kind == "autoRD":
                res = steadystate.auto_rd(ast, target, factory, target_seeds,
                                          rcfg, bcfg, workers=workers)
            else:
                res = steadystate.manual_rd(ast, target, factory, target_seeds,
                                            cmd.manual_warmup, rcfg, workers=workers)
            rep.total_replications += res.n_replications
            rep.total_steps += res.n_replications * ((res.warmup or 0) + res.horizon)
            rep.rows.append(report.TargetRow(
                target_id=target.target_id, estimate=res.estimate,
                ci_halfwidth=res.halfwidth, n_replications=res.n_replications,
                converged=res.converged, warmup_steps=res.warmup,
                method="RD" if cmd.kind == "autoRD" else "manualRD",
                horizon=res.horizon))
    return rep


def _write_report(rep, args) -> None:
    payload = rep.to_csv() if args.format == "csv" else rep.to_json()
    if args.output == "-":
        sys.stdout.write(payload)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)


# ---------------------------------------------------------------------------
# calibrate command
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    problems = _validate_common(args)
    if args.delta <= 0:
        problems.append("--delta must be positive")
    test_alpha = args.test_alpha if args.test_alpha is not None else args.alpha
    if not 0.0 < test_alpha < 1.0:
        problems.append("--test-alpha must be in (0, 1)")
    if problems:
        raise ConfigError(problems)

    grid, loss_spec = calibration.load_grid_file(args.grid)
    combos = grid.combos()
    factory = make_sim_factory(args.model, args.timeout)
    workers = args.workers if args.workers is not None else default_workers()
    seeds = SeedPlan(args.seed)
    ci = CiSpec(args.alpha, args.delta)

    started = time.monotonic()
    estimates = []
    for index, combo in enumerate(combos):
        estimates.append(calibration.estimate_loss(
            factory, combo, loss_spec, ci, args.block_size,
            seeds.subplan(index), max_replications=args.max_replications,
            workers=workers))
    entries = calibration.confidence_set(estimates, test_alpha)
    elapsed = time.monotonic() - started

    param_names = list(grid.params)
    rep = report.ConfidenceSetReport(
        config={
            "command": "calibrate", "model": args.model, "grid": args.grid,
            "alpha": args.alpha, "delta": args.delta, "test_alpha": test_alpha,
            "block_size": args.block_size, "seed": args.seed,
        },
        seed_plan={"master_seed": seeds.master_seed, "derivation": seeds.derivation},
        param_names=param_names,
        entries=entries,
        total_replications=sum(e.runs for e in estimates),
        valid=all(e.converged for e in estimates),
    )
    print(f"smcheck: {len(combos)} combinations, {rep.total_replications} "
          f"replications, {elapsed:.2f} s; confidence set size {len(entries)}",
          file=sys.stderr)

    payload = rep.to_csv() if args.format == "csv" else rep.to_json()
    if args.output == "-":
        sys.stdout.write(payload)
        losses_path = args.losses_output
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
        losses_path = args.losses_output or args.output + ".losses.csv"
    if losses_path:
        with open(losses_path, "w", encoding="utf-8") as fh:
            fh.write(report.losses_to_csv(
                param_names, ((e.combo, e.samples) for e in estimates)))
    return 0 if rep.valid else 2


# ---------------------------------------------------------------------------
# list-models
# ---------------------------------------------------------------------------

def cmd_list_models() -> int:
    for spec in models.model_specs():
        params = ", ".join(f"{name}:[{lo}, {hi}]"
                           for name, (lo, hi) in spec.declared_params.items())
        obs = ", ".join(spec.declared_observables)
        print(f"builtin:{spec.name}")
        print(f"  {spec.description}")
        print(f"  params: {params}")
        print(f"  observables: {obs}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args)
        if args.command == "calibrate":
            return cmd_calibrate(args)
        return cmd_list_models()
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"smcheck: error: {problem}", file=sys.stderr)
        return 1
    except (query.QuerySyntaxError, query.QueryCheckError) as exc:
        print(f"smcheck: query error: {exc}", file=sys.stderr)
        return 1
    except (SimulatorError, StatsError, calibration.CalibrationError,
            steadystate.SteadyStateError, OSError) as exc:
        print(f"smcheck: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``boltplan <command> ...``.

Exit codes: 0 when everything succeeded, 1 when a run finished with failed trials (or a
plan was not found), 2 for configuration and input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2

log = logging.getLogger("boltplan")


def _scenario(args):
    from .harness import ScenarioConfig, load_config

    cfg = load_config(args.config) if args.config else ScenarioConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "task", None):
        over["task"] = args.task
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if getattr(args, "oracle", None):
        from .harness import OracleConfig

        over["oracle"] = OracleConfig.parse(args.oracle)
    return replace(cfg, **over).validate() if over else cfg


def cmd_run(args) -> int:
    from .harness import emit_report, run_task

    cfg = _scenario(args)
    report = run_task(cfg, workers=args.workers)
    if args.records:
        emit_report(report, "records", args.records)
    if args.table:
        emit_report(report, "table", args.table)
    summary = report.summary()
    summary["wall_time_s"] = round(report.wall_time_s, 3)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if report.success_rate == 1.0 else EXIT_FAILURES


def cmd_plan(args) -> int:
    import numpy as np

    from .oracle import SymbolicOracle, noisy_wrap
    from .pddl import ground, load_shipped_domain, parse_domain, parse_problem
    from .planner import Plan, SearchLimits, bfs_plan, heuristic_plan, relevant_actions

    domain = parse_domain(Path(args.domain).read_text(encoding="utf-8")) if args.domain else load_shipped_domain()
    problem = parse_problem(Path(args.problem).read_text(encoding="utf-8"), domain)
    actions = relevant_actions(problem.init, ground(domain, problem))
    limits = SearchLimits(max_depth=args.max_depth, max_expansions=args.max_expansions)
    if args.planner == "bfs":
        result = bfs_plan(problem.init, problem.goal, actions, limits)
    else:
        oracle = SymbolicOracle()
        if args.flip_rate > 0:
            seed = args.seed if args.seed is not None else 0
            oracle = noisy_wrap(oracle, args.flip_rate, np.random.default_rng(seed))
        result = heuristic_plan(problem.init, problem.goal, actions, oracle, limits, width=args.width)
    if not isinstance(result, Plan):
        print(f"no plan: {result.reason} after {result.expansions} expansions")
        return EXIT_FAILURES
    for a in result.actions:
        print(a)
    print(f"; {len(result.actions)} steps, {result.expansions} expansions")
    return EXIT_OK


def cmd_train_rpsn(args) -> int:
    from .harness import bench_speculation, format_bench
    from .rpsn import TrainConfig, bolt_sampler, init_params, rpsn_train

    seed = args.seed if args.seed is not None else 0
    cfg = TrainConfig(steps=args.steps, batch_size=args.batch_size, learning_rate=args.learning_rate, seed=seed)
    params, curve = rpsn_train(init_params(seed), bolt_sampler(seed), cfg)
    params.save(args.out)
    print(f"saved {args.out}; final loss {curve[-1]:.5f}" if curve else f"saved {args.out}")
    if args.bench:
        print(format_bench(bench_speculation(args.bench, seed + 1, params=params)))
    return EXIT_OK


def cmd_train_predicates(args) -> int:
    from .perception import PredicateTrainConfig, accuracy, cross_validated, read_samples, save_params
    from .predicate_data import simulated_samples, train_all

    seed = args.seed if args.seed is not None else 0
    samples = simulated_samples(args.scenes, seed) if args.scenes > 0 else {}
    for path in args.run_log or ():
        logged = [r for r in read_samples(path) if r.get("kind", "predicate_sample") == "predicate_sample"]
        for name, extra in cross_validated(logged).items():
            samples.setdefault(name, []).extend(extra)
    if not samples:
        print("no training samples")
        return EXIT_CONFIG
    params = train_all(samples, PredicateTrainConfig(steps=args.steps, seed=seed))
    save_params(args.out, params, {"scenes": args.scenes, "seed": seed})
    for name in sorted(params):
        print(f"{name:<16} n={len(samples[name]):<6d} train accuracy {accuracy(params[name], samples[name]):.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .harness import bench_speculation, format_bench

    seed = args.seed if args.seed is not None else 0
    rows = bench_speculation(args.n, seed, args.max_attempts, args.weights)
    print(format_bench(rows))
    if args.json:
        Path(args.json).write_text(json.dumps([asdict(r) for r in rows], indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    from .harness import emit_report, read_report

    report = read_report(args.path)
    if args.table:
        emit_report(report, "table", args.table)
    print(json.dumps(report.summary(), sort_keys=True, indent=1))
    return EXIT_OK if report.success_rate == 1.0 else EXIT_FAILURES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boltplan", description="Bolt disassembly planning and simulation.")
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and print its summary")
    r.add_argument("--task", help="override the configured task")
    r.add_argument("--trials", type=int)
    r.add_argument("--oracle", help="symbolic | noisy:<rate> | llm")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--records", help="write the JSON-lines report here")
    r.add_argument("--table", help="write the CSV report here")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plan", help="plan for a PDDL problem file")
    pl.add_argument("problem")
    pl.add_argument("--domain", help="domain file (default: shipped disassembly domain)")
    pl.add_argument("--planner", choices=["bfs", "heuristic"], default="heuristic")
    pl.add_argument("--flip-rate", type=float, default=0.0, help="verdict noise for the heuristic oracle")
    pl.add_argument("--width", type=int, default=5)
    pl.add_argument("--max-depth", type=int, default=200)
    pl.add_argument("--max-expansions", type=int, default=10_000)
    pl.set_defaults(func=cmd_plan)

    t = sub.add_parser("train-rpsn", help="train the chassis placement network")
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, default=6000)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--bench", type=int, default=0, help="benchmark on this many bolts afterwards")
    t.set_defaults(func=cmd_train_rpsn)

    tp = sub.add_parser("train-predicates", help="train predicate classifiers")
    tp.add_argument("--out", required=True)
    tp.add_argument("--scenes", type=int, default=400, help="simulated scenes to sample")
    tp.add_argument("--run-log", action="append", help="add outcome-labelled samples from a run log")
    tp.add_argument("--steps", type=int, default=5000)
    tp.set_defaults(func=cmd_train_predicates)

    b = sub.add_parser("bench", help="chassis speculation benchmark, random vs network")
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--max-attempts", type=int, default=100)
    b.add_argument("--weights", help="network weights (default: shipped)")
    b.add_argument("--json", help="also write the rows as JSON")
    b.set_defaults(func=cmd_bench)

    rp = sub.add_parser("report", help="summarize a JSON-lines report")
    rp.add_argument("path")
    rp.add_argument("--table", help="convert to CSV at this path")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    from .pddl import PddlError
    from .scene import ConfigError

    try:
        return args.func(args)
    except (ConfigError, PddlError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        # includes malformed oracle credentials and unreadable reports
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

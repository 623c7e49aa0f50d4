"""Command-line driver.

Exit codes: 0 success, 1 unreadable or malformed input (including bad flags),
2 solver budget exceeded, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

from .aggregate import BugReport, aggregate
from .catapult import Catapult, InvariantViolation, rules_from_mask
from .engine import check_naive
from .ir import ValueFlowGraph, VfgError, load_program
from .propspec import PropertySpec, SpecError, load_specs
from .solver import Solver, SolverBudgetExceeded
from .summaries import SchedulingError, dump_summaries, stitch, summarize
from .workload import GenParams, gen_workload

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_INVARIANT = 0, 1, 2, 3

_COUNT = {"type": "integer", "minimum": 0}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["plan", "properties", "stats"],
    "additionalProperties": False,
    "properties": {
        "plan": {
            "type": "object",
            "required": ["engine", "mode", "order"],
            "properties": {
                "engine": {"enum": ["naive", "catapult"]},
                "mode": {"enum": ["intra", "summary"]},
                "order": {"type": "array", "items": {"type": "string"}},
            },
        },
        "properties": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "agg", "feasible_paths", "bugs"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "agg": {"enum": ["never", "never-sim", "must"]},
                    "feasible_paths": _COUNT,
                    "bugs": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["kind", "source", "witness", "condition"],
                            "additionalProperties": False,
                            "properties": {
                                "kind": {"enum": ["path-bug", "pair-bug", "leak-bug"]},
                                "source": {"type": "string"},
                                "witness": {
                                    "type": "array",
                                    "minItems": 1,
                                    "maxItems": 2,
                                    "items": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                                },
                                "condition": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
        "stats": {
            "type": "object",
            "required": [
                "vertices_visited", "solver", "pruned_psc", "pruned_rule2",
                "pruned_rule34", "psc_checks_saved", "skeleton_visited", "aggregation",
            ],
            "properties": {
                "solver": {
                    "type": "object",
                    "required": ["sat_queries", "core_extractions", "interpolations"],
                    "additionalProperties": _COUNT,
                },
                "aggregation": {"type": "object", "additionalProperties": _COUNT},
            },
            "additionalProperties": {"anyOf": [_COUNT, {"type": "object"}]},
        },
    },
}


@dataclass
class RunConfig:
    engine: str = "catapult"
    mode: str = "intra"
    rule_mask: int = 0xFF
    forced_order: Optional[list[str]] = None
    domain_bound: int = 64
    seed: Optional[int] = None
    output: str = "text"
    threads: int = 1
    gen_params: Optional[GenParams] = None
    eager_conflicts: bool = False
    dump_summaries: Optional[str] = None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # bad flags are input errors, not budget errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vflow", description="Check many value-flow properties in one pass.")
    p.add_argument("program", nargs="?", help=".vfg file")
    p.add_argument("specs", nargs="?", help=".prop file")
    p.add_argument("--engine", choices=["naive", "catapult"], default="catapult")
    p.add_argument("--mode", choices=["intra", "summary"], default="intra",
                   help="walk the graph directly, or walk stitched summary paths")
    p.add_argument("--rule-mask", type=lambda s: int(s, 0), default=0xFF,
                   help="bit k-1 enables rule k (default 0xff)")
    p.add_argument("--order", help="comma-separated property names forcing the check order")
    p.add_argument("--domain-bound", type=int, default=64,
                   help="variables range over [-B, B-1] (default 64)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true", help="emit the JSON report")
    p.add_argument("--gen", type=int, metavar="SEED", help="analyze a generated workload")
    p.add_argument("--gen-params", metavar="FILE", help="JSON generator parameters")
    p.add_argument("--eager-conflicts", action="store_true",
                   help="record conflict facts for later properties proactively")
    p.add_argument("--dump-summaries", metavar="FILE", help="write the .vfsum summary database")
    return p


def _load(config: RunConfig, program: Optional[str], specs: Optional[str]):
    if config.seed is not None:
        return gen_workload(config.seed, config.gen_params)
    if not program or not specs:
        raise ValueError("need PROGRAM and SPECS (or --gen SEED)")
    return load_program(program), load_specs(specs)


def analyze(config: RunConfig, g: ValueFlowGraph, specs: Sequence[PropertySpec]) -> dict:
    """Run one configuration and build the report object."""
    if config.domain_bound < 1:
        raise ValueError("domain bound must be positive")
    solver = Solver(-config.domain_bound, config.domain_bound - 1)
    candidates = None
    if config.mode == "summary":
        db = summarize(g, specs, threads=config.threads)
        if config.dump_summaries:
            with open(config.dump_summaries, "w", encoding="utf-8") as fh:
                fh.write(dump_summaries(db))
        candidates = stitch(g, db, specs)
    if config.engine == "naive":
        if config.forced_order is not None:
            raise ValueError("--order applies to the catapult engine only")
        results, stats = check_naive(g, specs, solver, candidates, threads=config.threads)
        plan = {"order": [s.name for s in specs]}
    else:
        engine = Catapult(g, specs, solver, rules_from_mask(config.rule_mask), config.forced_order,
                          candidates, eager_conflicts=config.eager_conflicts)
        results = engine.run()
        stats = engine.stats
        plan = engine.plan.describe()
    agg_solver = solver.fork()
    bugs = aggregate(g, specs, results, agg_solver, threads=config.threads)
    report_stats = stats.as_dict()
    report_stats["aggregation"] = agg_solver.counters.as_dict()
    return {
        "plan": {"engine": config.engine, "mode": config.mode, **plan},
        "properties": [
            {
                "name": s.name,
                "agg": s.agg,
                "feasible_paths": len(results[s.name]),
                "bugs": [b.as_dict() for b in bugs[s.name]],
            }
            for s in specs
        ],
        "stats": report_stats,
    }


def _text(report: dict, out: TextIO) -> None:
    plan = report["plan"]
    out.write(f"engine {plan['engine']} ({plan['mode']}), order: {', '.join(plan['order'])}\n")
    for prop in report["properties"]:
        out.write(f"{prop['name']} [{prop['agg']}]: {len(prop['bugs'])} bug(s), "
                  f"{prop['feasible_paths']} feasible path(s)\n")
        for bug in prop["bugs"]:
            witness = "  |  ".join(" -> ".join(p) for p in bug["witness"])
            out.write(f"  {bug['kind']} at {bug['source']}: {witness}\n")
    st = report["stats"]
    solver = st["solver"]
    out.write(
        f"stats: visited={st['vertices_visited']} sat_queries={solver['sat_queries']} "
        f"cores={solver['core_extractions']} interpolants={solver['interpolations']} "
        f"pruned_psc={st['pruned_psc']} pruned_rule2={st['pruned_rule2']} "
        f"pruned_rule34={st['pruned_rule34']} psc_checks_saved={st['psc_checks_saved']}\n"
    )


def run(config: RunConfig, program: Optional[str] = None, specs: Optional[str] = None,
        out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        g, loaded = _load(config, program, specs)
        if config.forced_order is not None and sorted(config.forced_order) != sorted(s.name for s in loaded):
            raise ValueError("--order must list every property name exactly once")
        report = analyze(config, g, loaded)
    except (VfgError, SpecError, OSError, ValueError, SchedulingError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT
    except SolverBudgetExceeded as exc:
        where = f" on path {' -> '.join(exc.path)}" if exc.path else ""
        err.write(f"error: solver budget exceeded{where}: {exc}\n")
        return EXIT_BUDGET
    except InvariantViolation as exc:
        err.write(f"internal error: {exc}\n")
        return EXIT_INVARIANT
    if config.output == "json":
        json.dump(report, out, indent=2)
        out.write("\n")
    else:
        _text(report, out)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, or a flag error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        gen_params = None
        if args.gen_params:
            with open(args.gen_params, encoding="utf-8") as fh:
                gen_params = GenParams.from_json(fh.read())
    except (OSError, ValueError, TypeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    config = RunConfig(
        engine=args.engine,
        mode=args.mode,
        rule_mask=args.rule_mask,
        forced_order=[s.strip() for s in args.order.split(",")] if args.order else None,
        domain_bound=args.domain_bound,
        seed=args.gen,
        output="json" if args.json else "text",
        threads=max(1, args.threads),
        gen_params=gen_params,
        eager_conflicts=args.eager_conflicts,
        dump_summaries=args.dump_summaries,
    )
    return run(config, args.program, args.specs)


if __name__ == "__main__":
    sys.exit(main())

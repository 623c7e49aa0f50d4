"""Multi-property value-flow analysis."""

from .aggregate import BugReport, aggregate
from .catapult import ALL_RULES, Catapult, check_catapult, make_plans, rules_from_mask
from .conditions import Condition, parse_atom, parse_atom_list
from .engine import AnalysisStats, FeasiblePath, check_naive
from .ir import ValueFlowGraph, enumerate_paths, load_program, parse_program
from .pathcond import path_condition
from .propspec import PropertySpec, load_specs, parse_specs
from .solver import Solver
from .summaries import bottom_up_schedule, stitch, stitch_labeled, summarize
from .workload import GenParams, gen_workload

__all__ = [
    "ALL_RULES", "AnalysisStats", "BugReport", "Catapult", "Condition", "FeasiblePath", "GenParams",
    "PropertySpec", "Solver", "ValueFlowGraph", "aggregate", "bottom_up_schedule", "check_catapult",
    "check_naive", "enumerate_paths", "gen_workload", "load_program", "load_specs", "make_plans",
    "parse_atom", "parse_atom_list", "parse_program", "parse_specs", "path_condition", "rules_from_mask",
    "stitch", "stitch_labeled", "summarize",
]

"""Points-to analysis engine for a small LLVM-like language.

Six variants: two whole-program context-insensitive baselines (inclusion and
unification based), a context-sensitive unification analysis with per-function
summaries, its legacy top-down flavor that copies caller objects into callees,
a refinement using per-site flow facts at calls and returns, and a type-aware
refinement that separates memory by access-type compatibility.
"""

from .checker import OverflowReport, check_overflow, precision_summary
from .domain import (
    IncompatibleTags,
    PointsToGraph,
    UnknownName,
    alias_pairs_of_graph,
    alloc_cell,
    erase_tags,
    formal_cell,
    object_name,
    sibling,
)
from .interproc import (
    VARIANTS,
    AnalysisResult,
    ForeignObjectLeak,
    alias_relation,
    metrics,
    run_analysis,
)
from .ir import (
    ParseError,
    Program,
    ValidationError,
    build_call_graph,
    parse_program,
    print_program,
    validate_program,
)
from .oracle import (
    RULESETS,
    ResourceLimit,
    diff_alias,
    eval_naive,
    gen_program,
    gen_program_text,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult",
    "ForeignObjectLeak",
    "IncompatibleTags",
    "OverflowReport",
    "ParseError",
    "PointsToGraph",
    "Program",
    "ResourceLimit",
    "RULESETS",
    "UnknownName",
    "VARIANTS",
    "ValidationError",
    "alias_pairs_of_graph",
    "alias_relation",
    "alloc_cell",
    "build_call_graph",
    "check_overflow",
    "diff_alias",
    "erase_tags",
    "eval_naive",
    "formal_cell",
    "gen_program",
    "gen_program_text",
    "metrics",
    "object_name",
    "parse_program",
    "precision_summary",
    "print_program",
    "run_analysis",
    "sibling",
    "validate_program",
]

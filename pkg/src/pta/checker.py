"""Field-overflow client: flag memory accesses that may step past an
allocation's size, and summarize precision across analysis variants.

An access needs a bounds assertion ("check") when the pointer it goes
through may target the second field of some allocation.  It is a finding
("alias pair") when that allocation was created with size 1, i.e. the second
field does not exist.  Gep instructions participate through their source
operand: forming an address from an already-overflowed pointer is itself an
access.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .domain import fam_name, is_alloc, obj_field, obj_tag
from .interproc import AnalysisResult
from .ir import Gep, Load, Program, Store


@dataclass(frozen=True)
class AliasFinding:
    function: str
    instruction: int  # uid of the access
    site: int  # uid of the undersized allocation
    register: str  # pointer the access goes through
    cells: tuple[str, ...]  # offending field-b cells, display names
    tags: tuple[str, ...]


@dataclass
class OverflowReport:
    variant: str
    checks: int = 0
    aliases: list[AliasFinding] = dc_field(default_factory=list)

    @property
    def alias_pairs(self) -> list[tuple[int, int]]:
        return sorted({(a.instruction, a.site) for a in self.aliases})

    @property
    def pair_count(self) -> int:
        return len(self.alias_pairs)


def _pointer_operand(i) -> str | None:
    match i:
        case Load():
            return i.src
        case Store():
            return i.dest
        case Gep():
            return i.src
    return None


def check_overflow(p: Program, r: AnalysisResult) -> OverflowReport:
    """Scan every load/store/gep against the frozen analysis result.

    Deterministic: accesses in (function, instruction uid) order, findings
    keyed by allocation site.
    """
    sizes = p.alloc_sizes()
    report = OverflowReport(variant=r.variant)
    for f in sorted(p.functions, key=lambda f: f.name):
        g = r.graph_for(f.name)
        for i in sorted(f.body, key=lambda i: i.uid):
            reg = _pointer_operand(i)
            if reg is None:
                continue
            targets = g.pts_objects((f.name, reg))
            b_cells = [
                o for o in targets
                if is_alloc(o) and obj_field(o) == "b"
            ]
            if not b_cells:
                continue
            report.checks += 1
            by_site: dict[int, list] = {}
            for o in b_cells:
                if sizes[o[1]] == 1:
                    by_site.setdefault(o[1], []).append(o)
            for site in sorted(by_site):
                cells = sorted(by_site[site])
                report.aliases.append(
                    AliasFinding(
                        function=f.name,
                        instruction=i.uid,
                        site=site,
                        register=reg,
                        cells=tuple(fam_name(o) for o in cells),
                        tags=tuple(sorted({obj_tag(o) for o in cells})),
                    )
                )
    return report


@dataclass(frozen=True)
class PrecisionRow:
    variant: str
    checks: int
    alias_pairs: int


def precision_summary(reports: dict[str, OverflowReport]) -> list[PrecisionRow]:
    """Per-variant checks/alias-pair counts; lower is more precise."""
    return [
        PrecisionRow(v, reports[v].checks, reports[v].pair_count)
        for v in sorted(reports)
    ]

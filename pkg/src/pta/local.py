"""Per-function analysis: the flow-insensitive rule fixpoint and flow facts.

The local phase evaluates allocation, cast, load, store and field-address
rules over a function's instruction bag until nothing new derives.  Call and
return instructions contribute nothing here; they are handled by the
interprocedural phases.  Type operands on cast and gep are always ignored.

In typed mode a memory access only reaches cell variants whose tag is
compatible with both the access type and the pointed-to tag; a store through
a wildcard-tagged cell pins the access type by materializing that variant of
the cell and writing there.  Accesses that fit no variant derive nothing
rather than failing.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

from . import lattice
from .domain import (
    PointsToGraph,
    alloc_cell,
    fam,
    obj_field,
    obj_tag,
    seed_function_summary,
    sibling,
    with_tag,
)
from .ir import Alloc, Call, Cast, Function, Gep, Load, Return, Store


@dataclass(frozen=True)
class LocalConfig:
    """Rule selection: unification off gives the inclusion-based variant."""

    unification: bool = True
    typed: bool = False
    compat: Callable[[str, str], bool] = dc_field(default=lattice.compat)


def function_registers(f: Function) -> set[str]:
    regs = set(f.formals)
    for i in f.body:
        match i:
            case Alloc() | Cast() | Load() | Gep():
                regs.add(i.dest)
            case Call():
                regs.update(i.dests)
        match i:
            case Cast() | Load() | Gep():
                regs.add(i.src)
            case Store():
                regs.update((i.src, i.dest))
            case Call():
                regs.update(i.args)
            case Return():
                regs.update(i.regs)
    return regs


def apply_instruction(g: PointsToGraph, fn: str, i, cfg: LocalConfig) -> None:
    """Run one instruction's rule against the graph (idempotent)."""
    match i:
        case Alloc():
            g.add_reg_edge((fn, i.dest), alloc_cell(i.uid))
        case Cast():
            for o in list(g.pts_objects((fn, i.src))):
                g.add_reg_edge((fn, i.dest), o)
        case Load():
            _apply_load(g, fn, i, cfg)
        case Store():
            _apply_store(g, fn, i, cfg)
        case Gep():
            if i.field == "a":
                for o in list(g.pts_objects((fn, i.src))):
                    g.add_reg_edge((fn, i.dest), o)
            else:
                for o in list(g.pts_objects((fn, i.src))):
                    if obj_field(o) == "a":
                        g.add_reg_edge((fn, i.dest), sibling(o))
        case Call() | Return():
            pass


def _apply_load(g: PointsToGraph, fn: str, i: Load, cfg: LocalConfig) -> None:
    dest = (fn, i.dest)
    if not cfg.typed:
        for o in list(g.pts_objects((fn, i.src))):
            for tgt in g.out_objects(o):
                g.add_reg_edge(dest, tgt)
        return
    access = lattice.tag_of(i.ty.pointee())
    for o in list(g.pts_objects((fn, i.src))):
        for t in g.variant_tags(fam(o)):
            if cfg.compat(obj_tag(o), t) and cfg.compat(access, t):
                for tgt in g.out_objects(with_tag(o, t)):
                    g.add_reg_edge(dest, tgt)


def _apply_store(g: PointsToGraph, fn: str, i: Store, cfg: LocalConfig) -> None:
    values = list(g.pts_objects((fn, i.src)))
    access = lattice.tag_of(i.ty.pointee())
    for o in list(g.pts_objects((fn, i.dest))):
        if cfg.typed:
            t = obj_tag(o)
            if t == lattice.ANY:
                w = with_tag(o, access)
                g.add_object(w)
            elif cfg.compat(t, access):
                w = o
            else:
                continue
        else:
            w = o
        for v in values:
            g.add_cell_edge(w, v)


def run_local(f: Function, cfg: LocalConfig) -> PointsToGraph:
    """Least fixpoint of the selected rules over the function's bag."""
    g = PointsToGraph(f.name, unification=cfg.unification)
    for r in function_registers(f):
        g.add_register((f.name, r))
    seed_function_summary(g, f)
    run_to_fixpoint(g, f, cfg)
    return g


def run_to_fixpoint(g: PointsToGraph, f: Function, cfg: LocalConfig) -> None:
    while True:
        before = g.version
        for i in f.body:
            apply_instruction(g, f.name, i, cfg)
        if g.version == before:
            return


# ---------------------------------------------------------------------------
# Flow facts
# ---------------------------------------------------------------------------

FlowFacts = dict  # (instruction uid, register) -> frozenset of objects


def compute_flow_facts(f: Function, typed: bool = False) -> FlowFacts:
    """Per-instruction register facts used at call and return sites.

    Instantiated as the points-to set under the purely inclusion-based local
    fixpoint (no unification).  Object-level on purpose: binding a register's
    sites individually is exactly what lets a return of one specific pointer
    stay separate from the unified local grouping.  Always a subset, family-
    wise, of the unified local result.
    """
    g = run_local(f, LocalConfig(unification=False, typed=typed))
    facts: FlowFacts = {}
    for i in f.body:
        match i:
            case Call():
                regs = i.args
            case Return():
                regs = i.regs
            case _:
                continue
        for r in set(regs):
            facts[(i.uid, r)] = frozenset(g.pts_objects((f.name, r)))
    return facts

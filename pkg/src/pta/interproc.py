"""Interprocedural analysis: summary resolution and the phase scheduler.

Context-sensitive variants keep one graph per function and run three phases:

  local      per-function rule fixpoint (with argument summary cells),
  bottom-up  reverse topological order; callee results are resolved into each
             caller, so callers see callee allocations but callees never see
             caller objects,
  top-down   topological order; caller context is translated onto the
             callee's own cells only.  The callee object set must not change
             here; a violation raises ForeignObjectLeak (an engine bug).

`dsa-legacy-td` swaps the top-down phase for the older behaviour that copies
everything reachable from the actual arguments into the callee, which is the
oversharing this engine otherwise avoids; it exists to measure that cost.

Context-insensitive variants solve a single whole-program fixpoint where call
and return sites act as plain register assignments.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

from . import lattice
from .domain import (
    FORMAL_PATHS,
    AbstractObject,
    PointsToGraph,
    alias_pairs_of_graph,
    fam,
    fam_name,
    formal_cell,
    is_formal,
    sibling,
    with_tag,
)
from .ir import Alloc, Call, CallGraph, Function, Program, build_call_graph, validate_program
from .local import LocalConfig, apply_instruction, compute_flow_facts, function_registers, run_local

CI_VARIANTS = ("andersen-ci", "steens-ci")
CS_VARIANTS = ("dsa", "dsa-legacy-td", "pfs-dsa", "tea-dsa")
PFS_VARIANTS = ("pfs-dsa", "tea-dsa")
VARIANTS = CI_VARIANTS + CS_VARIANTS


class ForeignObjectLeak(Exception):
    """Top-down changed a callee's object set; engine invariant broken."""


# ---------------------------------------------------------------------------
# Resolve and Accessible
# ---------------------------------------------------------------------------


def resolve_map(
    caller_g: PointsToGraph,
    callee: Function,
    arg_sets: list[frozenset[AbstractObject]],
) -> dict[tuple[int, str], set[AbstractObject]]:
    """Map each callee summary cell family to the caller objects it stands for.

    Closure per argument k over the caller graph: the field-a cell covers the
    objects passed in, sibling pairing covers field b, dereferencing reaches
    the second level, and the second level absorbs everything further (the
    self-loop cells summarize all deeper memory).  Non-summary callee objects
    resolve to themselves and are not listed here.
    """
    res: dict[tuple[int, str], set[AbstractObject]] = {
        (k, p): set() for k in range(len(callee.formals)) for p in FORMAL_PATHS
    }

    def out(o: AbstractObject) -> list[AbstractObject]:
        return caller_g.out_objects(o)

    for k, a_k in enumerate(arg_sets):
        res[(k, "a")] = set(a_k)
        res[(k, "b")] = {sibling(o) for o in a_k}
    changed = True
    while changed:
        changed = False
        for k in range(len(callee.formals)):
            for p in ("a", "b"):
                for o in sorted(res[(k, p)]):
                    for o2 in out(o):
                        if o2 not in res[(k, p + "a")]:
                            res[(k, p + "a")].add(o2)
                            changed = True
                        s2 = sibling(o2)
                        if s2 not in res[(k, p + "b")]:
                            res[(k, p + "b")].add(s2)
                            changed = True
            for p in ("aa", "ab", "ba", "bb"):
                twin = p[0] + ("b" if p[1] == "a" else "a")
                for o in sorted(res[(k, p)]):
                    for o2 in out(o):
                        if o2 not in res[(k, p)]:
                            res[(k, p)].add(o2)
                            changed = True
                        s2 = sibling(o2)
                        if s2 not in res[(k, twin)]:
                            res[(k, twin)].add(s2)
                            changed = True
    return res


def _resolver(res: dict, callee_name: str):
    def resolve_obj(o: AbstractObject) -> set[AbstractObject]:
        if is_formal(o, callee_name):
            return res[(o[2], o[3])]
        return {o}

    return resolve_obj


def accessible(g: PointsToGraph, f: Function) -> set[AbstractObject]:
    """Objects a caller can observe: everything reachable over cell edges
    from the argument summary cells or from any returned register's targets.

    Reachability is group-level (a group is observable as a unit) and closed
    over tag variants of the same cell.
    """
    seen_reps: set[AbstractObject] = set()
    queue: list[AbstractObject] = []

    def push_obj(o: AbstractObject) -> None:
        if g.has_object(o):
            rep = g.find(o)
            if rep not in seen_reps:
                seen_reps.add(rep)
                queue.append(rep)

    for k in range(len(f.formals)):
        for p in FORMAL_PATHS:
            base = formal_cell(f.name, k, p)
            for t in g.variant_tags(fam(base)):
                push_obj(with_tag(base, t))
    for ret in f.returns():
        for r in set(ret.regs):
            for rep in g.pts((f.name, r)):
                if rep not in seen_reps:
                    seen_reps.add(rep)
                    queue.append(rep)
    while queue:
        rep = queue.pop()
        for m in g.group_members(rep):
            for t in g.variant_tags(fam(m)):
                push_obj(with_tag(m, t))
        for tgt in g.cell_targets(rep):
            if tgt not in seen_reps:
                seen_reps.add(tgt)
                queue.append(tgt)
    out: set[AbstractObject] = set()
    for rep in seen_reps:
        out.update(g.group_members(rep))
    return out


# ---------------------------------------------------------------------------
# Phases at one call site
# ---------------------------------------------------------------------------


def _arg_sets(
    caller_g: PointsToGraph,
    caller: Function,
    call: Call,
    variant: str,
    flow_facts: dict | None,
) -> list[frozenset[AbstractObject]]:
    sets = []
    for x in call.args:
        if variant in PFS_VARIANTS:
            sets.append(frozenset(flow_facts[caller.name].get((call.uid, x), ())))
        else:
            sets.append(frozenset(caller_g.pts_objects((caller.name, x))))
    return sets


def bottom_up(
    caller_g: PointsToGraph,
    caller: Function,
    call: Call,
    callee: Function,
    callee_g: PointsToGraph,
    variant: str,
    flow_facts: dict | None = None,
) -> None:
    """Fold one analyzed callee into the caller at one call site."""
    res = resolve_map(caller_g, callee, _arg_sets(caller_g, caller, call, variant, flow_facts))
    resolve_obj = _resolver(res, callee.name)

    for ret in callee.returns():
        for k, z in enumerate(ret.regs):
            y = call.dests[k]
            if variant in PFS_VARIANTS:
                returned = sorted(flow_facts[callee.name].get((ret.uid, z), ()))
            else:
                returned = callee_g.pts_objects((callee.name, z))
            for o in returned:
                for tgt in sorted(resolve_obj(o)):
                    caller_g.add_reg_edge((caller.name, y), tgt)

    for j in sorted(accessible(callee_g, callee)):
        for k_obj in callee_g.out_objects(j):
            for h in sorted(resolve_obj(j)):
                for i_obj in sorted(resolve_obj(k_obj)):
                    caller_g.add_cell_edge(h, i_obj)


def top_down(
    caller_g: PointsToGraph,
    caller: Function,
    call: Call,
    callee: Function,
    callee_g: PointsToGraph,
    variant: str,
    flow_facts: dict | None = None,
) -> None:
    """Instantiate the callee summary with caller context at one call site.

    Only callee-owned cells gain facts; the callee object set is asserted
    unchanged (checked at runtime, raises ForeignObjectLeak).
    """
    arg_sets = _arg_sets(caller_g, caller, call, variant, flow_facts)
    res = resolve_map(caller_g, callee, arg_sets)
    before = callee_g.objects()

    rev: dict[AbstractObject, list[tuple[int, str]]] = {}
    for key, objs in res.items():
        for o in objs:
            rev.setdefault(o, []).append(key)

    for k, a_k in enumerate(arg_sets):
        targets: set[AbstractObject] = set()
        for h in a_k:
            for kk, p in rev.get(h, ()):
                targets.add(formal_cell(callee.name, kk, p))
            if callee_g.has_object(h):
                targets.add(h)
        f_reg = (callee.name, callee.formals[k])
        for t in sorted(targets):
            callee_g.add_reg_edge(f_reg, t)

    done_src = set()
    for o in sorted(caller_g.objects()):
        src_rep = caller_g.find(o)
        if src_rep in done_src:
            continue
        done_src.add(src_rep)
        j_fams = {key for m in caller_g.group_members(src_rep) for key in rev.get(m, ())}
        if not j_fams:
            continue
        k_fams = {
            key
            for tgt in caller_g.cell_targets(src_rep)
            for m in caller_g.group_members(tgt)
            for key in rev.get(m, ())
        }
        for k1, p1 in sorted(j_fams):
            for k2, p2 in sorted(k_fams):
                callee_g.add_cell_edge(
                    formal_cell(callee.name, k1, p1), formal_cell(callee.name, k2, p2)
                )

    if callee_g.objects() != before:
        leaked = sorted(callee_g.objects() - before)
        raise ForeignObjectLeak(
            f"top-down changed object set of {callee.name}: {leaked[:5]}"
        )


def top_down_legacy(
    caller_g: PointsToGraph,
    caller: Function,
    call: Call,
    callee: Function,
    callee_g: PointsToGraph,
) -> None:
    """Old-style top-down: copy everything reachable from the actual
    arguments into the callee and merge it with the argument summaries.

    Reachability closes over cell edges, group mates and field siblings (a
    memory object travels with both of its fields).  Strictly coarser than
    `top_down`; kept to measure the oversharing it causes.
    """
    top_down(caller_g, caller, call, callee, callee_g, "dsa")

    reach: set[AbstractObject] = set()
    work: list[AbstractObject] = []
    for x in call.args:
        work.extend(caller_g.pts_objects((caller.name, x)))
    while work:
        o = work.pop()
        if o in reach:
            continue
        reach.add(o)
        work.extend(caller_g.group_members(o))
        work.extend(caller_g.out_objects(o))
        sib = sibling(o)
        if caller_g.has_object(sib):
            work.append(sib)

    for o in sorted(reach):
        callee_g.add_object(o)
    done_reps = set()
    for o in sorted(reach):
        rep = caller_g.find(o)
        if rep in done_reps:
            continue
        done_reps.add(rep)
        ms = caller_g.group_members(rep)
        for m in ms[1:]:
            callee_g.unify(ms[0], m)
    for rep in sorted(done_reps):
        a = min(caller_g.group_members(rep))
        for tgt in caller_g.cell_targets(rep):
            callee_g.add_cell_edge(a, min(caller_g.group_members(tgt)))
    for k, x in enumerate(call.args):
        f_reg = (callee.name, callee.formals[k])
        for h in caller_g.pts_objects((caller.name, x)):
            callee_g.add_reg_edge(f_reg, h)


# ---------------------------------------------------------------------------
# Scheduler
# ---------------------------------------------------------------------------


@dataclass
class AnalysisResult:
    """Frozen output of one analysis run."""

    program: Program
    variant: str
    graphs: dict[str, PointsToGraph]  # function name, or '*' for whole-program
    call_graph: CallGraph
    flow_facts: dict[str, dict] = dc_field(default_factory=dict)
    objects_after_bu: dict[str, frozenset] = dc_field(default_factory=dict)
    objects_after_td: dict[str, frozenset] = dc_field(default_factory=dict)
    phase_seconds: dict[str, float] = dc_field(default_factory=dict)

    @property
    def context_sensitive(self) -> bool:
        return "*" not in self.graphs

    def graph_for(self, fn: str) -> PointsToGraph:
        return self.graphs[fn] if self.context_sensitive else self.graphs["*"]

    def contexts(self) -> list[str]:
        return sorted(self.graphs)


def _run_context_insensitive(p: Program, variant: str) -> PointsToGraph:
    g = PointsToGraph("*", unification=(variant == "steens-ci"))
    cfg = LocalConfig(unification=(variant == "steens-ci"), typed=False)
    for f in p.functions:
        for r in function_registers(f):
            g.add_register((f.name, r))
    by_name = {f.name: f for f in p.functions}
    while True:
        before = g.version
        for f in p.functions:
            for i in f.body:
                apply_instruction(g, f.name, i, cfg)
        # interprocedural assignments: arguments into formals, returns out
        for f in p.functions:
            for c in f.calls():
                callee = by_name[c.callee]
                for k, x in enumerate(c.args):
                    for o in list(g.pts_objects((f.name, x))):
                        g.add_reg_edge((callee.name, callee.formals[k]), o)
                for ret in callee.returns():
                    for k, y in enumerate(c.dests):
                        for o in list(g.pts_objects((callee.name, ret.regs[k]))):
                            g.add_reg_edge((f.name, y), o)
        if g.version == before:
            return g


def _sorted_call_sites(p: Program, fn: str) -> list[Call]:
    return sorted(p.function(fn).calls(), key=lambda c: c.uid)


def run_analysis(p: Program, variant: str) -> AnalysisResult:
    """Validate, then run the selected analysis to a frozen result."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    validate_program(p)
    cg = build_call_graph(p)
    timings: dict[str, float] = {}

    if variant in CI_VARIANTS:
        t0 = time.perf_counter()
        g = _run_context_insensitive(p, variant)
        timings["solve"] = time.perf_counter() - t0
        g.freeze()
        return AnalysisResult(p, variant, {"*": g}, cg, phase_seconds=timings)

    typed = variant == "tea-dsa"
    by_name = {f.name: f for f in p.functions}
    cfg = LocalConfig(unification=True, typed=typed)

    t0 = time.perf_counter()
    graphs = {f.name: run_local(f, cfg) for f in p.functions}
    flow_facts: dict[str, dict] = {}
    if variant in PFS_VARIANTS:
        flow_facts = {f.name: compute_flow_facts(f, typed=typed) for f in p.functions}
    timings["local"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for fn in cg.reverse_topo_order:
        caller = by_name[fn]
        while True:
            before = graphs[fn].version
            for call in _sorted_call_sites(p, fn):
                bottom_up(
                    graphs[fn], caller, call, by_name[call.callee],
                    graphs[call.callee], variant, flow_facts or None,
                )
            if graphs[fn].version == before:
                break
    timings["bottom-up"] = time.perf_counter() - t0
    after_bu = {fn: graphs[fn].objects() for fn in graphs}

    t0 = time.perf_counter()
    for fn in cg.topo_order:
        caller = by_name[fn]
        for call in _sorted_call_sites(p, fn):
            if variant == "dsa-legacy-td":
                top_down_legacy(
                    graphs[fn], caller, call, by_name[call.callee], graphs[call.callee]
                )
            else:
                top_down(
                    graphs[fn], caller, call, by_name[call.callee],
                    graphs[call.callee], variant, flow_facts or None,
                )
    timings["top-down"] = time.perf_counter() - t0
    after_td = {fn: graphs[fn].objects() for fn in graphs}

    result = AnalysisResult(
        p, variant, graphs, cg,
        flow_facts=flow_facts,
        objects_after_bu=after_bu,
        objects_after_td=after_td,
        phase_seconds=timings,
    )
    if flow_facts:
        _check_flow_fact_soundness(result)
    for g in graphs.values():
        g.freeze()
    return result


def _check_flow_fact_soundness(r: AnalysisResult) -> None:
    # every per-site fact must be covered by the function-level result
    for fn, facts in r.flow_facts.items():
        g = r.graphs[fn]
        for (uid, reg), objs in facts.items():
            have = {fam(o) for o in g.pts_objects((fn, reg))}
            missing = {fam(o) for o in objs} - have
            if missing:
                raise RuntimeError(
                    f"flow fact not a subset of final result: {fn}, "
                    f"instruction {uid}, register {reg}: {sorted(missing)}"
                )


# ---------------------------------------------------------------------------
# Alias relation and metrics
# ---------------------------------------------------------------------------


def alias_relation(r: AnalysisResult) -> dict[str, frozenset]:
    """Per-context alias pairs (tag-erased); the canonical comparison object."""
    return {ctx: alias_pairs_of_graph(g) for ctx, g in r.graphs.items()}


@dataclass(frozen=True)
class MetricsRow:
    function: str
    objects: int
    foreign: int
    groups: int
    edges: int


@dataclass
class MetricsReport:
    rows: list[MetricsRow]
    totals: dict[str, int]
    phase_seconds: dict[str, float]
    foreign_after_bu: dict[str, int]
    foreign_after_td: dict[str, int]

    @property
    def td_foreign_added(self) -> dict[str, int]:
        """Foreign objects the top-down phase introduced, per function."""
        return {
            fn: self.foreign_after_td[fn] - self.foreign_after_bu.get(fn, 0)
            for fn in self.foreign_after_td
        }


def _defining_function(p: Program) -> dict:
    owner = {}
    for f in p.functions:
        for i in f.body:
            if isinstance(i, Alloc):
                owner[i.uid] = f.name
    return owner


def foreign_count(p: Program, cg: CallGraph, fn: str, objects) -> int:
    """Objects whose defining function is neither `fn` nor a transitive callee."""
    owner = _defining_function(p)
    visible = {fn} | cg.transitive_callees(fn)
    count = 0
    for o in objects:
        def_fn = owner[o[1]] if o[0] == "H" else o[1]
        if def_fn not in visible:
            count += 1
    return count


def metrics(r: AnalysisResult) -> MetricsReport:
    rows = []
    foreign_bu: dict[str, int] = {}
    foreign_td: dict[str, int] = {}
    for ctx in r.contexts():
        g = r.graphs[ctx]
        if ctx == "*":
            foreign = 0
        else:
            foreign = foreign_count(r.program, r.call_graph, ctx, g.objects())
            foreign_bu[ctx] = foreign_count(
                r.program, r.call_graph, ctx, r.objects_after_bu[ctx]
            )
            foreign_td[ctx] = foreign_count(
                r.program, r.call_graph, ctx, r.objects_after_td[ctx]
            )
        rows.append(
            MetricsRow(
                function=ctx,
                objects=len(g.objects()),
                foreign=foreign,
                groups=g.group_count(),
                edges=g.edge_count(),
            )
        )
    totals = {
        "objects": sum(x.objects for x in rows),
        "foreign": sum(x.foreign for x in rows),
        "groups": sum(x.groups for x in rows),
        "edges": sum(x.edges for x in rows),
    }
    return MetricsReport(rows, totals, dict(r.phase_seconds), foreign_bu, foreign_td)

"""Independent naive-fixpoint evaluator, program generator, and alias diff.

`eval_naive` re-derives points-to facts by exhaustively applying the analysis
rules as plain joins over ground facts: no union-find, no phases, no graphs.
Groups exist only implicitly, through saturation: whenever one pointer may
point to two compatible objects, every pointer to one gains the other and
their outgoing facts are pooled.  Results are compared with the engine on the
induced alias relation, which is the whole point: two implementations, one
answer.

Intended for small programs; `ResourceLimit` fires when the fact count
exceeds the configured bound.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field

from . import lattice
from .domain import fam, fam_name, formal_cell, is_formal, obj_field, obj_tag, reg_node, sibling, with_tag
from .ir import (
    Alloc,
    Call,
    Cast,
    Function,
    Gep,
    Load,
    Program,
    Return,
    Store,
    parse_program,
    validate_program,
)
from .local import function_registers

RULESETS = ("inclusion-nofld", "andersen-ci", "steens-ci", "dsa", "pfs-dsa", "tea-dsa")
_CI_RULESETS = ("inclusion-nofld", "andersen-ci", "steens-ci")
_PFS_RULESETS = ("pfs-dsa", "tea-dsa")


class ResourceLimit(Exception):
    """Fact count exceeded the oracle's bound; the program is too large."""


# ---------------------------------------------------------------------------
# Fact base
# ---------------------------------------------------------------------------


class FactBase:
    """Ground points-to facts, indexed for saturation.

    rpt: (context, register) -> objects; cpt: (context, cell) -> objects.
    Context is the function name, or '*' for whole-program rule sets.
    """

    def __init__(
        self,
        program: Program,
        unify: bool,
        typed: bool,
        limit: int,
        contexts: tuple[str, ...] = (),
    ):
        self.program = program
        self.unify = unify
        self.typed = typed
        self.limit = limit
        self.contexts = contexts or tuple(program.function_names())
        self.nfacts = 0
        self.rpt: dict[tuple, set] = {}
        self.cpt: dict[tuple, set] = {}
        self.universe: dict[str, set] = {}
        self.variants: dict[tuple, set] = {}  # (ctx, family) -> tags
        self.ptrs_to: dict[tuple, set] = {}  # (ctx, obj) -> pointer keys
        self.mates: dict[tuple, set] = {}  # (ctx, obj) -> co-pointed partners
        self.pending: list = []

    # -- fact insertion ---------------------------------------------------

    def add_universe(self, ctx: str, o) -> None:
        bucket = self.universe.setdefault(ctx, set())
        if o not in bucket:
            bucket.add(o)
            self.variants.setdefault((ctx, fam(o)), set()).add(obj_tag(o))

    def _bump(self) -> None:
        self.nfacts += 1
        if self.nfacts > self.limit:
            raise ResourceLimit(f"fact count exceeded {self.limit}")

    def add_reg(self, ctx: str, reg: tuple, o) -> bool:
        s = self.rpt.setdefault((ctx, reg), set())
        if o in s:
            return False
        s.add(o)
        self._bump()
        self.add_universe(ctx, o)
        self.ptrs_to.setdefault((ctx, o), set()).add(("r", reg))
        if self.unify:
            self.pending.append((ctx, ("r", reg), o))
        return True

    def add_cell(self, ctx: str, src, o) -> bool:
        s = self.cpt.setdefault((ctx, src), set())
        if o in s:
            return False
        s.add(o)
        self._bump()
        self.add_universe(ctx, src)
        self.add_universe(ctx, o)
        self.ptrs_to.setdefault((ctx, o), set()).add(("c", src))
        if self.unify:
            self.pending.append((ctx, ("c", src), o))
        return True

    def add_fact(self, ctx: str, ptr, o) -> bool:
        if ptr[0] == "r":
            return self.add_reg(ctx, ptr[1], o)
        return self.add_cell(ctx, ptr[1], o)

    def targets(self, ctx: str, ptr) -> set:
        if ptr[0] == "r":
            return self.rpt.get((ctx, ptr[1]), set())
        return self.cpt.get((ctx, ptr[1]), set())

    # -- unification saturation -------------------------------------------
    # Invariants maintained: if some pointer points to compatible objects H
    # and I, then (a) every pointer to one points to the other, and (b) their
    # outgoing fact sets are pooled.  Pair chaining happens through queued
    # facts, which matches group transitivity (all co-pointed targets carry
    # the wildcard tag in shipped rule sets, so chained pairs stay compatible).

    def _drain(self) -> None:
        while self.pending:
            ctx, ptr, new = self.pending.pop()
            key_new = (ctx, new)
            for mate in list(self.mates.get(key_new, ())):
                self.add_fact(ctx, ptr, mate)
            for other in sorted(self.targets(ctx, ptr) - {new}):
                if other in self.mates.get(key_new, ()):
                    continue
                if not lattice.compat(obj_tag(other), obj_tag(new)):
                    continue
                key_other = (ctx, other)
                self.mates.setdefault(key_new, set()).add(other)
                self.mates.setdefault(key_other, set()).add(new)
                for q in list(self.ptrs_to.get(key_new, ())):
                    self.add_fact(ctx, q, other)
                for q in list(self.ptrs_to.get(key_other, ())):
                    self.add_fact(ctx, q, new)
                for k in list(self.cpt.get(key_new, ())):
                    self.add_cell(ctx, other, k)
                for k in list(self.cpt.get(key_other, ())):
                    self.add_cell(ctx, new, k)
            if ptr[0] == "c":
                src_key = (ctx, ptr[1])
                for mate in list(self.mates.get(src_key, ())):
                    self.add_cell(ctx, mate, new)

    # -- alias relation -----------------------------------------------------

    def alias_relation(self) -> dict[str, frozenset]:
        out = {}
        for ctx in sorted(self.contexts):
            pairs: set[tuple[str, str]] = set()
            reg_fams: dict[str, set[str]] = {}
            if ctx == "*":
                reg_iter = [
                    (f.name, r) for f in self.program.functions
                    for r in sorted(function_registers(f))
                ]
            else:
                f = self.program.function(ctx)
                reg_iter = [(ctx, r) for r in sorted(function_registers(f))]
            for fn, r in reg_iter:
                fams = {fam_name(o) for o in self.rpt.get((ctx, (fn, r)), ())}
                node = reg_node(fn, r)
                reg_fams[node] = fams
                for c in fams:
                    pairs.add(tuple(sorted((node, c))))
                for c1 in fams:
                    for c2 in fams:
                        if c1 < c2:
                            pairs.add((c1, c2))
            nodes = sorted(reg_fams)
            for i in range(len(nodes)):
                for j in range(i + 1, len(nodes)):
                    if reg_fams[nodes[i]] & reg_fams[nodes[j]]:
                        pairs.add((nodes[i], nodes[j]))
            for (c, src), objs in self.cpt.items():
                if c != ctx:
                    continue
                fams = {fam_name(o) for o in objs}
                for c1 in fams:
                    for c2 in fams:
                        if c1 < c2:
                            pairs.add((c1, c2))
            out[ctx] = frozenset(pairs)
        return out

    def fact_count(self) -> int:
        return self.nfacts


# ---------------------------------------------------------------------------
# Rule evaluation
# ---------------------------------------------------------------------------


def _access_tag(ty) -> str:
    return lattice.tag_of(ty.pointee())


class _Evaluator:
    def __init__(self, p: Program, ruleset: str, limit: int):
        self.p = p
        self.ruleset = ruleset
        self.ci = ruleset in _CI_RULESETS
        self.typed = ruleset == "tea-dsa"
        self.fields = ruleset != "inclusion-nofld"
        unify = ruleset in ("steens-ci", "dsa", "pfs-dsa", "tea-dsa")
        contexts = ("*",) if self.ci else tuple(p.function_names())
        self.fb = FactBase(p, unify, self.typed, limit, contexts)
        self.by_name = {f.name: f for f in p.functions}
        self.flow: dict[str, dict] = {}
        if ruleset in _PFS_RULESETS:
            self.flow = {
                f.name: _inclusion_local_facts(f, typed=self.typed)
                for f in p.functions
            }

    def run(self) -> FactBase:
        fb = self.fb
        if not self.ci:
            for f in self.p.functions:
                _seed_formals(fb, f)
        while True:
            before = fb.nfacts
            for f in self.p.functions:
                ctx = "*" if self.ci else f.name
                for i in f.body:
                    _apply_local_rule(fb, ctx, f.name, i, self.typed, self.fields)
            if self.ci:
                self._ci_assignments()
            else:
                self._cs_rules()
            fb._drain()
            if fb.nfacts == before:
                return fb

    # -- context-insensitive interprocedural assignments -------------------

    def _ci_assignments(self) -> None:
        fb = self.fb
        for f in self.p.functions:
            for c in f.calls():
                callee = self.by_name[c.callee]
                for k, x in enumerate(c.args):
                    for o in list(fb.rpt.get(("*", (f.name, x)), ())):
                        fb.add_reg("*", (callee.name, callee.formals[k]), o)
                for ret in callee.returns():
                    for k, y in enumerate(c.dests):
                        for o in list(fb.rpt.get(("*", (callee.name, ret.regs[k])), ())):
                            fb.add_reg("*", (f.name, y), o)

    # -- context-sensitive summary rules ------------------------------------

    def _arg_sets(self, caller: Function, call: Call) -> list[frozenset]:
        out = []
        for x in call.args:
            if self.ruleset in _PFS_RULESETS:
                out.append(frozenset(self.flow[caller.name].get((call.uid, x), ())))
            else:
                out.append(
                    frozenset(self.fb.rpt.get((caller.name, (caller.name, x)), ()))
                )
        return out

    def _resolve(self, caller: Function, call: Call, callee: Function) -> dict:
        fb = self.fb
        res = {
            (k, p): set()
            for k in range(len(callee.formals))
            for p in ("a", "b", "aa", "ab", "ba", "bb")
        }
        for k, a_k in enumerate(self._arg_sets(caller, call)):
            res[(k, "a")] = set(a_k)
            res[(k, "b")] = {sibling(o) for o in a_k}
        changed = True
        while changed:
            changed = False
            for (k, path), objs in sorted(res.items()):
                if len(path) == 1:
                    for o in sorted(objs):
                        for o2 in fb.cpt.get((caller.name, o), ()):
                            if o2 not in res[(k, path + "a")]:
                                res[(k, path + "a")].add(o2)
                                changed = True
                            s2 = sibling(o2)
                            if s2 not in res[(k, path + "b")]:
                                res[(k, path + "b")].add(s2)
                                changed = True
                else:
                    twin = path[0] + ("b" if path[1] == "a" else "a")
                    for o in sorted(objs):
                        for o2 in fb.cpt.get((caller.name, o), ()):
                            if o2 not in res[(k, path)]:
                                res[(k, path)].add(o2)
                                changed = True
                            s2 = sibling(o2)
                            if s2 not in res[(k, twin)]:
                                res[(k, twin)].add(s2)
                                changed = True
        return res

    def _accessible(self, callee: Function) -> set:
        fb = self.fb
        ctx = callee.name
        acc: set = set()
        work: list = []

        def push(o) -> None:
            if o not in acc:
                acc.add(o)
                work.append(o)

        for k in range(len(callee.formals)):
            for path in ("a", "b", "aa", "ab", "ba", "bb"):
                base = formal_cell(ctx, k, path)
                for t in fb.variants.get((ctx, fam(base)), ()):
                    push(with_tag(base, t))
        for ret in callee.returns():
            for r in set(ret.regs):
                for o in fb.rpt.get((ctx, (ctx, r)), ()):
                    push(o)
        while work:
            o = work.pop()
            for t in fb.variants.get((ctx, fam(o)), ()):
                push(with_tag(o, t))
            for k in fb.cpt.get((ctx, o), ()):
                push(k)
            for m in fb.mates.get((ctx, o), ()):
                push(m)
        return acc

    def _cs_rules(self) -> None:
        fb = self.fb
        for caller in self.p.functions:
            for call in caller.calls():
                callee = self.by_name[call.callee]
                res = self._resolve(caller, call, callee)

                def resolve_obj(o):
                    if is_formal(o, callee.name):
                        return res[(o[2], o[3])]
                    return {o}

                # returned values into the caller
                for ret in callee.returns():
                    for k, z in enumerate(ret.regs):
                        if self.ruleset in _PFS_RULESETS:
                            rets = self.flow[callee.name].get((ret.uid, z), ())
                        else:
                            rets = fb.rpt.get((callee.name, (callee.name, z)), ())
                        for h in sorted(rets):
                            for i_obj in sorted(resolve_obj(h)):
                                fb.add_reg(
                                    caller.name, (caller.name, call.dests[k]), i_obj
                                )
                # callee cell effects into the caller
                for j in sorted(self._accessible(callee)):
                    for k_obj in sorted(fb.cpt.get((callee.name, j), ())):
                        for h in sorted(resolve_obj(j)):
                            for i_obj in sorted(resolve_obj(k_obj)):
                                fb.add_cell(caller.name, h, i_obj)
                # caller context onto callee formals / callee-owned objects
                rev: dict = {}
                for key, objs in res.items():
                    for o in objs:
                        rev.setdefault(o, []).append(key)
                for k, a_k in enumerate(self._arg_sets(caller, call)):
                    freg = (callee.name, callee.formals[k])
                    for h in sorted(a_k):
                        for kk, path in rev.get(h, ()):
                            fb.add_reg(
                                callee.name, freg, formal_cell(callee.name, kk, path)
                            )
                        if h in fb.universe.get(callee.name, ()):
                            fb.add_reg(callee.name, freg, h)
                # caller cell edges between resolved formals
                for (c, src), objs in list(fb.cpt.items()):
                    if c != caller.name or src not in rev:
                        continue
                    for i_obj in objs:
                        for k2, p2 in rev.get(i_obj, ()):
                            for k1, p1 in rev[src]:
                                fb.add_cell(
                                    callee.name,
                                    formal_cell(callee.name, k1, p1),
                                    formal_cell(callee.name, k2, p2),
                                )


def _seed_formals(fb: FactBase, f: Function) -> None:
    ctx = f.name
    for k in range(len(f.formals)):
        cells = {p: formal_cell(ctx, k, p) for p in ("a", "b", "aa", "ab", "ba", "bb")}
        for c in cells.values():
            fb.add_universe(ctx, c)
        fb.add_reg(ctx, (f.name, f.formals[k]), cells["a"])
        fb.add_cell(ctx, cells["a"], cells["aa"])
        fb.add_cell(ctx, cells["b"], cells["ba"])
        for p in ("aa", "ab", "ba", "bb"):
            fb.add_cell(ctx, cells[p], cells[p])


def _apply_local_rule(fb: FactBase, ctx: str, fn: str, i, typed: bool, fields: bool) -> None:
    match i:
        case Alloc():
            fb.add_reg(ctx, (fn, i.dest), ("H", i.uid, "a", lattice.ANY))
        case Cast():
            for o in list(fb.rpt.get((ctx, (fn, i.src)), ())):
                fb.add_reg(ctx, (fn, i.dest), o)
        case Load():
            if typed:
                access = _access_tag(i.ty)
                for h in list(fb.rpt.get((ctx, (fn, i.src)), ())):
                    for t in sorted(fb.variants.get((ctx, fam(h)), ())):
                        if lattice.compat(obj_tag(h), t) and lattice.compat(access, t):
                            for x in list(fb.cpt.get((ctx, with_tag(h, t)), ())):
                                fb.add_reg(ctx, (fn, i.dest), x)
            else:
                for h in list(fb.rpt.get((ctx, (fn, i.src)), ())):
                    for x in list(fb.cpt.get((ctx, h), ())):
                        fb.add_reg(ctx, (fn, i.dest), x)
        case Store():
            values = list(fb.rpt.get((ctx, (fn, i.src)), ()))
            access = _access_tag(i.ty)
            for h in list(fb.rpt.get((ctx, (fn, i.dest)), ())):
                if typed:
                    t = obj_tag(h)
                    if t == lattice.ANY:
                        w = with_tag(h, access)
                        fb.add_universe(ctx, w)
                    elif lattice.compat(t, access):
                        w = h
                    else:
                        continue
                else:
                    w = h
                for v in values:
                    fb.add_cell(ctx, w, v)
        case Gep():
            if not fields:
                return
            if i.field == "a":
                for h in list(fb.rpt.get((ctx, (fn, i.src)), ())):
                    fb.add_reg(ctx, (fn, i.dest), h)
            else:
                for h in list(fb.rpt.get((ctx, (fn, i.src)), ())):
                    if obj_field(h) == "a":
                        fb.add_reg(ctx, (fn, i.dest), sibling(h))
        case Call() | Return():
            pass


def _inclusion_local_facts(f: Function, typed: bool) -> dict:
    """Per-instruction register facts from the inclusion-only local fixpoint."""
    fb = FactBase(Program((f,)), unify=False, typed=typed, limit=10**6)
    _seed_formals(fb, f)
    while True:
        before = fb.nfacts
        for i in f.body:
            _apply_local_rule(fb, f.name, f.name, i, typed, fields=True)
        if fb.nfacts == before:
            break
    facts = {}
    for i in f.body:
        match i:
            case Call():
                regs = i.args
            case Return():
                regs = i.regs
            case _:
                continue
        for r in set(regs):
            facts[(i.uid, r)] = frozenset(fb.rpt.get((f.name, (f.name, r)), ()))
    return facts


def eval_naive(p: Program, ruleset: str, limit: int = 10**6) -> FactBase:
    """Saturate the selected rule set over the program; deterministic."""
    if ruleset not in RULESETS:
        raise ValueError(f"unknown rule set {ruleset!r}")
    validate_program(p)
    return _Evaluator(p, ruleset, limit).run()


# ---------------------------------------------------------------------------
# Program generator
# ---------------------------------------------------------------------------

_GEN_TYPES = [f"{b}{'*' * d}" for b in ("char", "int", "float") for d in (1, 2)]


def gen_program_text(seed: int, fns: int = 3, instrs: int = 10) -> str:
    """Deterministic random program: acyclic direct calls, valid arities.

    Call targets prefer the next function, so larger `fns` values naturally
    produce deep call chains.  Every function allocates at least once and
    ends with a single return.
    """
    if fns < 1:
        raise ValueError("fns must be >= 1")
    rng = random.Random(seed)
    names = [f"f{i}" for i in range(fns)]
    n_formals = [rng.randint(0, 3) for _ in range(fns)]
    n_returns = [rng.randint(0, 2) for _ in range(fns)]
    lines: list[str] = []

    for i, name in enumerate(names):
        formals = [f"p{k}" for k in range(n_formals[i])]
        lines.append(f"fun {name}({', '.join(formals)}): {n_returns[i]} {{")
        pool = list(formals)
        fresh = 0

        def new_reg() -> str:
            nonlocal fresh
            fresh += 1
            return f"r{fresh}"

        def dest_reg() -> str:
            if pool and rng.random() < 0.25:
                return rng.choice(pool)  # reassignment is allowed
            r = new_reg()
            pool.append(r)
            return r

        lines.append(f"  r0 = alloc {rng.choice((1, 2, 2))}")
        pool.append("r0")
        budget = max(0, instrs - 2)
        for _ in range(budget):
            op = rng.choices(
                ("alloc", "cast", "load", "store", "gep", "call"),
                weights=(18, 14, 15, 20, 15, 18),
            )[0]
            ty = rng.choice(_GEN_TYPES)
            if op == "call" and i + 1 < fns:
                j = i + 1 if rng.random() < 0.65 else rng.randint(i + 1, fns - 1)
                args = [rng.choice(pool) for _ in range(n_formals[j])]
                dests = []
                for _ in range(n_returns[j]):
                    r = new_reg()
                    pool.append(r)
                    dests.append(r)
                lines.append(f"  ({', '.join(dests)}) = {names[j]}({', '.join(args)})")
            elif op == "alloc":
                lines.append(f"  {dest_reg()} = alloc {rng.choice((1, 2, 2))}")
            elif op == "cast":
                lines.append(f"  {dest_reg()} = cast {ty}, {rng.choice(pool)}")
            elif op == "load":
                lines.append(f"  {dest_reg()} = load {ty} {rng.choice(pool)}")
            elif op == "store":
                lines.append(f"  store {rng.choice(pool)}, {ty} {rng.choice(pool)}")
            else:
                fld = rng.choice(("a", "b", "b"))
                lines.append(f"  {dest_reg()} = gep {ty} {rng.choice(pool)}, {fld}")
        rets = [rng.choice(pool) for _ in range(n_returns[i])]
        lines.append("  return " + ", ".join(rets) if rets else "  return")
        lines.append("}")
    return "\n".join(lines) + "\n"


def gen_program(seed: int, fns: int = 3, instrs: int = 10) -> Program:
    """Parsed, validation-clean generated program (same seed, same program)."""
    p = parse_program(gen_program_text(seed, fns, instrs))
    validate_program(p)
    return p


# ---------------------------------------------------------------------------
# Alias diff
# ---------------------------------------------------------------------------


@dataclass
class DiffReport:
    only_a: dict[str, list] = dc_field(default_factory=dict)
    only_b: dict[str, list] = dc_field(default_factory=dict)

    @property
    def identical(self) -> bool:
        return not self.only_a and not self.only_b

    @property
    def counts(self) -> dict[str, int]:
        return {
            "only_a": sum(len(v) for v in self.only_a.values()),
            "only_b": sum(len(v) for v in self.only_b.values()),
        }


def diff_alias(a: dict[str, frozenset], b: dict[str, frozenset]) -> DiffReport:
    """Symmetric difference of two per-context alias relations."""
    report = DiffReport()
    for ctx in sorted(set(a) | set(b)):
        pa, pb = a.get(ctx, frozenset()), b.get(ctx, frozenset())
        if pa - pb:
            report.only_a[ctx] = sorted(pa - pb)
        if pb - pa:
            report.only_b[ctx] = sorted(pb - pa)
    return report

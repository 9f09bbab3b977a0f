"""Batch command line: analyze, check, diff, oracle, gen.

Exit codes:
  0  success
  1  parse or validation failure (message on stderr)
  2  internal assertion (e.g. the top-down phase leaked foreign objects)
  3  `check --fail-on-alias` found overflow alias pairs
  4  oracle resource limit exceeded
  5  oracle disagreed with the engine (mismatching pairs on stdout)

All outputs are byte-stable for a given input and flag set.  Phase wall
times vary run to run, so `--emit metrics` omits them unless `--timings`
is passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checker import check_overflow
from .domain import PointsToGraph, fam_name, obj_tag, object_name
from .interproc import (
    CS_VARIANTS,
    VARIANTS,
    AnalysisResult,
    ForeignObjectLeak,
    alias_relation,
    metrics,
    run_analysis,
)
from .ir import ParseError, Program, ValidationError, parse_program
from .oracle import RULESETS, ResourceLimit, diff_alias, eval_naive, gen_program_text


def _read_program(path: str) -> Program:
    return parse_program(Path(path).read_text())


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Emitters
# ---------------------------------------------------------------------------


def _graph_groups(g: PointsToGraph) -> tuple[list[dict], dict]:
    """Deterministic group ids (g0, g1, ...) ordered by member names."""
    reps = sorted(
        {g.find(o) for o in g.objects()},
        key=lambda rep: [object_name(m) for m in g.group_members(rep)],
    )
    gid = {rep: f"g{n}" for n, rep in enumerate(reps)}
    groups = []
    for rep in reps:
        members = g.group_members(rep)
        tags = sorted({obj_tag(m) for m in members} - {"any"})
        groups.append(
            {
                "id": gid[rep],
                "objects": [object_name(m) for m in members],
                "tag": ",".join(tags) if tags else "any",
            }
        )
    return groups, gid


def _json_graph(g: PointsToGraph, fn_filter: str | None = None) -> dict:
    groups, gid = _graph_groups(g)
    registers = {}
    for key in g.registers():
        if fn_filter is not None and key[0] != fn_filter:
            continue
        name = key[1] if fn_filter is not None or g.owner != "*" else f"{key[0]}.{key[1]}"
        registers[name] = sorted(gid[g.find(rep)] for rep in g.pts(key))
    edges = set()
    for rep in {g.find(o) for o in g.objects()}:
        for tgt in g.cell_targets(rep):
            edges.add((gid[rep], gid[g.find(tgt)]))
    return {
        "groups": groups,
        "registers": registers,
        "edges": sorted(list(e) for e in edges),
    }


def emit_json(r: AnalysisResult, function: str | None, timings: bool) -> str:
    functions = {}
    for ctx in r.contexts():
        if function is not None and ctx not in (function, "*"):
            continue
        fn_filter = function if ctx == "*" else None
        functions[ctx] = _json_graph(r.graphs[ctx], fn_filter)
    m = metrics(r)
    mjson = {
        "per_function": {
            row.function: {
                "objects": row.objects,
                "foreign": row.foreign,
                "groups": row.groups,
                "edges": row.edges,
            }
            for row in m.rows
        },
        "totals": m.totals,
    }
    if timings:
        mjson["phase_seconds"] = m.phase_seconds
    return _dumps(
        {"schema": 1, "variant": r.variant, "functions": functions, "metrics": mjson}
    )


def emit_dot(r: AnalysisResult, function: str | None) -> str:
    out = []
    for ctx in r.contexts():
        if function is not None and ctx not in (function, "*"):
            continue
        g = r.graphs[ctx]
        groups, gid = _graph_groups(g)
        out.append(f'digraph "{ctx}" {{')
        out.append("  rankdir=LR;")
        for key in g.registers():
            if ctx == "*" and function is not None and key[0] != function:
                continue
            label = key[1] if ctx != "*" else f"{key[0]}.{key[1]}"
            out.append(f'  "reg:{key[0]}.{key[1]}" [shape=ellipse, label="{label}"];')
        for grp in groups:
            label = "\\n".join(grp["objects"])
            if grp["tag"] != "any":
                label += f'\\n[{grp["tag"]}]'
            out.append(f'  "{grp["id"]}" [shape=box, label="{label}"];')
        for key in g.registers():
            if ctx == "*" and function is not None and key[0] != function:
                continue
            for rep in sorted(g.pts(key), key=lambda rep: gid[g.find(rep)]):
                out.append(f'  "reg:{key[0]}.{key[1]}" -> "{gid[g.find(rep)]}";')
        edges = set()
        for rep in {g.find(o) for o in g.objects()}:
            for tgt in g.cell_targets(rep):
                edges.add((gid[rep], gid[g.find(tgt)]))
        for a, b in sorted(edges):
            out.append(f'  "{a}" -> "{b}";')
        out.append("}")
    return "\n".join(out) + "\n"


def emit_metrics(r: AnalysisResult, timings: bool) -> str:
    m = metrics(r)
    payload = {
        "schema": 1,
        "variant": r.variant,
        "per_function": {
            row.function: {
                "objects": row.objects,
                "foreign": row.foreign,
                "groups": row.groups,
                "edges": row.edges,
            }
            for row in m.rows
        },
        "totals": m.totals,
        "foreign_after_bottom_up": m.foreign_after_bu,
        "foreign_after_top_down": m.foreign_after_td,
    }
    if timings:
        payload["phase_seconds"] = m.phase_seconds
    return _dumps(payload)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    p = _read_program(args.input)
    r = run_analysis(p, args.variant)
    if args.function is not None and args.function not in r.contexts() \
            and "*" not in r.contexts():
        print(f"error: no function named {args.function}", file=sys.stderr)
        return 1
    if args.emit == "dot":
        text = emit_dot(r, args.function)
    elif args.emit == "json":
        text = emit_json(r, args.function, args.timings)
    else:
        text = emit_metrics(r, args.timings)
    _write(text, args.out)
    return 0


def cmd_check(args) -> int:
    p = _read_program(args.input)
    r = run_analysis(p, args.variant)
    report = check_overflow(p, r)
    payload = {
        "schema": 1,
        "variant": report.variant,
        "checks": report.checks,
        "alias_pairs": [list(x) for x in report.alias_pairs],
        "pair_count": report.pair_count,
        "findings": [
            {
                "function": a.function,
                "instruction": a.instruction,
                "site": a.site,
                "register": a.register,
                "cells": list(a.cells),
                "tags": list(a.tags),
            }
            for a in report.aliases
        ],
    }
    _write(_dumps(payload), args.out)
    if args.fail_on_alias and report.aliases:
        return 3
    return 0


def cmd_diff(args) -> int:
    if len(args.variant) != 2:
        print("error: diff needs exactly two --variant flags", file=sys.stderr)
        return 1
    va, vb = args.variant
    p = _read_program(args.input)
    ra, rb = run_analysis(p, va), run_analysis(p, vb)
    d = diff_alias(alias_relation(ra), alias_relation(rb))
    ca, cb = check_overflow(p, ra), check_overflow(p, rb)
    payload = {
        "schema": 1,
        "variants": [va, vb],
        "alias": {
            "identical": d.identical,
            "counts": d.counts,
            "only_in": {
                va: {ctx: [list(x) for x in pairs] for ctx, pairs in d.only_a.items()},
                vb: {ctx: [list(x) for x in pairs] for ctx, pairs in d.only_b.items()},
            },
        },
        "checker": {
            va: {"checks": ca.checks, "alias_pairs": ca.pair_count},
            vb: {"checks": cb.checks, "alias_pairs": cb.pair_count},
        },
    }
    _write(_dumps(payload), args.out)
    return 0


def cmd_oracle(args) -> int:
    if args.variant not in RULESETS:
        print(f"error: no oracle rule set for {args.variant}", file=sys.stderr)
        return 1
    p = _read_program(args.input)
    engine = alias_relation(run_analysis(p, args.variant))
    naive = eval_naive(p, args.variant, limit=args.fact_limit).alias_relation()
    d = diff_alias(engine, naive)
    if d.identical:
        print("ok: engine and naive fixpoint agree")
        return 0
    for ctx, pairs in sorted(d.only_a.items()):
        for pair in pairs:
            print(f"only-engine {ctx}: {pair[0]} ~ {pair[1]}")
    for ctx, pairs in sorted(d.only_b.items()):
        for pair in pairs:
            print(f"only-oracle {ctx}: {pair[0]} ~ {pair[1]}")
    return 5


def cmd_gen(args) -> int:
    text = gen_program_text(args.seed, args.functions, args.instrs)
    _write(text, args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pta", description="points-to analysis engine for the mini language"
    )
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run one analysis variant and emit its graphs")
    a.add_argument("input")
    a.add_argument("--variant", choices=VARIANTS, default="tea-dsa")
    a.add_argument("--emit", choices=("dot", "json", "metrics"), default="json")
    a.add_argument("--out")
    a.add_argument("--function", help="restrict output to one function")
    a.add_argument("--timings", action="store_true",
                   help="include phase wall times (not byte-stable)")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("check", help="field-overflow report (JSON on stdout)")
    c.add_argument("input")
    c.add_argument("--variant", choices=VARIANTS, default="tea-dsa")
    c.add_argument("--out")
    c.add_argument("--fail-on-alias", action="store_true")
    c.set_defaults(func=cmd_check)

    d = sub.add_parser("diff", help="compare alias relations of two variants")
    d.add_argument("input")
    d.add_argument("--variant", action="append", required=True,
                   choices=VARIANTS, help="give twice: the two variants to compare")
    d.add_argument("--out")
    d.set_defaults(func=cmd_diff)

    o = sub.add_parser("oracle", help="differential check against the naive fixpoint")
    o.add_argument("input")
    o.add_argument("--variant", choices=sorted(set(VARIANTS) & set(RULESETS)),
                   default="dsa")
    o.add_argument("--fact-limit", type=int, default=10**6)
    o.set_defaults(func=cmd_oracle)

    g = sub.add_parser("gen", help="emit a deterministic random program")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--functions", type=int, default=3)
    g.add_argument("--instrs", type=int, default=10)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ResourceLimit as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (ForeignObjectLeak, RuntimeError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

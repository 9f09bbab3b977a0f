"""Abstract objects, points-to graphs, and the unification machinery.

Abstract objects are plain tuples so they can serve directly as union-find
keys and sort deterministically:

    ('H', site, field, tag)            allocation-site cell
    ('V', fn, arg_index, path, tag)    formal-argument summary cell

``site`` is the uid of the allocating instruction, ``field`` is 'a' or 'b',
``path`` is one of a/b/aa/ab/ba/bb and ``tag`` is a lattice tag ('any' for
cells whose type was never pinned by a memory access).  Cells materialize
lazily: the field-b cell of an allocation exists only once something refers
to it, and tagged variants of a cell appear on first typed access.

A PointsToGraph maps registers and cells to groups of abstract objects.  With
unification enabled it maintains the grouping invariant: whenever one pointer
points to two groups whose tag sets are compatible, the groups are merged,
out-edges are pooled, and the merge cascades until a fixpoint.  Groups never
hold two objects with incompatible concrete tags; a request to unify such
groups raises IncompatibleTags and the caller keeps them apart.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import lattice
from .ir import Function

FORMAL_PATHS = ("a", "b", "aa", "ab", "ba", "bb")

AbstractObject = tuple  # ('H', ...) or ('V', ...)
RegKey = tuple  # (function name, register name)


class IncompatibleTags(Exception):
    """Unification refused: the groups carry incompatible concrete tags."""


class UnknownName(Exception):
    """Query for a register or cell the graph has never seen."""


def alloc_cell(site: int, fld: str = "a", tag: str = lattice.ANY) -> AbstractObject:
    return ("H", site, fld, tag)


def formal_cell(fn: str, index: int, path: str, tag: str = lattice.ANY) -> AbstractObject:
    return ("V", fn, index, path, tag)


def is_alloc(o: AbstractObject) -> bool:
    return o[0] == "H"


def is_formal(o: AbstractObject, fn: str | None = None) -> bool:
    return o[0] == "V" and (fn is None or o[1] == fn)


def obj_tag(o: AbstractObject) -> str:
    return o[-1]


def obj_field(o: AbstractObject) -> str:
    """Last path element: the field this cell stands for."""
    return o[2][-1] if is_alloc(o) else o[3][-1]


def fam(o: AbstractObject) -> tuple:
    """Family key: the object with its tag erased."""
    return o[:-1]


def with_tag(o: AbstractObject, tag: str) -> AbstractObject:
    return o[:-1] + (tag,)


def sibling(o: AbstractObject) -> AbstractObject:
    """Involution pairing field a with b on the last path element."""
    flip = {"a": "b", "b": "a"}
    if is_alloc(o):
        return ("H", o[1], flip[o[2]], o[3])
    path = o[3][:-1] + flip[o[3][-1]]
    return ("V", o[1], o[2], path, o[4])


def object_name(o: AbstractObject) -> str:
    """Stable display name: H<site>.<field>[.<tag>] or V.<fn>.<idx>.<path>[.<tag>]."""
    suffix = "" if obj_tag(o) == lattice.ANY else f".{obj_tag(o)}"
    if is_alloc(o):
        return f"H{o[1]}.{o[2]}{suffix}"
    return f"V.{o[1]}.{o[2]}.{o[3]}{suffix}"


def fam_name(o: AbstractObject) -> str:
    return object_name(with_tag(o, lattice.ANY))


def objects_for_alloc(uid: int) -> set[AbstractObject]:
    """Cells an allocation contributes eagerly: just the field-a wildcard cell.

    The field-b cell (and any tagged variant) appears on demand, which never
    changes analysis results but keeps graphs small.
    """
    return {alloc_cell(uid)}


def formal_summary(f: Function) -> tuple[list, list, list]:
    """Summary cells and seed edges for a function's formals.

    Per argument: six cells, one register edge (arg register to the field-a
    cell) and six cell edges (first level reaches the second, second level
    self-loops to stand for deeper dereferences).
    """
    objects, reg_edges, cell_edges = [], [], []
    for k in range(len(f.formals)):
        cells = {p: formal_cell(f.name, k, p) for p in FORMAL_PATHS}
        objects.extend(cells[p] for p in FORMAL_PATHS)
        reg_edges.append((f.formals[k], cells["a"]))
        cell_edges.append((cells["a"], cells["aa"]))
        cell_edges.append((cells["b"], cells["ba"]))
        for p in ("aa", "ab", "ba", "bb"):
            cell_edges.append((cells[p], cells[p]))
    return objects, reg_edges, cell_edges


# ---------------------------------------------------------------------------
# The graph
# ---------------------------------------------------------------------------


class PointsToGraph:
    """Union-find backed points-to relation for one function (or the program).

    Mutation happens single-threadedly during analysis; `freeze` flips the
    graph read-only, after which queries are safe to share.
    """

    def __init__(self, owner: str, unification: bool = True):
        self.owner = owner
        self.unification = unification
        self.frozen = False
        self.version = 0
        self._parent: dict[AbstractObject, AbstractObject] = {}
        self._size: dict[AbstractObject, int] = {}
        self._members: dict[AbstractObject, set[AbstractObject]] = {}
        self._tagset: dict[AbstractObject, set[str]] = {}
        self._reg_pts: dict[RegKey, set[AbstractObject]] = {}
        self._rev_reg: dict[AbstractObject, set[RegKey]] = {}
        self._cell_out: dict[AbstractObject, set[AbstractObject]] = {}
        self._cell_in: dict[AbstractObject, set[AbstractObject]] = {}
        self._variants: dict[tuple, set[str]] = {}
        self._pending: list = []

    # -- plumbing ---------------------------------------------------------

    def _mutating(self) -> None:
        if self.frozen:
            raise RuntimeError("graph is frozen")
        self.version += 1

    def freeze(self) -> None:
        self.frozen = True

    def has_object(self, o: AbstractObject) -> bool:
        return o in self._parent

    def objects(self) -> frozenset:
        return frozenset(self._parent)

    def registers(self) -> list[RegKey]:
        return sorted(self._reg_pts)

    def variant_tags(self, family: tuple) -> tuple[str, ...]:
        return tuple(sorted(self._variants.get(family, ())))

    def add_object(self, o: AbstractObject) -> None:
        if o in self._parent:
            return
        self._mutating()
        self._parent[o] = o
        self._size[o] = 1
        self._members[o] = {o}
        tags = set() if obj_tag(o) == lattice.ANY else {obj_tag(o)}
        self._tagset[o] = tags
        self._cell_out[o] = set()
        self._cell_in[o] = set()
        self._rev_reg[o] = set()
        self._variants.setdefault(fam(o), set()).add(obj_tag(o))

    def add_register(self, key: RegKey) -> None:
        if key not in self._reg_pts:
            self._mutating()
            self._reg_pts[key] = set()

    def find(self, o: AbstractObject) -> AbstractObject:
        parent = self._parent
        root = o
        while parent[root] != root:
            root = parent[root]
        while parent[o] != root:
            parent[o], o = root, parent[o]
        return root

    def group_members(self, o: AbstractObject) -> tuple:
        return tuple(sorted(self._members[self.find(o)]))

    # -- edges ------------------------------------------------------------

    def add_reg_edge(self, key: RegKey, o: AbstractObject) -> bool:
        self.add_object(o)
        self.add_register(key)
        rep = self.find(o)
        if rep in self._reg_pts[key]:
            return False
        self._mutating()
        self._reg_pts[key].add(rep)
        self._rev_reg[rep].add(key)
        if self.unification:
            self._pending.append(("r", key))
            self._drain()
        return True

    def add_cell_edge(self, src: AbstractObject, dst: AbstractObject) -> bool:
        self.add_object(src)
        self.add_object(dst)
        s, d = self.find(src), self.find(dst)
        if d in self._cell_out[s]:
            return False
        self._mutating()
        self._cell_out[s].add(d)
        self._cell_in[d].add(s)
        if self.unification:
            self._pending.append(("c", s))
            self._drain()
        return True

    # -- queries ----------------------------------------------------------

    def pts(self, key: RegKey) -> set[AbstractObject]:
        """Group representatives a register points to (empty if unassigned)."""
        if key not in self._reg_pts:
            raise UnknownName(f"register {key[0]}.{key[1]}")
        return set(self._reg_pts[key])

    def pts_objects(self, key: RegKey) -> list[AbstractObject]:
        """All pointed-to objects, member-expanded, deterministic order."""
        out: set[AbstractObject] = set()
        for rep in self.pts(key):
            out.update(self._members[rep])
        return sorted(out)

    def cell_targets(self, o: AbstractObject) -> set[AbstractObject]:
        if o not in self._parent:
            raise UnknownName(object_name(o))
        return set(self._cell_out[self.find(o)])

    def out_objects(self, o: AbstractObject) -> list[AbstractObject]:
        if o not in self._parent:
            return []
        out: set[AbstractObject] = set()
        for rep in self._cell_out[self.find(o)]:
            out.update(self._members[rep])
        return sorted(out)

    def points_to_set(self, x) -> list[tuple]:
        """Canonical group list for a register key or a cell, sorted.

        Each group is the sorted tuple of its members; raises UnknownName
        for a register or cell the graph has never seen.
        """
        if isinstance(x, tuple) and x and x[0] in ("H", "V"):
            reps = self.cell_targets(x)
        else:
            reps = self.pts(x)
        groups = [tuple(sorted(self._members[r])) for r in reps]
        return sorted(groups)

    def group_of(self, o: AbstractObject) -> tuple:
        return self.group_members(o)

    def edges(self) -> list[tuple[AbstractObject, AbstractObject]]:
        """Canonical group-level edge list keyed by smallest members."""
        out = []
        seen_reps = {self.find(o) for o in self._parent}
        for rep in seen_reps:
            a = min(self._members[rep])
            for tgt in self._cell_out[rep]:
                out.append((a, min(self._members[tgt])))
        return sorted(out)

    def group_count(self) -> int:
        return len({self.find(o) for o in self._parent})

    def edge_count(self) -> int:
        return sum(len(self._cell_out[r]) for r in self._cell_out
                   if self._parent[r] == r)

    # -- unification ------------------------------------------------------

    def compatible(self, o1: AbstractObject, o2: AbstractObject) -> bool:
        r1, r2 = self.find(o1), self.find(o2)
        return lattice.compat_sets(self._tagset[r1], self._tagset[r2])

    def unify(self, o1: AbstractObject, o2: AbstractObject) -> None:
        """Merge the groups of o1 and o2 and re-close the graph.

        Raises IncompatibleTags (leaving the graph unchanged) when the groups
        carry incompatible concrete tags; the engine treats that as "keep the
        groups separate", not as a failure.
        """
        self.add_object(o1)
        self.add_object(o2)
        if not self.compatible(o1, o2):
            raise IncompatibleTags(f"{object_name(o1)} vs {object_name(o2)}")
        self._union(self.find(o1), self.find(o2))
        if self.unification:
            self._drain()

    def _union(self, r1: AbstractObject, r2: AbstractObject) -> None:
        if r1 == r2:
            return
        self._mutating()
        if (self._size[r1], r2) < (self._size[r2], r1):
            r1, r2 = r2, r1
        # r2 merges into r1
        self._parent[r2] = r1
        self._size[r1] += self._size[r2]
        self._members[r1].update(self._members.pop(r2))
        self._tagset[r1].update(self._tagset.pop(r2))
        for key in self._rev_reg.pop(r2):
            s = self._reg_pts[key]
            s.discard(r2)
            s.add(r1)
            self._rev_reg[r1].add(key)
        out2 = self._cell_out.pop(r2)
        in2 = self._cell_in.pop(r2)
        for d in out2:
            dd = r1 if d == r2 else d
            self._cell_out[r1].add(dd)
            self._cell_in[dd].discard(r2)
            self._cell_in[dd].add(r1)
        for s in in2:
            ss = r1 if s == r2 else s
            self._cell_out[ss].discard(r2)
            self._cell_out[ss].add(r1)
            self._cell_in[r1].add(ss)
        self._pending.append(("c", r1))

    def _drain(self) -> None:
        while self._pending:
            kind, src = self._pending.pop()
            if kind == "r":
                if src not in self._reg_pts:
                    continue
                targets = self._reg_pts[src]
            else:
                src = self.find(src)
                targets = self._cell_out.get(src, set())
            merged = True
            while merged and len(targets) > 1:
                merged = False
                reps = sorted(targets)
                for i in range(len(reps)):
                    for j in range(i + 1, len(reps)):
                        a, b = reps[i], reps[j]
                        if lattice.compat_sets(self._tagset[a], self._tagset[b]):
                            self._union(a, b)
                            merged = True
                            break
                    if merged:
                        break
                if kind == "r":
                    targets = self._reg_pts[src]
                else:
                    src = self.find(src)
                    targets = self._cell_out.get(src, set())


def seed_function_summary(g: PointsToGraph, f: Function) -> None:
    """Install the per-argument summary cells and their seed edges."""
    objects, reg_edges, cell_edges = formal_summary(f)
    for o in objects:
        g.add_object(o)
    for reg, o in reg_edges:
        g.add_reg_edge((f.name, reg), o)
    for a, b in cell_edges:
        g.add_cell_edge(a, b)


def erase_tags(g: PointsToGraph) -> PointsToGraph:
    """Collapse all tag variants of each cell and re-close the graph.

    Idempotent; the result's alias pairs are a superset of the input's.
    """
    out = PointsToGraph(g.owner, unification=g.unification)
    for o in sorted(g.objects()):
        out.add_object(with_tag(o, lattice.ANY))
    # preserve the grouping: unify images of each group, and variants of a cell
    reps_done = set()
    for o in sorted(g.objects()):
        rep = g.find(o)
        if rep in reps_done:
            continue
        reps_done.add(rep)
        ms = sorted(g.group_members(o))
        first = with_tag(ms[0], lattice.ANY)
        for m in ms[1:]:
            out.unify(first, with_tag(m, lattice.ANY))
    for src, dst in g.edges():
        out.add_cell_edge(with_tag(src, lattice.ANY), with_tag(dst, lattice.ANY))
    for key in g.registers():
        out.add_register(key)
        for rep in g.pts(key):
            for m in g.group_members(rep):
                out.add_reg_edge(key, with_tag(m, lattice.ANY))
    return out


# ---------------------------------------------------------------------------
# Alias relation
# ---------------------------------------------------------------------------
# Canonical comparison object shared by the engine, the oracle and the diff
# command.  Nodes are display strings: "reg:<fn>.<name>" for registers and the
# tagless cell name for cells.  A register aliases whatever it may point to;
# two cells alias when some pointer (register or cell group) may point to
# both.  Everything is compared at the tag-erased family level so typed and
# untyped results are directly comparable.


def reg_node(fn: str, reg: str) -> str:
    return f"reg:{fn}.{reg}"


def alias_pairs_of_graph(g: PointsToGraph) -> frozenset[tuple[str, str]]:
    pairs: set[tuple[str, str]] = set()
    reg_fams: dict[RegKey, set[str]] = {}
    for key in g.registers():
        fams = {fam_name(m) for m in g.pts_objects(key)}
        reg_fams[key] = fams
        node = reg_node(*key)
        for c in fams:
            pairs.add(tuple(sorted((node, c))))
        for c1 in fams:
            for c2 in fams:
                if c1 < c2:
                    pairs.add((c1, c2))
    keys = sorted(reg_fams)
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            if reg_fams[keys[i]] & reg_fams[keys[j]]:
                pairs.add(tuple(sorted((reg_node(*keys[i]), reg_node(*keys[j])))))
    seen_reps = {g.find(o) for o in g.objects()}
    for rep in seen_reps:
        fams = {fam_name(m) for m in g.out_objects(rep)}
        for c1 in fams:
            for c2 in fams:
                if c1 < c2:
                    pairs.add((c1, c2))
    return frozenset(pairs)

"""Type-tag compatibility for type-aware analysis.

Tags are rendered type names plus the wildcard ``any``.  The partial order:

  * every tag is below itself,
  * every concrete tag is below ``char``,
  * every pointer tag is below ``char*``,
  * everything is below ``any`` (the wildcard carried by fresh cells).

``int`` and ``float`` (and their pointer forms) are unrelated, which is what
lets typed memory operations keep differently-typed contents apart.  Two tags
are compatible when they are comparable in either direction; an access through
an incompatible tag derives nothing.
"""

from __future__ import annotations

from .ir import Type

ANY = "any"

CONCRETE_TAGS = tuple(
    str(Type(b, d)) for b in ("char", "float", "int") for d in (0, 1, 2)
)
POINTER_TAGS = tuple(t for t in CONCRETE_TAGS if t.endswith("*"))
TAGS = (ANY,) + CONCRETE_TAGS


def tag_of(ty: Type) -> str:
    return str(ty)


def leq(t: str, u: str) -> bool:
    """Partial order: t is at or below u."""
    if t == u or u == ANY:
        return True
    if t == ANY:
        return False
    if u == "char":
        return True
    return u == "char*" and t in POINTER_TAGS


def compat(t: str, u: str) -> bool:
    """Comparability in either direction; symmetric and reflexive."""
    return leq(t, u) or leq(u, t)


def compat_always(t: str, u: str) -> bool:
    """Degenerate relation treating all tags as compatible."""
    return True


def compat_sets(ts: frozenset[str] | set[str], us: frozenset[str] | set[str]) -> bool:
    """True if every tag pair across the two sets is compatible."""
    return all(compat(t, u) for t in ts for u in us)

"""Query AST for the supported SPARQL subset and a printer that round-trips."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union

from ..rdf import RDF_TYPE, Term


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


Node = Union[Term, Var]


class TriplePattern(NamedTuple):
    subject: Node
    predicate: Node
    object: Node

    def variables(self) -> list[Var]:
        return [x for x in self if isinstance(x, Var)]


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    arg: "Expr"


Expr = Union[Compare, Call, And, Or, Not, Var, Term]


def expr_vars(expr: Expr) -> set[Var]:
    if isinstance(expr, Var):
        return {expr}
    if isinstance(expr, Term):
        return set()
    if isinstance(expr, Compare):
        return expr_vars(expr.left) | expr_vars(expr.right)
    if isinstance(expr, (And, Or)):
        return expr_vars(expr.left) | expr_vars(expr.right)
    if isinstance(expr, Not):
        return expr_vars(expr.arg)
    out: set[Var] = set()
    for a in expr.args:
        out |= expr_vars(a)
    return out


@dataclass(frozen=True)
class Query:
    form: str = "select"
    projection: tuple[Var, ...] | None = None  # None means SELECT *
    patterns: tuple[TriplePattern, ...] = ()
    filters: tuple[Expr, ...] = ()
    template: tuple[TriplePattern, ...] = ()
    offset: int = 0
    limit: int | None = None
    prefixes: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def pattern_vars(self) -> list[Var]:
        """Pattern variables in order of first appearance."""
        seen: dict[Var, None] = {}
        for pattern in self.patterns:
            for v in pattern.variables():
                seen.setdefault(v, None)
        return list(seen)

    @property
    def result_vars(self) -> list[Var]:
        if self.projection is None:
            return self.pattern_vars()
        return list(self.projection)


def format_node(node: Node, prefixes: dict[str, str] | None = None) -> str:
    if isinstance(node, Var):
        return str(node)
    return node.n3(prefixes)


def format_expr(expr: Expr, prefixes: dict[str, str] | None = None) -> str:
    if isinstance(expr, (Var, Term)):
        return format_node(expr, prefixes)
    if isinstance(expr, Compare):
        return f"({format_expr(expr.left, prefixes)} {expr.op} {format_expr(expr.right, prefixes)})"
    if isinstance(expr, And):
        return f"({format_expr(expr.left, prefixes)} && {format_expr(expr.right, prefixes)})"
    if isinstance(expr, Or):
        return f"({format_expr(expr.left, prefixes)} || {format_expr(expr.right, prefixes)})"
    if isinstance(expr, Not):
        return f"(!{format_expr(expr.arg, prefixes)})"
    return f"{expr.name}(" + ", ".join(format_expr(a, prefixes) for a in expr.args) + ")"


def _format_pattern(p: TriplePattern, prefixes) -> str:
    pred = "a" if isinstance(p.predicate, Term) and p.predicate.value == RDF_TYPE else format_node(p.predicate, prefixes)
    return f"{format_node(p.subject, prefixes)} {pred} {format_node(p.object, prefixes)} ."


def format_query(query: Query, prefixes: dict[str, str] | None = None) -> str:
    """Render a query as text accepted by :func:`parse_query`."""
    lines = [f"PREFIX {p}: <{ns}>" for p, ns in sorted((prefixes or {}).items())]
    if query.form == "construct":
        lines.append("CONSTRUCT {")
        lines.extend("  " + _format_pattern(p, prefixes) for p in query.template)
        lines.append("}")
    else:
        proj = "*" if query.projection is None else " ".join(map(str, query.projection))
        lines.append(f"SELECT {proj}")
    lines.append("WHERE {")
    lines.extend("  " + _format_pattern(p, prefixes) for p in query.patterns)
    lines.extend(f"  FILTER({format_expr(f, prefixes)})" for f in query.filters)
    lines.append("}")
    if query.offset:
        lines.append(f"OFFSET {query.offset}")
    if query.limit is not None:
        lines.append(f"LIMIT {query.limit}")
    return "\n".join(lines) + "\n"

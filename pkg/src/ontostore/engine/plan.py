"""Query planning: star groups, routing, filter pushdown, join order and explain text."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from ..catalog import CatalogSnapshot
from ..rdf import IRI_KIND, LITERAL_KIND, RDF_LANGSTRING, RDF_TYPE, WELL_KNOWN_PREFIXES, XSD_STRING, Term, compact_iri
from ..sparql.ast import And, Call, Compare, Expr, Query, TriplePattern, Var, expr_vars, format_expr
from ..storage import PatternQuery, PropertyFilter, Storage, term_subject

_FLIP = {"=": "=", "<": ">", ">": "<"}
_OP_NAME = {"=": "equals", "<": "less", ">": "greater"}


def conjuncts(expr: Expr) -> list[Expr]:
    if isinstance(expr, And):
        return conjuncts(expr.left) + conjuncts(expr.right)
    return [expr]


@dataclass
class Pushed:
    expr: Expr
    filter: PropertyFilter
    exact: bool


@dataclass
class StarGroup:
    subject: Var | Term
    patterns: list[TriplePattern]
    cls: str | None = None
    type_constants: list[str] = field(default_factory=list)
    filters: list[Expr] = field(default_factory=list)
    pushed: list[Pushed] = field(default_factory=list)

    @property
    def variables(self) -> list[Var]:
        seen: dict[Var, None] = {}
        for p in self.patterns:
            for v in p.variables():
                seen.setdefault(v, None)
        return list(seen)

    @property
    def variable_predicates(self) -> bool:
        return any(isinstance(p.predicate, Var) for p in self.patterns)

    def object_property(self, v: Var) -> str | None:
        """A constant, non-type predicate whose object is ``v``."""
        if v == self.subject:
            return None
        for p in self.patterns:
            if p.object == v and isinstance(p.predicate, Term) and p.predicate.value != RDF_TYPE:
                return p.predicate.value
        return None


@dataclass
class Fragment:
    n: int
    star: StarGroup
    mode: str  # scan | get | fanout | bind
    targets: list[tuple[Storage, str | None]]
    estimate: float
    record_window: bool = False
    strategies: list[str] = field(default_factory=list)

    @property
    def storage_filters(self) -> tuple[PropertyFilter, ...]:
        return tuple(p.filter for p in self.star.pushed)

    def pattern_query(self, cls: str, offset: int = 0, limit: int | None = None) -> PatternQuery:
        return PatternQuery(cls, self.storage_filters, offset, limit)


@dataclass
class ExecutionPlan:
    query: Query
    snapshot: CatalogSnapshot
    fragments: list[Fragment]
    joins: list[tuple[list[int], int, list[Var]]]
    residual: list[Expr]
    limit_placement: str  # pushed | post-join
    prefixes: dict = field(default_factory=dict)

    def explain(self) -> str:
        return explain_plan(self)


def _pushable(expr: Expr, star: StarGroup) -> Pushed | None:
    if isinstance(expr, Compare) and expr.op in _FLIP:
        if isinstance(expr.left, Var) and isinstance(expr.right, Term):
            v, const, op = expr.left, expr.right, expr.op
        elif isinstance(expr.right, Var) and isinstance(expr.left, Term):
            v, const, op = expr.right, expr.left, _FLIP[expr.op]
        else:
            return None
        prop = star.object_property(v)
        if prop is None:
            return None
        return Pushed(expr, PropertyFilter(prop, _OP_NAME[op], const), True)
    if isinstance(expr, Call) and expr.name == "CONTAINS" and len(expr.args) == 2:
        hay, needle = expr.args
        if not (isinstance(needle, Term) and needle.kind == LITERAL_KIND and needle.datatype in (XSD_STRING, RDF_LANGSTRING)):
            return None
        exact = False
        if isinstance(hay, Call) and hay.name == "STR" and len(hay.args) == 1:
            hay, exact = hay.args[0], True
        if not isinstance(hay, Var):
            return None
        prop = star.object_property(hay)
        if prop is None:
            return None
        return Pushed(expr, PropertyFilter(prop, "contains", needle), exact)
    return None


def build_stars(query: Query) -> tuple[list[StarGroup], list[Expr]]:
    """Group patterns by subject and attach filters; returns (stars, residual filters)."""
    stars: dict[object, StarGroup] = {}
    for p in query.patterns:
        star = stars.get(p.subject)
        if star is None:
            star = stars[p.subject] = StarGroup(p.subject, [])
        star.patterns.append(p)
        if (
            isinstance(p.predicate, Term)
            and p.predicate.value == RDF_TYPE
            and isinstance(p.object, Term)
            and p.object.kind == IRI_KIND
        ):
            star.type_constants.append(p.object.value)
    ordered = list(stars.values())
    for star in ordered:
        if star.type_constants:
            star.cls = star.type_constants[0]
    residual: list[Expr] = []
    for f in query.filters:
        for c in conjuncts(f):
            vs = expr_vars(c)
            home = next((s for s in ordered if vs and vs <= set(s.variables)), None)
            if home is None:
                residual.append(c)
                continue
            pushed = _pushable(c, home)
            if pushed is not None:
                home.pushed.append(pushed)
            home.filters.append(c)
    return ordered, residual


def _star_name(star: StarGroup) -> str:
    s = star.subject
    return str(s) if isinstance(s, Var) else term_subject(s)


def _window_ok(star: StarGroup, query: Query, targets, snapshot_stats) -> bool:
    """True when a storage-level offset/limit returns exactly the right rows."""
    if not isinstance(star.subject, Var) or star.variable_predicates:
        return False
    out_vars = query.result_vars
    if not out_vars or out_vars[0] != star.subject:
        return False
    if len(star.type_constants) != 1 or not all(p.exact for p in star.pushed):
        return False
    if len(star.pushed) != len(star.filters):
        return False
    props = []
    seen_vars = {star.subject}
    for p in star.patterns:
        if p.predicate.value == RDF_TYPE:
            if not isinstance(p.object, Term):
                return False
            continue
        if not isinstance(p.object, Var) or p.object in seen_vars:
            return False
        seen_vars.add(p.object)
        props.append(p.predicate.value)
    for stats in snapshot_stats:
        if stats.count and not set(props) <= stats.single_valued:
            return False
    return True


def plan_query(query: Query, snapshot: CatalogSnapshot, prefixes: dict | None = None, overlay: bool = False) -> ExecutionPlan:
    stars, residual = build_stars(query)
    tbox = snapshot.tbox
    frags: list[Fragment] = []
    single = len(stars) == 1
    for star in stars:
        if star.cls is not None:
            targets = snapshot.read_targets(sorted(tbox.closure_or_self(star.cls)))
        else:
            targets = [(s, None) for s in snapshot.all_storages()]
        if isinstance(star.subject, Term):
            frags.append(Fragment(0, star, "get", targets, 1.0))
            continue
        if star.cls is None:
            frags.append(Fragment(0, star, "fanout", targets, math.inf))
            continue
        stats = [s.stats(c) for s, c in targets]
        # replicas hold the same individuals: count each class once, at its largest copy
        per_class: dict[str, int] = {}
        for (_, c), st in zip(targets, stats):
            per_class[c] = max(per_class.get(c, 0), st.count)
        frag = Fragment(0, star, "scan", targets, float(sum(per_class.values())))
        if single and not residual and not overlay:
            frag.record_window = _window_ok(star, query, targets, stats)
        frag.strategies = [
            f"{s.id}:" + "+".join(s.scan_strategy(frag.pattern_query(c))) for s, c in targets
        ]
        frags.append(frag)

    # join order: ascending estimate, ties by subject name; stay connected when possible
    pending = sorted(frags, key=lambda f: (f.estimate, _star_name(f.star)))
    order: list[Fragment] = []
    bound: set[Var] = set()
    while pending:
        pick = None
        if order:
            pick = next((f for f in pending if set(f.star.variables) & bound), None)
        if pick is None:
            pick = pending[0]
        pending.remove(pick)
        if pick.mode == "fanout" and isinstance(pick.star.subject, Var) and pick.star.subject in bound:
            pick.mode = "bind"
        order.append(pick)
        bound |= set(pick.star.variables)
    joins = []
    seen: set[Var] = set()
    for i, f in enumerate(order):
        f.n = i + 1
        vs = [v for v in f.star.variables if v in seen]
        if i:
            joins.append(([g.n for g in order[:i]], f.n, vs))
        seen |= set(f.star.variables)
    pushed_window = len(order) == 1 and not residual and order[0].record_window
    table = dict(WELL_KNOWN_PREFIXES)
    table.update(query.prefixes or {})
    table.update(prefixes or {})
    return ExecutionPlan(query, snapshot, order, joins, residual, "pushed" if pushed_window else "post-join", table)


# -- explain -------------------------------------------------------------------------


def _compact(iri: str, prefixes: dict) -> str:
    return compact_iri(iri, prefixes) or f"<{iri}>"


def _compact_strategy(text: str, prefixes: dict) -> str:
    return re.sub(r"\(([^()]+)\)", lambda m: "(" + _compact(m[1], prefixes) + ")", text)


def explain_plan(plan: ExecutionPlan) -> str:
    px = plan.prefixes
    lines = []
    if not plan.fragments:
        lines.append("empty pattern: one empty solution")
    for f in plan.fragments:
        star = f.star
        ids = ",".join(dict.fromkeys(s.id for s, _ in f.targets))
        cls = _compact(star.cls, px) if star.cls else "-"
        filters = ", ".join(format_expr(e, px) for e in star.filters)
        flags = []
        if star.pushed:
            flags.append("filters(" + ", ".join(_compact(p.filter.prop, px) + " " + p.filter.op for p in star.pushed) + ")")
        if f.record_window and plan.limit_placement == "pushed":
            flags.append("offset/limit")
        subject = str(star.subject) if isinstance(star.subject, Var) else _compact(star.subject.value, px)
        line = (
            f"fragment {f.n}: storage={ids} class={cls} filters=[{filters}] pushdown={'+'.join(flags) or 'none'}"
            f" subject={subject} mode={f.mode}"
        )
        if f.mode == "scan":
            line += " estimate=" + str(int(f.estimate))
            line += " access=" + ";".join(_compact_strategy(s, px) for s in f.strategies)
        lines.append(line)
    if plan.limit_placement == "pushed":
        lines.append("pushdown: offset/limit")
    else:
        lines.append("post-join: offset/limit")
    for left, right, vs in plan.joins:
        on = ",".join(str(v) for v in vs) if vs else "(cross product)"
        lines.append(f"join: {on} fragments={'+'.join(map(str, left))}x{right}")
    if plan.residual:
        lines.append("residual: " + ", ".join(format_expr(e, px) for e in plan.residual))
    return "\n".join(lines)


__all__ = ["ExecutionPlan", "Fragment", "StarGroup", "build_stars", "conjuncts", "explain_plan", "plan_query"]
